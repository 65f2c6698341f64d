#pragma once

#include "mtopo/mesh.hpp"
#include "mtopo/nn/params.hpp"
#include "mtopo/nn/tensor.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace mtopo::nn {

enum class Activation { Identity, SiLU };

Var activate(const Var& x, Activation act);

/// y = x W + b, W stored as (in x out).
struct Linear {
  Var weight;
  Var bias;  // undefined when constructed without bias

  Linear() = default;
  Linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
         std::uint64_t seed, bool with_bias = true);

  Var operator()(const Var& x) const;
  Eigen::Index in_features() const { return weight.rows(); }
  Eigen::Index out_features() const { return weight.cols(); }
};

struct LayerNorm {
  Var gain;
  Var shift;

  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, Eigen::Index dim, std::uint64_t seed);
  Var operator()(const Var& x) const;
};

/// Scaled dot-product multi-head self-attention over the rows of X. There is
/// no positional encoding, so the map is equivariant to row permutations.
struct SelfAttention {
  Linear query, key, value, out;
  int heads = 1;

  SelfAttention() = default;
  SelfAttention(ParamStore& store, const std::string& name, Eigen::Index dim, int heads,
                std::uint64_t seed);
  Var operator()(const Var& x) const;
};

/// Pre-norm transformer encoder block: x + attn(ln(x)), then x + mlp(ln(x)).
struct TransformerBlock {
  LayerNorm norm1, norm2;
  SelfAttention attention;
  Linear ff1, ff2;

  TransformerBlock() = default;
  TransformerBlock(ParamStore& store, const std::string& name, Eigen::Index dim, int heads,
                   std::uint64_t seed);
  Var operator()(const Var& x) const;
};

/// Row-normalized face adjacency: (A h)_i is the mean of h over i's neighbours,
/// zero for isolated faces.
std::shared_ptr<const SparseMatrix> mean_aggregation_matrix(const FaceAdjacency& adj);

/// h'_i = act(W_self h_i + W_nbr mean_{j in N(i)} h_j + b)
struct GraphConv {
  Linear self_term;      // carries the bias
  Linear neighbor_term;  // no bias
  Activation activation = Activation::SiLU;

  GraphConv() = default;
  GraphConv(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
            std::uint64_t seed, Activation act = Activation::SiLU);
  Var operator()(const Var& h, const std::shared_ptr<const SparseMatrix>& mean_adj) const;
};

/// K code vectors of dimension D plus per-code usage counters.
struct Codebook {
  Var codes;
  std::vector<std::uint64_t> usage;

  Codebook() = default;
  Codebook(ParamStore& store, const std::string& name, Eigen::Index size, Eigen::Index dim,
           std::uint64_t seed);
  Eigen::Index size() const { return codes.rows(); }
  Eigen::Index dim() const { return codes.cols(); }
};

struct VqResult {
  Var quantized;             // code vectors, straight-through gradient to z
  std::vector<int> indices;  // nearest code per row, ties to the lowest index
  Var loss;                  // mean_i ||sg(z_i) - c_i||^2 + beta ||z_i - sg(c_i)||^2
};

/// Nearest-code assignment by Euclidean distance. Usage counters are updated
/// when `usage` is non-null.
VqResult vq_quantize(const Var& z, const Codebook& codebook, double beta,
                     std::vector<std::uint64_t>* usage = nullptr);

}  // namespace mtopo::nn
