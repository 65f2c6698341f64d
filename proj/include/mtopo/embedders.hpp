#pragma once

#include "mtopo/mesh.hpp"
#include "mtopo/nn/layers.hpp"

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace mtopo {

enum class EmbedderKind { Direct, Graph, Token };

std::string_view embedder_name(EmbedderKind k);
EmbedderKind parse_embedder(std::string_view name);

struct EmbedderConfig {
  EmbedderKind kind = EmbedderKind::Graph;
  int embed_dim = 64;
  int graph_layers = 3;
  int heads = 4;  // direct embedder's attention block
  int codebook_size = 256;
  double vq_beta = 0.25;
};

/// Network-ready view of one mesh: face features of the normalized mesh
/// (F x 16), the mean-aggregation matrix of its face adjacency, and the
/// original max extent.
struct MeshInput {
  nn::Matrix features;
  std::shared_ptr<const nn::SparseMatrix> mean_adj;
  double scale = 1.0;

  Eigen::Index num_faces() const { return features.rows(); }
};

MeshInput prepare_input(const Mesh& mesh);
/// Same, for a mesh already in its normalized frame.
MeshInput prepare_normalized_input(const Mesh& normalized, double scale);

struct FaceEmbeddingSet {
  nn::Var rows;  // F x D_e
  EmbedderKind provenance = EmbedderKind::Direct;

  Eigen::Index size() const { return rows.rows(); }
};

/// Shared per-face two-layer MLP from the 16-dim face features.
struct FaceMlp {
  nn::Linear hidden, out;

  FaceMlp() = default;
  FaceMlp(nn::ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index width,
          Eigen::Index out_dim, std::uint64_t seed);
  nn::Var operator()(const nn::Var& x) const;
};

struct DirectEmbedderParams {
  FaceMlp mlp;
  nn::TransformerBlock block;
};

struct GraphEmbedderParams {
  FaceMlp projection;
  std::vector<nn::GraphConv> layers;
};

/// Per-face MLP followed by one attention block over all faces.
FaceEmbeddingSet direct_embed(const nn::Var& features, const DirectEmbedderParams& params);

/// Per-face projection, then residual graph convolutions over face adjacency.
/// Each face depends only on faces within graph_layers hops.
FaceEmbeddingSet graph_embed(const nn::Var& features,
                             const std::shared_ptr<const nn::SparseMatrix>& mean_adj,
                             const GraphEmbedderParams& params);

struct TokenizedEmbedding {
  FaceEmbeddingSet embeddings;  // code vectors (straight-through)
  std::vector<int> tokens;
  nn::Var vq_loss;
  nn::Var pre_quantization;
};

/// graph_embed followed by codebook quantization.
TokenizedEmbedding tokenize_embed(const nn::Var& features,
                                  const std::shared_ptr<const nn::SparseMatrix>& mean_adj,
                                  const GraphEmbedderParams& params, const nn::Codebook& codebook,
                                  double beta, std::vector<std::uint64_t>* usage = nullptr);

/// Face embedding network f. Parameters live in the store under `prefix.`.
class Embedder {
 public:
  struct Output {
    FaceEmbeddingSet embeddings;
    std::vector<int> tokens;  // Token kind only
    nn::Var vq_loss;          // Token kind only
    nn::Var pre_quantization; // Token kind only
  };

  Embedder() = default;
  Embedder(nn::ParamStore& store, const EmbedderConfig& config, std::uint64_t seed,
           const std::string& prefix = "embedder");

  Output operator()(const MeshInput& input, std::vector<std::uint64_t>* usage = nullptr) const;

  const EmbedderConfig& config() const { return config_; }
  const nn::Codebook& codebook() const { return codebook_; }
  nn::Codebook& codebook() { return codebook_; }

 private:
  EmbedderConfig config_;
  DirectEmbedderParams direct_;
  GraphEmbedderParams graph_;
  nn::Codebook codebook_;
};

/// Decoder for autoencoder pretraining: embedding -> 9 vertex coordinates.
struct FaceReconstructor {
  FaceMlp mlp;

  FaceReconstructor() = default;
  FaceReconstructor(nn::ParamStore& store, const std::string& name, Eigen::Index embed_dim,
                    std::uint64_t seed);
};

nn::Var reconstruct_faces(const FaceEmbeddingSet& embeddings, const FaceReconstructor& params);

/// Mean squared error against the normalized input face coordinates.
nn::Var reconstruction_loss(const nn::Var& predicted, const MeshInput& input);

}  // namespace mtopo
