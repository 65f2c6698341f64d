#include "mtopo/nn/layers.hpp"

#include "mtopo/error.hpp"

#include <cmath>
#include <limits>

namespace mtopo::nn {

Var activate(const Var& x, Activation act) {
  return act == Activation::SiLU ? silu(x) : x;
}

Linear::Linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
               std::uint64_t seed, bool with_bias) {
  weight = store.create(name + ".weight", in, out, Init::KaimingUniform, seed);
  if (with_bias) bias = store.create(name + ".bias", 1, out, Init::Zeros, seed);
}

Var Linear::operator()(const Var& x) const {
  if (x.cols() != weight.rows()) fail(ErrorCode::ShapeMismatch, "linear: input width mismatch");
  Var y = matmul(x, weight);
  return bias.defined() ? add_row(y, bias) : y;
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, Eigen::Index dim,
                     std::uint64_t seed) {
  gain = store.create(name + ".gain", 1, dim, Init::Ones, seed);
  shift = store.create(name + ".shift", 1, dim, Init::Zeros, seed);
}

Var LayerNorm::operator()(const Var& x) const {
  return add_row(mul_row(layer_norm(x), gain), shift);
}

SelfAttention::SelfAttention(ParamStore& store, const std::string& name, Eigen::Index dim,
                             int heads_, std::uint64_t seed)
    : heads(heads_) {
  if (heads < 1 || dim % heads != 0) {
    fail(ErrorCode::ShapeMismatch, "attention: model dim must be divisible by heads");
  }
  query = Linear(store, name + ".query", dim, dim, seed);
  key = Linear(store, name + ".key", dim, dim, seed);
  value = Linear(store, name + ".value", dim, dim, seed);
  out = Linear(store, name + ".out", dim, dim, seed);
}

Var SelfAttention::operator()(const Var& x) const {
  const Var q = query(x), k = key(x), v = value(x);
  const Eigen::Index dh = q.cols() / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> per_head;
  per_head.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Var qh = slice_cols(q, h * dh, dh);
    const Var kh = slice_cols(k, h * dh, dh);
    const Var vh = slice_cols(v, h * dh, dh);
    per_head.push_back(attention(qh, kh, vh, inv_sqrt));
  }
  return out(heads == 1 ? per_head.front() : concat_cols(per_head));
}

TransformerBlock::TransformerBlock(ParamStore& store, const std::string& name, Eigen::Index dim,
                                   int heads, std::uint64_t seed) {
  norm1 = LayerNorm(store, name + ".norm1", dim, seed);
  norm2 = LayerNorm(store, name + ".norm2", dim, seed);
  attention = SelfAttention(store, name + ".attn", dim, heads, seed);
  ff1 = Linear(store, name + ".ff1", dim, 2 * dim, seed);
  ff2 = Linear(store, name + ".ff2", 2 * dim, dim, seed);
}

Var TransformerBlock::operator()(const Var& x) const {
  const Var h = add(x, attention(norm1(x)));
  return add(h, ff2(silu(ff1(norm2(h)))));
}

std::shared_ptr<const SparseMatrix> mean_aggregation_matrix(const FaceAdjacency& adj) {
  const auto n = static_cast<Eigen::Index>(adj.size());
  std::vector<Eigen::Triplet<double>> trips;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& nb = adj.neighbors[static_cast<std::size_t>(i)];
    for (auto j : nb) {
      trips.emplace_back(i, static_cast<Eigen::Index>(j), 1.0 / static_cast<double>(nb.size()));
    }
  }
  auto s = std::make_shared<SparseMatrix>(n, n);
  s->setFromTriplets(trips.begin(), trips.end());
  return s;
}

GraphConv::GraphConv(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
                     std::uint64_t seed, Activation act)
    : activation(act) {
  self_term = Linear(store, name + ".self", in, out, seed, true);
  neighbor_term = Linear(store, name + ".nbr", in, out, seed, false);
}

Var GraphConv::operator()(const Var& h, const std::shared_ptr<const SparseMatrix>& mean_adj) const {
  if (mean_adj->rows() != h.rows()) {
    fail(ErrorCode::ShapeMismatch, "graph_conv: adjacency size does not match node count");
  }
  return activate(add(self_term(h), neighbor_term(sparse_left(mean_adj, h))), activation);
}

Codebook::Codebook(ParamStore& store, const std::string& name, Eigen::Index size,
                   Eigen::Index dim, std::uint64_t seed) {
  if (size < 1) fail(ErrorCode::EmptyInput, "codebook: needs at least one code");
  codes = store.create(name + ".codes", size, dim, Init::Normal, seed);
  usage.assign(static_cast<std::size_t>(size), 0);
}

VqResult vq_quantize(const Var& z, const Codebook& codebook, double beta,
                     std::vector<std::uint64_t>* usage) {
  if (!codebook.codes.defined() || codebook.size() == 0) {
    fail(ErrorCode::EmptyInput, "vq_quantize: empty codebook");
  }
  if (z.cols() != codebook.dim()) fail(ErrorCode::ShapeMismatch, "vq_quantize: dimension mismatch");
  const Matrix& c = codebook.codes.value();
  VqResult r;
  r.indices.resize(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < c.rows(); ++k) {
      const double d = (c.row(k) - z.value().row(i)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = static_cast<int>(k);
      }
    }
    r.indices[static_cast<std::size_t>(i)] = best;
    if (usage) ++(*usage)[static_cast<std::size_t>(best)];
  }
  const Var chosen = gather_rows(codebook.codes, r.indices);
  r.quantized = straight_through(z, chosen.value());
  const double rows = static_cast<double>(z.rows());
  const Var codebook_term = sum(mul(sub(Var::constant(z.value()), chosen),
                                    sub(Var::constant(z.value()), chosen)));
  const Var z_minus = sub(z, Var::constant(chosen.value()));
  const Var commitment = sum(mul(z_minus, z_minus));
  r.loss = scale(add(codebook_term, scale(commitment, beta)), 1.0 / rows);
  return r;
}

}  // namespace mtopo::nn
