#include "mtopo/embedders.hpp"

#include "mtopo/error.hpp"

namespace mtopo {

using nn::Var;

std::string_view embedder_name(EmbedderKind k) {
  switch (k) {
    case EmbedderKind::Direct: return "direct";
    case EmbedderKind::Graph: return "graph";
    case EmbedderKind::Token: return "token";
  }
  return "unknown";
}

EmbedderKind parse_embedder(std::string_view name) {
  if (name == "direct") return EmbedderKind::Direct;
  if (name == "graph") return EmbedderKind::Graph;
  if (name == "token") return EmbedderKind::Token;
  fail(ErrorCode::InvalidArgument, "unknown embedder '" + std::string(name) + "'");
}

MeshInput prepare_normalized_input(const Mesh& normalized, double scale) {
  const auto feats = face_features_raw(normalized);
  MeshInput in;
  in.features.resize(static_cast<Eigen::Index>(feats.size()), kFaceFeatureDim);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    const auto flat = feats[i].flatten();
    for (int k = 0; k < kFaceFeatureDim; ++k) in.features(static_cast<Eigen::Index>(i), k) = flat[k];
  }
  in.mean_adj = nn::mean_aggregation_matrix(face_adjacency(normalized));
  in.scale = scale;
  return in;
}

MeshInput prepare_input(const Mesh& mesh) {
  const auto norm = normalize_scale(mesh);
  return prepare_normalized_input(norm.mesh, norm.scale);
}

FaceMlp::FaceMlp(nn::ParamStore& store, const std::string& name, Eigen::Index in,
                 Eigen::Index width, Eigen::Index out_dim, std::uint64_t seed) {
  hidden = nn::Linear(store, name + ".hidden", in, width, seed);
  out = nn::Linear(store, name + ".out", width, out_dim, seed);
}

Var FaceMlp::operator()(const Var& x) const { return out(nn::silu(hidden(x))); }

FaceEmbeddingSet direct_embed(const Var& features, const DirectEmbedderParams& params) {
  if (features.rows() == 0) fail(ErrorCode::EmptyInput, "direct_embed: no faces");
  return {params.block(params.mlp(features)), EmbedderKind::Direct};
}

FaceEmbeddingSet graph_embed(const Var& features,
                             const std::shared_ptr<const nn::SparseMatrix>& mean_adj,
                             const GraphEmbedderParams& params) {
  if (features.rows() == 0) fail(ErrorCode::EmptyInput, "graph_embed: no faces");
  Var h = params.projection(features);
  for (const auto& layer : params.layers) h = nn::add(h, layer(h, mean_adj));
  return {h, EmbedderKind::Graph};
}

TokenizedEmbedding tokenize_embed(const Var& features,
                                  const std::shared_ptr<const nn::SparseMatrix>& mean_adj,
                                  const GraphEmbedderParams& params, const nn::Codebook& codebook,
                                  double beta, std::vector<std::uint64_t>* usage) {
  const FaceEmbeddingSet pre = graph_embed(features, mean_adj, params);
  auto vq = nn::vq_quantize(pre.rows, codebook, beta, usage);
  return {{vq.quantized, EmbedderKind::Token}, std::move(vq.indices), vq.loss, pre.rows};
}

Embedder::Embedder(nn::ParamStore& store, const EmbedderConfig& config, std::uint64_t seed,
                   const std::string& prefix)
    : config_(config) {
  const Eigen::Index d = config.embed_dim;
  if (d < 1) fail(ErrorCode::InvalidArgument, "embedder: embed_dim must be positive");
  switch (config.kind) {
    case EmbedderKind::Direct:
      direct_.mlp = FaceMlp(store, prefix + ".mlp", kFaceFeatureDim, d, d, seed);
      direct_.block = nn::TransformerBlock(store, prefix + ".block", d, config.heads, seed);
      break;
    case EmbedderKind::Token:
      codebook_ = nn::Codebook(store, prefix + ".vq", config.codebook_size, d, seed);
      [[fallthrough]];
    case EmbedderKind::Graph:
      graph_.projection = FaceMlp(store, prefix + ".proj", kFaceFeatureDim, d, d, seed);
      for (int l = 0; l < config.graph_layers; ++l) {
        graph_.layers.emplace_back(store, prefix + ".gconv" + std::to_string(l), d, d, seed);
      }
      break;
  }
}

Embedder::Output Embedder::operator()(const MeshInput& input,
                                      std::vector<std::uint64_t>* usage) const {
  const Var x = Var::constant(input.features);
  switch (config_.kind) {
    case EmbedderKind::Direct:
      return {direct_embed(x, direct_), {}, {}, {}};
    case EmbedderKind::Graph:
      return {graph_embed(x, input.mean_adj, graph_), {}, {}, {}};
    case EmbedderKind::Token: {
      auto t = tokenize_embed(x, input.mean_adj, graph_, codebook_, config_.vq_beta, usage);
      return {t.embeddings, std::move(t.tokens), t.vq_loss, t.pre_quantization};
    }
  }
  fail(ErrorCode::InvalidArgument, "embedder: unknown kind");
}

FaceReconstructor::FaceReconstructor(nn::ParamStore& store, const std::string& name,
                                     Eigen::Index embed_dim, std::uint64_t seed) {
  mlp = FaceMlp(store, name, embed_dim, embed_dim, 9, seed);
}

Var reconstruct_faces(const FaceEmbeddingSet& embeddings, const FaceReconstructor& params) {
  if (embeddings.size() == 0) fail(ErrorCode::EmptyInput, "reconstruct_faces: no faces");
  return params.mlp(embeddings.rows);
}

Var reconstruction_loss(const Var& predicted, const MeshInput& input) {
  return nn::mse(predicted, input.features.leftCols(9));
}

}  // namespace mtopo
