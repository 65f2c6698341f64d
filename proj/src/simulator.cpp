#include "mtopo/simulator.hpp"

#include "mtopo/config.hpp"
#include "mtopo/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mtopo {

using nn::Matrix;
using nn::Var;

ScaleBinner::ScaleBinner(double lo, double hi, int bins) {
  if (!(lo > 0.0) || !(hi > lo) || bins < 1) {
    fail(ErrorCode::InvalidArgument, "ScaleBinner: need 0 < lo < hi and bins >= 1");
  }
  const double a = std::log(lo), b = std::log(hi);
  edges_.resize(static_cast<std::size_t>(bins) + 1);
  for (int i = 0; i <= bins; ++i) edges_[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / bins);
  edges_.front() = lo;
  edges_.back() = hi;
}

ScaleBinner ScaleBinner::from_edges(std::vector<double> edges) {
  if (edges.size() < 2) fail(ErrorCode::InvalidArgument, "ScaleBinner: need at least two edges");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i] > edges[i - 1])) fail(ErrorCode::InvalidArgument, "ScaleBinner: edges must increase");
  }
  ScaleBinner b;
  b.edges_ = std::move(edges);
  return b;
}

int ScaleBinner::bin(double scale) const {
  if (edges_.size() < 2) fail(ErrorCode::InvalidArgument, "ScaleBinner: not initialized");
  const auto it = std::upper_bound(edges_.begin(), edges_.end(), scale);
  const auto idx = static_cast<int>(it - edges_.begin()) - 1;
  return std::clamp(idx, 0, num_bins() - 1);
}

Matrix intensity_weights(const Response& target, double alpha) {
  Matrix w(1, static_cast<Eigen::Index>(target.size()));
  const double peak = target.empty() ? 0.0 : *std::max_element(target.begin(), target.end());
  for (std::size_t k = 0; k < target.size(); ++k) {
    w(0, static_cast<Eigen::Index>(k)) = peak > 0.0 ? (target[k] / peak + alpha) / (1.0 + alpha) : 1.0;
  }
  return w;
}

Var weighted_mse_loss(const Var& pred, const Response& target, double alpha) {
  if (pred.cols() != static_cast<Eigen::Index>(target.size()) || pred.rows() != 1) {
    fail(ErrorCode::ShapeMismatch, "weighted_mse_loss: length mismatch");
  }
  const Matrix t = Eigen::Map<const Matrix>(target.data(), 1, static_cast<Eigen::Index>(target.size()));
  return nn::weighted_mse(pred, t, intensity_weights(target, alpha));
}

double weighted_mse_loss(const Response& pred, const Response& target, double alpha) {
  const Matrix p = Eigen::Map<const Matrix>(pred.data(), 1, static_cast<Eigen::Index>(pred.size()));
  return weighted_mse_loss(Var::constant(p), target, alpha).item();
}

SimulatorModel::SimulatorModel(const ModelConfig& config, ScaleBinner binner, double output_scale,
                               std::uint64_t seed)
    : config_(config), binner_(std::move(binner)), output_scale_(output_scale) {
  if (binner_.num_bins() < 1) fail(ErrorCode::InvalidArgument, "model: scale binner has no bins");
  if (binner_.num_bins() != config.scale_bins) {
    fail(ErrorCode::ArchitectureMismatch, "model: binner size differs from config.scale_bins");
  }
  if (!(output_scale > 0.0)) fail(ErrorCode::InvalidArgument, "model: output_scale must be positive");
  const Eigen::Index d = config.embedder.embed_dim;
  embedder_ = Embedder(store_, config.embedder, seed, "embedder");
  for (int b = 0; b < config.agg_blocks; ++b) {
    blocks_.emplace_back(store_, "aggregator.block" + std::to_string(b), d, config.heads, seed);
  }
  scale_table_ = store_.create("decoder.scale_table", config.scale_bins, config.scale_dim,
                               nn::Init::Normal, seed);
  dec_hidden_ = nn::Linear(store_, "decoder.hidden", d + config.scale_dim, config.decoder_hidden, seed);
  dec_out_ = nn::Linear(store_, "decoder.out", config.decoder_hidden, config.n_angles, seed);
}

Var SimulatorModel::aggregate(const FaceEmbeddingSet& embeddings) const {
  if (embeddings.size() == 0) fail(ErrorCode::EmptyInput, "aggregate: no faces");
  Var h = embeddings.rows;
  for (const auto& block : blocks_) h = block(h);
  return nn::mean_rows(h);
}

Var SimulatorModel::decode(const Var& mesh_feature, int scale_bin) const {
  if (mesh_feature.rows() != 1 || mesh_feature.cols() != config_.embedder.embed_dim) {
    fail(ErrorCode::ShapeMismatch, "decode: mesh feature has the wrong shape");
  }
  const Var s = nn::gather_rows(scale_table_, {scale_bin});
  const Var h = nn::silu(dec_hidden_(nn::concat_cols({mesh_feature, s})));
  return nn::scale(nn::softplus(dec_out_(h)), output_scale_);
}

SimulatorModel::Forward SimulatorModel::forward(const MeshInput& input,
                                                std::vector<std::uint64_t>* usage) const {
  auto emb = embedder_(input, usage);
  Forward out;
  out.prediction = decode(aggregate(emb.embeddings), binner_.bin(input.scale));
  out.aux_loss = emb.vq_loss;
  out.tokens = std::move(emb.tokens);
  return out;
}

Response SimulatorModel::predict(const MeshInput& input) const {
  const Var p = forward(input).prediction;
  return Response(p.value().data(), p.value().data() + p.value().size());
}

Response SimulatorModel::predict(const Mesh& mesh) const { return predict(prepare_input(mesh)); }

std::string SimulatorModel::descriptor() const {
  nlohmann::json j;
  j["format"] = "mtopo-model/1";
  j["model"] = to_json(config_);
  j["scale_edges"] = binner_.edges();
  j["output_scale"] = output_scale_;
  return j.dump();
}

std::string SimulatorModel::serialize() const {
  std::ostringstream os(std::ios::binary);
  nn::write_checkpoint(os, store_, descriptor());
  return os.str();
}

void SimulatorModel::save(const std::filesystem::path& path) const {
  nn::save_checkpoint(path, store_, descriptor());
}

SimulatorModel SimulatorModel::load(const std::filesystem::path& path) {
  const auto ck = nn::load_checkpoint(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(ck.descriptor);
    if (j.at("format") != "mtopo-model/1") fail(ErrorCode::Parse, "not a simulator checkpoint");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("model descriptor: ") + e.what());
  }
  SimulatorModel m(model_config_from_json(j.at("model")),
                   ScaleBinner::from_edges(j.at("scale_edges").get<std::vector<double>>()),
                   j.at("output_scale").get<double>(), 0);
  if (ck.tensors.size() != m.store_.size()) {
    fail(ErrorCode::ArchitectureMismatch, "checkpoint tensor count differs from architecture");
  }
  for (const auto& [name, value] : ck.tensors) m.store_.assign(name, value);
  return m;
}

}  // namespace mtopo
