#pragma once

#include "mtopo/embedders.hpp"
#include "mtopo/mesh.hpp"
#include "mtopo/nn/layers.hpp"
#include "mtopo/radar.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mtopo {

struct ModelConfig {
  EmbedderConfig embedder;
  int agg_blocks = 2;
  int heads = 4;
  int scale_bins = 32;
  int scale_dim = 8;
  int decoder_hidden = 128;
  int n_angles = 64;
  double loss_alpha = 0.1;
};

/// Log-spaced bins over a scale range; scales outside the range clamp to the
/// first or last bin.
class ScaleBinner {
 public:
  ScaleBinner() = default;
  ScaleBinner(double lo, double hi, int bins);

  int bin(double scale) const;
  int num_bins() const { return static_cast<int>(edges_.size()) - 1; }
  const std::vector<double>& edges() const { return edges_; }

  static ScaleBinner from_edges(std::vector<double> edges);

 private:
  std::vector<double> edges_;
};

/// w_k = (R_k / max R + alpha) / (1 + alpha); uniform when max R = 0.
nn::Matrix intensity_weights(const Response& target, double alpha);

/// (1/n) sum_k w_k (R_k - pred_k)^2 with intensity_weights.
nn::Var weighted_mse_loss(const nn::Var& pred, const Response& target, double alpha);
double weighted_mse_loss(const Response& pred, const Response& target, double alpha);

/// Neural simulator g = d(a(f(mesh))): face embedder, transformer aggregator
/// with mean pooling, and an MLP decoder fed the pooled feature concatenated
/// with a learned embedding of the discretized scale. Outputs are
/// output_scale * softplus(.), so predictions are nonnegative.
class SimulatorModel {
 public:
  struct Forward {
    nn::Var prediction;       // 1 x n_angles
    nn::Var aux_loss;         // codebook loss for Token embedders, else undefined
    std::vector<int> tokens;
  };

  SimulatorModel(const ModelConfig& config, ScaleBinner binner, double output_scale,
                 std::uint64_t seed);

  SimulatorModel(SimulatorModel&&) = default;
  SimulatorModel& operator=(SimulatorModel&&) = default;
  SimulatorModel(const SimulatorModel&) = delete;
  SimulatorModel& operator=(const SimulatorModel&) = delete;

  Forward forward(const MeshInput& input, std::vector<std::uint64_t>* usage = nullptr) const;

  /// Transformer blocks over the face set, then mean pooling -> 1 x D.
  nn::Var aggregate(const FaceEmbeddingSet& embeddings) const;
  nn::Var decode(const nn::Var& mesh_feature, int scale_bin) const;

  /// normalize -> features -> f -> a -> d
  Response predict(const Mesh& mesh) const;
  Response predict(const MeshInput& input) const;

  const ModelConfig& config() const { return config_; }
  const ScaleBinner& binner() const { return binner_; }
  double output_scale() const { return output_scale_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  Embedder& embedder() { return embedder_; }
  const Embedder& embedder() const { return embedder_; }

  /// JSON architecture descriptor stored in checkpoint headers.
  std::string descriptor() const;
  void save(const std::filesystem::path& path) const;
  std::string serialize() const;
  static SimulatorModel load(const std::filesystem::path& path);

 private:
  ModelConfig config_;
  ScaleBinner binner_;
  double output_scale_;
  nn::ParamStore store_;
  Embedder embedder_;
  std::vector<nn::TransformerBlock> blocks_;
  nn::Var scale_table_;
  nn::Linear dec_hidden_, dec_out_;
};

}  // namespace mtopo
