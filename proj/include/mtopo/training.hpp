#pragma once

#include "mtopo/dataset.hpp"
#include "mtopo/embedders.hpp"
#include "mtopo/simulator.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace mtopo {

enum class Regime { Scratch, PretrainClassify, PretrainAutoencode, Finetune, Ideal };

std::string_view regime_name(Regime r);
Regime parse_regime(std::string_view name);
bool is_pretraining(Regime r);

/// Geometric mesh augmentation, only legal for pretraining.
struct Augmentation {
  bool scale = false;   // per-axis factors in [scale_lo, scale_hi]
  bool jitter = false;  // N(0, jitter_sigma) per vertex coordinate, in the normalized frame
  bool rotate = false;  // uniform rotation about z
  double scale_lo = 0.75;
  double scale_hi = 1.25;
  double jitter_sigma = 0.01;

  bool any() const { return scale || jitter || rotate; }
};

struct TrainConfig {
  Regime regime = Regime::Scratch;
  int epochs = 30;
  int batch_size = 8;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  Augmentation augment;
  int classifier_blocks = 1;    // transformer blocks in the classification head
  bool reseed_dead_codes = true;  // Token autoencoder: reset codes unused in an epoch
};

/// Throws Config when augmentation is enabled for a simulation-training regime,
/// or when counts are nonpositive.
void validate_train_config(const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  Regime regime = Regime::Scratch;
  std::uint64_t seed = 0;
  double train_loss = 0.0;
  double wall_ms = 0.0;
};

using TrainLog = std::vector<EpochRecord>;

std::string log_line(const EpochRecord& r);
void write_log(const TrainLog& log, const std::filesystem::path& path);

/// Labeled meshes for pretraining, generated from a separate seed space with
/// object IDs carrying the "aux_" prefix.
struct AuxiliaryCorpus {
  struct Item {
    Mesh mesh;
    int label = 0;
    std::string object_id;
  };
  std::vector<ShapeClass> classes;
  std::vector<Item> items;

  std::size_t size() const { return items.size(); }
};

struct CorpusConfig {
  std::vector<ShapeClass> classes = {ShapeClass::Cube, ShapeClass::Cylinder, ShapeClass::Sphere};
  int objects_per_class = 40;
  int meshes_per_object = 5;
  double scale_min = 0.5;
  double scale_max = 1.5;
  double scale_separation = 0.02;
  int base_segments = 16;
  VariantParams variants;
  std::uint64_t seed = 11;
};

AuxiliaryCorpus gen_auxiliary_corpus(const CorpusConfig& cfg);
/// Every mesh of every object in a dataset, labeled by its class.
AuxiliaryCorpus corpus_from_dataset(const Dataset& ds);
/// Throws InvalidArgument when any corpus object ID also appears in the dataset.
void check_disjoint(const AuxiliaryCorpus& corpus, const Dataset& ds);

/// Deterministic augmentation of one mesh.
Mesh augment_mesh(const Mesh& mesh, const Augmentation& aug, std::uint64_t seed);

/// Embedder weights (and codebook for Token) produced by pretraining.
struct PretrainedEmbedder {
  EmbedderConfig config;
  std::string objective;  // "classification" | "autoencoder" | "none"
  std::map<std::string, nn::Matrix> tensors;  // names under "embedder."

  void save(const std::filesystem::path& path) const;
  static PretrainedEmbedder load(const std::filesystem::path& path);
};

struct PretrainResult {
  PretrainedEmbedder embedder;
  TrainLog log;
  // Classification: accuracy on the training corpus. Autoencoder: mean
  // reconstruction loss on the evaluation corpus (held-out when given).
  double initial_metric = 0.0;
  double final_metric = 0.0;
  double code_usage = 0.0;  // Token: fraction of codes used in the last epoch
};

PretrainResult pretrain_classification(const TrainConfig& cfg, const EmbedderConfig& emb,
                                       const AuxiliaryCorpus& corpus);
/// Direct embedders are rejected. Metrics are measured on `held_out` when given.
PretrainResult pretrain_autoencoder(const TrainConfig& cfg, const EmbedderConfig& emb,
                                    const AuxiliaryCorpus& corpus,
                                    const AuxiliaryCorpus* held_out = nullptr);

/// Training-set pair: one mesh and the ground truth of its object.
struct TrainingSample {
  const ObjectRecord* object = nullptr;
  std::size_t mesh_index = 0;
};

/// Simple meshes of train-split objects, or, for Ideal, every mesh of them.
std::vector<TrainingSample> training_samples(const Dataset& ds, Regime regime);

/// Scale binner over the max extents of the training meshes.
ScaleBinner fit_scale_binner(const Dataset& ds, int bins);
/// Mean ground-truth value over train-split objects.
double target_mean(const Dataset& ds);

struct TrainResult {
  SimulatorModel model;
  TrainLog log;
  std::vector<std::string> audited_ids;  // object IDs that entered a batch
};

/// Observer called after each epoch.
using EpochHook = std::function<void(const EpochRecord&)>;

TrainResult train_scratch(const TrainConfig& cfg, const ModelConfig& model, const Dataset& ds,
                          const EpochHook& hook = {});
TrainResult train_ideal(const TrainConfig& cfg, const ModelConfig& model, const Dataset& ds,
                        const EpochHook& hook = {});
/// Fresh aggregator and decoder; embedder initialized from `init`; everything trainable.
TrainResult finetune(const PretrainedEmbedder& init, const TrainConfig& cfg,
                     const ModelConfig& model, const Dataset& ds, const EpochHook& hook = {});

/// The embedder weights a SimulatorModel with this config and seed starts from.
PretrainedEmbedder random_embedder(const ModelConfig& model, std::uint64_t seed);

}  // namespace mtopo
