#include "mtopo/training.hpp"

#include "mtopo/config.hpp"
#include "mtopo/error.hpp"
#include "mtopo/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

namespace mtopo {

using nn::Matrix;
using nn::Var;

std::string_view regime_name(Regime r) {
  switch (r) {
    case Regime::Scratch: return "scratch";
    case Regime::PretrainClassify: return "pretrain_classification";
    case Regime::PretrainAutoencode: return "pretrain_autoencoder";
    case Regime::Finetune: return "finetune";
    case Regime::Ideal: return "ideal";
  }
  return "unknown";
}

Regime parse_regime(std::string_view name) {
  for (Regime r : {Regime::Scratch, Regime::PretrainClassify, Regime::PretrainAutoencode,
                   Regime::Finetune, Regime::Ideal}) {
    if (regime_name(r) == name) return r;
  }
  fail(ErrorCode::InvalidArgument, "unknown regime '" + std::string(name) + "'");
}

bool is_pretraining(Regime r) {
  return r == Regime::PretrainClassify || r == Regime::PretrainAutoencode;
}

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.augment.any() && !is_pretraining(cfg.regime)) {
    fail(ErrorCode::Config, "augmentation is only allowed for pretraining; regime '" +
                                std::string(regime_name(cfg.regime)) + "' trains on simulated responses");
  }
  if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.lr > 0.0)) {
    fail(ErrorCode::Config, "training: epochs, batch_size and lr must be positive");
  }
  if (cfg.classifier_blocks < 0) fail(ErrorCode::Config, "training: classifier_blocks must be >= 0");
  if (cfg.augment.scale && !(cfg.augment.scale_lo > 0.0 && cfg.augment.scale_hi >= cfg.augment.scale_lo)) {
    fail(ErrorCode::Config, "training.augment: need 0 < scale_lo <= scale_hi");
  }
  if (cfg.augment.jitter && !(cfg.augment.jitter_sigma >= 0.0)) {
    fail(ErrorCode::Config, "training.augment: jitter_sigma must be >= 0");
  }
}

std::string log_line(const EpochRecord& r) {
  nlohmann::json j;
  j["epoch"] = r.epoch;
  j["regime"] = std::string(regime_name(r.regime));
  j["seed"] = r.seed;
  j["train_loss"] = r.train_loss;
  j["wall_ms"] = r.wall_ms;
  return j.dump();
}

void write_log(const TrainLog& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  for (const auto& r : log) out << log_line(r) << '\n';
}

namespace {

AuxiliaryCorpus corpus_from_objects(const std::vector<ShapeClass>& classes,
                                    const std::vector<ObjectRecord>& objects) {
  AuxiliaryCorpus c;
  c.classes = classes;
  for (const auto& o : objects) {
    const auto it = std::find(classes.begin(), classes.end(), o.shape);
    const int label = static_cast<int>(it - classes.begin());
    for (const auto& m : o.meshes) c.items.push_back({m, label, o.object_id});
  }
  return c;
}

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "epoch", static_cast<std::uint64_t>(epoch)));
  shuffle(order, rng);
  return order;
}

PretrainedEmbedder extract_embedder(const nn::ParamStore& store, const EmbedderConfig& cfg,
                                    const std::string& objective) {
  PretrainedEmbedder p;
  p.config = cfg;
  p.objective = objective;
  for (const auto& [name, e] : store.entries()) {
    if (name.rfind("embedder.", 0) == 0) p.tensors[name] = e.var.value();
  }
  return p;
}

MeshInput augmented_input(const Mesh& mesh, const Augmentation& aug, std::uint64_t seed) {
  return aug.any() ? prepare_input(augment_mesh(mesh, aug, seed)) : prepare_input(mesh);
}

// Replaces codes that received no assignment with random pre-quantization rows.
void reseed_dead_codes(nn::Codebook& cb, const std::vector<std::uint64_t>& usage,
                       const Matrix& pool, std::uint64_t seed) {
  if (pool.rows() == 0) return;
  Rng rng(seed);
  Matrix& codes = cb.codes.mutable_value();
  for (Eigen::Index k = 0; k < codes.rows(); ++k) {
    if (usage[static_cast<std::size_t>(k)] != 0) continue;
    const auto r = static_cast<Eigen::Index>(uniform_int(rng, 0, static_cast<std::int64_t>(pool.rows()) - 1));
    codes.row(k) = pool.row(r);
  }
}

double classification_accuracy(const Embedder& embedder, const std::vector<nn::TransformerBlock>& blocks,
                               const nn::Linear& head, const std::vector<MeshInput>& inputs,
                               const std::vector<int>& labels) {
  int correct = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Var h = embedder(inputs[i]).embeddings.rows;
    for (const auto& b : blocks) h = b(h);
    const Matrix logits = head(nn::mean_rows(h)).value();
    Eigen::Index arg = 0;
    logits.row(0).maxCoeff(&arg);
    if (arg == labels[i]) ++correct;
  }
  return inputs.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(inputs.size());
}

double mean_reconstruction(const Embedder& embedder, const FaceReconstructor& recon,
                           const std::vector<MeshInput>& inputs) {
  double total = 0.0;
  for (const auto& in : inputs) {
    total += reconstruction_loss(reconstruct_faces(embedder(in).embeddings, recon), in).item();
  }
  return inputs.empty() ? 0.0 : total / static_cast<double>(inputs.size());
}

std::vector<MeshInput> plain_inputs(const AuxiliaryCorpus& corpus) {
  std::vector<MeshInput> out;
  out.reserve(corpus.size());
  for (const auto& it : corpus.items) out.push_back(prepare_input(it.mesh));
  return out;
}

void require_corpus(const AuxiliaryCorpus& corpus) {
  if (corpus.items.empty()) fail(ErrorCode::EmptyInput, "pretraining corpus is empty");
}

TrainResult train_simulator(SimulatorModel model, const TrainConfig& cfg, const Dataset& ds,
                            Regime regime, const EpochHook& hook) {
  const auto samples = training_samples(ds, regime);
  if (samples.empty()) fail(ErrorCode::EmptyInput, "no training samples");
  if (ds.wave && ds.wave->n_angles != model.config().n_angles) {
    fail(ErrorCode::ShapeMismatch, "dataset n_angles differs from model n_angles");
  }
  std::vector<MeshInput> inputs;
  inputs.reserve(samples.size());
  std::set<std::string> ids;
  for (const auto& s : samples) {
    if (s.object->split != Split::Train) fail(ErrorCode::InvalidArgument, "test object in training set");
    if (s.object->response.size() != static_cast<std::size_t>(model.config().n_angles)) {
      fail(ErrorCode::ShapeMismatch, "object " + s.object->object_id + " has no matching response");
    }
    inputs.push_back(prepare_input(s.object->meshes[s.mesh_index]));
  }

  // Loss is measured in units of the output scale so the codebook term of
  // Token models stays commensurate with the regression term.
  const double norm = 1.0 / (model.output_scale() * model.output_scale());
  const double alpha = model.config().loss_alpha;
  const nn::AdamConfig adam{cfg.lr};
  TrainResult result{std::move(model), {}, {}};
  auto& m = result.model;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = epoch_order(samples.size(), cfg.seed, epoch);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      m.params().zero_grad();
      Var total;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        ids.insert(samples[i].object->object_id);
        const auto fwd = m.forward(inputs[i]);
        Var loss = nn::scale(weighted_mse_loss(fwd.prediction, samples[i].object->response, alpha), norm);
        if (fwd.aux_loss.defined()) loss = nn::add(loss, fwd.aux_loss);
        total = total.defined() ? nn::add(total, loss) : loss;
      }
      total = nn::scale(total, 1.0 / static_cast<double>(end - start));
      if (!std::isfinite(total.item())) fail(ErrorCode::Numeric, "training loss is not finite");
      nn::backward(total);
      nn::adam_step(m.params(), adam);
      epoch_loss += total.item() * static_cast<double>(end - start);
    }
    EpochRecord rec{epoch, regime, cfg.seed, epoch_loss / static_cast<double>(samples.size()), elapsed_ms(t0)};
    result.log.push_back(rec);
    if (hook) hook(rec);
  }
  result.audited_ids.assign(ids.begin(), ids.end());
  m.params().zero_grad();
  return result;
}

SimulatorModel fresh_model(const ModelConfig& model, const Dataset& ds, std::uint64_t seed) {
  return SimulatorModel(model, fit_scale_binner(ds, model.scale_bins), target_mean(ds), seed);
}

}  // namespace

AuxiliaryCorpus gen_auxiliary_corpus(const CorpusConfig& cfg) {
  DatasetConfig d;
  d.classes = cfg.classes;
  d.objects_per_class = cfg.objects_per_class;
  d.meshes_per_object = cfg.meshes_per_object;
  d.test_fraction = 0.0;
  d.scale_min = cfg.scale_min;
  d.scale_max = cfg.scale_max;
  d.scale_separation = cfg.scale_separation;
  d.base_segments = cfg.base_segments;
  d.variants = cfg.variants;
  d.seed = cfg.seed;
  d.id_prefix = "aux_";
  const Dataset ds = gen_dataset(d);
  return corpus_from_objects(cfg.classes, ds.objects);
}

AuxiliaryCorpus corpus_from_dataset(const Dataset& ds) {
  return corpus_from_objects(ds.config.classes, ds.objects);
}

void check_disjoint(const AuxiliaryCorpus& corpus, const Dataset& ds) {
  std::set<std::string> ids;
  for (const auto& o : ds.objects) ids.insert(o.object_id);
  for (const auto& it : corpus.items) {
    if (ids.count(it.object_id)) {
      fail(ErrorCode::InvalidArgument, "corpus object " + it.object_id + " is also a simulation object");
    }
  }
}

Mesh augment_mesh(const Mesh& mesh, const Augmentation& aug, std::uint64_t seed) {
  Rng rng(seed);
  Mesh out = normalize_scale(mesh).mesh;
  if (aug.jitter) {
    for (auto& v : out.vertices) {
      for (int k = 0; k < 3; ++k) v[k] += aug.jitter_sigma * normal(rng);
    }
  }
  Eigen::Matrix3d linear = Eigen::Matrix3d::Identity();
  if (aug.rotate) {
    const double a = uniform(rng, 0.0, 2.0 * M_PI);
    linear = Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  }
  if (aug.scale) {
    Eigen::Vector3d s;
    for (int k = 0; k < 3; ++k) s[k] = uniform(rng, aug.scale_lo, aug.scale_hi);
    linear = s.asDiagonal() * linear;
  }
  return transformed(out, linear, Vec3::Zero());
}

void PretrainedEmbedder::save(const std::filesystem::path& path) const {
  nn::ParamStore store;
  for (const auto& [name, value] : tensors) {
    store.create(name, value.rows(), value.cols(), nn::Init::Zeros, 0);
    store.assign(name, value);
  }
  nlohmann::json d;
  d["format"] = "mtopo-embedder/1";
  d["embedder"] = to_json(config);
  d["objective"] = objective;
  nn::save_checkpoint(path, store, d.dump());
}

PretrainedEmbedder PretrainedEmbedder::load(const std::filesystem::path& path) {
  auto ck = nn::load_checkpoint(path);
  PretrainedEmbedder p;
  try {
    const auto d = nlohmann::json::parse(ck.descriptor);
    if (d.at("format") != "mtopo-embedder/1") fail(ErrorCode::Parse, "not an embedder checkpoint");
    p.config = embedder_config_from_json(d.at("embedder"));
    p.objective = d.at("objective").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Parse, std::string("embedder descriptor: ") + e.what());
  }
  p.tensors = std::move(ck.tensors);
  return p;
}

PretrainResult pretrain_classification(const TrainConfig& cfg, const EmbedderConfig& emb,
                                       const AuxiliaryCorpus& corpus) {
  validate_train_config(cfg);
  require_corpus(corpus);
  nn::ParamStore store;
  const Embedder embedder(store, emb, cfg.seed, "embedder");
  std::vector<nn::TransformerBlock> blocks;
  for (int b = 0; b < cfg.classifier_blocks; ++b) {
    blocks.emplace_back(store, "classifier.block" + std::to_string(b), emb.embed_dim, emb.heads, cfg.seed);
  }
  const nn::Linear head(store, "classifier.head", emb.embed_dim,
                        static_cast<Eigen::Index>(corpus.classes.size()), cfg.seed);

  const auto plain = plain_inputs(corpus);
  std::vector<int> labels;
  for (const auto& it : corpus.items) labels.push_back(it.label);

  PretrainResult result;
  result.initial_metric = classification_accuracy(embedder, blocks, head, plain, labels);
  const nn::AdamConfig adam{cfg.lr};
  const std::size_t n = corpus.size();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = epoch_order(n, cfg.seed, epoch);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      store.zero_grad();
      Var total;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        const MeshInput in = augmented_input(
            corpus.items[i].mesh, cfg.augment,
            derive_seed(cfg.seed, "augment/" + std::to_string(epoch), i));
        const auto out = embedder(in);
        Var h = out.embeddings.rows;
        for (const auto& blk : blocks) h = blk(h);
        Var loss = nn::cross_entropy(head(nn::mean_rows(h)), labels[i]);
        if (out.vq_loss.defined()) loss = nn::add(loss, out.vq_loss);
        total = total.defined() ? nn::add(total, loss) : loss;
      }
      total = nn::scale(total, 1.0 / static_cast<double>(end - start));
      if (!std::isfinite(total.item())) fail(ErrorCode::Numeric, "pretraining loss is not finite");
      nn::backward(total);
      nn::adam_step(store, adam);
      epoch_loss += total.item() * static_cast<double>(end - start);
    }
    result.log.push_back({epoch, Regime::PretrainClassify, cfg.seed, epoch_loss / static_cast<double>(n),
                          elapsed_ms(t0)});
  }
  store.zero_grad();
  result.final_metric = classification_accuracy(embedder, blocks, head, plain, labels);
  result.embedder = extract_embedder(store, emb, "classification");
  return result;
}

PretrainResult pretrain_autoencoder(const TrainConfig& cfg, const EmbedderConfig& emb,
                                    const AuxiliaryCorpus& corpus, const AuxiliaryCorpus* held_out) {
  validate_train_config(cfg);
  require_corpus(corpus);
  if (emb.kind == EmbedderKind::Direct) {
    fail(ErrorCode::InvalidArgument, "autoencoder pretraining is defined for graph and token embedders");
  }
  nn::ParamStore store;
  Embedder embedder(store, emb, cfg.seed, "embedder");
  const FaceReconstructor recon(store, "autoencoder.recon", emb.embed_dim, cfg.seed);
  const bool token = emb.kind == EmbedderKind::Token;

  const auto eval_inputs = plain_inputs(held_out ? *held_out : corpus);
  PretrainResult result;
  result.initial_metric = mean_reconstruction(embedder, recon, eval_inputs);
  const nn::AdamConfig adam{cfg.lr};
  const std::size_t n = corpus.size();
  std::vector<std::uint64_t> usage;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = epoch_order(n, cfg.seed, epoch);
    usage.assign(token ? static_cast<std::size_t>(emb.codebook_size) : 0, 0);
    Matrix pool;
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      store.zero_grad();
      Var total;
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t i = order[b];
        const MeshInput in = augmented_input(
            corpus.items[i].mesh, cfg.augment,
            derive_seed(cfg.seed, "augment/" + std::to_string(epoch), i));
        const auto out = embedder(in, token ? &usage : nullptr);
        Var loss = reconstruction_loss(reconstruct_faces(out.embeddings, recon), in);
        if (out.vq_loss.defined()) loss = nn::add(loss, out.vq_loss);
        if (token && end == n) pool = out.pre_quantization.value();
        total = total.defined() ? nn::add(total, loss) : loss;
      }
      total = nn::scale(total, 1.0 / static_cast<double>(end - start));
      if (!std::isfinite(total.item())) fail(ErrorCode::Numeric, "pretraining loss is not finite");
      nn::backward(total);
      nn::adam_step(store, adam);
      epoch_loss += total.item() * static_cast<double>(end - start);
    }
    if (token) {
      const auto used = std::count_if(usage.begin(), usage.end(), [](std::uint64_t u) { return u > 0; });
      result.code_usage = static_cast<double>(used) / static_cast<double>(usage.size());
      if (cfg.reseed_dead_codes && epoch < cfg.epochs) {
        reseed_dead_codes(embedder.codebook(), usage, pool,
                          derive_seed(cfg.seed, "reseed", static_cast<std::uint64_t>(epoch)));
      }
    }
    result.log.push_back({epoch, Regime::PretrainAutoencode, cfg.seed,
                          epoch_loss / static_cast<double>(n), elapsed_ms(t0)});
  }
  store.zero_grad();
  result.final_metric = mean_reconstruction(embedder, recon, eval_inputs);
  result.embedder = extract_embedder(store, emb, "autoencoder");
  return result;
}

std::vector<TrainingSample> training_samples(const Dataset& ds, Regime regime) {
  if (regime != Regime::Scratch && regime != Regime::Finetune && regime != Regime::Ideal) {
    fail(ErrorCode::InvalidArgument, "training_samples: not a simulation regime");
  }
  std::vector<TrainingSample> out;
  for (const auto& o : ds.objects) {
    if (o.split != Split::Train) continue;
    const std::size_t count = regime == Regime::Ideal ? o.meshes.size() : 1;
    for (std::size_t m = 0; m < count; ++m) out.push_back({&o, m});
  }
  return out;
}

ScaleBinner fit_scale_binner(const Dataset& ds, int bins) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& o : ds.objects) {
    if (o.split != Split::Train) continue;
    for (const auto& m : o.meshes) {
      const double s = bounding_box(m).extent().maxCoeff();
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
  }
  if (!(hi > 0.0)) fail(ErrorCode::EmptyInput, "fit_scale_binner: no training meshes");
  if (hi <= lo * (1.0 + 1e-9)) {
    lo *= 0.9;
    hi *= 1.1;
  }
  return ScaleBinner(lo, hi, bins);
}

double target_mean(const Dataset& ds) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& o : ds.objects) {
    if (o.split != Split::Train) continue;
    for (double v : o.response) sum += v;
    n += o.response.size();
  }
  if (n == 0) fail(ErrorCode::EmptyInput, "target_mean: no ground truth on training objects");
  const double mean = sum / static_cast<double>(n);
  return mean > 0.0 ? mean : 1.0;
}

TrainResult train_scratch(const TrainConfig& cfg, const ModelConfig& model, const Dataset& ds,
                          const EpochHook& hook) {
  validate_train_config(cfg);
  if (cfg.regime != Regime::Scratch) fail(ErrorCode::Config, "train_scratch needs regime 'scratch'");
  return train_simulator(fresh_model(model, ds, cfg.seed), cfg, ds, Regime::Scratch, hook);
}

TrainResult train_ideal(const TrainConfig& cfg, const ModelConfig& model, const Dataset& ds,
                        const EpochHook& hook) {
  validate_train_config(cfg);
  if (cfg.regime != Regime::Ideal) fail(ErrorCode::Config, "train_ideal needs regime 'ideal'");
  return train_simulator(fresh_model(model, ds, cfg.seed), cfg, ds, Regime::Ideal, hook);
}

TrainResult finetune(const PretrainedEmbedder& init, const TrainConfig& cfg, const ModelConfig& model,
                     const Dataset& ds, const EpochHook& hook) {
  validate_train_config(cfg);
  if (cfg.regime != Regime::Finetune) fail(ErrorCode::Config, "finetune needs regime 'finetune'");
  if (to_json(init.config) != to_json(model.embedder)) {
    fail(ErrorCode::ArchitectureMismatch, "pretrained embedder " + to_json(init.config).dump() +
                                              " does not match model embedder " +
                                              to_json(model.embedder).dump());
  }
  SimulatorModel m = fresh_model(model, ds, cfg.seed);
  std::size_t expected = 0;
  for (const auto& name : m.params().names()) {
    if (name.rfind("embedder.", 0) == 0) ++expected;
  }
  if (init.tensors.size() != expected) {
    fail(ErrorCode::ArchitectureMismatch, "pretrained embedder has a different parameter set");
  }
  for (const auto& [name, value] : init.tensors) m.params().assign(name, value);
  return train_simulator(std::move(m), cfg, ds, Regime::Finetune, hook);
}

PretrainedEmbedder random_embedder(const ModelConfig& model, std::uint64_t seed) {
  const SimulatorModel m(model, ScaleBinner(1.0, 2.0, model.scale_bins), 1.0, seed);
  return extract_embedder(m.params(), model.embedder, "none");
}

}  // namespace mtopo
