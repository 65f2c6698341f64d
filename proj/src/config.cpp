#include "mtopo/config.hpp"

#include "mtopo/error.hpp"
#include "mtopo/rng.hpp"

#include <fstream>
#include <set>

namespace mtopo {

namespace {

// Reads fields of one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorCode::Config, path_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(ErrorCode::Config, path_ + "." + key + ": wrong type");
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string child(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail(ErrorCode::Config, path_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class Enum, class Parse>
void get_enum(Section& s, const char* key, Enum& out, Parse parse) {
  std::string name;
  s.get(key, name);
  if (name.empty()) return;
  try {
    out = parse(name);
  } catch (const Error& e) {
    fail(ErrorCode::Config, s.child(key) + ": " + e.what());
  }
}

VariantParams variants_from(const json& j, const std::string& path) {
  VariantParams v;
  Section s(j, path);
  s.get("max_loop_cuts", v.max_loop_cuts);
  s.get("cut_margin", v.cut_margin);
  s.get("min_decimation_ratio", v.min_decimation_ratio);
  s.get("max_decimation_ratio", v.max_decimation_ratio);
  s.get("vary_curvature", v.vary_curvature);
  s.get("cylinder_min_segments", v.cylinder_min_segments);
  s.get("cylinder_max_segments", v.cylinder_max_segments);
  s.get("sphere_min_segments", v.sphere_min_segments);
  s.get("sphere_max_segments", v.sphere_max_segments);
  s.get("curvature_tolerance", v.curvature_tolerance);
  s.get("max_retries", v.max_retries);
  s.finish();
  return v;
}

std::vector<ShapeClass> classes_from(Section& s, const char* key, std::vector<ShapeClass> dflt) {
  std::vector<std::string> names;
  s.get(key, names);
  if (names.empty()) return dflt;
  std::vector<ShapeClass> out;
  for (const auto& n : names) {
    try {
      out.push_back(parse_class(n));
    } catch (const Error& e) {
      fail(ErrorCode::Config, s.child(key) + ": " + e.what());
    }
  }
  return out;
}

json class_names(const std::vector<ShapeClass>& classes) {
  json a = json::array();
  for (auto c : classes) a.push_back(std::string(class_name(c)));
  return a;
}

DatasetConfig dataset_from(const json& j, const std::string& path, bool allow_identity) {
  DatasetConfig c;
  Section s(j, path);
  c.classes = classes_from(s, "classes", c.classes);
  s.get("objects_per_class", c.objects_per_class);
  s.get("meshes_per_object", c.meshes_per_object);
  s.get("test_fraction", c.test_fraction);
  s.get("scale_min", c.scale_min);
  s.get("scale_max", c.scale_max);
  s.get("scale_separation", c.scale_separation);
  s.get("base_segments", c.base_segments);
  if (const json* v = s.sub("variants")) c.variants = variants_from(*v, s.child("variants"));
  if (allow_identity) {
    s.get("seed", c.seed);
    s.get("id_prefix", c.id_prefix);
  }
  s.finish();
  return c;
}

CorpusConfig corpus_from(const json& j, const std::string& path) {
  CorpusConfig c;
  Section s(j, path);
  c.classes = classes_from(s, "classes", c.classes);
  s.get("objects_per_class", c.objects_per_class);
  s.get("meshes_per_object", c.meshes_per_object);
  s.get("scale_min", c.scale_min);
  s.get("scale_max", c.scale_max);
  s.get("scale_separation", c.scale_separation);
  s.get("base_segments", c.base_segments);
  if (const json* v = s.sub("variants")) c.variants = variants_from(*v, s.child("variants"));
  s.finish();
  return c;
}

Augmentation augment_from(const json& j, const std::string& path) {
  Augmentation a;
  Section s(j, path);
  s.get("scale", a.scale);
  s.get("jitter", a.jitter);
  s.get("rotate", a.rotate);
  s.get("scale_lo", a.scale_lo);
  s.get("scale_hi", a.scale_hi);
  s.get("jitter_sigma", a.jitter_sigma);
  s.finish();
  return a;
}

json to_json(const Augmentation& a) {
  return {{"scale", a.scale},       {"jitter", a.jitter},     {"rotate", a.rotate},
          {"scale_lo", a.scale_lo}, {"scale_hi", a.scale_hi}, {"jitter_sigma", a.jitter_sigma}};
}

json to_json(const CorpusConfig& c) {
  return {{"classes", class_names(c.classes)},
          {"objects_per_class", c.objects_per_class},
          {"meshes_per_object", c.meshes_per_object},
          {"scale_min", c.scale_min},
          {"scale_max", c.scale_max},
          {"scale_separation", c.scale_separation},
          {"base_segments", c.base_segments},
          {"variants", to_json(c.variants)}};
}

EmbedderConfig embedder_from(const json& j, const std::string& path) {
  EmbedderConfig c;
  Section s(j, path);
  get_enum(s, "kind", c.kind, parse_embedder);
  s.get("embed_dim", c.embed_dim);
  s.get("graph_layers", c.graph_layers);
  s.get("heads", c.heads);
  s.get("codebook_size", c.codebook_size);
  s.get("vq_beta", c.vq_beta);
  s.finish();
  return c;
}

ModelConfig model_from(const json& j, const std::string& path) {
  ModelConfig c;
  Section s(j, path);
  if (const json* e = s.sub("embedder")) c.embedder = embedder_from(*e, s.child("embedder"));
  s.get("agg_blocks", c.agg_blocks);
  s.get("heads", c.heads);
  s.get("scale_bins", c.scale_bins);
  s.get("scale_dim", c.scale_dim);
  s.get("decoder_hidden", c.decoder_hidden);
  s.get("n_angles", c.n_angles);
  s.get("loss_alpha", c.loss_alpha);
  s.finish();
  return c;
}

TrainConfig train_from(const json& j, const std::string& path) {
  TrainConfig c;
  Section s(j, path);
  get_enum(s, "regime", c.regime, parse_regime);
  s.get("epochs", c.epochs);
  s.get("batch_size", c.batch_size);
  s.get("lr", c.lr);
  s.get("seed", c.seed);
  if (const json* a = s.sub("augment")) c.augment = augment_from(*a, s.child("augment"));
  s.get("classifier_blocks", c.classifier_blocks);
  s.get("reseed_dead_codes", c.reseed_dead_codes);
  s.finish();
  return c;
}

void check_positive(bool ok, const std::string& what) {
  if (!ok) fail(ErrorCode::Config, what);
}

}  // namespace

json to_json(const VariantParams& v) {
  return {{"max_loop_cuts", v.max_loop_cuts},
          {"cut_margin", v.cut_margin},
          {"min_decimation_ratio", v.min_decimation_ratio},
          {"max_decimation_ratio", v.max_decimation_ratio},
          {"vary_curvature", v.vary_curvature},
          {"cylinder_min_segments", v.cylinder_min_segments},
          {"cylinder_max_segments", v.cylinder_max_segments},
          {"sphere_min_segments", v.sphere_min_segments},
          {"sphere_max_segments", v.sphere_max_segments},
          {"curvature_tolerance", v.curvature_tolerance},
          {"max_retries", v.max_retries}};
}

json to_json(const DatasetConfig& c) {
  return {{"classes", class_names(c.classes)},
          {"objects_per_class", c.objects_per_class},
          {"meshes_per_object", c.meshes_per_object},
          {"test_fraction", c.test_fraction},
          {"scale_min", c.scale_min},
          {"scale_max", c.scale_max},
          {"scale_separation", c.scale_separation},
          {"base_segments", c.base_segments},
          {"variants", to_json(c.variants)},
          {"seed", c.seed},
          {"id_prefix", c.id_prefix}};
}

json to_json(const WaveConfig& c) { return {{"wavelength", c.wavelength}, {"n_angles", c.n_angles}}; }

json to_json(const EmbedderConfig& c) {
  return {{"kind", std::string(embedder_name(c.kind))},
          {"embed_dim", c.embed_dim},
          {"graph_layers", c.graph_layers},
          {"heads", c.heads},
          {"codebook_size", c.codebook_size},
          {"vq_beta", c.vq_beta}};
}

json to_json(const ModelConfig& c) {
  return {{"embedder", to_json(c.embedder)},
          {"agg_blocks", c.agg_blocks},
          {"heads", c.heads},
          {"scale_bins", c.scale_bins},
          {"scale_dim", c.scale_dim},
          {"decoder_hidden", c.decoder_hidden},
          {"n_angles", c.n_angles},
          {"loss_alpha", c.loss_alpha}};
}

json to_json(const TrainConfig& c) {
  return {{"regime", std::string(regime_name(c.regime))},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"seed", c.seed},
          {"augment", to_json(c.augment)},
          {"classifier_blocks", c.classifier_blocks},
          {"reseed_dead_codes", c.reseed_dead_codes}};
}

json to_json(const RunConfig& c) {
  json ds = to_json(c.dataset);
  ds.erase("seed");
  ds.erase("id_prefix");
  json tr = to_json(c.training);
  tr.erase("seed");
  json model = to_json(c.model);
  model.erase("n_angles");
  return {{"seed", c.seed},
          {"out", c.out.string()},
          {"dataset", ds},
          {"oracle", to_json(c.oracle)},
          {"model", model},
          {"training", tr},
          {"pretrain",
           {{"corpus", to_json(c.pretrain.corpus)},
            {"epochs", c.pretrain.epochs},
            {"lr", c.pretrain.lr},
            {"augment", to_json(c.pretrain.augment)}}},
          {"eval", {{"collapse_tau", c.eval.collapse_tau}, {"threads", c.eval.threads}}},
          {"repro", {{"seeds", c.repro.seeds}}}};
}

VariantParams variant_params_from_json(const json& j) { return variants_from(j, "variants"); }
DatasetConfig dataset_config_from_json(const json& j) { return dataset_from(j, "dataset", true); }

WaveConfig wave_config_from_json(const json& j) {
  WaveConfig c;
  Section s(j, "oracle");
  s.get("wavelength", c.wavelength);
  s.get("n_angles", c.n_angles);
  s.finish();
  return c;
}

EmbedderConfig embedder_config_from_json(const json& j) { return embedder_from(j, "embedder"); }
ModelConfig model_config_from_json(const json& j) { return model_from(j, "model"); }
TrainConfig train_config_from_json(const json& j) { return train_from(j, "training"); }

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Section s(j, "config");
  s.get("seed", c.seed);
  std::string out;
  s.get("out", out);
  if (!out.empty()) c.out = out;
  if (const json* d = s.sub("dataset")) c.dataset = dataset_from(*d, "dataset", false);
  if (const json* o = s.sub("oracle")) {
    Section os(*o, "oracle");
    os.get("wavelength", c.oracle.wavelength);
    os.get("n_angles", c.oracle.n_angles);
    os.finish();
  }
  if (const json* m = s.sub("model")) {
    if (m->contains("n_angles")) fail(ErrorCode::Config, "model.n_angles: set oracle.n_angles instead");
    c.model = model_from(*m, "model");
  }
  if (const json* t = s.sub("training")) {
    if (t->contains("seed")) fail(ErrorCode::Config, "training.seed: set the master seed instead");
    c.training = train_from(*t, "training");
  }
  if (const json* p = s.sub("pretrain")) {
    Section ps(*p, "pretrain");
    if (const json* cj = ps.sub("corpus")) c.pretrain.corpus = corpus_from(*cj, "pretrain.corpus");
    ps.get("epochs", c.pretrain.epochs);
    ps.get("lr", c.pretrain.lr);
    if (const json* a = ps.sub("augment")) c.pretrain.augment = augment_from(*a, "pretrain.augment");
    ps.finish();
  }
  if (const json* e = s.sub("eval")) {
    Section es(*e, "eval");
    es.get("collapse_tau", c.eval.collapse_tau);
    es.get("threads", c.eval.threads);
    es.finish();
  }
  if (const json* r = s.sub("repro")) {
    Section rs(*r, "repro");
    rs.get("seeds", c.repro.seeds);
    rs.finish();
  }
  s.finish();

  c.dataset.seed = c.seed;
  c.training.seed = c.seed;
  c.pretrain.corpus.seed = derive_seed(c.seed, "auxiliary-corpus");
  c.model.n_angles = c.oracle.n_angles;

  check_positive(c.dataset.objects_per_class > 0 && c.dataset.meshes_per_object > 0,
                 "dataset: counts must be positive");
  check_positive(c.oracle.wavelength > 0.0 && c.oracle.n_angles >= 8,
                 "oracle: wavelength must be positive and n_angles >= 8");
  check_positive(c.model.embedder.embed_dim > 0 && c.model.heads > 0 &&
                     c.model.embedder.embed_dim % c.model.heads == 0,
                 "model: embed_dim must be a positive multiple of heads");
  check_positive(c.model.embedder.embed_dim % c.model.embedder.heads == 0,
                 "model.embedder: embed_dim must be a multiple of heads");
  check_positive(c.model.scale_bins > 0 && c.model.scale_dim > 0 && c.model.decoder_hidden > 0,
                 "model: sizes must be positive");
  check_positive(c.pretrain.epochs > 0 && c.pretrain.lr > 0.0, "pretrain: epochs and lr must be positive");
  check_positive(c.eval.collapse_tau > 0.0, "eval.collapse_tau must be positive");
  check_positive(!c.repro.seeds.empty(), "repro.seeds must be nonempty");
  validate_train_config(c.training);
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    fail(ErrorCode::Config, "override '" + assignment + "' is not key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) fail(ErrorCode::Config, "override key '" + key + "' has an empty component");
    if (!node->is_object()) fail(ErrorCode::Config, "override key '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Config, "cannot open config " + path.string());
    doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) fail(ErrorCode::Config, "config " + path.string() + " is not valid JSON");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return run_config_from_json(doc);
}

}  // namespace mtopo
