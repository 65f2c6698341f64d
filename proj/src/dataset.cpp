#include "mtopo/dataset.hpp"

#include "mtopo/config.hpp"
#include "mtopo/error.hpp"
#include "mtopo/obj_io.hpp"
#include "mtopo/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mtopo {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view split_name(Split s) { return s == Split::Train ? "train" : "test"; }

std::size_t Dataset::num_meshes() const {
  std::size_t n = 0;
  for (const auto& o : objects) n += o.meshes.size();
  return n;
}

std::vector<const ObjectRecord*> Dataset::with_split(Split s) const {
  std::vector<const ObjectRecord*> out;
  for (const auto& o : objects) {
    if (o.split == s) out.push_back(&o);
  }
  return out;
}

std::vector<Vec3> sample_scales(int count, double lo, double hi, double separation,
                                std::uint64_t seed) {
  if (!(hi > lo) || lo <= 0.0) fail(ErrorCode::InvalidArgument, "sample_scales: bad range");
  Rng rng(seed);
  std::vector<Vec3> accepted;
  constexpr int kMaxAttempts = 20000;
  for (int i = 0; i < count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      Vec3 s;
      for (int k = 0; k < 3; ++k) s[k] = uniform(rng, lo, hi);
      const bool far = std::all_of(accepted.begin(), accepted.end(), [&](const Vec3& o) {
        return (o - s).cwiseAbs().maxCoeff() >= separation;
      });
      if (far) {
        accepted.push_back(s);
        placed = true;
      }
    }
    if (!placed) {
      fail(ErrorCode::SamplingExhausted,
           "sample_scales: could not place scale " + std::to_string(i) + " of " +
               std::to_string(count) + " with separation " + std::to_string(separation));
    }
  }
  return accepted;
}

Dataset gen_dataset(const DatasetConfig& config) {
  if (config.objects_per_class < 1 || config.meshes_per_object < 1) {
    fail(ErrorCode::InvalidArgument, "gen_dataset: counts must be positive");
  }
  if (!(config.test_fraction >= 0.0 && config.test_fraction < 1.0)) {
    fail(ErrorCode::InvalidArgument, "gen_dataset: test_fraction must be in [0,1)");
  }
  Dataset ds;
  ds.config = config;
  for (ShapeClass cls : config.classes) {
    const std::string tag = config.id_prefix + std::string(class_name(cls));
    const auto scales =
        sample_scales(config.objects_per_class, config.scale_min, config.scale_max,
                      config.scale_separation, derive_seed(config.seed, "scales/" + tag));

    std::vector<int> order(static_cast<std::size_t>(config.objects_per_class));
    for (int i = 0; i < config.objects_per_class; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng split_rng(derive_seed(config.seed, "split/" + tag));
    shuffle(order, split_rng);
    const auto n_test = static_cast<int>(std::lround(config.test_fraction * config.objects_per_class));
    std::vector<bool> is_test(order.size(), false);
    for (int i = 0; i < n_test; ++i) is_test[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

    for (int i = 0; i < config.objects_per_class; ++i) {
      ObjectRecord obj;
      char id[64];
      std::snprintf(id, sizeof id, "%s_%04d", tag.c_str(), i);
      obj.object_id = id;
      obj.shape = cls;
      obj.scale = scales[static_cast<std::size_t>(i)];
      obj.seed = derive_seed(config.seed, tag, static_cast<std::uint64_t>(i));
      obj.split = is_test[static_cast<std::size_t>(i)] ? Split::Test : Split::Train;
      const PrimitiveSpec spec = obj.spec(config.base_segments);
      obj.meshes.push_back(gen_primitive(spec));
      for (int v = 1; v < config.meshes_per_object; ++v) {
        obj.meshes.push_back(gen_variant(spec, derive_seed(obj.seed, "variant", static_cast<std::uint64_t>(v)),
                                         config.variants));
      }
      ds.objects.push_back(std::move(obj));
    }
  }
  return ds;
}

Response ground_truth_for_object(const ObjectRecord& obj, const WaveConfig& cfg) {
  if (obj.meshes.empty()) fail(ErrorCode::EmptyInput, "ground_truth_for_object: no simple mesh");
  return simulate(obj.simple(), cfg);
}

void attach_ground_truth(Dataset& ds, const WaveConfig& cfg) {
  check_wave_config(cfg);
  for (auto& o : ds.objects) o.response = ground_truth_for_object(o, cfg);
  ds.wave = cfg;
}

fs::path mesh_relpath(const ObjectRecord& obj, std::size_t mesh_idx) {
  return fs::path(std::string(class_name(obj.shape))) / obj.object_id /
         (std::to_string(mesh_idx) + ".obj");
}

fs::path response_relpath(const ObjectRecord& obj) {
  return fs::path("responses") / (obj.object_id + ".csv");
}

std::string manifest_json(const Dataset& ds) {
  json j;
  j["format"] = "mtopo-manifest/1";
  j["config"] = to_json(ds.config);
  if (ds.wave) j["wave"] = to_json(*ds.wave);
  json objs = json::array();
  for (const auto& o : ds.objects) {
    json jo;
    jo["object_id"] = o.object_id;
    jo["class"] = std::string(class_name(o.shape));
    jo["scale"] = {o.scale.x(), o.scale.y(), o.scale.z()};
    jo["seed"] = o.seed;
    jo["split"] = std::string(split_name(o.split));
    json meshes = json::array();
    for (std::size_t m = 0; m < o.meshes.size(); ++m) meshes.push_back(mesh_relpath(o, m).generic_string());
    jo["meshes"] = meshes;
    jo["response"] = o.response.empty() ? json(nullptr) : json(response_relpath(o).generic_string());
    objs.push_back(jo);
  }
  j["objects"] = objs;
  return j.dump(2) + "\n";
}

void write_dataset(const Dataset& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create " + dir.string());
  for (const auto& o : ds.objects) {
    for (std::size_t m = 0; m < o.meshes.size(); ++m) {
      const fs::path p = dir / mesh_relpath(o, m);
      fs::create_directories(p.parent_path(), ec);
      if (ec) fail(ErrorCode::Io, "cannot create " + p.parent_path().string());
      save_mesh(o.meshes[m], p);
    }
    if (!o.response.empty()) {
      if (!ds.wave) fail(ErrorCode::InvalidArgument, "write_dataset: responses need a wave config");
      const fs::path p = dir / response_relpath(o);
      fs::create_directories(p.parent_path(), ec);
      write_response_csv(p, o.response, *ds.wave);
    }
  }
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write manifest in " + dir.string());
  out << manifest_json(ds);
  if (!out) fail(ErrorCode::Io, "manifest write failed");
}

Dataset read_dataset(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) fail(ErrorCode::Io, "cannot open " + (dir / "manifest.json").string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("manifest: ") + e.what());
  }
  Dataset ds;
  try {
    ds.config = dataset_config_from_json(j.at("config"));
    if (j.contains("wave")) ds.wave = wave_config_from_json(j.at("wave"));
    for (const auto& jo : j.at("objects")) {
      ObjectRecord o;
      o.object_id = jo.at("object_id").get<std::string>();
      o.shape = parse_class(jo.at("class").get<std::string>());
      const auto sc = jo.at("scale").get<std::vector<double>>();
      if (sc.size() != 3) fail(ErrorCode::Parse, "manifest: scale needs 3 entries");
      o.scale = Vec3(sc[0], sc[1], sc[2]);
      o.seed = jo.at("seed").get<std::uint64_t>();
      o.split = jo.at("split").get<std::string>() == "test" ? Split::Test : Split::Train;
      for (const auto& mp : jo.at("meshes")) o.meshes.push_back(load_mesh(dir / mp.get<std::string>()));
      if (o.meshes.empty()) fail(ErrorCode::Parse, "manifest: object without meshes");
      if (!jo.at("response").is_null()) {
        o.response = read_response_csv(dir / jo.at("response").get<std::string>());
      }
      ds.objects.push_back(std::move(o));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("manifest: ") + e.what());
  }
  return ds;
}

}  // namespace mtopo
