#pragma once

#include "mtopo/mesh.hpp"
#include "mtopo/radar.hpp"
#include "mtopo/shape_gen.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mtopo {

enum class Split { Train, Test };

std::string_view split_name(Split s);

struct DatasetConfig {
  std::vector<ShapeClass> classes = {ShapeClass::Cube, ShapeClass::Cylinder, ShapeClass::Sphere};
  int objects_per_class = 50;
  int meshes_per_object = 10;  // one simple mesh plus meshes_per_object - 1 variants
  double test_fraction = 0.1;
  double scale_min = 0.5;
  double scale_max = 1.5;
  double scale_separation = 0.05;  // minimum L-infinity distance between same-class scales
  int base_segments = 16;
  VariantParams variants;
  std::uint64_t seed = 7;
  std::string id_prefix;  // keeps auxiliary corpora disjoint from simulation sets
};

/// One underlying shape. meshes[0] is the simple mesh; the rest are complex
/// variants. `response` is the ground truth shared by all of them once simulated.
struct ObjectRecord {
  std::string object_id;
  ShapeClass shape = ShapeClass::Cube;
  Vec3 scale = Vec3::Ones();
  std::uint64_t seed = 0;
  Split split = Split::Train;
  std::vector<Mesh> meshes;
  Response response;

  PrimitiveSpec spec(int base_segments) const { return {shape, scale, base_segments}; }
  const Mesh& simple() const { return meshes.front(); }
  std::size_t num_complex() const { return meshes.size() - 1; }
};

struct Dataset {
  DatasetConfig config;
  std::vector<ObjectRecord> objects;
  std::optional<WaveConfig> wave;  // set once ground-truth responses are attached

  std::size_t num_meshes() const;
  std::vector<const ObjectRecord*> with_split(Split s) const;
};

/// Rejection-sampled per-axis scales, at least `separation` apart in L-infinity.
/// Throws SamplingExhausted when the range cannot hold `count` such scales.
std::vector<Vec3> sample_scales(int count, double lo, double hi, double separation,
                                std::uint64_t seed);

/// Fully deterministic in config (object i of class c uses
/// derive_seed(seed, prefix + class, i)); split is per object and stratified by class.
Dataset gen_dataset(const DatasetConfig& config);

/// Ground truth for every mesh of the object: simulate() on the simple mesh.
Response ground_truth_for_object(const ObjectRecord& obj, const WaveConfig& cfg);

/// Fills `response` for every object and records the wave config.
void attach_ground_truth(Dataset& ds, const WaveConfig& cfg);

/// Relative mesh path inside a dataset directory: <class>/<object_id>/<mesh_idx>.obj
std::filesystem::path mesh_relpath(const ObjectRecord& obj, std::size_t mesh_idx);
std::filesystem::path response_relpath(const ObjectRecord& obj);

/// Writes manifest.json, every mesh, and (when present) the response CSVs.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
/// Loads manifest.json and every mesh; responses are loaded when listed.
Dataset read_dataset(const std::filesystem::path& dir);

std::string manifest_json(const Dataset& ds);

}  // namespace mtopo
