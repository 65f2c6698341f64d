#include "mtopo/dataset.hpp"
#include "mtopo/error.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

using namespace mtopo;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), root).string()] = ss.str();
  }
  return files;
}

}  // namespace

TEST(Dataset, CountsAndSplit) {
  const auto cfg = mtopo::testing::small_dataset_config(5, 3);
  const Dataset ds = gen_dataset(cfg);
  EXPECT_EQ(ds.objects.size(), 15u);
  EXPECT_EQ(ds.num_meshes(), 45u);
  std::map<ShapeClass, int> per_class, test_per_class;
  for (const auto& o : ds.objects) {
    ++per_class[o.shape];
    if (o.split == Split::Test) ++test_per_class[o.shape];
    EXPECT_EQ(o.meshes.size(), 3u);
    EXPECT_EQ(o.simple(), gen_primitive(o.spec(cfg.base_segments)));
  }
  for (auto c : cfg.classes) {
    EXPECT_EQ(per_class[c], 5);
    EXPECT_EQ(test_per_class[c], 1);
  }
  EXPECT_EQ(ds.with_split(Split::Test).size(), 3u);
  EXPECT_EQ(ds.with_split(Split::Train).size(), 12u);
}

TEST(Dataset, DeskConfigArithmetic) {
  DatasetConfig cfg;
  cfg.objects_per_class = 50;
  cfg.meshes_per_object = 10;
  cfg.test_fraction = 0.1;
  const Dataset ds = gen_dataset(cfg);
  EXPECT_EQ(ds.num_meshes(), 1500u);
  EXPECT_EQ(ds.with_split(Split::Train).size(), 135u);
  EXPECT_EQ(ds.with_split(Split::Test).size(), 15u);
}

TEST(Dataset, FullScaleSplitArithmetic) {
  // Full-size object counts with only the simple mesh per object; the mesh
  // total at 100 meshes per object follows from the object count.
  DatasetConfig cfg;
  cfg.objects_per_class = 1000;
  cfg.meshes_per_object = 1;
  cfg.test_fraction = 0.1;
  const Dataset ds = gen_dataset(cfg);
  EXPECT_EQ(ds.objects.size() * 100, 300000u);
  EXPECT_EQ(ds.with_split(Split::Train).size(), 2700u);
  EXPECT_EQ(ds.with_split(Split::Test).size(), 300u);
}

TEST(Dataset, ScaleSeparationProperty) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto s = sample_scales(60, 0.5, 1.5, 0.05, seed);
    ASSERT_EQ(s.size(), 60u);
    for (std::size_t i = 0; i < s.size(); ++i) {
      EXPECT_TRUE((s[i].array() >= 0.5).all() && (s[i].array() < 1.5).all());
      for (std::size_t j = i + 1; j < s.size(); ++j) {
        EXPECT_GE((s[i] - s[j]).cwiseAbs().maxCoeff(), 0.05);
      }
    }
  }
}

TEST(Dataset, SamplingExhausted) {
  // At most 2 values per axis fit 0.6 apart in [0.5, 1.5): 8 scales max.
  try {
    sample_scales(9, 0.5, 1.5, 0.6, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SamplingExhausted);
  }
  auto cfg = mtopo::testing::small_dataset_config(30, 1);
  cfg.scale_separation = 0.6;
  EXPECT_THROW(gen_dataset(cfg), Error);
}

TEST(Dataset, ByteIdenticalRegeneration) {
  const auto cfg = mtopo::testing::small_dataset_config(3, 3, 21);
  const auto a = mtopo::testing::fresh_temp_dir("ds_a");
  const auto b = mtopo::testing::fresh_temp_dir("ds_b");
  write_dataset(mtopo::testing::simulated_dataset(cfg), a);
  write_dataset(mtopo::testing::simulated_dataset(cfg), b);
  const auto ta = read_tree(a), tb = read_tree(b);
  EXPECT_EQ(ta.size(), 1u + 9 * 3 + 9);  // manifest, meshes, responses
  EXPECT_EQ(ta, tb);
}

TEST(Dataset, DifferentSeedDiffers) {
  const Dataset a = gen_dataset(mtopo::testing::small_dataset_config(3, 2, 1));
  const Dataset b = gen_dataset(mtopo::testing::small_dataset_config(3, 2, 2));
  EXPECT_NE(manifest_json(a), manifest_json(b));
}

TEST(Dataset, WriteReadRoundTrip) {
  const auto cfg = mtopo::testing::small_dataset_config(3, 3, 5);
  const Dataset ds = mtopo::testing::simulated_dataset(cfg);
  const auto dir = mtopo::testing::fresh_temp_dir("ds_rt");
  write_dataset(ds, dir);
  const Dataset back = read_dataset(dir);
  ASSERT_EQ(back.objects.size(), ds.objects.size());
  ASSERT_TRUE(back.wave.has_value());
  EXPECT_EQ(back.wave->n_angles, 16);
  for (std::size_t i = 0; i < ds.objects.size(); ++i) {
    const auto& x = ds.objects[i];
    const auto& y = back.objects[i];
    EXPECT_EQ(x.object_id, y.object_id);
    EXPECT_EQ(x.shape, y.shape);
    EXPECT_EQ(x.scale, y.scale);
    EXPECT_EQ(x.split, y.split);
    EXPECT_EQ(x.meshes, y.meshes);
    EXPECT_EQ(x.response, y.response);
    EXPECT_TRUE(fs::exists(dir / mesh_relpath(x, 2)));
  }
  EXPECT_EQ(manifest_json(back), manifest_json(ds));
}

TEST(Dataset, LayoutAndPrefix) {
  auto cfg = mtopo::testing::small_dataset_config(2, 2);
  cfg.id_prefix = "aux_";
  const Dataset ds = gen_dataset(cfg);
  std::set<std::string> ids;
  for (const auto& o : ds.objects) {
    EXPECT_EQ(o.object_id.rfind("aux_", 0), 0u);
    ids.insert(o.object_id);
    EXPECT_EQ(mesh_relpath(o, 1),
              fs::path(std::string(class_name(o.shape))) / o.object_id / "1.obj");
  }
  EXPECT_EQ(ids.size(), ds.objects.size());
}

TEST(GroundTruth, SharedAcrossMeshesOfObject) {
  const auto cfg = mtopo::testing::small_dataset_config(2, 4);
  const WaveConfig wave{0.35, 16};
  const Dataset ds = mtopo::testing::simulated_dataset(cfg, 16);
  for (const auto& o : ds.objects) {
    EXPECT_EQ(o.response, simulate(o.simple(), wave));
    // Planar-class variants reproduce the simple-mesh response up to rounding.
    if (o.shape == ShapeClass::Cube) {
      for (std::size_t m = 1; m < o.meshes.size(); ++m) {
        EXPECT_LT(mtopo::testing::max_rel_diff(o.response, simulate(o.meshes[m], wave)), 1e-9);
      }
    }
  }
}

TEST(GroundTruth, Deterministic) {
  const auto cfg = mtopo::testing::small_dataset_config(2, 2);
  const Dataset a = gen_dataset(cfg);
  const WaveConfig wave{0.35, 16};
  EXPECT_EQ(ground_truth_for_object(a.objects[0], wave), ground_truth_for_object(gen_dataset(cfg).objects[0], wave));
}
