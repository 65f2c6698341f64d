#include "mtopo/error.hpp"
#include "mtopo/nn/grad_check.hpp"
#include "mtopo/simulator.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace mtopo;
using mtopo::testing::tiny_model;
using nn::Matrix;
using nn::Var;

namespace {

SimulatorModel make_model(EmbedderKind kind, std::uint64_t seed = 3, int n_angles = 16) {
  return SimulatorModel(tiny_model(kind, n_angles), ScaleBinner(0.5, 2.0, 4), 5.0, seed);
}

Mesh test_mesh() {
  return loop_cut(gen_primitive({ShapeClass::Sphere, Vec3(1.1, 0.9, 0.7), 12}), Axis::Y, 0.43);
}

double plain_mse(const Response& a, const Response& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s / static_cast<double>(a.size());
}

const EmbedderKind kKinds[] = {EmbedderKind::Direct, EmbedderKind::Graph, EmbedderKind::Token};

}  // namespace

// ---- loss ----

TEST(WeightedMse, HandCase) {
  EXPECT_NEAR(weighted_mse_loss(Response{0, 0}, Response{1, 0}, 0.1), 0.5, 1e-15);
  const Matrix w = intensity_weights(Response{1, 0}, 0.1);
  EXPECT_DOUBLE_EQ(w(0, 0), 1.0);
  EXPECT_NEAR(w(0, 1), 0.1 / 1.1, 1e-15);
}

TEST(WeightedMse, ZeroForExactPrediction) {
  const Response r{3.0, 1.0, 0.0, 7.5};
  EXPECT_EQ(weighted_mse_loss(r, r, 0.1), 0.0);
}

TEST(WeightedMse, LargeAlphaIsPlainMse) {
  Rng rng(1);
  Response a(32), b(32);
  for (auto& v : a) v = uniform(rng, 0, 5);
  for (auto& v : b) v = uniform(rng, 0, 5);
  const double w = weighted_mse_loss(b, a, 1e6);
  EXPECT_NEAR(w / plain_mse(a, b), 1.0, 1e-6);
}

TEST(WeightedMse, NonNegativeAndVarMatchesDouble) {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    Response a(8), b(8);
    for (auto& v : a) v = uniform(rng, 0, 3);
    for (auto& v : b) v = uniform(rng, 0, 3);
    const double d = weighted_mse_loss(b, a, 0.1);
    EXPECT_GE(d, 0.0);
    Matrix pm = Eigen::Map<const Matrix>(b.data(), 1, 8);
    EXPECT_NEAR(weighted_mse_loss(Var::constant(pm), a, 0.1).item(), d, 1e-14);
  }
}

TEST(WeightedMse, AllZeroTargetIsUniform) {
  const Matrix w = intensity_weights(Response(5, 0.0), 0.1);
  for (Eigen::Index k = 0; k < 5; ++k) EXPECT_EQ(w(0, k), 1.0);
}

TEST(WeightedMse, LengthMismatch) {
  try {
    weighted_mse_loss(Response{1, 2}, Response{1, 2, 3}, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

// ---- scale binner ----

TEST(ScaleBinner, LogSpacedWithExactEnds) {
  const ScaleBinner b(0.5, 2.0, 4);
  ASSERT_EQ(b.num_bins(), 4);
  EXPECT_EQ(b.edges().front(), 0.5);
  EXPECT_EQ(b.edges().back(), 2.0);
  for (std::size_t i = 1; i < b.edges().size(); ++i) {
    EXPECT_NEAR(b.edges()[i] / b.edges()[i - 1], std::pow(4.0, 0.25), 1e-12);
  }
}

TEST(ScaleBinner, ClampsAndIsPiecewiseConstant) {
  const ScaleBinner b(0.5, 2.0, 4);
  EXPECT_EQ(b.bin(1e-3), 0);
  EXPECT_EQ(b.bin(0.5), 0);
  EXPECT_EQ(b.bin(2.0), 3);
  EXPECT_EQ(b.bin(100.0), 3);
  int prev = 0;
  for (double s = 0.3; s < 3.0; s += 0.01) {
    const int k = b.bin(s);
    EXPECT_GE(k, prev);
    EXPECT_LE(k, prev + 1);
    prev = k;
    if (s > 0.5 && s < 2.0) {
      EXPECT_LE(b.edges()[static_cast<std::size_t>(k)], s);
      EXPECT_LT(s, b.edges()[static_cast<std::size_t>(k) + 1]);
    }
  }
}

TEST(ScaleBinner, Validation) {
  EXPECT_THROW(ScaleBinner(1.0, 1.0, 4), Error);
  EXPECT_THROW(ScaleBinner(0.0, 1.0, 4), Error);
  EXPECT_THROW(ScaleBinner::from_edges({1.0, 0.9}), Error);
  EXPECT_EQ(ScaleBinner::from_edges({1.0, 2.0, 4.0}).bin(3.0), 1);
}

TEST(ScaleBinner, SameBinSameEmbedding) {
  SimulatorModel m = make_model(EmbedderKind::Graph);
  const Mesh a = gen_primitive({ShapeClass::Cube, Vec3::Constant(0.55), 16});
  const Mesh b = gen_primitive({ShapeClass::Cube, Vec3::Constant(0.6), 16});
  ASSERT_EQ(m.binner().bin(0.55), m.binner().bin(0.6));
  // Same normalized geometry, same bin: identical prediction.
  EXPECT_EQ(m.predict(a), m.predict(b));
}

// ---- model ----

TEST(Model, ContractOnUntrainedModel) {
  for (auto kind : kKinds) {
    SimulatorModel m = make_model(kind);
    for (const Mesh& mesh : {mtopo::testing::cube(), test_mesh()}) {
      const Response r = m.predict(mesh);
      ASSERT_EQ(r.size(), 16u);
      for (double v : r) {
        EXPECT_TRUE(std::isfinite(v));
        EXPECT_GE(v, 0.0);
      }
      EXPECT_EQ(r, m.predict(mesh));
    }
  }
}

TEST(Model, FacePermutationInvariance) {
  const Mesh mesh = test_mesh();
  for (auto kind : kKinds) {
    SimulatorModel m = make_model(kind);
    const Response base = m.predict(mesh);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const auto perm = mtopo::testing::random_permutation(mesh.num_faces(), seed);
      EXPECT_LT(mtopo::testing::max_abs_diff(base, m.predict(permute_faces(mesh, perm))), 1e-9)
          << embedder_name(kind);
    }
  }
}

TEST(Model, SingleFaceAggregate) {
  SimulatorModel m = make_model(EmbedderKind::Graph);
  Rng rng(4);
  Matrix row(1, 8);
  for (Eigen::Index k = 0; k < 8; ++k) row(0, k) = normal(rng);
  // With identical rows attention is uniform, so duplicating a face leaves
  // each transformed row, and hence the pooled feature, unchanged.
  const Matrix one = m.aggregate({Var::constant(row), EmbedderKind::Graph}).value();
  const Matrix three = m.aggregate({Var::constant(row.replicate(3, 1)), EmbedderKind::Graph}).value();
  EXPECT_LT((one - three).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_EQ(one.rows(), 1);
  EXPECT_EQ(one.cols(), 8);
}

TEST(Model, ZeroOutputWeightsGiveConstantResponse) {
  SimulatorModel m = make_model(EmbedderKind::Direct);
  m.params().assign("decoder.out.weight", Matrix::Zero(8, 16));
  m.params().assign("decoder.out.bias", Matrix::Constant(1, 16, 0.3));
  const Response r = m.predict(test_mesh());
  const double expected = 5.0 * std::log1p(std::exp(0.3));
  for (double v : r) EXPECT_NEAR(v, expected, 1e-12);
}

TEST(Model, ScalePathIsLive) {
  SimulatorModel m = make_model(EmbedderKind::Graph);
  Rng rng(4);
  Matrix c(1, 8);
  for (Eigen::Index k = 0; k < 8; ++k) c(0, k) = normal(rng);
  const Matrix r0 = m.decode(Var::constant(c), 0).value();
  const Matrix r3 = m.decode(Var::constant(c), 3).value();
  EXPECT_GT((r0 - r3).cwiseAbs().maxCoeff(), 0.0);
  const Mesh small = gen_primitive({ShapeClass::Cube, Vec3::Constant(0.5), 16});
  const Mesh big = gen_primitive({ShapeClass::Cube, Vec3::Constant(2.0), 16});
  EXPECT_NE(m.predict(small), m.predict(big));
  EXPECT_THROW(m.decode(Var::constant(Matrix::Zero(1, 5)), 0), Error);
}

TEST(Model, TokenForwardReportsAuxLoss) {
  SimulatorModel m = make_model(EmbedderKind::Token);
  const auto f = m.forward(prepare_input(test_mesh()));
  ASSERT_TRUE(f.aux_loss.defined());
  EXPECT_GE(f.aux_loss.item(), 0.0);
  EXPECT_EQ(f.tokens.size(), test_mesh().num_faces());
  EXPECT_FALSE(make_model(EmbedderKind::Graph).forward(prepare_input(test_mesh())).aux_loss.defined());
}

TEST(Model, BinCountMustMatchConfig) {
  try {
    SimulatorModel(tiny_model(EmbedderKind::Graph), ScaleBinner(0.5, 2.0, 5), 1.0, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ArchitectureMismatch);
  }
  EXPECT_THROW(SimulatorModel(tiny_model(EmbedderKind::Graph), ScaleBinner(0.5, 2.0, 4), 0.0, 1), Error);
}

TEST(Model, SaveLoadRoundTrip) {
  const auto dir = mtopo::testing::fresh_temp_dir("model");
  for (auto kind : kKinds) {
    SimulatorModel m = make_model(kind, 9);
    const auto path = dir / (std::string(embedder_name(kind)) + ".ckpt");
    m.save(path);
    SimulatorModel back = SimulatorModel::load(path);
    EXPECT_EQ(back.serialize(), m.serialize());
    EXPECT_EQ(back.binner().edges(), m.binner().edges());
    EXPECT_EQ(back.output_scale(), m.output_scale());
    EXPECT_EQ(back.predict(test_mesh()), m.predict(test_mesh()));
  }
}

TEST(Model, LoadRejectsForeignCheckpoint) {
  const auto dir = mtopo::testing::fresh_temp_dir("model_bad");
  nn::ParamStore store;
  store.create("w", 2, 2, nn::Init::Zeros, 1);
  nn::save_checkpoint(dir / "x.ckpt", store, "{\"format\":\"other\"}");
  EXPECT_THROW(SimulatorModel::load(dir / "x.ckpt"), Error);
  EXPECT_THROW(SimulatorModel::load(dir / "missing.ckpt"), Error);
}

TEST(Model, EndToEndGradients) {
  const MeshInput in = prepare_input(test_mesh());
  const Response target = simulate(test_mesh(), WaveConfig{0.35, 16});
  for (auto kind : kKinds) {
    SimulatorModel m = make_model(kind);
    std::vector<Var> params;
    for (const auto& [name, e] : m.params().entries()) {
      // Straight-through quantization: see the reconstruction test.
      if (kind == EmbedderKind::Token && name.rfind("embedder", 0) == 0) continue;
      params.push_back(e.var);
    }
    nn::GradCheckOptions o;
    o.probes = 300;
    const auto r = nn::grad_check(
        [&] { return weighted_mse_loss(m.forward(in).prediction, target, 0.1); }, params, o);
    EXPECT_LT(r.max_rel_error, 1e-4) << embedder_name(kind);
  }
}

TEST(Model, AggregateGradients) {
  SimulatorModel m = make_model(EmbedderKind::Graph);
  Rng rng(8);
  Matrix x(5, 8);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  Var leaf = Var::leaf(x, true);
  std::vector<Var> params{leaf};
  for (const auto& [name, e] : m.params().entries()) {
    if (name.rfind("aggregator", 0) == 0) params.push_back(e.var);
  }
  const auto r = nn::grad_check(
      [&] { return nn::sum(nn::tanh(m.aggregate({leaf, EmbedderKind::Graph}))); }, params);
  EXPECT_LT(r.max_rel_error, 1e-4);
}
