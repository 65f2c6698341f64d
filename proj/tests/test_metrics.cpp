#include "mtopo/error.hpp"
#include "mtopo/metrics.hpp"
#include "mtopo/simulator.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

using namespace mtopo;

namespace {

Response random_response(Rng& rng, int n, double scale = 10.0) {
  Response r(static_cast<std::size_t>(n));
  for (auto& v : r) v = scale * uniform01(rng);
  return r;
}

// Independent long-double reference.
double brute_mse(const Response& a, const Response& b) {
  long double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const long double d = static_cast<long double>(a[k]) - b[k];
    s += d * d;
  }
  return static_cast<double>(s / a.size());
}

Dataset flat_dataset() {
  auto c = mtopo::testing::small_dataset_config(5, 4, 17);
  c.variants.vary_curvature = false;
  return mtopo::testing::simulated_dataset(c);
}

}  // namespace

TEST(Mse, HandCases) {
  EXPECT_EQ(mse({1, 2, 3}, {1, 2, 3}), 0.0);
  EXPECT_DOUBLE_EQ(mse({0, 0}, {3, 4}), 12.5);
  EXPECT_DOUBLE_EQ(simple_mse({1, 1, 1, 1}, {2, 2, 2, 2}), 1.0);
  EXPECT_DOUBLE_EQ(complex_mse({0, 0}, {{1, 1}, {3, 3}}), 5.0);
  EXPECT_DOUBLE_EQ(variation_mse({1, 1}, {{1, 1}, {1, 3}}), 1.0);
  EXPECT_THROW(mse({1}, {1, 2}), Error);
  EXPECT_THROW(complex_mse({1}, {}), Error);
}

TEST(Mse, MatchesBruteForce) {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = uniform_int(rng, 1, 128);
    const Response truth = random_response(rng, n), simple = random_response(rng, n);
    std::vector<Response> variants;
    const int m = uniform_int(rng, 1, 12);
    for (int i = 0; i < m; ++i) variants.push_back(random_response(rng, n));
    double c = 0, v = 0;
    for (const auto& p : variants) {
      c += brute_mse(truth, p);
      v += brute_mse(simple, p);
    }
    const double s_ref = brute_mse(truth, simple);
    EXPECT_NEAR(simple_mse(truth, simple), s_ref, 1e-12 * std::max(1.0, s_ref));
    EXPECT_NEAR(complex_mse(truth, variants), c / m, 1e-12 * std::max(1.0, c / m));
    EXPECT_NEAR(variation_mse(simple, variants), v / m, 1e-12 * std::max(1.0, v / m));
  }
}

TEST(Mse, ConstantOffsetGivesKappaSquared) {
  Rng rng(4);
  for (double kappa : {0.0, 0.5, -2.0, 7.25}) {
    const Response s = random_response(rng, 64);
    Response shifted = s;
    for (auto& x : shifted) x += kappa;
    EXPECT_NEAR(variation_mse(s, {shifted, shifted}), kappa * kappa, 1e-12);
  }
}

TEST(Mse, NonNegativeAndZeroForConstantPerObject) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Response a = random_response(rng, 16), b = random_response(rng, 16);
    EXPECT_GE(mse(a, b), 0.0);
    EXPECT_EQ(variation_mse(a, {a, a, a}), 0.0);
  }
}

TEST(Collapse, ConstantPredictorFlagged) {
  Rng rng(6);
  std::vector<Response> truths, preds;
  const Response constant = random_response(rng, 32);
  for (int o = 0; o < 10; ++o) {
    truths.push_back(random_response(rng, 32));
    preds.push_back(constant);
  }
  const auto r = detect_mode_collapse(preds, truths);
  EXPECT_LT(r.score, 1e-20);
  EXPECT_TRUE(r.collapsed);
}

TEST(Collapse, OracleAndNoisyOraclePass) {
  Rng rng(7);
  std::vector<Response> truths, noisy;
  for (int o = 0; o < 10; ++o) {
    truths.push_back(random_response(rng, 32));
    Response n = truths.back();
    for (auto& x : n) x += normal(rng);
    noisy.push_back(n);
  }
  const auto exact = detect_mode_collapse(truths, truths);
  EXPECT_DOUBLE_EQ(exact.score, 1.0);
  EXPECT_FALSE(exact.collapsed);
  EXPECT_FALSE(detect_mode_collapse(noisy, truths).collapsed);
}

TEST(Collapse, ScoreMatchesDefinition) {
  Rng rng(8);
  std::vector<Response> truths, preds;
  for (int o = 0; o < 6; ++o) {
    truths.push_back(random_response(rng, 8));
    preds.push_back(random_response(rng, 8, 0.5));
  }
  auto total_var = [](const std::vector<Response>& rows) {
    double s = 0;
    for (std::size_t k = 0; k < rows[0].size(); ++k) {
      double mean = 0;
      for (const auto& r : rows) mean += r[k];
      mean /= rows.size();
      for (const auto& r : rows) s += (r[k] - mean) * (r[k] - mean);
    }
    return s;
  };
  EXPECT_NEAR(detect_mode_collapse(preds, truths).score, total_var(preds) / total_var(truths), 1e-12);
}

TEST(Collapse, NeedsTwoObjects) {
  EXPECT_THROW(detect_mode_collapse({{1, 2}}, {{1, 2}}), Error);
  EXPECT_THROW(detect_mode_collapse({{1, 2}, {2, 3}}, {{1, 2}}), Error);
}

TEST(Evaluate, OracleAsModelScoresZero) {
  const Dataset ds = flat_dataset();
  const WaveConfig wave = *ds.wave;
  const EvalReport r = evaluate([&](const Mesh& m) { return simulate(m, wave); }, ds);
  EXPECT_EQ(r.objects.size(), ds.with_split(Split::Test).size());
  const double scale = 1e-9;
  EXPECT_LE(r.simple, scale);
  EXPECT_LE(r.complex, scale);
  EXPECT_LE(r.variation, scale);
  EXPECT_FALSE(r.collapse.collapsed);
}

TEST(Evaluate, ConstantZeroModel) {
  const Dataset ds = flat_dataset();
  const auto n = static_cast<std::size_t>(ds.wave->n_angles);
  const EvalReport r = evaluate([&](const Mesh&) { return Response(n, 0.0); }, ds);
  double expect = 0;
  const auto test = ds.with_split(Split::Test);
  for (const auto* o : test) {
    double sq = 0;
    for (double v : o->response) sq += v * v;
    expect += sq / static_cast<double>(n);
  }
  expect /= static_cast<double>(test.size());
  EXPECT_NEAR(r.simple, expect, 1e-12 * expect);
  EXPECT_NEAR(r.complex, expect, 1e-12 * expect);
  EXPECT_EQ(r.variation, 0.0);
  EXPECT_TRUE(r.collapse.collapsed);
}

TEST(Evaluate, AggregateIsMeanAndObjectsSorted) {
  const Dataset ds = flat_dataset();
  const auto n = static_cast<std::size_t>(ds.wave->n_angles);
  const EvalReport r = evaluate(
      [&](const Mesh& m) { return Response(n, static_cast<double>(m.num_faces())); }, ds);
  double s = 0, c = 0, v = 0;
  for (std::size_t i = 0; i < r.objects.size(); ++i) {
    if (i > 0) EXPECT_LT(r.objects[i - 1].object_id, r.objects[i].object_id);
    s += r.objects[i].simple;
    c += r.objects[i].complex;
    v += r.objects[i].variation;
  }
  const double k = static_cast<double>(r.objects.size());
  EXPECT_NEAR(r.simple, s / k, 1e-12 * r.simple);
  EXPECT_NEAR(r.complex, c / k, 1e-12 * r.complex);
  EXPECT_NEAR(r.variation, v / k, 1e-12 * r.variation);
  EXPECT_GT(r.variation, 0.0);
}

TEST(Evaluate, ThreadCountDoesNotChangeResults) {
  const Dataset ds = flat_dataset();
  const SimulatorModel model(mtopo::testing::tiny_model(EmbedderKind::Graph), ScaleBinner(0.5, 2.0, 4), 5.0, 3);
  EvalConfig one, many;
  one.threads = 1;
  many.threads = 4;
  EXPECT_EQ(evaluate(model, ds, one).to_json(), evaluate(model, ds, many).to_json());
}

TEST(Evaluate, NAnglesMismatch) {
  const Dataset ds = flat_dataset();
  const SimulatorModel model(mtopo::testing::tiny_model(EmbedderKind::Graph, 32), ScaleBinner(0.5, 2.0, 4), 5.0, 3);
  try {
    evaluate(model, ds);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
  }
}

TEST(Report, JsonAndCsv) {
  const Dataset ds = flat_dataset();
  const SimulatorModel model(mtopo::testing::tiny_model(EmbedderKind::Direct), ScaleBinner(0.5, 2.0, 4), 5.0, 3);
  const EvalReport r = evaluate(model, ds);
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j.at("model_id"), content_id(model.serialize()));
  EXPECT_EQ(j.at("manifest_id"), content_id(manifest_json(ds)));
  EXPECT_EQ(j.at("objects").size(), r.objects.size());
  EXPECT_DOUBLE_EQ(j.at("variation_mse").get<double>(), r.variation);
  EXPECT_EQ(r.model_id.size(), 16u);

  const std::string row = csv_row("graph", "none", "simple", r);
  EXPECT_EQ(std::count(row.begin(), row.end(), ','), 6);
  EXPECT_EQ(row.rfind("graph,none,simple,", 0), 0u);
  EXPECT_EQ(csv_header(), "encoder,pretraining,training_data,simple_mse,complex_mse,variation_mse,collapsed");
}

TEST(ContentId, KnownFnvValues) {
  EXPECT_EQ(content_id(""), "cbf29ce484222325");
  EXPECT_EQ(content_id("a"), "af63dc4c8601ec8c");
}
