// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include "mtopo/config.hpp"
#include "mtopo/error.hpp"
#include "mtopo/metrics.hpp"
#include "mtopo/nn/grad_check.hpp"
#include "mtopo/nn/layers.hpp"
#include "mtopo/pipeline.hpp"
#include "quadrature.hpp"
#include "test_support.hpp"

#include <malloc.h>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>

using namespace mtopo;
using nn::Matrix;
using nn::Var;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vec3 random_vec(Rng& rng, double s) { return Vec3(normal(rng), normal(rng), normal(rng)) * s; }

// ---- 1: the oracle ignores topology ----

Outcome oracle_subdivision_invariance() {
  const auto t0 = std::chrono::steady_clock::now();
  DatasetConfig c;
  c.objects_per_class = 7;
  c.meshes_per_object = 10;
  c.seed = 101;
  c.variants.vary_curvature = false;
  const Dataset ds = gen_dataset(c);
  const WaveConfig wave;
  double worst = 0.0;
  int objects = 0, variants = 0;
  for (const auto& o : ds.objects) {
    if (objects == 20) break;
    ++objects;
    const Response base = simulate(o.simple(), wave);
    for (std::size_t m = 1; m < o.meshes.size(); ++m) {
      worst = std::max(worst, mtopo::testing::max_rel_diff(base, simulate(o.meshes[m], wave)));
      ++variants;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && objects == 20 && secs < 60,
          std::to_string(objects) + " objects, " + std::to_string(variants) + " variants, max rel diff " +
              fmt(worst) + ", " + fmt(secs) + " s"};
}

// ---- 2: physics checks ----

Outcome oracle_physics() {
  const WaveConfig wave;
  const double side = 1.0;
  const double analytic = 4 * M_PI * std::pow(side * side, 2) / (wave.wavelength * wave.wavelength);
  const double plate_err = std::abs(simulate_facets(mtopo::testing::square_plate(side), wave)[0] / analytic - 1.0);

  Rng rng(2718);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vec3 a = random_vec(rng, 0.5), b = random_vec(rng, 0.5), c = random_vec(rng, 0.5);
    const Vec3 q = random_vec(rng, 8.0);
    const auto ref = mtopo::testing::quadrature(a, b, c, q);
    worst = std::max(worst, std::abs(triangle_po_integral(a, b, c, q) - ref) / std::abs(ref));
  }
  return {plate_err <= 0.01 && worst <= 1e-8,
          "plate rel err " + fmt(plate_err) + ", triangle integral max rel err " + fmt(worst) + " over 100 cases"};
}

// ---- 3: variants keep the shape ----

Outcome geometry_exactness() {
  double cube_dev = 0.0, cube_dist = 0.0, curved_dev = 0.0;
  bool checks_pass = true;
  Rng rng(31);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const PrimitiveSpec spec{ShapeClass::Cube, Vec3(uniform(rng, 0.5, 1.5), uniform(rng, 0.5, 1.5), uniform(rng, 0.5, 1.5)), 16};
    const Mesh simple = gen_primitive(spec);
    const Mesh v = gen_variant(spec, seed);
    const auto r = shape_check(simple, v, ShapeClass::Cube);
    checks_pass = checks_pass && r.pass;
    cube_dev = std::max({cube_dev, r.volume_deviation, r.area_deviation});
    for (const auto& p : v.vertices) cube_dist = std::max(cube_dist, point_mesh_distance(p, simple));
  }
  for (auto cls : {ShapeClass::Cylinder, ShapeClass::Sphere}) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const PrimitiveSpec spec{cls, Vec3(uniform(rng, 0.5, 1.5), uniform(rng, 0.5, 1.5), uniform(rng, 0.5, 1.5)), 16};
      const auto r = shape_check(gen_primitive(spec), gen_variant(spec, seed), cls, 0.02);
      checks_pass = checks_pass && r.pass;
      curved_dev = std::max({curved_dev, r.volume_deviation, r.area_deviation});
    }
  }
  return {checks_pass && cube_dev <= 1e-9 && cube_dist <= 1e-9 && curved_dev <= 0.02,
          "cube: max vol/area dev " + fmt(cube_dev) + ", max vertex distance " + fmt(cube_dist) +
              "; cylinder/sphere max dev " + fmt(curved_dev)};
}

// ---- 4: desk dataset contract ----

Outcome dataset_contract() {
  const DatasetConfig c;  // desk defaults: 3 x 50 x 10
  const Dataset ds = gen_dataset(c);
  const auto train = ds.with_split(Split::Train).size(), test = ds.with_split(Split::Test).size();
  bool separated = true;
  for (auto cls : c.classes) {
    std::vector<Vec3> scales;
    for (const auto& o : ds.objects) {
      if (o.shape == cls) scales.push_back(o.scale);
    }
    for (std::size_t i = 0; i < scales.size(); ++i) {
      for (std::size_t j = i + 1; j < scales.size(); ++j) {
        separated = separated && (scales[i] - scales[j]).cwiseAbs().maxCoeff() >= c.scale_separation;
      }
    }
  }
  // The split is by object: every mesh of an object shares its record.
  std::set<std::string> ids;
  for (const auto& o : ds.objects) ids.insert(o.object_id);
  const auto a = mtopo::testing::fresh_temp_dir("acc_desk_a"), b = mtopo::testing::fresh_temp_dir("acc_desk_b");
  write_dataset(ds, a);
  write_dataset(gen_dataset(c), b);
  const bool identical = mtopo::testing::tree_digest(a) == mtopo::testing::tree_digest(b);
  const bool pass = ds.num_meshes() == 1500 && train == 135 && test == 15 && ids.size() == 150 && separated &&
                    identical;
  return {pass, std::to_string(ds.num_meshes()) + " meshes, split " + std::to_string(train) + "/" +
                    std::to_string(test) + ", separation " + (separated ? "ok" : "violated") +
                    ", regeneration " + (identical ? "byte-identical" : "differs")};
}

// ---- 5: gradients ----

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

std::vector<Var> store_vars(const nn::ParamStore& store, const std::string& skip = "~") {
  std::vector<Var> out;
  for (const auto& [n, e] : store.entries()) {
    if (n.rfind(skip, 0) != 0) out.push_back(e.var);
  }
  return out;
}

// Projects a matrix output onto a fixed random direction so every output
// coordinate reaches the scalar.
double check_layer(const std::function<Var()>& f, std::vector<Var> params, Rng& rng) {
  const Matrix probe_shape = f().value();
  const Var r = Var::constant(random_matrix(rng, probe_shape.rows(), probe_shape.cols()));
  nn::GradCheckOptions o;
  o.probes = 250;
  o.seed = rng();
  return nn::grad_check([&] { return nn::sum(nn::mul(f(), r)); }, params, o).max_rel_error;
}

Outcome differentiation() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(55);
  std::ostringstream detail;
  double worst = 0.0;
  auto record = [&](const std::string& name, double err) {
    worst = std::max(worst, err);
    detail << name << " " << fmt(err) << "; ";
  };
  const Mesh mesh = loop_cut(gen_primitive({ShapeClass::Cylinder, Vec3(1, 0.8, 1.2), 10}), Axis::Z, 0.4);
  const auto adj = nn::mean_aggregation_matrix(face_adjacency(mesh));
  for (int trial = 0; trial < 2; ++trial) {
    const Eigen::Index rows = 3 + static_cast<Eigen::Index>(uniform_int(rng, 0, 4));
    const Eigen::Index dim = 2 * (2 + uniform_int(rng, 0, 2));
    const std::string tag = "[" + std::to_string(rows) + "x" + std::to_string(dim) + "]";
    {
      nn::ParamStore s;
      nn::Linear l(s, "l", dim, dim + 1, rng());
      Var x = Var::leaf(random_matrix(rng, rows, dim), true);
      auto p = store_vars(s);
      p.push_back(x);
      record("linear" + tag, check_layer([&] { return l(x); }, p, rng));
    }
    {
      nn::ParamStore s;
      nn::LayerNorm ln(s, "ln", dim, rng());
      s.assign("ln.gain", random_matrix(rng, 1, dim));
      s.assign("ln.shift", random_matrix(rng, 1, dim));
      Var x = Var::leaf(random_matrix(rng, rows, dim), true);
      record("layernorm" + tag, check_layer([&] { return ln(x); }, {ln.gain, ln.shift, x}, rng));
    }
    {
      nn::ParamStore s;
      nn::SelfAttention a(s, "a", dim, 2, rng());
      Var x = Var::leaf(random_matrix(rng, rows, dim), true);
      auto p = store_vars(s);
      p.push_back(x);
      record("attention" + tag, check_layer([&] { return a(x); }, p, rng));
    }
    {
      nn::ParamStore s;
      nn::TransformerBlock b(s, "b", dim, 2, rng());
      Var x = Var::leaf(random_matrix(rng, rows, dim), true);
      auto p = store_vars(s);
      p.push_back(x);
      record("block" + tag, check_layer([&] { return b(x); }, p, rng));
    }
    {
      nn::ParamStore s;
      nn::GraphConv g(s, "g", dim, dim, rng());
      Var h = Var::leaf(random_matrix(rng, adj->rows(), dim), true);
      auto p = store_vars(s);
      p.push_back(h);
      record("graphconv" + tag, check_layer([&] { return g(h, adj); }, p, rng));
    }
  }
  {
    // The codebook loss uses stop-gradients, so its backward pass is checked
    // against the closed form rather than by finite differences.
    nn::ParamStore s;
    nn::Codebook cb(s, "cb", 5, 3, 1);
    Var z = Var::leaf(random_matrix(rng, 6, 3) * 0.5, true);
    const double beta = 0.25;
    const auto r = nn::vq_quantize(z, cb, beta);
    nn::backward(r.loss);
    Matrix gz(6, 3), gc = Matrix::Zero(5, 3);
    for (Eigen::Index i = 0; i < 6; ++i) {
      const int k = r.indices[static_cast<std::size_t>(i)];
      const Matrix diff = z.value().row(i) - cb.codes.value().row(k);
      gz.row(i) = 2 * beta * diff / 6.0;
      gc.row(k) -= 2 * diff / 6.0;
    }
    const double err = std::max((z.grad() - gz).cwiseAbs().maxCoeff(), (cb.codes.grad() - gc).cwiseAbs().maxCoeff());
    record("vq(closed form)", err);
  }
  const MeshInput in = prepare_input(mesh);
  const Response target = simulate(mesh, WaveConfig{0.35, 16});
  for (auto kind : {EmbedderKind::Direct, EmbedderKind::Graph, EmbedderKind::Token}) {
    const SimulatorModel m(mtopo::testing::tiny_model(kind), ScaleBinner(0.5, 2.0, 4), 5.0, 17);
    // Straight-through quantization: the token encoder's backward pass is the
    // graph encoder's (checked above via the graph model), so the token model
    // check covers everything downstream of the codebook.
    const auto params = store_vars(m.params(), kind == EmbedderKind::Token ? "embedder" : "~");
    nn::GradCheckOptions o;
    o.probes = 250;
    const double err =
        nn::grad_check([&] { return weighted_mse_loss(m.forward(in).prediction, target, 0.1); }, params, o)
            .max_rel_error;
    record(std::string("model:") + std::string(embedder_name(kind)), err);
  }
  const double secs = seconds_since(t0);
  detail << fmt(secs) << " s";
  return {worst <= 1e-4 && secs < 120, "max rel err " + fmt(worst) + " | " + detail.str()};
}

// ---- 6: permutation invariance ----

Outcome permutation_invariance() {
  std::vector<Mesh> meshes;
  const PrimitiveSpec specs[] = {{ShapeClass::Cube, Vec3(1, 0.7, 1.2), 16},
                                 {ShapeClass::Cylinder, Vec3(0.8, 0.8, 1.4), 16},
                                 {ShapeClass::Sphere, Vec3(1.1, 0.9, 1.0), 16},
                                 {ShapeClass::Cube, Vec3(0.6, 1.3, 0.9), 16},
                                 {ShapeClass::Cylinder, Vec3(1.2, 1.0, 0.7), 16}};
  std::uint64_t seed = 0;
  for (const auto& s : specs) meshes.push_back(gen_variant(s, ++seed));
  double worst = 0.0;
  for (auto kind : {EmbedderKind::Direct, EmbedderKind::Graph, EmbedderKind::Token}) {
    const SimulatorModel m(mtopo::testing::tiny_model(kind, 64), ScaleBinner(0.5, 2.0, 4), 5.0, 23);
    for (const auto& mesh : meshes) {
      const Response base = m.predict(mesh);
      for (int p = 0; p < 50; ++p) {
        const auto perm = mtopo::testing::random_permutation(mesh.num_faces(), ++seed);
        worst = std::max(worst, mtopo::testing::max_abs_diff(base, m.predict(permute_faces(mesh, perm))));
      }
    }
  }
  return {worst <= 1e-9, "3 embedders x 5 meshes x 50 permutations, max output change " + fmt(worst)};
}

// ---- 7: metrics ----

Response random_response(Rng& rng, int n, double scale = 10.0) {
  Response r(static_cast<std::size_t>(n));
  for (auto& v : r) v = scale * uniform01(rng);
  return r;
}

double brute_mse(const Response& a, const Response& b) {
  long double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const long double d = static_cast<long double>(a[k]) - b[k];
    s += d * d;
  }
  return static_cast<double>(s / a.size());
}

Outcome metric_correctness() {
  Rng rng(77);
  double brute_err = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const int n = uniform_int(rng, 1, 128), m = uniform_int(rng, 1, 12);
    const Response truth = random_response(rng, n), simple = random_response(rng, n);
    std::vector<Response> variants;
    for (int i = 0; i < m; ++i) variants.push_back(random_response(rng, n));
    double c = 0, v = 0;
    for (const auto& p : variants) {
      c += brute_mse(truth, p);
      v += brute_mse(simple, p);
    }
    brute_err = std::max({brute_err, std::abs(simple_mse(truth, simple) - brute_mse(truth, simple)),
                          std::abs(complex_mse(truth, variants) - c / m),
                          std::abs(variation_mse(simple, variants) - v / m)});
  }
  double kappa_err = 0.0;
  for (double kappa : {0.25, -1.5, 3.0}) {
    const Response s = random_response(rng, 64);
    Response shifted = s;
    for (auto& x : shifted) x += kappa;
    kappa_err = std::max(kappa_err, std::abs(variation_mse(s, {shifted, shifted, shifted}) - kappa * kappa));
  }
  auto cfg = mtopo::testing::small_dataset_config(10, 5, 19);
  cfg.variants.vary_curvature = false;
  const Dataset ds = mtopo::testing::simulated_dataset(cfg, 64);
  const WaveConfig wave = *ds.wave;
  const EvalReport oracle = evaluate([&](const Mesh& m) { return simulate(m, wave); }, ds);
  const double oracle_max = std::max({oracle.simple, oracle.complex, oracle.variation});
  return {brute_err <= 1e-12 && kappa_err <= 1e-12 && oracle_max <= 1e-9,
          "brute-force max abs diff " + fmt(brute_err) + ", kappa^2 err " + fmt(kappa_err) +
              ", oracle-as-model max metric " + fmt(oracle_max)};
}

// ---- 8: mode collapse ----

Outcome collapse_detector() {
  Rng rng(88);
  std::vector<Response> truths, constant, noisy;
  const Response c = random_response(rng, 64);
  for (int o = 0; o < 20; ++o) {
    truths.push_back(random_response(rng, 64));
    constant.push_back(c);
    Response n = truths.back();
    for (auto& x : n) x += normal(rng);
    noisy.push_back(n);
  }
  const auto rc = detect_mode_collapse(constant, truths);
  const auto ro = detect_mode_collapse(truths, truths);
  const auto rn = detect_mode_collapse(noisy, truths);
  return {rc.collapsed && !ro.collapsed && !rn.collapsed,
          "constant score " + fmt(rc.score) + (rc.collapsed ? " (flagged)" : " (missed)") + ", oracle " +
              fmt(ro.score) + (ro.collapsed ? " (flagged)" : " (passed)") + ", noisy oracle " + fmt(rn.score) +
              (rn.collapsed ? " (flagged)" : " (passed)")};
}

// ---- 9: qualitative ordering at desk scale ----

Outcome desk_ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig cfg = load_run_config(fs::path(MTOPO_SOURCE_DIR) / "configs" / "tiny.json", {});
  Dataset ds = gen_dataset(cfg.dataset);
  attach_ground_truth(ds, cfg.oracle);
  const AuxiliaryCorpus corpus = gen_auxiliary_corpus(cfg.pretrain.corpus);
  check_disjoint(corpus, ds);
  int seeds_ok = 0;
  std::ostringstream detail;
  for (std::uint64_t seed : cfg.repro.seeds) {
    TrainConfig t = cfg.training;
    t.seed = seed;
    t.regime = Regime::Scratch;
    const EvalReport scratch = evaluate(train_scratch(t, cfg.model, ds).model, ds, cfg.eval);

    TrainConfig p = t;
    p.regime = Regime::PretrainAutoencode;
    p.epochs = cfg.pretrain.epochs;
    p.lr = cfg.pretrain.lr;
    p.augment = cfg.pretrain.augment;
    const PretrainResult pre = pretrain_autoencoder(p, cfg.model.embedder, corpus);
    t.regime = Regime::Finetune;
    const EvalReport ae = evaluate(finetune(pre.embedder, t, cfg.model, ds).model, ds, cfg.eval);

    t.regime = Regime::Ideal;
    const EvalReport ideal = evaluate(train_ideal(t, cfg.model, ds).model, ds, cfg.eval);

    const bool a = ae.variation < scratch.variation;
    const bool b = ideal.variation < 0.2 * scratch.variation;
    const bool c = ae.simple <= 1.25 * scratch.simple;
    seeds_ok += a && b && c;
    detail << "seed " << seed << ": var scratch " << fmt(scratch.variation) << " ae " << fmt(ae.variation)
           << " ideal " << fmt(ideal.variation) << ", simple scratch " << fmt(scratch.simple) << " ae "
           << fmt(ae.simple) << " [" << (a ? "a" : "-") << (b ? "b" : "-") << (c ? "c" : "-") << "]; ";
    std::cerr << "  criterion 9 " << detail.str().substr(detail.str().rfind("seed")) << fmt(seconds_since(t0))
              << " s" << std::endl;
  }
  const double minutes = seconds_since(t0) / 60.0;
  detail << seeds_ok << "/" << cfg.repro.seeds.size() << " seeds satisfy a,b,c; " << fmt(minutes) << " min";
  return {seeds_ok >= 2 && minutes < 45.0, detail.str()};
}

// ---- 10: determinism ----

Outcome determinism() {
  const auto dir = mtopo::testing::fresh_temp_dir("acc_determinism");
  const RunConfig cfg = load_run_config(
      {}, {"dataset.objects_per_class=4", "dataset.meshes_per_object=3", "dataset.test_fraction=0.25",
           "oracle.n_angles=32", "model.embedder.embed_dim=8", "model.embedder.heads=2",
           "model.embedder.codebook_size=16", "model.heads=2", "model.agg_blocks=1", "model.scale_bins=4",
           "model.decoder_hidden=16", "training.epochs=2", "pretrain.epochs=2",
           "pretrain.corpus.objects_per_class=3", "pretrain.corpus.meshes_per_object=2", "repro.seeds=[1,2]",
           "out=" + nlohmann::json(dir.string()).dump()});
  auto run = [&] {
    const fs::path data = cmd_simulate(cfg, cmd_gen(cfg));
    const fs::path model = cmd_train(cfg, data, std::nullopt);
    cmd_eval(cfg, model, data, {});
    cmd_plot(cfg, data, model);
    cmd_pretrain(cfg, Objective::Autoencoder, std::nullopt, data);
    cmd_repro(cfg);
    return mtopo::testing::tree_digest(dir);
  };
  const auto first = run();
  const auto second = run();
  std::size_t differing = 0;
  for (const auto& [path, id] : first) {
    const auto it = second.find(path);
    differing += it == second.end() || it->second != id;
  }
  differing += second.size() > first.size() ? second.size() - first.size() : 0;
  return {differing == 0 && first.size() > 50,
          std::to_string(first.size()) + " files hashed (wall_ms dropped from logs), " + std::to_string(differing) +
              " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  // Training allocates many short-lived matrices; keep freed memory in the
  // arena instead of returning it to the kernel on every step.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"oracle subdivision invariance", oracle_subdivision_invariance},
      {"oracle physics", oracle_physics},
      {"geometry exactness", geometry_exactness},
      {"dataset contract", dataset_contract},
      {"differentiation", differentiation},
      {"permutation invariance", permutation_invariance},
      {"metric correctness", metric_correctness},
      {"mode-collapse detector", collapse_detector},
      {"desk-scale ordering", desk_ordering},
      {"determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
