#include "mtopo/pipeline.hpp"

#include "mtopo/radar.hpp"
#include "mtopo/simulator.hpp"
#include "mtopo/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mtopo {

namespace {

void note(const Progress& p, const std::string& msg) {
  if (p) p(msg);
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << text;
}

void write_effective_config(const RunConfig& cfg, const fs::path& dir) {
  write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
}

TrainConfig pretrain_config(const RunConfig& cfg, Objective objective, std::uint64_t seed) {
  TrainConfig t;
  t.regime = objective == Objective::Classification ? Regime::PretrainClassify : Regime::PretrainAutoencode;
  t.epochs = cfg.pretrain.epochs;
  t.batch_size = cfg.training.batch_size;
  t.lr = cfg.pretrain.lr;
  t.seed = seed;
  t.augment = cfg.pretrain.augment;
  t.classifier_blocks = cfg.training.classifier_blocks;
  t.reseed_dead_codes = cfg.training.reseed_dead_codes;
  return t;
}

PretrainResult run_pretrain(const RunConfig& cfg, Objective objective, const EmbedderConfig& emb,
                            const AuxiliaryCorpus& corpus, std::uint64_t seed) {
  const TrainConfig t = pretrain_config(cfg, objective, seed);
  return objective == Objective::Classification ? pretrain_classification(t, emb, corpus)
                                                : pretrain_autoencoder(t, emb, corpus);
}

Dataset load_simulated(const fs::path& data) {
  Dataset ds = read_dataset(data);
  if (!ds.wave) fail(ErrorCode::EmptyInput, "dataset " + data.string() + " has no responses; run simulate");
  return ds;
}

std::string csv_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

EpochHook epoch_hook(const Progress& p, const std::string& tag) {
  if (!p) return {};
  return [p, tag](const EpochRecord& r) { p(tag + " " + log_line(r)); };
}

std::string row_slug(const GridRow& row) {
  std::string s = std::string(embedder_name(row.encoder)) + "_" + row.pretraining + "_" + row.training_data;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::Config: return 2;
    case ErrorCode::Numeric: return 4;
    default: return 3;
  }
}

Objective parse_objective(const std::string& name) {
  if (name == "classification") return Objective::Classification;
  if (name == "autoencoder") return Objective::Autoencoder;
  fail(ErrorCode::Config, "unknown pretraining objective '" + name + "'");
}

std::string objective_name(Objective o) {
  return o == Objective::Classification ? "classification" : "autoencoder";
}

fs::path cmd_gen(const RunConfig& cfg, const Progress& progress) {
  const fs::path dir = cfg.out / "dataset";
  note(progress, "generating dataset into " + dir.string());
  const Dataset ds = gen_dataset(cfg.dataset);
  if (fs::exists(dir)) fs::remove_all(dir);
  write_dataset(ds, dir);
  note(progress, "wrote " + std::to_string(ds.num_meshes()) + " meshes");
  return dir;
}

fs::path cmd_simulate(const RunConfig& cfg, const fs::path& data, const Progress& progress) {
  Dataset ds = read_dataset(data);
  note(progress, "simulating " + std::to_string(ds.objects.size()) + " objects");
  attach_ground_truth(ds, cfg.oracle);
  const fs::path dir = cfg.out / "dataset";
  if (fs::exists(dir) && !fs::equivalent(dir, data)) fs::remove_all(dir);
  write_dataset(ds, dir);
  return dir;
}

fs::path cmd_pretrain(const RunConfig& cfg, Objective objective, const std::optional<fs::path>& corpus_dir,
                      const std::optional<fs::path>& data, const Progress& progress) {
  AuxiliaryCorpus corpus =
      corpus_dir ? corpus_from_dataset(read_dataset(*corpus_dir)) : gen_auxiliary_corpus(cfg.pretrain.corpus);
  if (data) check_disjoint(corpus, read_dataset(*data));
  note(progress, "pretraining (" + objective_name(objective) + ") on " + std::to_string(corpus.size()) + " meshes");
  const TrainConfig t = pretrain_config(cfg, objective, cfg.seed);
  PretrainResult r = objective == Objective::Classification
                         ? pretrain_classification(t, cfg.model.embedder, corpus)
                         : pretrain_autoencoder(t, cfg.model.embedder, corpus);
  const fs::path dir = cfg.out / "pretrain";
  fs::create_directories(dir);
  r.embedder.save(dir / "embedder.ckpt");
  write_log(r.log, dir / "log.jsonl");
  write_effective_config(cfg, dir);
  nlohmann::json summary{{"objective", objective_name(objective)},
                         {"initial_metric", r.initial_metric},
                         {"final_metric", r.final_metric},
                         {"code_usage", r.code_usage}};
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  return dir / "embedder.ckpt";
}

fs::path cmd_train(const RunConfig& cfg, const fs::path& data, const std::optional<fs::path>& init,
                   const Progress& progress) {
  const Dataset ds = load_simulated(data);
  if (ds.wave->n_angles != cfg.model.n_angles) {
    fail(ErrorCode::ShapeMismatch, "dataset n_angles differs from the configured oracle");
  }
  const EpochHook hook = epoch_hook(progress, "train");
  TrainConfig t = cfg.training;
  std::optional<TrainResult> r;
  switch (t.regime) {
    case Regime::Scratch: r.emplace(train_scratch(t, cfg.model, ds, hook)); break;
    case Regime::Ideal: r.emplace(train_ideal(t, cfg.model, ds, hook)); break;
    case Regime::Finetune:
      if (!init) fail(ErrorCode::Config, "regime 'finetune' needs an embedder checkpoint (--init)");
      r.emplace(finetune(PretrainedEmbedder::load(*init), t, cfg.model, ds, hook));
      break;
    default:
      fail(ErrorCode::Config, "training.regime must be scratch, finetune or ideal for train");
  }
  fs::create_directories(cfg.out);
  const fs::path path = cfg.out / "model.ckpt";
  r->model.save(path);
  write_log(r->log, cfg.out / "train_log.jsonl");
  write_effective_config(cfg, cfg.out);
  return path;
}

EvalReport cmd_eval(const RunConfig& cfg, const fs::path& model_path, const fs::path& data,
                    const RowLabels& labels) {
  const SimulatorModel model = SimulatorModel::load(model_path);
  const Dataset ds = load_simulated(data);
  const EvalReport r = evaluate(model, ds, cfg.eval);
  write_text(cfg.out / "report.json", r.to_json() + "\n");
  write_text(cfg.out / "report.csv",
             csv_header() + "\n" +
                 csv_row(std::string(embedder_name(model.config().embedder.kind)), labels.pretraining,
                         labels.training_data, r) +
                 "\n");
  return r;
}

std::string render_svg(const std::vector<std::pair<std::string, Response>>& series, const std::string& title) {
  static const char* kColors[] = {"#000000", "#1f77b4", "#ff7f0e", "#2ca02c"};
  const double w = 640, h = 320, left = 50, right = 130, top = 30, bottom = 30;
  double ymax = 0.0;
  for (const auto& [name, r] : series) {
    for (double v : r) ymax = std::max(ymax, v);
  }
  if (!(ymax > 0.0)) ymax = 1.0;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << left << "\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << w - left - right << "\" height=\""
    << h - top - bottom << "\" fill=\"none\" stroke=\"#888\"/>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& r = series[i].second;
    s << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << kColors[i % 4] << "\" points=\"";
    for (std::size_t k = 0; k < r.size(); ++k) {
      const double x = left + (w - left - right) * static_cast<double>(k) / static_cast<double>(r.size());
      const double y = h - bottom - (h - top - bottom) * r[k] / ymax;
      s << csv_double(x) << "," << csv_double(y) << " ";
    }
    s << "\"/>\n";
    s << "<text x=\"" << w - right + 10 << "\" y=\"" << top + 15 + 18 * static_cast<double>(i)
      << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << kColors[i % 4] << "\">"
      << series[i].first << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

fs::path cmd_plot(const RunConfig& cfg, const fs::path& data, const std::optional<fs::path>& model_path) {
  const Dataset ds = load_simulated(data);
  std::optional<SimulatorModel> model;
  if (model_path) {
    model.emplace(SimulatorModel::load(*model_path));
    if (model->config().n_angles != ds.wave->n_angles) {
      fail(ErrorCode::ShapeMismatch, "model n_angles does not match the dataset's responses");
    }
  }
  const fs::path dir = cfg.out / "plots";
  fs::create_directories(dir);
  for (const auto* o : ds.with_split(Split::Test)) {
    std::vector<std::pair<std::string, Response>> series{{"truth", o->response}};
    if (model) {
      series.emplace_back("simple", model->predict(o->simple()));
      Response mean(o->response.size(), 0.0);
      for (std::size_t m = 1; m < o->meshes.size(); ++m) {
        const Response p = model->predict(o->meshes[m]);
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += p[k] / static_cast<double>(o->num_complex());
      }
      if (o->num_complex() > 0) series.emplace_back("variant mean", mean);
    }
    std::ostringstream csv;
    csv << "angle_rad";
    for (const auto& [name, r] : series) csv << "," << (name == "variant mean" ? "variant_mean" : name);
    csv << "\n";
    for (std::size_t k = 0; k < o->response.size(); ++k) {
      csv << csv_double(azimuth(*ds.wave, static_cast<int>(k)));
      for (const auto& [name, r] : series) csv << "," << csv_double(r[k]);
      csv << "\n";
    }
    write_text(dir / (o->object_id + ".csv"), csv.str());
    write_text(dir / (o->object_id + ".svg"), render_svg(series, o->object_id));
  }
  return dir;
}

std::vector<GridRow> table_grid() {
  std::vector<GridRow> rows;
  const EmbedderKind all[] = {EmbedderKind::Direct, EmbedderKind::Graph, EmbedderKind::Token};
  for (auto k : all) rows.push_back({k, "None", "Ideal"});
  for (auto k : all) rows.push_back({k, "None", "Basic"});
  for (auto k : all) rows.push_back({k, "Classification", "Auxiliary"});
  for (auto k : {EmbedderKind::Graph, EmbedderKind::Token}) rows.push_back({k, "Autoencoder", "Auxiliary"});
  return rows;
}

fs::path cmd_repro(const RunConfig& cfg, const Progress& progress) {
  const fs::path root = cfg.out / "repro";
  if (fs::exists(root)) fs::remove_all(root);
  fs::create_directories(root);
  write_effective_config(cfg, root);

  note(progress, "generating dataset");
  Dataset ds = gen_dataset(cfg.dataset);
  attach_ground_truth(ds, cfg.oracle);
  write_dataset(ds, root / "dataset");
  note(progress, "generating auxiliary corpus");
  const AuxiliaryCorpus corpus = gen_auxiliary_corpus(cfg.pretrain.corpus);
  check_disjoint(corpus, ds);

  std::ostringstream table;
  table << "seed," << csv_header() << "\n";
  for (std::uint64_t seed : cfg.repro.seeds) {
    const fs::path seed_dir = root / ("seed_" + std::to_string(seed));
    for (const GridRow& row : table_grid()) {
      const std::string slug = row_slug(row);
      note(progress, "seed " + std::to_string(seed) + ": " + slug);
      ModelConfig mc = cfg.model;
      mc.embedder.kind = row.encoder;
      TrainConfig t = cfg.training;
      t.seed = seed;
      t.augment = Augmentation{};
      const EpochHook hook = epoch_hook(progress, slug);
      std::optional<TrainResult> r;
      if (row.training_data == "Ideal") {
        t.regime = Regime::Ideal;
        r.emplace(train_ideal(t, mc, ds, hook));
      } else if (row.pretraining == "None") {
        t.regime = Regime::Scratch;
        r.emplace(train_scratch(t, mc, ds, hook));
      } else {
        const Objective obj = row.pretraining == "Classification" ? Objective::Classification : Objective::Autoencoder;
        PretrainResult pre = run_pretrain(cfg, obj, mc.embedder, corpus, seed);
        write_log(pre.log, seed_dir / (slug + "_pretrain.jsonl"));
        t.regime = Regime::Finetune;
        r.emplace(finetune(pre.embedder, t, mc, ds, hook));
      }
      const fs::path ckpt = seed_dir / (slug + ".ckpt");
      fs::create_directories(seed_dir);
      r->model.save(ckpt);
      write_log(r->log, seed_dir / (slug + ".jsonl"));
      const EvalReport rep = evaluate(r->model, ds, cfg.eval);
      write_text(seed_dir / (slug + "_report.json"), rep.to_json() + "\n");
      const std::string line = std::to_string(seed) + "," +
                               csv_row(std::string(embedder_name(row.encoder)), row.pretraining,
                                       row.training_data, rep);
      table << line << "\n";
      note(progress, line);
    }
  }
  write_text(root / "table.csv", table.str());
  return root / "table.csv";
}

}  // namespace mtopo
