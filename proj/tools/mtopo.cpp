// mtopo: dataset generation, simulation, pretraining, training, evaluation
// and plotting for topology-insensitive neural radar simulators.

#include "mtopo/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <malloc.h>

#include <iostream>

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration");
  cmd->add_option("--seed", c.seed, "master seed (overrides the config)");
  cmd->add_option("--out", c.out, "output directory (overrides the config)");
  cmd->add_option("--set", c.sets, "dotted override key=value, repeatable");
}

mtopo::RunConfig resolve(const Common& c) {
  std::vector<std::string> overrides = c.sets;
  if (c.seed) overrides.push_back("seed=" + std::to_string(*c.seed));
  if (!c.out.empty()) overrides.push_back("out=" + nlohmann::json(c.out).dump());
  return mtopo::load_run_config(c.config, overrides);
}

void progress(const std::string& line) { std::cerr << line << std::endl; }

std::optional<mtopo::fs::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return mtopo::fs::path(s);
}

}  // namespace

int main(int argc, char** argv) {
  // Training churns through short-lived matrices; keep freed memory in the arena.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"mtopo"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen", "generate meshes and manifest");
  add_common(gen, common);

  std::string data;
  auto* simulate = app.add_subcommand("simulate", "attach ground-truth responses");
  add_common(simulate, common);
  simulate->add_option("--data", data, "dataset directory")->required();

  std::string objective = "autoencoder", corpus;
  auto* pretrain = app.add_subcommand("pretrain", "pretrain the configured embedder");
  add_common(pretrain, common);
  pretrain->add_option("--objective", objective, "classification | autoencoder");
  pretrain->add_option("--corpus", corpus, "dataset directory used as corpus (default: generated)");
  pretrain->add_option("--data", data, "simulation dataset that the corpus must not overlap");

  std::string init;
  auto* train = app.add_subcommand("train", "train a simulator with training.regime");
  add_common(train, common);
  train->add_option("--data", data, "simulated dataset directory")->required();
  train->add_option("--init", init, "pretrained embedder checkpoint (finetune)");

  std::string model;
  mtopo::RowLabels labels;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(eval, common);
  eval->add_option("--model", model, "model checkpoint")->required();
  eval->add_option("--data", data, "simulated dataset directory")->required();
  eval->add_option("--pretraining", labels.pretraining, "pretraining label for the CSV row");
  eval->add_option("--training-data", labels.training_data, "training-data label for the CSV row");

  auto* plot = app.add_subcommand("plot", "plot responses and predictions");
  add_common(plot, common);
  plot->add_option("--data", data, "simulated dataset directory")->required();
  plot->add_option("--model", model, "model checkpoint");

  auto* repro = app.add_subcommand("repro", "run the full encoder x regime grid");
  add_common(repro, common);

  CLI11_PARSE(app, argc, argv);

  try {
    const mtopo::RunConfig cfg = resolve(common);
    if (gen->parsed()) {
      std::cout << mtopo::cmd_gen(cfg, progress).string() << "\n";
    } else if (simulate->parsed()) {
      std::cout << mtopo::cmd_simulate(cfg, data, progress).string() << "\n";
    } else if (pretrain->parsed()) {
      std::cout << mtopo::cmd_pretrain(cfg, mtopo::parse_objective(objective), opt_path(corpus),
                                       opt_path(data), progress)
                       .string()
                << "\n";
    } else if (train->parsed()) {
      std::cout << mtopo::cmd_train(cfg, data, opt_path(init), progress).string() << "\n";
    } else if (eval->parsed()) {
      std::cout << mtopo::cmd_eval(cfg, model, data, labels).to_json() << "\n";
    } else if (plot->parsed()) {
      std::cout << mtopo::cmd_plot(cfg, data, opt_path(model)).string() << "\n";
    } else if (repro->parsed()) {
      std::cout << mtopo::cmd_repro(cfg, progress).string() << "\n";
    }
  } catch (const mtopo::Error& e) {
    nlohmann::json err{{"error", std::string(mtopo::to_string(e.code()))}, {"message", e.what()}};
    std::cerr << err.dump() << std::endl;
    return mtopo::exit_code(e.code());
  } catch (const std::exception& e) {
    nlohmann::json err{{"error", "Io"}, {"message", e.what()}};
    std::cerr << err.dump() << std::endl;
    return 3;
  }
  return 0;
}
