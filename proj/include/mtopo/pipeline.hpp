#pragma once

#include "mtopo/config.hpp"
#include "mtopo/error.hpp"
#include "mtopo/metrics.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mtopo {

namespace fs = std::filesystem;

/// Exit status for an error code: 2 config, 4 numeric failure, 3 everything
/// else that stems from input data.
int exit_code(ErrorCode code);

/// Progress sink; the CLI prints to stderr, tests pass nothing.
using Progress = std::function<void(const std::string&)>;

/// <out>/dataset: manifest and meshes, no responses.
fs::path cmd_gen(const RunConfig& cfg, const Progress& progress = {});

/// Simulates every object of `data` and writes the dataset with responses to
/// <out>/dataset.
fs::path cmd_simulate(const RunConfig& cfg, const fs::path& data, const Progress& progress = {});

enum class Objective { Classification, Autoencoder };
Objective parse_objective(const std::string& name);
std::string objective_name(Objective o);

/// Pretrains the configured embedder on `corpus` (a dataset directory whose
/// meshes are labeled by class) or, when absent, on a generated auxiliary
/// corpus. When `data` is given the corpus must not share object IDs with it.
/// Writes <out>/pretrain/embedder.ckpt and log.jsonl.
fs::path cmd_pretrain(const RunConfig& cfg, Objective objective, const std::optional<fs::path>& corpus,
                      const std::optional<fs::path>& data, const Progress& progress = {});

/// Trains with cfg.training.regime; finetune needs `init`. Writes
/// <out>/model.ckpt and <out>/train_log.jsonl.
fs::path cmd_train(const RunConfig& cfg, const fs::path& data, const std::optional<fs::path>& init,
                   const Progress& progress = {});

struct RowLabels {
  std::string pretraining = "None";
  std::string training_data = "Basic";
};

/// Writes <out>/report.json and <out>/report.csv.
EvalReport cmd_eval(const RunConfig& cfg, const fs::path& model, const fs::path& data,
                    const RowLabels& labels);

/// Per test object: <out>/plots/<id>.csv (angle, truth and, with a model,
/// simple and mean-variant predictions) and <id>.svg.
fs::path cmd_plot(const RunConfig& cfg, const fs::path& data, const std::optional<fs::path>& model);

/// One cell of the encoder x regime grid.
struct GridRow {
  EmbedderKind encoder;
  std::string pretraining;    // None | Classification | Autoencoder
  std::string training_data;  // Ideal | Basic | Auxiliary
};

/// Encoders x regimes, without a Direct + Autoencoder row.
std::vector<GridRow> table_grid();

/// Generates and simulates the dataset, then trains and evaluates every grid
/// row for each repro seed. Writes <out>/repro/table.csv with a leading seed
/// column, plus per-row checkpoints and reports.
fs::path cmd_repro(const RunConfig& cfg, const Progress& progress = {});

std::string render_svg(const std::vector<std::pair<std::string, Response>>& series,
                       const std::string& title);

}  // namespace mtopo
