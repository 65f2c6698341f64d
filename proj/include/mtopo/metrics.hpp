#pragma once

#include "mtopo/dataset.hpp"
#include "mtopo/radar.hpp"

#include <functional>
#include <string>
#include <vector>

namespace mtopo {

class SimulatorModel;

double mse(const Response& a, const Response& b);
double simple_mse(const Response& truth, const Response& simple_pred);
/// Mean over variants of MSE against the shared ground truth.
double complex_mse(const Response& truth, const std::vector<Response>& variant_preds);
/// Mean over variants of MSE against the simple-mesh prediction.
double variation_mse(const Response& simple_pred, const std::vector<Response>& variant_preds);

struct CollapseResult {
  double score = 0.0;
  bool collapsed = false;
};

/// score = sum_k Var_o(P_o[k]) / sum_k Var_o(R_o[k]) over objects o, where P_o
/// is the object's mean prediction and R_o its ground truth. Flagged when
/// score < tau.
CollapseResult detect_mode_collapse(const std::vector<Response>& object_predictions,
                                    const std::vector<Response>& object_truths, double tau = 0.01);

struct ObjectMetrics {
  std::string object_id;
  double simple = 0.0;
  double complex = 0.0;
  double variation = 0.0;
};

struct EvalReport {
  std::string model_id;
  std::string manifest_id;
  std::vector<ObjectMetrics> objects;  // sorted by object ID
  double simple = 0.0;
  double complex = 0.0;
  double variation = 0.0;
  CollapseResult collapse;

  std::string to_json() const;
};

using Predictor = std::function<Response(const Mesh&)>;

struct EvalConfig {
  double collapse_tau = 0.01;
  int threads = 0;  // 0: hardware concurrency
};

/// Runs the predictor on the simple and every complex mesh of each test object.
EvalReport evaluate(const Predictor& predict, const Dataset& ds, const EvalConfig& cfg = {});
EvalReport evaluate(const SimulatorModel& model, const Dataset& ds, const EvalConfig& cfg = {});

/// CSV row: encoder,pretraining,training_data,simple_mse,complex_mse,variation_mse,collapsed
std::string csv_header();
std::string csv_row(const std::string& encoder, const std::string& pretraining,
                    const std::string& training_data, const EvalReport& r);

/// 16-hex-digit FNV-1a of a byte string; used as model and manifest identity.
std::string content_id(const std::string& bytes);

}  // namespace mtopo
