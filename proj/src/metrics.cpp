#include "mtopo/metrics.hpp"

#include "mtopo/error.hpp"
#include "mtopo/simulator.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

namespace mtopo {

namespace {

void require_same_length(const Response& a, const Response& b) {
  if (a.size() != b.size()) fail(ErrorCode::ShapeMismatch, "response length mismatch");
  if (a.empty()) fail(ErrorCode::EmptyInput, "empty response");
}

void require_nonempty(const std::vector<Response>& v) {
  if (v.empty()) fail(ErrorCode::EmptyInput, "no variant predictions");
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Response mean_response(const std::vector<Response>& rs) {
  Response m(rs.front().size(), 0.0);
  for (const auto& r : rs) {
    require_same_length(m, r);
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += r[k];
  }
  for (auto& v : m) v /= static_cast<double>(rs.size());
  return m;
}

// Sum over bins of the population variance across rows.
double total_variance(const std::vector<Response>& rows) {
  const Response mean = mean_response(rows);
  double total = 0.0;
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.size(); ++k) total += (r[k] - mean[k]) * (r[k] - mean[k]);
  }
  return total / static_cast<double>(rows.size());
}

}  // namespace

double mse(const Response& a, const Response& b) {
  require_same_length(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double simple_mse(const Response& truth, const Response& simple_pred) { return mse(truth, simple_pred); }

double complex_mse(const Response& truth, const std::vector<Response>& variant_preds) {
  require_nonempty(variant_preds);
  double s = 0.0;
  for (const auto& p : variant_preds) s += mse(truth, p);
  return s / static_cast<double>(variant_preds.size());
}

double variation_mse(const Response& simple_pred, const std::vector<Response>& variant_preds) {
  require_nonempty(variant_preds);
  double s = 0.0;
  for (const auto& p : variant_preds) s += mse(simple_pred, p);
  return s / static_cast<double>(variant_preds.size());
}

CollapseResult detect_mode_collapse(const std::vector<Response>& object_predictions,
                                    const std::vector<Response>& object_truths, double tau) {
  if (object_predictions.size() < 2 || object_predictions.size() != object_truths.size()) {
    fail(ErrorCode::EmptyInput, "detect_mode_collapse: need matching predictions for >= 2 objects");
  }
  const double truth_var = total_variance(object_truths);
  if (!(truth_var > 0.0)) {
    fail(ErrorCode::Numeric, "detect_mode_collapse: ground truth does not vary across objects");
  }
  CollapseResult r;
  r.score = total_variance(object_predictions) / truth_var;
  r.collapsed = r.score < tau;
  return r;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["model_id"] = model_id;
  j["manifest_id"] = manifest_id;
  j["simple_mse"] = simple;
  j["complex_mse"] = complex;
  j["variation_mse"] = variation;
  j["collapse_score"] = collapse.score;
  j["collapsed"] = collapse.collapsed;
  auto& objs = j["objects"] = nlohmann::json::array();
  for (const auto& o : objects) {
    objs.push_back({{"object_id", o.object_id},
                    {"simple_mse", o.simple},
                    {"complex_mse", o.complex},
                    {"variation_mse", o.variation}});
  }
  return j.dump(2);
}

EvalReport evaluate(const Predictor& predict, const Dataset& ds, const EvalConfig& cfg) {
  std::vector<const ObjectRecord*> test = ds.with_split(Split::Test);
  if (test.empty()) fail(ErrorCode::EmptyInput, "evaluate: no test objects");
  std::sort(test.begin(), test.end(),
            [](const ObjectRecord* a, const ObjectRecord* b) { return a->object_id < b->object_id; });
  for (const auto* o : test) {
    if (o->response.empty()) fail(ErrorCode::EmptyInput, "evaluate: object " + o->object_id + " has no response");
    if (o->meshes.size() < 2) fail(ErrorCode::EmptyInput, "evaluate: object " + o->object_id + " has no variants");
  }

  EvalReport report;
  report.manifest_id = content_id(manifest_json(ds));
  report.objects.resize(test.size());
  std::vector<Response> mean_preds(test.size());

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < test.size(); i = next++) {
      try {
        const ObjectRecord& o = *test[i];
        const Response simple = predict(o.simple());
        std::vector<Response> variants;
        for (std::size_t m = 1; m < o.meshes.size(); ++m) variants.push_back(predict(o.meshes[m]));
        report.objects[i] = {o.object_id, simple_mse(o.response, simple), complex_mse(o.response, variants),
                             variation_mse(simple, variants)};
        variants.push_back(simple);
        mean_preds[i] = mean_response(variants);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  unsigned threads = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads) : std::thread::hardware_concurrency();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(test.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  std::vector<Response> truths;
  for (std::size_t i = 0; i < test.size(); ++i) {
    report.simple += report.objects[i].simple;
    report.complex += report.objects[i].complex;
    report.variation += report.objects[i].variation;
    truths.push_back(test[i]->response);
  }
  const auto n = static_cast<double>(test.size());
  report.simple /= n;
  report.complex /= n;
  report.variation /= n;
  if (test.size() >= 2) report.collapse = detect_mode_collapse(mean_preds, truths, cfg.collapse_tau);
  return report;
}

EvalReport evaluate(const SimulatorModel& model, const Dataset& ds, const EvalConfig& cfg) {
  if (!ds.wave || ds.wave->n_angles != model.config().n_angles) {
    fail(ErrorCode::ShapeMismatch, "model n_angles does not match the dataset's responses");
  }
  EvalReport r = evaluate([&](const Mesh& m) { return model.predict(m); }, ds, cfg);
  r.model_id = content_id(model.serialize());
  return r;
}

std::string csv_header() {
  return "encoder,pretraining,training_data,simple_mse,complex_mse,variation_mse,collapsed";
}

std::string csv_row(const std::string& encoder, const std::string& pretraining,
                    const std::string& training_data, const EvalReport& r) {
  return encoder + "," + pretraining + "," + training_data + "," + format_double(r.simple) + "," +
         format_double(r.complex) + "," + format_double(r.variation) + "," +
         (r.collapse.collapsed ? "true" : "false");
}

std::string content_id(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace mtopo
