#include "mtopo/nn/grad_check.hpp"

#include "mtopo/error.hpp"
#include "mtopo/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mtopo::nn {

GradCheckResult grad_check(const std::function<Var()>& loss, const std::vector<Var>& params,
                           const GradCheckOptions& opts) {
  if (params.empty()) fail(ErrorCode::EmptyInput, "grad_check: no parameters");
  for (auto p : params) p.zero_grad();
  backward(loss());
  std::vector<Matrix> analytic;
  std::vector<Eigen::Index> offsets{0};
  for (const auto& p : params) {
    analytic.push_back(p.grad());
    offsets.push_back(offsets.back() + p.value().size());
  }

  Rng rng(opts.seed);
  GradCheckResult r;
  const Eigen::Index total = offsets.back();
  for (int probe = 0; probe < opts.probes; ++probe) {
    const auto flat = static_cast<Eigen::Index>(uniform_int(rng, 0, total - 1));
    const auto which = static_cast<std::size_t>(
        std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin() - 1);
    const Eigen::Index idx = flat - offsets[which];
    Var p = params[which];
    double& x = p.mutable_value().data()[idx];
    const double saved = x;
    x = saved + opts.eps;
    const double up = loss().item();
    x = saved - opts.eps;
    const double down = loss().item();
    x = saved;
    const double numeric = (up - down) / (2.0 * opts.eps);
    const double a = analytic[which].data()[idx];
    // Central differences carry roughly eps_mach |f| / eps of rounding noise,
    // which swamps coordinates whose true gradient is (near) zero.
    const double noise = std::numeric_limits<double>::epsilon() *
                         std::max({std::abs(up), std::abs(down), 1.0}) / opts.eps;
    const double denom = std::max({std::abs(a), std::abs(numeric), opts.floor, opts.noise_factor * noise});
    r.max_rel_error = std::max(r.max_rel_error, std::abs(a - numeric) / denom);
    ++r.probes;
  }
  for (auto p : params) p.zero_grad();
  return r;
}

}  // namespace mtopo::nn
