#include "darn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "darn/errors.hpp"
#include "darn/ops.hpp"

namespace darn {

namespace {

double evaluate(const ScalarFn& fn, const std::vector<Tensor>& inputs) {
  NoGradGuard guard;
  return fn(inputs).item();
}

// Rounding noise of one loss evaluation, in units of machine epsilon times
// |f|; bounds what a difference quotient can resolve.
constexpr double kRoundoffUlps = 16.0;

enum class Outcome { pass, fail, kink };

struct Pass {
  Outcome outcome = Outcome::pass;
  double max_rel_err = 0.0;
  std::size_t coordinates = 0;
};

Pass run_once(const ScalarFn& fn, std::vector<Tensor>& inputs, const GradCheckOptions& opt) {
  for (auto& t : inputs) t.zero_grad();
  fn(inputs).backward();

  Pass result;
  const double h = opt.step;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    const std::vector<double> analytic = t.grad();
    auto values = t.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double x0 = values[i];
      values[i] = x0 + h;
      const double fp = evaluate(fn, inputs);
      values[i] = x0 - h;
      const double fm = evaluate(fn, inputs);
      values[i] = x0;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[i];
      const double resolution = kRoundoffUlps * std::numeric_limits<double>::epsilon() *
                                std::max({std::abs(fp), std::abs(fm), 1.0}) / h;
      const double floor = std::max(opt.abs_floor, resolution / opt.tolerance);
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++result.coordinates;
      if (err < opt.tolerance) {
        result.max_rel_err = std::max(result.max_rel_err, err);
        continue;
      }
      const double f0 = evaluate(fn, inputs);
      const double forward = (fp - f0) / h;
      const double backward = (f0 - fm) / h;
      const double scale = std::max({std::abs(forward), std::abs(backward), 1.0});
      // A kink inside the stencil: the slopes disagree outright, or the
      // analytic value matches one side far better than the central quotient.
      const double one_sided = std::min(std::abs(forward - a), std::abs(backward - a));
      if (std::abs(forward - backward) > 1e-3 * scale || one_sided < 0.1 * std::abs(numeric - a)) {
        result.outcome = Outcome::kink;
        return result;
      }
      result.max_rel_err = std::max(result.max_rel_err, err);
      result.outcome = Outcome::fail;
    }
  }
  return result;
}

}  // namespace

GradCheckReport finite_diff_check(const ScalarFn& fn, std::vector<Tensor> inputs, const GradCheckOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> noise(0.0, options.resample_noise);
  GradCheckReport report;
  for (;;) {
    const Pass p = run_once(fn, inputs, options);
    report.coordinates = p.coordinates;
    if (p.outcome != Outcome::kink) {
      report.max_rel_err = p.max_rel_err;
      report.pass = p.outcome == Outcome::pass;
      return report;
    }
    if (report.resamples >= options.max_resamples) {
      report.max_rel_err = std::numeric_limits<double>::infinity();
      report.pass = false;
      return report;
    }
    ++report.resamples;
    for (auto& t : inputs) {
      if (!t.requires_grad()) continue;
      for (double& v : t.mutable_values()) v += noise(rng);
    }
  }
}

Tensor random_projection(const Tensor& output, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(output.numel());
  for (double& v : w) v = u(rng);
  return ops::sum(ops::mul(output, Tensor::from(output.shape(), std::move(w))));
}

}  // namespace darn
