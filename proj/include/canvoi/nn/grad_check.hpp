#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "canvoi/core/rng.hpp"
#include "canvoi/nn/param_set.hpp"

namespace canvoi::nn {

struct GradCheckOptions {
  double step = 1e-5;
  // Entries per parameter to probe; 0 probes every entry.
  std::size_t max_entries_per_param = 0;
  std::uint64_t seed = 0;
  // Denominator floor of the relative error, so that near-zero gradients are
  // compared on an absolute scale.
  double denom_floor = 1e-6;
  // Combine steps h and h/2 (fourth-order), which allows a larger h and so
  // less cancellation noise on near-zero gradients.
  bool richardson = false;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;

  bool passes(double tol) const { return max_rel_error < tol; }
};

inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// Compares analytic gradients against central differences. `loss_fn` takes the
// parameter set, returns the scalar loss and accumulates analytic gradients
// into the grad slots.
template <class F>
GradCheckReport grad_check(ParamSet<double>& params, F&& loss_fn, const GradCheckOptions& opt = {}) {
  params.zero_grad();
  loss_fn(params);
  std::vector<Tensor2D<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad);

  Rng rng(opt.seed, "grad_check");
  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params.at(pi);
    std::vector<std::size_t> idx(p.value.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (opt.max_entries_per_param && idx.size() > opt.max_entries_per_param) {
      rng.shuffle(idx);
      idx.resize(opt.max_entries_per_param);
    }
    for (std::size_t i : idx) {
      const double saved = p.value[i];
      auto central = [&](double h) {
        p.value[i] = saved + h;
        const double up = loss_fn(params);
        p.value[i] = saved - h;
        const double down = loss_fn(params);
        p.value[i] = saved;
        return (up - down) / (2.0 * h);
      };
      const double coarse = central(opt.step);
      const double numeric = opt.richardson ? (4.0 * central(0.5 * opt.step) - coarse) / 3.0 : coarse;
      const double a = analytic[pi][i];
      const double err = relative_error(a, numeric, opt.denom_floor);
      ++report.checked;
      if (report.checked == 1 || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = p.name;
        report.worst_index = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  params.zero_grad();
  for (std::size_t pi = 0; pi < params.size(); ++pi) params.at(pi).grad = analytic[pi];
  return report;
}

// Randomizes every parameter uniformly in [-scale, scale] (gains around 1) so
// gradient checks do not start from a degenerate point.
inline void randomize_for_check(ParamSet<double>& params, Rng& rng, double scale = 0.5) {
  for (auto& p : params) {
    const bool gain = p.name.find("norm") != std::string::npos &&
                      p.name.find("weight") != std::string::npos;
    for (std::size_t i = 0; i < p.value.size(); ++i)
      p.value[i] = (gain ? 1.0 : 0.0) + rng.uniform(-scale, scale);
  }
}

}  // namespace canvoi::nn
