#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "teawib/autograd.hpp"
#include "teawib/rng.hpp"

namespace teawib {

struct GradCheckOptions {
  double step = 1e-4;              // central-difference half-width
  int samples_per_parameter = 8;   // coordinates drawn per parameter tensor
  double magnitude_floor = 0.0;    // skip coordinates where both gradients are below this
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  int checked = 0;
  int skipped = 0;
};

/// Compare reverse-mode gradients against central finite differences.
///
/// `loss` builds a fresh forward pass on the given tape and returns the scalar
/// loss. Stochastic fragments must reseed internally so that every evaluation
/// sees the same randomness. Relative error is |a - n| / max(1e-8, |n|).
template <typename T>
GradCheckReport grad_check(const std::function<BasicVar<T>(BasicTape<T>&)>& loss,
                           const std::vector<BasicParameter<T>*>& params, std::uint64_t seed,
                           GradCheckOptions options = {}) {
  for (auto* p : params) p->zero_grad();
  {
    BasicTape<T> tape;
    auto l = loss(tape);
    tape.backward(l);
  }
  auto evaluate = [&]() -> double {
    BasicTape<T> tape(false);
    return static_cast<double>(loss(tape).value()[0]);
  };

  Rng rng(seed);
  GradCheckReport report;
  for (auto* p : params) {
    const std::size_t n = p->value.size();
    const int draws = static_cast<int>(std::min<std::size_t>(n, options.samples_per_parameter));
    for (int d = 0; d < draws; ++d) {
      const std::size_t idx = draws == static_cast<int>(n) ? static_cast<std::size_t>(d)
                                                            : static_cast<std::size_t>(rng.below(n));
      const T original = p->value[idx];
      p->value[idx] = static_cast<T>(original + options.step);
      const double up = evaluate();
      p->value[idx] = static_cast<T>(original - options.step);
      const double down = evaluate();
      p->value[idx] = original;
      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = static_cast<double>(p->grad[idx]);
      if (std::max(std::abs(numeric), std::abs(analytic)) < options.magnitude_floor) {
        ++report.skipped;
        continue;
      }
      const double rel = std::abs(analytic - numeric) / std::max(1e-8, std::abs(numeric));
      ++report.checked;
      if (report.checked == 1 || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_parameter = p->name;
        report.worst_index = idx;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace teawib
