#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>

#include "m2pt/params.hpp"

namespace m2pt {

struct ParamCheck {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t elements = 0;
};

struct GradCheckReport {
  std::map<std::string, ParamCheck> per_param;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Builds a scalar loss on the given tape, pulling parameters through binder.
template <typename T>
using LossBuilder = std::function<Var(ParamBinder<T>&)>;

/// Relative error between an analytic and a numeric derivative. Entries whose
/// magnitude falls below `floor` are compared on the absolute scale of the
/// floor, so vanishing gradients do not divide by zero.
inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Compares reverse-mode gradients of every trainable parameter against
/// central differences. Frozen parameters never appear in the report.
template <typename T>
GradCheckReport finite_diff_check(const LossBuilder<T>& loss, ParameterStore<T>& params,
                                  const std::set<std::string>& trainable, double step,
                                  double tolerance, double floor = 1e-6) {
  if (!(step > 0.0)) {
    throw NumericError("finite_diff_check: step must be positive");
  }
  auto eval = [&](bool with_grad, std::map<std::string, Tensor<T>>* grads) {
    Tape<T> tape;
    ParamBinder<T> binder(tape, params, with_grad ? &trainable : nullptr);
    Var out = loss(binder);
    const double value = static_cast<double>(tape.value(out)[0]);
    if (!std::isfinite(value)) {
      throw NumericError("finite_diff_check: non-finite loss");
    }
    if (with_grad) {
      tape.backward(out);
      binder.accumulate_grads(*grads);
    }
    return value;
  };

  std::map<std::string, Tensor<T>> analytic;
  eval(true, &analytic);

  GradCheckReport report;
  report.tolerance = tolerance;
  for (const std::string& name : trainable) {
    if (!params.contains(name)) continue;
    Tensor<T>& p = params.get(name);
    const auto found = analytic.find(name);
    ParamCheck check;
    check.elements = p.size();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const T saved = p[i];
      p[i] = static_cast<T>(saved + step);
      const double plus = eval(false, nullptr);
      p[i] = static_cast<T>(saved - step);
      const double minus = eval(false, nullptr);
      p[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double a = found == analytic.end() ? 0.0 : static_cast<double>(found->second[i]);
      check.max_abs_error = std::max(check.max_abs_error, std::abs(a - numeric));
      check.max_rel_error = std::max(check.max_rel_error, relative_error(a, numeric, floor));
    }
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.per_param.emplace(name, check);
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace m2pt
