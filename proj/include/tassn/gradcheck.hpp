#pragma once

// Central finite-difference verification of tape gradients. The numeric
// side here is the independent oracle for every analytic gradient rule.

#include "tassn/tensor.hpp"

#include <functional>
#include <string>

namespace tassn::ad {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::int64_t checked = 0;
  bool pass = true;
  std::string worst;  // "param[i]: analytic=..., numeric=..."
};

// builder must construct a fresh graph from the current contents of the
// given parameter tensors and return the scalar loss node. check_gradient
// perturbs every element of every tensor in `targets` and compares the
// central difference against the analytic gradient.
inline GradCheckReport check_gradient(
    const std::function<Var(Tape&)>& builder, std::vector<Tensor*> targets,
    double step = 1e-5, double tol = 1e-4) {
  if (step <= 0.0) throw std::invalid_argument("check_gradient: step must be > 0");
  GradCheckReport rep;

  // Analytic pass.
  for (Tensor* t : targets) t->zero_grad();
  {
    Tape tape;
    Var loss = builder(tape);
    if (tape.val(loss).numel() != 1)
      throw std::invalid_argument("check_gradient: loss is not scalar");
    tape.backward(loss);
  }

  auto eval = [&]() {
    Tape tape;
    Var loss = builder(tape);
    return tape.val(loss).values[0];
  };

  for (size_t ti = 0; ti < targets.size(); ++ti) {
    Tensor* t = targets[ti];
    if (!t->requires_grad) continue;
    for (std::int64_t i = 0; i < t->numel(); ++i) {
      const double saved = t->values[i];
      t->values[i] = saved + step;
      const double fp = eval();
      t->values[i] = saved - step;
      const double fm = eval();
      t->values[i] = saved;

      const double numeric = (fp - fm) / (2.0 * step);
      const double analytic = t->grad[i];
      double rel;
      if (!std::isfinite(numeric) || !std::isfinite(analytic)) {
        rel = std::numeric_limits<double>::infinity();
      } else {
        rel = std::abs(analytic - numeric) /
              std::max({1.0, std::abs(analytic), std::abs(numeric)});
      }
      ++rep.checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = "target " + std::to_string(ti) + " elem " + std::to_string(i) +
                    ": analytic=" + std::to_string(analytic) +
                    " numeric=" + std::to_string(numeric);
      }
    }
  }
  rep.pass = rep.checked == 0 || rep.max_rel_err <= tol;
  return rep;
}

}  // namespace tassn::ad
