#include "ipa/numerics/grad_check.h"

#include <cmath>

namespace ipa::numerics {

namespace {

double evaluate(const LossFn& f) {
  Tape tape;
  double v = f(tape).scalar();
  if (!std::isfinite(v)) throw NonFiniteLoss("loss is not finite during gradient check");
  return v;
}

}  // namespace

GradCheckResult grad_check(const LossFn& f, const std::vector<Parameter*>& params, double eps,
                           Stencil stencil) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw std::invalid_argument("eps must lie in [1e-7, 1e-3]");

  for (Parameter* p : params) p->grad.fill(0.0);
  {
    Tape tape;
    Var loss = f(tape);
    if (!std::isfinite(loss.scalar())) throw NonFiniteLoss("loss is not finite during gradient check");
    tape.backward(loss);
  }

  GradCheckResult result;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      auto at = [&](double offset) {
        p->value[i] = saved + offset;
        return evaluate(f);
      };
      double fd = 0.0;
      if (stencil == Stencil::kTwoPoint) {
        fd = (at(eps) - at(-eps)) / (2.0 * eps);
      } else {
        fd = (8.0 * (at(eps) - at(-eps)) - (at(2 * eps) - at(-2 * eps))) / (12.0 * eps);
      }
      p->value[i] = saved;
      const double an = p->grad[i];
      const double rel = std::abs(an - fd) / (std::abs(an) + std::abs(fd) + 1e-8);
      ++result.coordinates;
      if (rel > result.max_rel_error || result.worst_param.empty()) {
        if (rel >= result.max_rel_error) {
          result.max_rel_error = rel;
          result.worst_param = p->name;
          result.worst_index = i;
          result.analytic = an;
          result.numeric = fd;
        }
      }
    }
  }
  return result;
}

}  // namespace ipa::numerics
