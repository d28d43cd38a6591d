#ifndef IPA_NUMERICS_GRAD_CHECK_H_
#define IPA_NUMERICS_GRAD_CHECK_H_

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ipa/numerics/tape.h"

namespace ipa::numerics {

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates = 0;
};

// Builds a scalar loss on the given tape.
using LossFn = std::function<Var(Tape&)>;

// Compares reverse-mode gradients with central differences over every
// coordinate of `params`:
//   max_i |analytic_i - fd_i| / (|analytic_i| + |fd_i| + 1e-8).
// eps must lie in [1e-7, 1e-3]. Parameter values are restored on return.
// Stencil::kFourPoint uses f(x +- eps), f(x +- 2 eps), whose smaller
// truncation error allows a larger eps on deep, roundoff-sensitive losses.
enum class Stencil { kTwoPoint, kFourPoint };
GradCheckResult grad_check(const LossFn& f, const std::vector<Parameter*>& params,
                           double eps = 1e-5, Stencil stencil = Stencil::kTwoPoint);

}  // namespace ipa::numerics

#endif  // IPA_NUMERICS_GRAD_CHECK_H_
