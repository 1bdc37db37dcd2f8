#ifndef HIPRSSM_GRADCHECK_HPP_
#define HIPRSSM_GRADCHECK_HPP_

#include <functional>
#include <string>

#include "hiprssm/params.hpp"

namespace hiprssm {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::string worst_param;
  Eigen::Index worst_index = -1;
  bool all_params_touched = true;  // every parameter received some gradient
};

// Compares reverse-mode gradients of `loss_fn` (a scalar forward pass built
// on a fresh tape) against central finite differences over every coordinate
// of every parameter. rel err uses max(|a|, |fd|, scale_floor) as the
// denominator: near-zero gradients are held to the absolute tolerance
// rtol * scale_floor instead, which keeps the check above the difference
// quotient's own roundoff floor (~1e-7 for O(1) losses at step 1e-5).
GradCheckReport check_gradients(
    ParamStore& store, const std::function<Value(Tape&)>& loss_fn,
    double fd_step = 1e-5, double scale_floor = 1e-3);

}  // namespace hiprssm

#endif  // HIPRSSM_GRADCHECK_HPP_
