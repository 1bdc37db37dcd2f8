#include "hiprssm/gradcheck.hpp"

#include <cmath>

#include "hiprssm/errors.hpp"

namespace hiprssm {

GradCheckReport check_gradients(ParamStore& store,
                                const std::function<Value(Tape&)>& loss_fn,
                                double fd_step, double scale_floor) {
  store.zero_grad();
  {
    Tape tape;
    Value loss = loss_fn(tape);
    tape.backward(loss);
  }
  const Eigen::VectorXd analytic = store.flatten_grads();

  auto eval = [&]() {
    Tape tape;
    tape.grad_enabled = false;
    return loss_fn(tape).mat()(0, 0);
  };

  Eigen::VectorXd values = store.flatten_values();
  GradCheckReport report;

  Eigen::Index off = 0;
  for (const auto& p : store.entries()) {
    bool touched = false;
    for (Eigen::Index i = 0; i < p->size(); ++i) {
      const Eigen::Index flat_i = off + i;
      const double orig = values(flat_i);

      values(flat_i) = orig + fd_step;
      store.set_values(values);
      const double hi = eval();

      values(flat_i) = orig - fd_step;
      store.set_values(values);
      const double lo = eval();

      values(flat_i) = orig;
      store.set_values(values);

      const double fd = (hi - lo) / (2.0 * fd_step);
      const double a = analytic(flat_i);
      const double abs_err = std::abs(a - fd);
      const double scale = std::max({std::abs(a), std::abs(fd), scale_floor});
      const double rel_err = abs_err / scale;

      if (a != 0.0) touched = true;
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      if (rel_err > report.max_rel_err) {
        report.max_rel_err = rel_err;
        report.worst_param = p->name;
        report.worst_index = i;
      }
    }
    if (!touched) report.all_params_touched = false;
    off += p->size();
  }
  return report;
}

}  // namespace hiprssm
