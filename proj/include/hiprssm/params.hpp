#ifndef HIPRSSM_PARAMS_HPP_
#define HIPRSSM_PARAMS_HPP_

#include <Eigen/Dense>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "hiprssm/tape.hpp"

namespace hiprssm {

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;

  Param(std::string n, Matrix v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(Matrix::Zero(value.rows(), value.cols())) {}

  Eigen::Index size() const { return value.size(); }
};

// Named, insertion-ordered collection of trainable tensors with paired
// gradient storage. Pointers stay valid for the store's lifetime.
class ParamStore {
 public:
  Param& add(const std::string& name, Matrix init);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  Param* find(const std::string& name);
  bool contains(const std::string& name) const;

  const std::vector<std::unique_ptr<Param>>& entries() const {
    return entries_;
  }
  size_t count() const { return entries_.size(); }
  Eigen::Index total_size() const;

  void zero_grad();

  // Flat views in insertion order (checkpointing, finite differences).
  Eigen::VectorXd flatten_values() const;
  Eigen::VectorXd flatten_grads() const;
  void set_values(const Eigen::VectorXd& flat);

 private:
  std::vector<std::unique_ptr<Param>> entries_;
  std::map<std::string, Param*> by_name_;
};

// Creates a leaf for `p` on the tape; after Tape::backward the node's
// gradient is added into p.grad.
Value param_leaf(Tape& t, Param& p);

// Scales all gradients by max_norm/g when the global L2 norm g exceeds
// max_norm. Returns the pre-clip norm.
double clip_gradients(ParamStore& store, double max_norm);

// Adam with bias correction; moment buffers are kept here, keyed by
// parameter identity in store order.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& store);

  int64_t step_count() const { return step_; }
  double learning_rate() const { return lr_; }

  // Flat (m, v) state in store order, for checkpoint resume.
  Eigen::VectorXd flatten_m(const ParamStore& store) const;
  Eigen::VectorXd flatten_v(const ParamStore& store) const;
  void load_state(const ParamStore& store, const Eigen::VectorXd& m,
                  const Eigen::VectorXd& v, int64_t step);

 private:
  struct Moments {
    Matrix m;
    Matrix v;
  };
  void ensure_buffers(const ParamStore& store);

  double lr_, beta1_, beta2_, eps_;
  int64_t step_ = 0;
  std::map<const Param*, Moments> moments_;
};

}  // namespace hiprssm

#endif  // HIPRSSM_PARAMS_HPP_
