#include "hiprssm/params.hpp"

#include <cmath>

#include "hiprssm/errors.hpp"

namespace hiprssm {

Param& ParamStore::add(const std::string& name, Matrix init) {
  if (by_name_.count(name)) {
    throw ConfigError("ParamStore: duplicate parameter name '" + name + "'");
  }
  entries_.push_back(std::make_unique<Param>(name, std::move(init)));
  by_name_[name] = entries_.back().get();
  return *entries_.back();
}

Param& ParamStore::at(const std::string& name) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) {
    throw ConfigError("ParamStore: unknown parameter '" + name + "'");
  }
  return *it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) {
    throw ConfigError("ParamStore: unknown parameter '" + name + "'");
  }
  return *it->second;
}

Param* ParamStore::find(const std::string& name) {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

bool ParamStore::contains(const std::string& name) const {
  return by_name_.count(name) > 0;
}

Eigen::Index ParamStore::total_size() const {
  Eigen::Index n = 0;
  for (const auto& p : entries_) n += p->size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : entries_) p->grad.setZero();
}

Eigen::VectorXd ParamStore::flatten_values() const {
  Eigen::VectorXd flat(total_size());
  Eigen::Index off = 0;
  for (const auto& p : entries_) {
    flat.segment(off, p->size()) =
        Eigen::Map<const Eigen::VectorXd>(p->value.data(), p->size());
    off += p->size();
  }
  return flat;
}

Eigen::VectorXd ParamStore::flatten_grads() const {
  Eigen::VectorXd flat(total_size());
  Eigen::Index off = 0;
  for (const auto& p : entries_) {
    flat.segment(off, p->size()) =
        Eigen::Map<const Eigen::VectorXd>(p->grad.data(), p->size());
    off += p->size();
  }
  return flat;
}

void ParamStore::set_values(const Eigen::VectorXd& flat) {
  if (flat.size() != total_size()) {
    throw DimensionMismatch("ParamStore::set_values: size mismatch");
  }
  Eigen::Index off = 0;
  for (auto& p : entries_) {
    Eigen::Map<Eigen::VectorXd>(p->value.data(), p->size()) =
        flat.segment(off, p->size());
    off += p->size();
  }
}

Value param_leaf(Tape& t, Param& p) {
  if (!t.grad_enabled) return t.constant(p.value);
  Param* pp = &p;
  return t.record(p.value, true, [pp](TapeNode& n) { pp->grad += n.grad; });
}

double clip_gradients(ParamStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& p : store.entries()) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (const auto& p : store.entries()) p->grad *= s;
  }
  return norm;
}

void AdamOptimizer::ensure_buffers(const ParamStore& store) {
  for (const auto& p : store.entries()) {
    if (!moments_.count(p.get())) {
      moments_[p.get()] = {Matrix::Zero(p->value.rows(), p->value.cols()),
                           Matrix::Zero(p->value.rows(), p->value.cols())};
    }
  }
}

void AdamOptimizer::step(ParamStore& store) {
  ensure_buffers(store);
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  for (const auto& p : store.entries()) {
    Moments& mom = moments_[p.get()];
    mom.m = beta1_ * mom.m + (1.0 - beta1_) * p->grad;
    mom.v = beta2_ * mom.v.array() +
            (1.0 - beta2_) * p->grad.array().square();
    const Eigen::ArrayXXd m_hat = mom.m.array() / bc1;
    const Eigen::ArrayXXd v_hat = mom.v.array() / bc2;
    p->value.array() -= lr_ * m_hat / (v_hat.sqrt() + eps_);
  }
}

Eigen::VectorXd AdamOptimizer::flatten_m(const ParamStore& store) const {
  Eigen::VectorXd flat = Eigen::VectorXd::Zero(store.total_size());
  Eigen::Index off = 0;
  for (const auto& p : store.entries()) {
    auto it = moments_.find(p.get());
    if (it != moments_.end()) {
      flat.segment(off, p->size()) =
          Eigen::Map<const Eigen::VectorXd>(it->second.m.data(), p->size());
    }
    off += p->size();
  }
  return flat;
}

Eigen::VectorXd AdamOptimizer::flatten_v(const ParamStore& store) const {
  Eigen::VectorXd flat = Eigen::VectorXd::Zero(store.total_size());
  Eigen::Index off = 0;
  for (const auto& p : store.entries()) {
    auto it = moments_.find(p.get());
    if (it != moments_.end()) {
      flat.segment(off, p->size()) =
          Eigen::Map<const Eigen::VectorXd>(it->second.v.data(), p->size());
    }
    off += p->size();
  }
  return flat;
}

void AdamOptimizer::load_state(const ParamStore& store,
                               const Eigen::VectorXd& m,
                               const Eigen::VectorXd& v, int64_t step) {
  if (m.size() != store.total_size() || v.size() != store.total_size()) {
    throw DimensionMismatch("AdamOptimizer::load_state: size mismatch");
  }
  moments_.clear();
  Eigen::Index off = 0;
  for (const auto& p : store.entries()) {
    Moments mom{Matrix(p->value.rows(), p->value.cols()),
                Matrix(p->value.rows(), p->value.cols())};
    Eigen::Map<Eigen::VectorXd>(mom.m.data(), p->size()) =
        m.segment(off, p->size());
    Eigen::Map<Eigen::VectorXd>(mom.v.data(), p->size()) =
        v.segment(off, p->size());
    moments_[p.get()] = std::move(mom);
    off += p->size();
  }
  step_ = step;
}

}  // namespace hiprssm
