#include "hiprssm/layers.hpp"

#include <cmath>

#include "hiprssm/errors.hpp"

namespace hiprssm {

Value linear_forward(Tape& t, const Value& w, const Value& b, const Value& x) {
  return add_rowvec(t, matmul_t(t, x, w), b);
}

Value activation_forward(Tape& t, Activation kind, const Value& x) {
  switch (kind) {
    case Activation::relu:
      return relu(t, x);
    case Activation::elu_plus_one:
      return elu_plus_one(t, x);
    case Activation::softmax:
      return softmax_rows(t, x);
    case Activation::tanh:
      return tanh_act(t, x);
  }
  throw ConfigError("activation_forward: unknown activation");
}

DenseLayer make_dense(ParamStore& store, const std::string& name,
                      Eigen::Index in, Eigen::Index out, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix w(out, in);
  for (Eigen::Index r = 0; r < out; ++r) {
    for (Eigen::Index c = 0; c < in; ++c) w(r, c) = rng.uniform(-s, s);
  }
  DenseLayer layer;
  layer.w = &store.add(name + ".w", std::move(w));
  layer.b = &store.add(name + ".b", Matrix::Zero(1, out));
  return layer;
}

Mlp make_mlp(ParamStore& store, const std::string& name, Eigen::Index in,
             const std::vector<int>& hidden, Eigen::Index out, Rng& rng) {
  Mlp mlp;
  Eigen::Index d = in;
  for (size_t i = 0; i < hidden.size(); ++i) {
    mlp.hidden.push_back(
        make_dense(store, name + ".h" + std::to_string(i), d, hidden[i], rng));
    d = hidden[i];
  }
  mlp.out = make_dense(store, name + ".out", d, out, rng);
  return mlp;
}

}  // namespace hiprssm
