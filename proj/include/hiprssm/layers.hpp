#ifndef HIPRSSM_LAYERS_HPP_
#define HIPRSSM_LAYERS_HPP_

#include <string>
#include <vector>

#include "hiprssm/params.hpp"
#include "hiprssm/rng.hpp"
#include "hiprssm/tape.hpp"

namespace hiprssm {

enum class Activation { relu, elu_plus_one, softmax, tanh };

// y = x W^T + b recorded on the tape. W and b may be parameter leaves or
// constants.
Value linear_forward(Tape& t, const Value& w, const Value& b, const Value& x);

Value activation_forward(Tape& t, Activation kind, const Value& x);

// Fully connected layer whose parameters live in a ParamStore.
struct DenseLayer {
  Param* w = nullptr;  // out x in
  Param* b = nullptr;  // 1 x out

  Value forward(Tape& t, const Value& x) const {
    return linear_forward(t, param_leaf(t, *w), param_leaf(t, *b), x);
  }
  Eigen::Index in_dim() const { return w->value.cols(); }
  Eigen::Index out_dim() const { return w->value.rows(); }
};

// Glorot-uniform weights, zero bias.
DenseLayer make_dense(ParamStore& store, const std::string& name,
                      Eigen::Index in, Eigen::Index out, Rng& rng);

// ReLU hidden stack + linear output head.
struct Mlp {
  std::vector<DenseLayer> hidden;
  DenseLayer out;

  Value forward(Tape& t, Value x) const {
    for (const auto& layer : hidden) x = relu(t, layer.forward(t, x));
    return out.forward(t, x);
  }
};

Mlp make_mlp(ParamStore& store, const std::string& name, Eigen::Index in,
             const std::vector<int>& hidden, Eigen::Index out, Rng& rng);

}  // namespace hiprssm

#endif  // HIPRSSM_LAYERS_HPP_
