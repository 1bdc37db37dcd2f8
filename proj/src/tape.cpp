#include "hiprssm/tape.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "hiprssm/errors.hpp"

namespace hiprssm {

namespace {

void check_same_shape(const Value& a, const Value& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionMismatch(std::string(op) + ": shape mismatch (" +
                            std::to_string(a.rows()) + "x" +
                            std::to_string(a.cols()) + " vs " +
                            std::to_string(b.rows()) + "x" +
                            std::to_string(b.cols()) + ")");
  }
}

bool any_grad(const Value& a) { return a.requires_grad(); }
bool any_grad(const Value& a, const Value& b) {
  return a.requires_grad() || b.requires_grad();
}

}  // namespace

Value Tape::constant(Matrix v) {
  nodes_.push_back(TapeNode{std::move(v), {}, false, nullptr});
  return Value(&nodes_.back());
}

Value Tape::leaf(Matrix v) {
  if (!grad_enabled) return constant(std::move(v));
  nodes_.push_back(TapeNode{std::move(v), {}, true, nullptr});
  return Value(&nodes_.back());
}

Value Tape::record(Matrix v, bool requires_grad,
                   std::function<void(TapeNode&)> backprop) {
  if (!grad_enabled) requires_grad = false;
  nodes_.push_back(TapeNode{std::move(v), {}, requires_grad,
                            requires_grad ? std::move(backprop) : nullptr});
  return Value(&nodes_.back());
}

void Tape::backward(const Value& loss) {
  if (nodes_.empty()) throw EmptyTape("backward: no recorded operations");
  if (!loss || loss.rows() != 1 || loss.cols() != 1) {
    throw DimensionMismatch("backward: loss must be a 1x1 scalar node");
  }
  loss.node()->accumulate(Matrix::Ones(1, 1));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->requires_grad || it->grad.size() == 0 || !it->backprop) continue;
    it->backprop(*it);
  }
}

// ---- matmul ----------------------------------------------------------------

Value matmul_t(Tape& t, const Value& x, const Value& w) {
  if (x.cols() != w.cols()) {
    throw DimensionMismatch("matmul_t: inner dimension mismatch");
  }
  Matrix y = x.mat() * w.mat().transpose();
  TapeNode* xn = x.node();
  TapeNode* wn = w.node();
  return t.record(std::move(y), any_grad(x, w), [xn, wn](TapeNode& n) {
    if (xn->requires_grad) xn->accumulate(n.grad * wn->value);
    if (wn->requires_grad) wn->accumulate(n.grad.transpose() * xn->value);
  });
}

Value matmul(Tape& t, const Value& x, const Value& w) {
  if (x.cols() != w.rows()) {
    throw DimensionMismatch("matmul: inner dimension mismatch");
  }
  Matrix y = x.mat() * w.mat();
  TapeNode* xn = x.node();
  TapeNode* wn = w.node();
  return t.record(std::move(y), any_grad(x, w), [xn, wn](TapeNode& n) {
    if (xn->requires_grad) xn->accumulate(n.grad * wn->value.transpose());
    if (wn->requires_grad) wn->accumulate(xn->value.transpose() * n.grad);
  });
}

// ---- broadcast row ---------------------------------------------------------

Value add_rowvec(Tape& t, const Value& x, const Value& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw DimensionMismatch("add_rowvec: row must be 1x(cols of x)");
  }
  Matrix y = x.mat().rowwise() + row.mat().row(0);
  TapeNode* xn = x.node();
  TapeNode* rn = row.node();
  return t.record(std::move(y), any_grad(x, row), [xn, rn](TapeNode& n) {
    if (xn->requires_grad) xn->accumulate(n.grad);
    if (rn->requires_grad) rn->accumulate(n.grad.colwise().sum());
  });
}

Value mul_rowvec(Tape& t, const Value& x, const Value& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw DimensionMismatch("mul_rowvec: row must be 1x(cols of x)");
  }
  Matrix y = x.mat().array().rowwise() * row.mat().row(0).array();
  TapeNode* xn = x.node();
  TapeNode* rn = row.node();
  return t.record(std::move(y), any_grad(x, row), [xn, rn](TapeNode& n) {
    if (xn->requires_grad) {
      xn->accumulate(n.grad.array().rowwise() * rn->value.row(0).array());
    }
    if (rn->requires_grad) {
      rn->accumulate(
          (n.grad.array() * xn->value.array()).colwise().sum().matrix());
    }
  });
}

// ---- elementwise binary ----------------------------------------------------

Value add(Tape& t, const Value& a, const Value& b) {
  check_same_shape(a, b, "add");
  Matrix y = a.mat() + b.mat();
  TapeNode* an = a.node();
  TapeNode* bn = b.node();
  return t.record(std::move(y), any_grad(a, b), [an, bn](TapeNode& n) {
    if (an->requires_grad) an->accumulate(n.grad);
    if (bn->requires_grad) bn->accumulate(n.grad);
  });
}

Value sub(Tape& t, const Value& a, const Value& b) {
  check_same_shape(a, b, "sub");
  Matrix y = a.mat() - b.mat();
  TapeNode* an = a.node();
  TapeNode* bn = b.node();
  return t.record(std::move(y), any_grad(a, b), [an, bn](TapeNode& n) {
    if (an->requires_grad) an->accumulate(n.grad);
    if (bn->requires_grad) bn->accumulate(-n.grad);
  });
}

Value mul(Tape& t, const Value& a, const Value& b) {
  check_same_shape(a, b, "mul");
  Matrix y = a.mat().cwiseProduct(b.mat());
  TapeNode* an = a.node();
  TapeNode* bn = b.node();
  return t.record(std::move(y), any_grad(a, b), [an, bn](TapeNode& n) {
    if (an->requires_grad) an->accumulate(n.grad.cwiseProduct(bn->value));
    if (bn->requires_grad) bn->accumulate(n.grad.cwiseProduct(an->value));
  });
}

Value div(Tape& t, const Value& a, const Value& b) {
  check_same_shape(a, b, "div");
  Matrix y = a.mat().cwiseQuotient(b.mat());
  TapeNode* an = a.node();
  TapeNode* bn = b.node();
  return t.record(std::move(y), any_grad(a, b), [an, bn](TapeNode& n) {
    if (an->requires_grad) an->accumulate(n.grad.cwiseQuotient(bn->value));
    if (bn->requires_grad) {
      bn->accumulate(-(n.grad.array() * n.value.array() / bn->value.array())
                          .matrix());
    }
  });
}

// ---- constants -------------------------------------------------------------

Value scale(Tape& t, const Value& x, double c) {
  Matrix y = x.mat() * c;
  TapeNode* xn = x.node();
  return t.record(std::move(y), any_grad(x), [xn, c](TapeNode& n) {
    if (xn->requires_grad) xn->accumulate(n.grad * c);
  });
}

Value add_scalar(Tape& t, const Value& x, double c) {
  Matrix y = x.mat().array() + c;
  TapeNode* xn = x.node();
  return t.record(std::move(y), any_grad(x), [xn](TapeNode& n) {
    if (xn->requires_grad) xn->accumulate(n.grad);
  });
}

Value mul_const(Tape& t, const Value& x, const Matrix& c) {
  if (c.rows() != x.rows() || c.cols() != x.cols()) {
    throw DimensionMismatch("mul_const: shape mismatch");
  }
  Matrix y = x.mat().cwiseProduct(c);
  TapeNode* xn = x.node();
  Matrix c_copy = c;
  return t.record(std::move(y), any_grad(x),
                  [xn, c_copy = std::move(c_copy)](TapeNode& n) {
                    if (xn->requires_grad)
                      xn->accumulate(n.grad.cwiseProduct(c_copy));
                  });
}

// ---- unaries ---------------------------------------------------------------

Value relu(Tape& t, const Value& x) {
  Matrix y = x.mat().cwiseMax(0.0);
  TapeNode* xn = x.node();
  return t.record(std::move(y), any_grad(x), [xn](TapeNode& n) {
    if (!xn->requires_grad) return;
    xn->accumulate(
        (xn->value.array() > 0.0).cast<double>().matrix().cwiseProduct(n.grad));
  });
}

Value tanh_act(Tape& t, const Value& x) {
  Matrix y = x.mat().array().tanh();
  TapeNode* xn = x.node();
  return t.record(std::move(y), any_grad(x), [xn](TapeNode& n) {
    if (!xn->requires_grad) return;
    xn->accumulate(
        ((1.0 - n.value.array().square()) * n.grad.array()).matrix());
  });
}

// elu(x)+1: x+1 for x >= 0, exp(x) for x < 0. Strictly positive everywhere.
Value elu_plus_one(Tape& t, const Value& x) {
  Matrix y = (x.mat().array() >= 0.0)
                 .select(x.mat().array() + 1.0, x.mat().array().exp());
  TapeNode* xn = x.node();
  return t.record(std::move(y), any_grad(x), [xn](TapeNode& n) {
    if (!xn->requires_grad) return;
    // derivative: 1 for x >= 0, exp(x) = value for x < 0
    Matrix d = (xn->value.array() >= 0.0).select(1.0, n.value.array());
    xn->accumulate(d.cwiseProduct(n.grad));
  });
}

Value exp_elem(Tape& t, const Value& x) {
  Matrix y = x.mat().array().exp();
  TapeNode* xn = x.node();
  return t.record(std::move(y), any_grad(x), [xn](TapeNode& n) {
    if (xn->requires_grad) xn->accumulate(n.value.cwiseProduct(n.grad));
  });
}

Value log_elem(Tape& t, const Value& x) {
  Matrix y = x.mat().array().log();
  TapeNode* xn = x.node();
  return t.record(std::move(y), any_grad(x), [xn](TapeNode& n) {
    if (xn->requires_grad) xn->accumulate(n.grad.cwiseQuotient(xn->value));
  });
}

Value sqrt_elem(Tape& t, const Value& x) {
  Matrix y = x.mat().array().sqrt();
  TapeNode* xn = x.node();
  return t.record(std::move(y), any_grad(x), [xn](TapeNode& n) {
    if (!xn->requires_grad) return;
    xn->accumulate((n.grad.array() / (2.0 * n.value.array())).matrix());
  });
}

Value square(Tape& t, const Value& x) {
  Matrix y = x.mat().array().square();
  TapeNode* xn = x.node();
  return t.record(std::move(y), any_grad(x), [xn](TapeNode& n) {
    if (!xn->requires_grad) return;
    xn->accumulate((2.0 * xn->value.array() * n.grad.array()).matrix());
  });
}

Value clamp_min(Tape& t, const Value& x, double floor) {
  Matrix y = x.mat().cwiseMax(floor);
  TapeNode* xn = x.node();
  return t.record(std::move(y), any_grad(x), [xn, floor](TapeNode& n) {
    if (!xn->requires_grad) return;
    xn->accumulate((xn->value.array() > floor)
                       .cast<double>()
                       .matrix()
                       .cwiseProduct(n.grad));
  });
}

// ---- softmax ---------------------------------------------------------------

Value softmax_rows(Tape& t, const Value& x) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.mat().row(r).maxCoeff();
    Eigen::ArrayXd e = (x.mat().row(r).array() - mx).exp();
    y.row(r) = (e / e.sum()).matrix();
  }
  TapeNode* xn = x.node();
  return t.record(std::move(y), any_grad(x), [xn](TapeNode& n) {
    if (!xn->requires_grad) return;
    Matrix dx(n.value.rows(), n.value.cols());
    for (Eigen::Index r = 0; r < n.value.rows(); ++r) {
      const double dot = n.grad.row(r).dot(n.value.row(r));
      dx.row(r) =
          (n.value.row(r).array() * (n.grad.row(r).array() - dot)).matrix();
    }
    xn->accumulate(dx);
  });
}

// ---- concat / slice --------------------------------------------------------

Value concat_cols(Tape& t, const std::vector<Value>& xs) {
  if (xs.empty()) throw DimensionMismatch("concat_cols: no inputs");
  const Eigen::Index rows = xs.front().rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (const auto& v : xs) {
    if (v.rows() != rows) {
      throw DimensionMismatch("concat_cols: row count mismatch");
    }
    cols += v.cols();
    rg = rg || v.requires_grad();
  }
  Matrix y(rows, cols);
  Eigen::Index off = 0;
  std::vector<TapeNode*> parents;
  std::vector<Eigen::Index> offsets;
  parents.reserve(xs.size());
  for (const auto& v : xs) {
    y.middleCols(off, v.cols()) = v.mat();
    parents.push_back(v.node());
    offsets.push_back(off);
    off += v.cols();
  }
  return t.record(std::move(y), rg,
                  [parents = std::move(parents),
                   offsets = std::move(offsets)](TapeNode& n) {
                    for (size_t i = 0; i < parents.size(); ++i) {
                      if (!parents[i]->requires_grad) continue;
                      parents[i]->accumulate(n.grad.middleCols(
                          offsets[i], parents[i]->value.cols()));
                    }
                  });
}

Value slice_cols(Tape& t, const Value& x, Eigen::Index start,
                 Eigen::Index len) {
  if (start < 0 || len < 0 || start + len > x.cols()) {
    throw DimensionMismatch("slice_cols: out of range");
  }
  Matrix y = x.mat().middleCols(start, len);
  TapeNode* xn = x.node();
  return t.record(std::move(y), any_grad(x), [xn, start, len](TapeNode& n) {
    if (!xn->requires_grad) return;
    Matrix g = Matrix::Zero(xn->value.rows(), xn->value.cols());
    g.middleCols(start, len) = n.grad;
    xn->accumulate(g);
  });
}

// ---- reductions ------------------------------------------------------------

Value sum_all(Tape& t, const Value& x) {
  Matrix y(1, 1);
  y(0, 0) = x.mat().sum();
  TapeNode* xn = x.node();
  return t.record(std::move(y), any_grad(x), [xn](TapeNode& n) {
    if (!xn->requires_grad) return;
    xn->accumulate(Matrix::Constant(xn->value.rows(), xn->value.cols(),
                                    n.grad(0, 0)));
  });
}

Value mean_all(Tape& t, const Value& x) {
  const double inv = 1.0 / static_cast<double>(x.rows() * x.cols());
  Matrix y(1, 1);
  y(0, 0) = x.mat().sum() * inv;
  TapeNode* xn = x.node();
  return t.record(std::move(y), any_grad(x), [xn, inv](TapeNode& n) {
    if (!xn->requires_grad) return;
    xn->accumulate(Matrix::Constant(xn->value.rows(), xn->value.cols(),
                                    n.grad(0, 0) * inv));
  });
}

Value sum_groups(Tape& t, const Value& x, Eigen::Index group) {
  if (group <= 0 || x.rows() % group != 0) {
    throw DimensionMismatch("sum_groups: rows not divisible by group size");
  }
  const Eigen::Index out_rows = x.rows() / group;
  Matrix y = Matrix::Zero(out_rows, x.cols());
  for (Eigen::Index b = 0; b < out_rows; ++b) {
    y.row(b) = x.mat().middleRows(b * group, group).colwise().sum();
  }
  TapeNode* xn = x.node();
  return t.record(std::move(y), any_grad(x), [xn, group](TapeNode& n) {
    if (!xn->requires_grad) return;
    Matrix g(xn->value.rows(), xn->value.cols());
    for (Eigen::Index b = 0; b < n.value.rows(); ++b) {
      g.middleRows(b * group, group).rowwise() = n.grad.row(b);
    }
    xn->accumulate(g);
  });
}

}  // namespace hiprssm
