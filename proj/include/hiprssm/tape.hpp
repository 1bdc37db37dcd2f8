#ifndef HIPRSSM_TAPE_HPP_
#define HIPRSSM_TAPE_HPP_

#include <Eigen/Dense>
#include <deque>
#include <functional>
#include <vector>

namespace hiprssm {

using Matrix = Eigen::MatrixXd;

class Tape;

// One recorded operation result. Values are batch matrices (rows = batch).
struct TapeNode {
  Matrix value;
  Matrix grad;  // allocated lazily on first accumulation
  bool requires_grad = false;
  std::function<void(TapeNode&)> backprop;  // pulls this->grad into parents

  void accumulate(const Matrix& g) {
    if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
    grad += g;
  }
};

// Lightweight handle to a node owned by a Tape.
class Value {
 public:
  Value() = default;
  explicit Value(TapeNode* node) : node_(node) {}

  const Matrix& mat() const { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  TapeNode* node() const { return node_; }
  explicit operator bool() const { return node_ != nullptr; }

 private:
  TapeNode* node_ = nullptr;
};

// Records operations in execution order; backward() replays the recorded
// rules in reverse exactly once, accumulating gradients additively at
// fan-out points.
class Tape {
 public:
  Value constant(Matrix v);
  // Leaf whose gradient is kept on the node (read back by ParamStore glue).
  Value leaf(Matrix v);
  Value record(Matrix v, bool requires_grad,
               std::function<void(TapeNode&)> backprop);

  // Seeds d(loss)/d(loss) = 1 and runs every recorded rule in reverse.
  // `loss` must be a 1x1 node on this tape. Throws EmptyTape if nothing
  // was recorded.
  void backward(const Value& loss);

  size_t size() const { return nodes_.size(); }

  // When false, leaf() degrades to constant(): inference-only forward
  // passes skip gradient bookkeeping entirely.
  bool grad_enabled = true;

 private:
  std::deque<TapeNode> nodes_;  // deque keeps node addresses stable
};

// ---- Recorded primitives -------------------------------------------------
// Shapes are validated; violations throw DimensionMismatch.

// y = x * W^T   (x: B×in, W: out×in -> y: B×out)
Value matmul_t(Tape& t, const Value& x, const Value& w);
// y = x * W     (x: B×K, W: K×d -> y: B×d)
Value matmul(Tape& t, const Value& x, const Value& w);

// Broadcast a 1×d row over the batch.
Value add_rowvec(Tape& t, const Value& x, const Value& row);
Value mul_rowvec(Tape& t, const Value& x, const Value& row);

// Elementwise, same shape.
Value add(Tape& t, const Value& a, const Value& b);
Value sub(Tape& t, const Value& a, const Value& b);
Value mul(Tape& t, const Value& a, const Value& b);
Value div(Tape& t, const Value& a, const Value& b);

// Elementwise against a constant (no gradient to the constant side).
Value scale(Tape& t, const Value& x, double c);
Value add_scalar(Tape& t, const Value& x, double c);
Value mul_const(Tape& t, const Value& x, const Matrix& c);

// Elementwise unaries.
Value relu(Tape& t, const Value& x);
Value tanh_act(Tape& t, const Value& x);
Value elu_plus_one(Tape& t, const Value& x);
Value exp_elem(Tape& t, const Value& x);
Value log_elem(Tape& t, const Value& x);
Value sqrt_elem(Tape& t, const Value& x);
Value square(Tape& t, const Value& x);
Value clamp_min(Tape& t, const Value& x, double floor);

// Row-wise softmax (each row sums to one).
Value softmax_rows(Tape& t, const Value& x);

// Column concat/slice.
Value concat_cols(Tape& t, const std::vector<Value>& xs);
Value slice_cols(Tape& t, const Value& x, Eigen::Index start,
                 Eigen::Index len);

// Reductions.
Value sum_all(Tape& t, const Value& x);   // -> 1×1
Value mean_all(Tape& t, const Value& x);  // -> 1×1

// Sums groups of `group` consecutive rows: (B*group)×d -> B×d.
Value sum_groups(Tape& t, const Value& x, Eigen::Index group);

}  // namespace hiprssm

#endif  // HIPRSSM_TAPE_HPP_
