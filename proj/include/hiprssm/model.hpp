#ifndef HIPRSSM_MODEL_HPP_
#define HIPRSSM_MODEL_HPP_

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hiprssm/cell.hpp"
#include "hiprssm/context.hpp"

namespace hiprssm {

enum class LossKind { rmse, nll };
LossKind loss_kind_from_string(const std::string& s);
std::string to_string(LossKind k);

enum class ModelKind { hip_rssm, context_free, np };
ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind k);

struct ModelConfig {
  int d_o = 0;  // 0 = take from dataset
  int d_a = 0;
  int m = 15;
  int d_l = 30;
  int num_basis = 15;
  TaskVariant task_variant = TaskVariant::nonlinear;
  int enc_hidden = 120;
  int ctx_hidden = 240;
  int dec_hidden = 120;
  std::vector<int> control_hidden = {120, 120, 120};
  int task_hidden = 120;
  int context_size = 150;  // N
  LossKind loss = LossKind::rmse;

  int n() const { return 2 * m; }
  void validate() const;
};

// One training/eval batch of (context, target) windows in tape-ready form.
// Context rows are window-major: rows [b*N, (b+1)*N) belong to window b.
struct BatchedWindows {
  Matrix ctx_inputs;            // (B*N) x (2 d_o + d_a), normalized
  std::vector<Matrix> obs;      // T of B x d_o, normalized
  std::vector<Matrix> actions;  // T of B x d_a, normalized
  std::vector<Matrix> deltas;   // T of B x d_o, normalized next-obs deltas
  std::vector<Matrix> valid;    // T of B x 1, 1 when the delta target exists
  Eigen::Index batch = 0;
  Eigen::Index steps = 0;
  Eigen::Index context = 0;  // N; 0 means no context available
};

struct ForwardNodes {
  std::vector<Value> pred_mean;           // T of B x d_o
  std::vector<Value> pred_var;            // nll mode only
  TaskNodes task;                         // B x d_l
  std::vector<BeliefNodes> priors;        // post time-update beliefs
  std::vector<BeliefNodes> posteriors;    // post observation-update beliefs
};

// Value-level forward output for a single window.
struct ForwardOutput {
  Matrix pred_mean;                      // T x d_o
  Matrix pred_var;                       // T x d_o (nll mode), else empty
  DiagGaussian task_posterior;
  std::vector<FactorizedBelief> priors;
  std::vector<FactorizedBelief> posteriors;
};

class HipRssmModel {
 public:
  HipRssmModel(ModelConfig cfg, ModelKind kind, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  ModelKind kind() const { return kind_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // Tape path. obs_mask is B x T with 1 where the observation is visible.
  ForwardNodes forward_nodes(Tape& t, const BatchedWindows& batch,
                             const Matrix& obs_mask) const;
  Value loss_nodes(Tape& t, const ForwardNodes& out,
                   const BatchedWindows& batch) const;

  // Value path for a single window (inference).
  ForwardOutput forward(const ContextSet& context, const Matrix& target_obs,
                        const Matrix& target_actions,
                        const std::vector<bool>& obs_mask) const;
  double loss(const ForwardOutput& out, const Matrix& true_deltas,
              const std::vector<bool>& prediction_mask) const;

  DiagGaussian encode_observation(const Vector& o) const;
  // Predicted delta mean (and variance in nll mode) from a belief.
  std::pair<Vector, std::optional<Vector>> decode(
      const FactorizedBelief& belief) const;

  const TransitionModel& transition() const { return trans_; }
  const TaskTransform* task_transform() const {
    return use_task_path() ? &task_ : nullptr;
  }
  const ContextEncoder& context_encoder() const { return ctx_enc_; }
  const TaskPrior& task_prior() const { return prior_; }

 private:
  bool use_task_path() const { return kind_ == ModelKind::hip_rssm; }
  bool use_context() const { return kind_ != ModelKind::context_free; }

  TaskNodes task_nodes(Tape& t, const BatchedWindows& batch) const;
  std::pair<Value, Value> encode_obs_nodes(Tape& t, const Value& o) const;
  Value decode_mean_nodes(Tape& t, const BeliefNodes& b) const;
  Value decode_var_nodes(Tape& t, const BeliefNodes& b) const;

  ModelConfig cfg_;
  ModelKind kind_;
  ParamStore store_;
  TaskPrior prior_;
  ContextEncoder ctx_enc_;
  DenseLayer obs_hidden_, obs_mean_, obs_var_;
  TransitionModel trans_;
  TaskTransform task_;
  DenseLayer dec_hidden_, dec_mean_;
  DenseLayer dec_var_hidden_, dec_var_;
  Mlp np_dec_;
};

}  // namespace hiprssm

#endif  // HIPRSSM_MODEL_HPP_
