#ifndef HIPRSSM_TRAIN_HPP_
#define HIPRSSM_TRAIN_HPP_

#include <string>
#include <vector>

#include "hiprssm/checkpoint.hpp"
#include "hiprssm/data.hpp"
#include "hiprssm/model.hpp"

namespace hiprssm {

enum class Protocol { full, imputed_50, multi_step };
Protocol protocol_from_string(const std::string& s);
std::string to_string(Protocol p);

struct EvalReport {
  double one_step_rmse = -1.0;
  double imputed_rmse = -1.0;
  std::vector<double> multi_step_rmse;  // index h-1 = horizon h
  std::vector<Vector> window_task_means;
  std::vector<Vector> window_hidden;
  double wall_clock_s = 0.0;
};

struct TrainResult {
  std::vector<double> train_loss;  // per epoch
  std::vector<double> eval_rmse;   // per epoch, -1 when not evaluated
  int64_t steps = 0;
  OptimizerState opt_state;
};

// Assembles tape-ready batch matrices for the given window indices.
BatchedWindows make_batch(const WindowedDataset& wd,
                          const std::vector<size_t>& indices);

// Epochs of shuffled minibatches with per-step Bernoulli observation masks
// at the configured imputation rate; backward through the full window,
// clip, Adam. Deterministic given cfg.seed. Writes metrics.csv under
// out_dir when non-empty. Throws NonFiniteLoss (after dumping a diagnostic
// checkpoint when out_dir is set) if the loss leaves the reals.
TrainResult train(HipRssmModel& model, const WindowedDataset& train_windows,
                  const WindowedDataset* eval_windows, const TrainConfig& cfg,
                  const std::string& out_dir = "",
                  const OptimizerState* resume = nullptr);

// Evaluation in un-normalized observation units. multi_step rolls out
// `horizon` steps open-loop after a burn-in of N/2 observed steps.
EvalReport evaluate(const HipRssmModel& model, const WindowedDataset& windows,
                    Protocol protocol, uint64_t eval_seed = 12345,
                    int horizon = 50, int batch_size = 64);

// RMSE of the predict-zero-delta baseline, the sanity floor for one-step
// metrics.
double zero_delta_rmse(const WindowedDataset& windows);

struct SlidingWindowResult {
  int window_index = 0;
  Vector task_mean;
  Vector task_var;
  Vector hidden_summary;
  Matrix predicted_next_obs;  // raw units, one row per step
};

// App-style test-time inference over one full trajectory: non-overlapping
// windows, each conditioned on the previous window's transitions.
std::vector<SlidingWindowResult> sliding_inference(const HipRssmModel& model,
                                                   const TrajectoryDataset& ds,
                                                   int traj_index);

// Top-2 principal directions via power iteration on the centered covariance.
// Returns the n x 2 projection; components with (numerically) zero variance
// project to zero. Sign fixed so each component's largest-magnitude entry
// is positive.
Matrix pca2_project(const Matrix& rows);

struct WindowEmbedding {
  int window_id = 0;
  Vector hidden;
  Vector task_mean;
};

// Writes embeddings.csv (id, hidden params, task-mean coordinates, pc1, pc2)
// and embeddings_pca.csv (id, hidden params, pc1, pc2).
void export_embeddings(const std::vector<WindowEmbedding>& rows,
                       const std::string& out_dir);

}  // namespace hiprssm

#endif  // HIPRSSM_TRAIN_HPP_
