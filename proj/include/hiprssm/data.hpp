#ifndef HIPRSSM_DATA_HPP_
#define HIPRSSM_DATA_HPP_

#include <map>
#include <string>
#include <vector>

#include "hiprssm/context.hpp"
#include "hiprssm/gauss.hpp"

namespace hiprssm {

struct ParamRange {
  double lo = 0.0;
  double hi = 0.0;
};

// Synthetic changing-dynamics simulator specification. Hidden parameters
// are resampled i.i.d. every segment_len steps; within a segment they stay
// fixed. When train/test task value lists are given, the primary parameter
// (spring stiffness / pendulum length) is drawn from the discrete set for
// the respective split and the remaining parameters are pinned at their
// range midpoints.
struct SimSpec {
  std::string system = "spring_mass";  // spring_mass | pendulum
  double dt = 0.01;
  int traj_len = 900;
  int n_traj = 50;
  int n_train = 40;
  std::map<std::string, ParamRange> param_ranges;  // defaults per system
  std::vector<double> train_task_values;           // optional discrete tasks
  std::vector<double> test_task_values;
  int segment_len = 150;
  double obs_noise_std = 0.01;
  std::string action_policy = "random_smooth";  // random_smooth|sinusoid_mix
  double action_scale = 5.0;
  uint64_t seed = 0;

  void apply_default_ranges();
  void validate() const;
  int obs_dim() const;
  int action_dim() const;
  int hidden_dim() const;
  std::vector<std::string> param_names() const;
  std::string primary_param() const;
};

struct NormStats {
  Vector obs_mean, obs_std;
  Vector act_mean, act_std;
  Vector delta_mean, delta_std;

  bool valid() const { return obs_mean.size() > 0; }
};

struct TrajectoryDataset {
  SimSpec spec;
  // traj -> steps x dim, raw (un-normalized) units.
  std::vector<Matrix> obs;
  std::vector<Matrix> actions;
  std::vector<Matrix> hidden;  // ground-truth parameters, evaluation only
  NormStats stats;

  int n_traj() const { return static_cast<int>(obs.size()); }
  int traj_len() const { return obs.empty() ? 0 : static_cast<int>(obs[0].rows()); }
  int d_o() const { return obs.empty() ? 0 : static_cast<int>(obs[0].cols()); }
  int d_a() const {
    return actions.empty() ? 0 : static_cast<int>(actions[0].cols());
  }
};

// Integrates one trajectory of the named system with fixed-step RK4 under
// zero-order-hold actions. `params` holds one hidden-parameter row per step.
// Returns steps+1 states; throws IntegrationDiverged when any state
// magnitude exceeds 1e6.
Matrix integrate_trajectory(const std::string& system, const Matrix& params,
                            const Matrix& actions, double dt,
                            const Vector& x0);

// Noise-free observation map of the system state.
Matrix observe_states(const std::string& system, const Matrix& states);

TrajectoryDataset simulate(const SimSpec& spec);

// Standardization statistics from the training split (std floor 1e-6).
NormStats compute_stats(const TrajectoryDataset& ds);

// In-place standardization of obs/actions using training-split stats.
void normalize(TrajectoryDataset& ds);

// One (context, target) pair; indices into the parent dataset.
struct Window {
  int traj = 0;
  int start = 0;  // first target step
  int length = 0; // N
};

struct WindowedDataset {
  const TrajectoryDataset* ds = nullptr;
  int context_size = 0;
  std::vector<Window> windows;

  size_t size() const { return windows.size(); }
};

// Non-overlapping windows of length N per trajectory; the first window of
// each trajectory is dropped (it has no preceding context) and window j
// uses window j-1's transitions as its context set.
WindowedDataset build_windows(const TrajectoryDataset& ds, int window_len);

// Partitions windows into (train, test) by the dataset's trajectory split.
std::pair<WindowedDataset, WindowedDataset> split_windows(
    const WindowedDataset& wd);

// Normalized context set for a window (N tuples ending right before the
// window's first target step).
ContextSet window_context(const WindowedDataset& wd, const Window& w);

// Normalized target arrays for a window: obs (N x d_o), actions (N x d_a),
// deltas (N x d_o, standardized next-obs differences) and a per-step
// validity flag (false only when the next observation does not exist).
struct WindowTarget {
  Matrix obs;
  Matrix actions;
  Matrix deltas;
  std::vector<bool> valid;
};
WindowTarget window_target(const WindowedDataset& wd, const Window& w);

// Mean ground-truth hidden parameters over the target span.
Vector window_hidden_summary(const WindowedDataset& wd, const Window& w);

void write_dataset(const TrajectoryDataset& ds, const std::string& dir);
TrajectoryDataset read_dataset(const std::string& dir);

}  // namespace hiprssm

#endif  // HIPRSSM_DATA_HPP_
