#ifndef HIPRSSM_CELL_HPP_
#define HIPRSSM_CELL_HPP_

#include <array>
#include <string>
#include <vector>

#include "hiprssm/context.hpp"
#include "hiprssm/gauss.hpp"
#include "hiprssm/layers.hpp"

namespace hiprssm {

// Initial state belief: zero mean, broad diagonal covariance.
inline constexpr double kInitialStateVariance = 10.0;

enum class TaskVariant { linear, locally_linear, nonlinear };

TaskVariant task_variant_from_string(const std::string& s);
std::string to_string(TaskVariant v);

// Locally linear transition model: K basis matrices in the four-diagonal
// block layout (each block an m-vector), mixed by softmax coefficients of
// the posterior mean, plus the control net and the learned transition
// noise (elu+1 of a free vector).
struct TransitionModel {
  Eigen::Index m = 0;
  Eigen::Index num_basis = 0;
  Param* a11 = nullptr;  // K x m
  Param* a12 = nullptr;
  Param* a21 = nullptr;
  Param* a22 = nullptr;
  DenseLayer coeff;          // 2m -> K logits, softmax
  Mlp control;               // d_a -> 2m
  Param* trans_noise_raw = nullptr;  // 1 x 2m, through elu+1
};

TransitionModel make_transition_model(ParamStore& store,
                                      const std::string& prefix,
                                      Eigen::Index m, Eigen::Index num_basis,
                                      Eigen::Index d_a,
                                      const std::vector<int>& control_hidden,
                                      Rng& rng);

// Latent task transformation (App-style variants). For linear and locally
// linear the matrix C shares the four-diagonal block layout of A, which
// requires d_l == 2m; the nonlinear variant maps the task moments through
// two networks with additive interaction.
struct TaskTransform {
  TaskVariant variant = TaskVariant::nonlinear;
  Eigen::Index m = 0;
  Eigen::Index d_l = 0;
  Eigen::Index num_basis = 1;  // >1 only for locally_linear
  Param* c11 = nullptr;        // K x m (K = 1 for linear)
  Param* c12 = nullptr;
  Param* c21 = nullptr;
  Param* c22 = nullptr;
  DenseLayer beta;  // 2m -> K logits (locally_linear only)
  Mlp f_mu;         // d_l -> 2m (nonlinear)
  Mlp f_sigma;      // d_l -> 2m, elu+1 head (nonlinear)
};

TaskTransform make_task_transform(ParamStore& store, const std::string& prefix,
                                  TaskVariant variant, Eigen::Index m,
                                  Eigen::Index d_l, Eigen::Index num_basis,
                                  int task_hidden, Rng& rng);

// Batched belief on the tape; every member is B x m except the means.
struct BeliefNodes {
  Value mean_u;  // B x m
  Value mean_l;  // B x m
  Value var_u;
  Value var_l;
  Value cov_s;
};

struct TransitionBlockNodes {
  Value a11, a12, a21, a22;  // each B x m
};

BeliefNodes initial_belief_nodes(Tape& t, Eigen::Index batch, Eigen::Index m);

// Convex combination of the basis blocks with softmax coefficients of the
// posterior mean.
TransitionBlockNodes transition_blocks_nodes(Tape& t,
                                             const TransitionModel& tm,
                                             const Value& mean_u,
                                             const Value& mean_l);

Value control_input_nodes(Tape& t, const TransitionModel& tm,
                          const Value& action);

// Task-conditional time update. A null TaskTransform runs the context-free
// cell (no task mean or covariance contribution).
BeliefNodes time_update_nodes(Tape& t, const TransitionModel& tm,
                              const TaskTransform* tt,
                              const BeliefNodes& belief, const Value& action,
                              const TaskNodes* task);

// Factorized Kalman update against latent observation (w, obs_var) under
// H = [I_m 0].
BeliefNodes observation_update_nodes(Tape& t, const BeliefNodes& belief,
                                     const Value& w, const Value& obs_var);

// Value-level API --------------------------------------------------------

FactorizedBelief initial_belief(Eigen::Index m);

// Four diagonal m-vectors (a11, a12, a21, a22) of the mixed transition.
std::array<Vector, 4> transition_matrix(const TransitionModel& tm,
                                        const Vector& z_post_mean);

Vector control_input(const TransitionModel& tm, const Vector& action);

FactorizedBelief time_update(const TransitionModel& tm,
                             const TaskTransform& tt,
                             const FactorizedBelief& belief,
                             const Vector& action, const DiagGaussian& task);

// Context-free variant (no task terms).
FactorizedBelief time_update_context_free(const TransitionModel& tm,
                                          const FactorizedBelief& belief,
                                          const Vector& action);

FactorizedBelief observation_update(const FactorizedBelief& belief,
                                    const Vector& w, const Vector& obs_var);

// m = n/2 for even n; throws OddLatentDim otherwise.
Eigen::Index observation_model_dims(Eigen::Index n);

}  // namespace hiprssm

#endif  // HIPRSSM_CELL_HPP_
