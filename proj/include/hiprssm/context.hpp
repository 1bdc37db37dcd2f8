#ifndef HIPRSSM_CONTEXT_HPP_
#define HIPRSSM_CONTEXT_HPP_

#include <utility>
#include <vector>

#include "hiprssm/gauss.hpp"
#include "hiprssm/layers.hpp"

namespace hiprssm {

// N transition tuples (obs, action, next_obs) preceding a target window,
// stored row-per-tuple.
struct ContextSet {
  Matrix obs;       // N x d_o
  Matrix action;    // N x d_a
  Matrix next_obs;  // N x d_o

  ContextSet() = default;
  ContextSet(Matrix obs_in, Matrix action_in, Matrix next_obs_in);

  Eigen::Index size() const { return obs.rows(); }
  // Rows [obs | action | next_obs], the encoder input layout.
  Matrix stacked() const;
};

struct TaskPrior {
  Vector mu0;
  Vector var0;

  static TaskPrior standard_normal(Eigen::Index d_l) {
    return TaskPrior{Vector::Zero(d_l), Vector::Ones(d_l)};
  }
};

// Shared per-tuple encoder: concatenated triple -> hidden ReLU -> mean head
// and variance head (elu + 1).
struct ContextEncoder {
  DenseLayer hidden;
  DenseLayer mean_head;
  DenseLayer var_head;

  Eigen::Index in_dim() const { return hidden.in_dim(); }
  Eigen::Index latent_dim() const { return mean_head.out_dim(); }
};

ContextEncoder make_context_encoder(ParamStore& store,
                                    const std::string& prefix,
                                    Eigen::Index d_in, Eigen::Index hidden,
                                    Eigen::Index d_l, Rng& rng);

struct TaskNodes {
  Value mean;  // B x d_l
  Value var;   // B x d_l
};

// Tape path ------------------------------------------------------------

// inputs: (B*N) x in_dim rows in window-major order. Returns per-tuple
// latent means and variances, both (B*N) x d_l.
std::pair<Value, Value> encode_context_nodes(Tape& t,
                                             const ContextEncoder& enc,
                                             const Value& inputs);

// Factorized Gaussian conditioning of the prior on the per-tuple encodings
// grouped in blocks of `group` rows. group == 0 returns the prior
// broadcast over `batch` rows.
TaskNodes aggregate_nodes(Tape& t, const TaskPrior& prior, const Value& means,
                          const Value& vars, Eigen::Index group,
                          Eigen::Index batch);

// Value path (wraps the tape path with constant inputs) -----------------

std::vector<DiagGaussian> encode_context(const ContextEncoder& enc,
                                         const ContextSet& cs);

DiagGaussian aggregate(const TaskPrior& prior,
                       const std::vector<DiagGaussian>& encodings);

DiagGaussian task_posterior(const ContextEncoder& enc, const TaskPrior& prior,
                            const ContextSet& cs);

}  // namespace hiprssm

#endif  // HIPRSSM_CONTEXT_HPP_
