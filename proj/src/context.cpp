#include "hiprssm/context.hpp"

#include "hiprssm/errors.hpp"

namespace hiprssm {

ContextSet::ContextSet(Matrix obs_in, Matrix action_in, Matrix next_obs_in)
    : obs(std::move(obs_in)),
      action(std::move(action_in)),
      next_obs(std::move(next_obs_in)) {
  if (obs.rows() != action.rows() || obs.rows() != next_obs.rows() ||
      obs.cols() != next_obs.cols()) {
    throw DimensionMismatch("ContextSet: tuples must share dimensions");
  }
}

Matrix ContextSet::stacked() const {
  Matrix out(obs.rows(), obs.cols() + action.cols() + next_obs.cols());
  out << obs, action, next_obs;
  return out;
}

ContextEncoder make_context_encoder(ParamStore& store,
                                    const std::string& prefix,
                                    Eigen::Index d_in, Eigen::Index hidden,
                                    Eigen::Index d_l, Rng& rng) {
  ContextEncoder enc;
  enc.hidden = make_dense(store, prefix + ".hidden", d_in, hidden, rng);
  enc.mean_head = make_dense(store, prefix + ".mean", hidden, d_l, rng);
  enc.var_head = make_dense(store, prefix + ".var", hidden, d_l, rng);
  return enc;
}

std::pair<Value, Value> encode_context_nodes(Tape& t,
                                             const ContextEncoder& enc,
                                             const Value& inputs) {
  if (inputs.cols() != enc.in_dim()) {
    throw DimensionMismatch("encode_context: input width mismatch");
  }
  Value h = relu(t, enc.hidden.forward(t, inputs));
  Value mean = enc.mean_head.forward(t, h);
  Value var = elu_plus_one(t, enc.var_head.forward(t, h));
  return {mean, var};
}

TaskNodes aggregate_nodes(Tape& t, const TaskPrior& prior, const Value& means,
                          const Value& vars, Eigen::Index group,
                          Eigen::Index batch) {
  const Eigen::Index d_l = prior.mu0.size();
  if (group == 0) {
    return {t.constant(prior.mu0.transpose().replicate(batch, 1)),
            t.constant(prior.var0.transpose().replicate(batch, 1))};
  }
  if (means.cols() != d_l || vars.cols() != d_l ||
      means.rows() != group * batch) {
    throw DimensionMismatch("aggregate: encoding dimensions do not match");
  }

  Value mu0 = t.constant(prior.mu0.transpose().replicate(group * batch, 1));
  Value ones = t.constant(Matrix::Ones(group * batch, d_l));
  Value prior_prec =
      t.constant(prior.var0.cwiseInverse().transpose().replicate(batch, 1));

  // sigma_l^2 = (var0^-1 + sum_n var_n^-1)^-1, elementwise.
  Value prec_sum = sum_groups(t, div(t, ones, vars), group);
  Value post_prec = add(t, prior_prec, prec_sum);
  Value post_var =
      div(t, t.constant(Matrix::Ones(batch, d_l)), post_prec);

  // mu_l = mu0 + sigma_l^2 * sum_n (r_n - mu0) / var_n.
  Value weighted = sum_groups(t, div(t, sub(t, means, mu0), vars), group);
  Value post_mean =
      add(t, t.constant(prior.mu0.transpose().replicate(batch, 1)),
          mul(t, post_var, weighted));
  return {post_mean, post_var};
}

std::vector<DiagGaussian> encode_context(const ContextEncoder& enc,
                                         const ContextSet& cs) {
  if (cs.size() < 1) {
    throw DimensionMismatch("encode_context: N >= 1 required");
  }
  Tape t;
  t.grad_enabled = false;
  auto [mean, var] = encode_context_nodes(t, enc, t.constant(cs.stacked()));
  std::vector<DiagGaussian> out;
  out.reserve(cs.size());
  for (Eigen::Index n = 0; n < cs.size(); ++n) {
    out.emplace_back(mean.mat().row(n).transpose(),
                     var.mat().row(n).transpose());
  }
  return out;
}

DiagGaussian aggregate(const TaskPrior& prior,
                       const std::vector<DiagGaussian>& encodings) {
  Tape t;
  t.grad_enabled = false;
  const Eigen::Index d_l = prior.mu0.size();
  const Eigen::Index n = static_cast<Eigen::Index>(encodings.size());
  Matrix means(n, d_l), vars(n, d_l);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (encodings[i].dim() != d_l) {
      throw DimensionMismatch("aggregate: encoding dimension mismatch");
    }
    means.row(i) = encodings[i].mean.transpose();
    vars.row(i) = encodings[i].var.transpose();
  }
  TaskNodes post = aggregate_nodes(t, prior, t.constant(means),
                                   t.constant(vars), n, 1);
  return DiagGaussian(post.mean.mat().row(0).transpose(),
                      post.var.mat().row(0).transpose());
}

DiagGaussian task_posterior(const ContextEncoder& enc, const TaskPrior& prior,
                            const ContextSet& cs) {
  if (cs.size() == 0) return DiagGaussian(prior.mu0, prior.var0);
  return aggregate(prior, encode_context(enc, cs));
}

}  // namespace hiprssm
