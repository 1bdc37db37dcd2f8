#include "hiprssm/cell.hpp"

#include <cmath>

#include "hiprssm/errors.hpp"

namespace hiprssm {

namespace {

// Initial transition noise ~0.1 after elu+1.
constexpr double kTransNoiseRawInit = -2.302585092994046;  // ln(0.1)

Matrix init_basis_block(Eigen::Index k, Eigen::Index m, double center,
                        Rng& rng) {
  Matrix block(k, m);
  for (Eigen::Index r = 0; r < k; ++r) {
    for (Eigen::Index c = 0; c < m; ++c) {
      block(r, c) = center + rng.uniform(-0.05, 0.05);
    }
  }
  return block;
}

}  // namespace

TaskVariant task_variant_from_string(const std::string& s) {
  if (s == "linear") return TaskVariant::linear;
  if (s == "locally_linear") return TaskVariant::locally_linear;
  if (s == "nonlinear") return TaskVariant::nonlinear;
  throw ConfigError("unknown task variant '" + s + "'");
}

std::string to_string(TaskVariant v) {
  switch (v) {
    case TaskVariant::linear:
      return "linear";
    case TaskVariant::locally_linear:
      return "locally_linear";
    case TaskVariant::nonlinear:
      return "nonlinear";
  }
  return "?";
}

TransitionModel make_transition_model(ParamStore& store,
                                      const std::string& prefix,
                                      Eigen::Index m, Eigen::Index num_basis,
                                      Eigen::Index d_a,
                                      const std::vector<int>& control_hidden,
                                      Rng& rng) {
  if (num_basis < 1) throw ConfigError("transition model needs K >= 1");
  TransitionModel tm;
  tm.m = m;
  tm.num_basis = num_basis;
  // Stable rotation-like start around block identity.
  tm.a11 = &store.add(prefix + ".a11", init_basis_block(num_basis, m, 1.0, rng));
  tm.a12 = &store.add(prefix + ".a12", init_basis_block(num_basis, m, 0.2, rng));
  tm.a21 = &store.add(prefix + ".a21", init_basis_block(num_basis, m, -0.2, rng));
  tm.a22 = &store.add(prefix + ".a22", init_basis_block(num_basis, m, 1.0, rng));
  tm.coeff = make_dense(store, prefix + ".coeff", 2 * m, num_basis, rng);
  tm.control = make_mlp(store, prefix + ".control", d_a, control_hidden,
                        2 * m, rng);
  tm.trans_noise_raw = &store.add(
      prefix + ".trans_noise",
      Matrix::Constant(1, 2 * m, kTransNoiseRawInit));
  return tm;
}

TaskTransform make_task_transform(ParamStore& store, const std::string& prefix,
                                  TaskVariant variant, Eigen::Index m,
                                  Eigen::Index d_l, Eigen::Index num_basis,
                                  int task_hidden, Rng& rng) {
  TaskTransform tt;
  tt.variant = variant;
  tt.m = m;
  tt.d_l = d_l;
  if (variant == TaskVariant::linear || variant == TaskVariant::locally_linear) {
    if (d_l != 2 * m) {
      throw ConfigError(
          "linear/locally_linear task transform requires d_l == 2m");
    }
    tt.num_basis = (variant == TaskVariant::linear) ? 1 : num_basis;
    tt.c11 = &store.add(prefix + ".c11", init_basis_block(tt.num_basis, m, 0.0, rng));
    tt.c12 = &store.add(prefix + ".c12", init_basis_block(tt.num_basis, m, 0.0, rng));
    tt.c21 = &store.add(prefix + ".c21", init_basis_block(tt.num_basis, m, 0.0, rng));
    tt.c22 = &store.add(prefix + ".c22", init_basis_block(tt.num_basis, m, 0.0, rng));
    if (variant == TaskVariant::locally_linear) {
      tt.beta = make_dense(store, prefix + ".beta", 2 * m, tt.num_basis, rng);
    }
  } else {
    tt.f_mu = make_mlp(store, prefix + ".f_mu", d_l, {task_hidden}, 2 * m, rng);
    tt.f_sigma =
        make_mlp(store, prefix + ".f_sigma", d_l, {task_hidden}, 2 * m, rng);
    // Small initial covariance contribution (~0.1 after elu+1).
    tt.f_sigma.out.b->value.setConstant(kTransNoiseRawInit);
  }
  return tt;
}

BeliefNodes initial_belief_nodes(Tape& t, Eigen::Index batch,
                                 Eigen::Index m) {
  return BeliefNodes{
      t.constant(Matrix::Zero(batch, m)),
      t.constant(Matrix::Zero(batch, m)),
      t.constant(Matrix::Constant(batch, m, kInitialStateVariance)),
      t.constant(Matrix::Constant(batch, m, kInitialStateVariance)),
      t.constant(Matrix::Zero(batch, m))};
}

TransitionBlockNodes transition_blocks_nodes(Tape& t,
                                             const TransitionModel& tm,
                                             const Value& mean_u,
                                             const Value& mean_l) {
  Value z = concat_cols(t, {mean_u, mean_l});
  Value alpha = softmax_rows(t, tm.coeff.forward(t, z));  // B x K
  return TransitionBlockNodes{matmul(t, alpha, param_leaf(t, *tm.a11)),
                              matmul(t, alpha, param_leaf(t, *tm.a12)),
                              matmul(t, alpha, param_leaf(t, *tm.a21)),
                              matmul(t, alpha, param_leaf(t, *tm.a22))};
}

Value control_input_nodes(Tape& t, const TransitionModel& tm,
                          const Value& action) {
  return tm.control.forward(t, action);
}

namespace {

struct TaskTerms {
  Value mean_u, mean_l;       // additive mean contribution
  Value cov_u, cov_l, cov_s;  // additive covariance contribution
};

// C Sigma_l C^T in the shared block layout, with Sigma_l = diag of the task
// variance split into upper/lower halves. The locally linear variant mixes
// K blocks with softmax coefficients of the posterior mean.
TaskTerms task_terms_nodes(Tape& t, const TaskTransform& tt,
                           const TaskNodes& task, const Value& mean_u,
                           const Value& mean_l) {
  const Eigen::Index m = tt.m;
  TaskTerms terms;
  if (tt.variant == TaskVariant::nonlinear) {
    Value mu_out = tt.f_mu.forward(t, task.mean);
    Value sig_out = elu_plus_one(t, tt.f_sigma.forward(t, task.var));
    terms.mean_u = slice_cols(t, mu_out, 0, m);
    terms.mean_l = slice_cols(t, mu_out, m, m);
    terms.cov_u = slice_cols(t, sig_out, 0, m);
    terms.cov_l = slice_cols(t, sig_out, m, m);
    terms.cov_s = Value();  // no cross contribution
    return terms;
  }

  Value c11, c12, c21, c22;
  if (tt.variant == TaskVariant::linear) {
    c11 = param_leaf(t, *tt.c11);
    c12 = param_leaf(t, *tt.c12);
    c21 = param_leaf(t, *tt.c21);
    c22 = param_leaf(t, *tt.c22);
    // 1 x m rows; broadcast via mul_rowvec below.
  } else {
    Value z = concat_cols(t, {mean_u, mean_l});
    Value beta = softmax_rows(t, tt.beta.forward(t, z));  // B x K
    c11 = matmul(t, beta, param_leaf(t, *tt.c11));
    c12 = matmul(t, beta, param_leaf(t, *tt.c12));
    c21 = matmul(t, beta, param_leaf(t, *tt.c21));
    c22 = matmul(t, beta, param_leaf(t, *tt.c22));
  }

  const bool rowform = (tt.variant == TaskVariant::linear);
  auto blend = [&](const Value& c, const Value& x) {
    return rowform ? mul_rowvec(t, x, c) : mul(t, c, x);
  };
  auto blend_sq = [&](const Value& ca, const Value& cb, const Value& x) {
    return rowform ? mul_rowvec(t, mul_rowvec(t, x, ca), cb)
                   : mul(t, mul(t, ca, cb), x);
  };

  Value mu_u = slice_cols(t, task.mean, 0, m);
  Value mu_l = slice_cols(t, task.mean, m, m);
  Value var_u = slice_cols(t, task.var, 0, m);
  Value var_l = slice_cols(t, task.var, m, m);

  terms.mean_u = add(t, blend(c11, mu_u), blend(c12, mu_l));
  terms.mean_l = add(t, blend(c21, mu_u), blend(c22, mu_l));
  terms.cov_u = add(t, blend_sq(c11, c11, var_u), blend_sq(c12, c12, var_l));
  terms.cov_l = add(t, blend_sq(c21, c21, var_u), blend_sq(c22, c22, var_l));
  terms.cov_s = add(t, blend_sq(c11, c21, var_u), blend_sq(c12, c22, var_l));
  return terms;
}

}  // namespace

BeliefNodes time_update_nodes(Tape& t, const TransitionModel& tm,
                              const TaskTransform* tt,
                              const BeliefNodes& belief, const Value& action,
                              const TaskNodes* task) {
  const Eigen::Index m = tm.m;
  if (belief.mean_u.cols() != m) {
    throw DimensionMismatch("time_update: belief width mismatch");
  }
  TransitionBlockNodes blk =
      transition_blocks_nodes(t, tm, belief.mean_u, belief.mean_l);

  Value b_all = control_input_nodes(t, tm, action);  // B x 2m
  Value b_u = slice_cols(t, b_all, 0, m);
  Value b_l = slice_cols(t, b_all, m, m);

  Value new_mu = add(t, add(t, mul(t, blk.a11, belief.mean_u),
                            mul(t, blk.a12, belief.mean_l)),
                     b_u);
  Value new_ml = add(t, add(t, mul(t, blk.a21, belief.mean_u),
                            mul(t, blk.a22, belief.mean_l)),
                     b_l);

  // A Sigma A^T in the factorized block algebra, elementwise per coordinate.
  Value a11s = square(t, blk.a11);
  Value a12s = square(t, blk.a12);
  Value a21s = square(t, blk.a21);
  Value a22s = square(t, blk.a22);
  Value su = add(t, add(t, mul(t, a11s, belief.var_u),
                        scale(t, mul(t, mul(t, blk.a11, blk.a12), belief.cov_s),
                              2.0)),
                 mul(t, a12s, belief.var_l));
  Value sl = add(t, add(t, mul(t, a21s, belief.var_u),
                        scale(t, mul(t, mul(t, blk.a21, blk.a22), belief.cov_s),
                              2.0)),
                 mul(t, a22s, belief.var_l));
  Value ss = add(t,
                 add(t, mul(t, mul(t, blk.a11, blk.a21), belief.var_u),
                     mul(t,
                         add(t, mul(t, blk.a11, blk.a22),
                             mul(t, blk.a12, blk.a21)),
                         belief.cov_s)),
                 mul(t, mul(t, blk.a12, blk.a22), belief.var_l));

  if (tt != nullptr && task != nullptr) {
    TaskTerms terms =
        task_terms_nodes(t, *tt, *task, belief.mean_u, belief.mean_l);
    new_mu = add(t, new_mu, terms.mean_u);
    new_ml = add(t, new_ml, terms.mean_l);
    su = add(t, su, terms.cov_u);
    sl = add(t, sl, terms.cov_l);
    if (terms.cov_s) ss = add(t, ss, terms.cov_s);
  }

  Value trans = elu_plus_one(t, param_leaf(t, *tm.trans_noise_raw));  // 1 x 2m
  su = add_rowvec(t, su, slice_cols(t, trans, 0, m));
  sl = add_rowvec(t, sl, slice_cols(t, trans, m, m));

  return BeliefNodes{new_mu, new_ml, clamp_min(t, su, kVarianceFloor),
                     clamp_min(t, sl, kVarianceFloor), ss};
}

BeliefNodes observation_update_nodes(Tape& t, const BeliefNodes& belief,
                                     const Value& w, const Value& obs_var) {
  if (w.cols() != belief.mean_u.cols() || obs_var.cols() != w.cols()) {
    throw DimensionMismatch("observation_update: width mismatch");
  }
  Value denom = add(t, belief.var_u, obs_var);
  Value q_u = div(t, belief.var_u, denom);
  Value q_l = div(t, belief.cov_s, denom);
  Value residual = sub(t, w, belief.mean_u);

  Value mean_u = add(t, belief.mean_u, mul(t, q_u, residual));
  Value mean_l = add(t, belief.mean_l, mul(t, q_l, residual));

  Value one_minus_qu =
      sub(t, t.constant(Matrix::Ones(q_u.rows(), q_u.cols())), q_u);
  Value var_u = mul(t, one_minus_qu, belief.var_u);
  Value cov_s = mul(t, one_minus_qu, belief.cov_s);
  Value var_l = sub(t, belief.var_l, mul(t, q_l, belief.cov_s));

  return BeliefNodes{mean_u, mean_l, clamp_min(t, var_u, kVarianceFloor),
                     clamp_min(t, var_l, kVarianceFloor), cov_s};
}

// ---- value-level wrappers --------------------------------------------------

namespace {

BeliefNodes lift(Tape& t, const FactorizedBelief& b) {
  const Eigen::Index m = b.obs_dim();
  return BeliefNodes{t.constant(b.mean.head(m).transpose()),
                     t.constant(b.mean.tail(m).transpose()),
                     t.constant(b.var_u.transpose()),
                     t.constant(b.var_l.transpose()),
                     t.constant(b.cov_s.transpose())};
}

FactorizedBelief lower(const BeliefNodes& b) {
  const Eigen::Index m = b.mean_u.cols();
  Vector mean(2 * m);
  mean.head(m) = b.mean_u.mat().row(0).transpose();
  mean.tail(m) = b.mean_l.mat().row(0).transpose();
  return FactorizedBelief(std::move(mean), b.var_u.mat().row(0).transpose(),
                          b.var_l.mat().row(0).transpose(),
                          b.cov_s.mat().row(0).transpose());
}

}  // namespace

FactorizedBelief initial_belief(Eigen::Index m) {
  return FactorizedBelief(Vector::Zero(2 * m),
                          Vector::Constant(m, kInitialStateVariance),
                          Vector::Constant(m, kInitialStateVariance),
                          Vector::Zero(m));
}

std::array<Vector, 4> transition_matrix(const TransitionModel& tm,
                                        const Vector& z_post_mean) {
  if (z_post_mean.size() != 2 * tm.m) {
    throw DimensionMismatch("transition_matrix: mean size mismatch");
  }
  Tape t;
  t.grad_enabled = false;
  TransitionBlockNodes blk = transition_blocks_nodes(
      t, tm, t.constant(z_post_mean.head(tm.m).transpose()),
      t.constant(z_post_mean.tail(tm.m).transpose()));
  return {blk.a11.mat().row(0).transpose(), blk.a12.mat().row(0).transpose(),
          blk.a21.mat().row(0).transpose(), blk.a22.mat().row(0).transpose()};
}

Vector control_input(const TransitionModel& tm, const Vector& action) {
  if (!action.allFinite()) {
    throw DimensionMismatch("control_input: action must be finite");
  }
  Tape t;
  t.grad_enabled = false;
  return control_input_nodes(t, tm, t.constant(action.transpose()))
      .mat()
      .row(0)
      .transpose();
}

FactorizedBelief time_update(const TransitionModel& tm,
                             const TaskTransform& tt,
                             const FactorizedBelief& belief,
                             const Vector& action, const DiagGaussian& task) {
  Tape t;
  t.grad_enabled = false;
  BeliefNodes b = lift(t, belief);
  TaskNodes task_nodes{t.constant(task.mean.transpose()),
                       t.constant(task.var.transpose())};
  BeliefNodes out = time_update_nodes(t, tm, &tt, b,
                                      t.constant(action.transpose()),
                                      &task_nodes);
  return lower(out);
}

FactorizedBelief time_update_context_free(const TransitionModel& tm,
                                          const FactorizedBelief& belief,
                                          const Vector& action) {
  Tape t;
  t.grad_enabled = false;
  BeliefNodes out = time_update_nodes(t, tm, nullptr, lift(t, belief),
                                      t.constant(action.transpose()), nullptr);
  return lower(out);
}

FactorizedBelief observation_update(const FactorizedBelief& belief,
                                    const Vector& w, const Vector& obs_var) {
  if ((obs_var.array() <= 0.0).any()) {
    throw PSDViolation("observation_update: obs_var must be positive");
  }
  Tape t;
  t.grad_enabled = false;
  BeliefNodes out =
      observation_update_nodes(t, lift(t, belief), t.constant(w.transpose()),
                               t.constant(obs_var.transpose()));
  return lower(out);
}

Eigen::Index observation_model_dims(Eigen::Index n) {
  if (n <= 0 || n % 2 != 0) {
    throw OddLatentDim("latent state size must be even, got " +
                       std::to_string(n));
  }
  return n / 2;
}

}  // namespace hiprssm
