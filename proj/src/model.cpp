#include "hiprssm/model.hpp"

#include <cmath>

#include "hiprssm/errors.hpp"

namespace hiprssm {

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "rmse") return LossKind::rmse;
  if (s == "nll") return LossKind::nll;
  throw ConfigError("unknown loss '" + s + "'");
}

std::string to_string(LossKind k) {
  return k == LossKind::rmse ? "rmse" : "nll";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "hip_rssm" || s == "none") return ModelKind::hip_rssm;
  if (s == "context_free") return ModelKind::context_free;
  if (s == "np") return ModelKind::np;
  throw ConfigError("unknown model kind '" + s + "'");
}

std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::hip_rssm:
      return "hip_rssm";
    case ModelKind::context_free:
      return "context_free";
    case ModelKind::np:
      return "np";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (m < 1) throw ConfigError("model.m must be >= 1");
  if (d_l < 1) throw ConfigError("model.d_l must be >= 1");
  if (num_basis < 1) throw ConfigError("model.num_basis must be >= 1");
  if (context_size < 0) throw ConfigError("model.context_size must be >= 0");
  if ((task_variant == TaskVariant::linear ||
       task_variant == TaskVariant::locally_linear) &&
      d_l != 2 * m) {
    throw ConfigError(
        "model.d_l must equal the latent state size 2m for the linear and "
        "locally_linear task variants");
  }
  if (enc_hidden < 1 || ctx_hidden < 1 || dec_hidden < 1 || task_hidden < 1) {
    throw ConfigError("model hidden widths must be >= 1");
  }
  for (int h : control_hidden) {
    if (h < 1) throw ConfigError("model.control_hidden entries must be >= 1");
  }
}

HipRssmModel::HipRssmModel(ModelConfig cfg, ModelKind kind, uint64_t init_seed)
    : cfg_(cfg), kind_(kind) {
  cfg_.validate();
  if (cfg_.d_o < 1 || cfg_.d_a < 1) {
    throw ConfigError("model d_o/d_a must be resolved before construction");
  }
  prior_ = TaskPrior::standard_normal(cfg_.d_l);

  Rng rng(derive_seed(init_seed, 0x10de1));
  const int ctx_in = 2 * cfg_.d_o + cfg_.d_a;
  if (use_context()) {
    ctx_enc_ = make_context_encoder(store_, "ctx_enc", ctx_in,
                                    cfg_.ctx_hidden, cfg_.d_l, rng);
  }
  if (kind_ == ModelKind::np) {
    np_dec_ = make_mlp(store_, "np_dec", cfg_.d_o + cfg_.d_a + cfg_.d_l,
                       {4 * cfg_.dec_hidden, 2 * cfg_.dec_hidden,
                        cfg_.dec_hidden},
                       cfg_.d_o, rng);
    return;
  }
  obs_hidden_ = make_dense(store_, "obs_enc.hidden", cfg_.d_o,
                           cfg_.enc_hidden, rng);
  obs_mean_ = make_dense(store_, "obs_enc.mean", cfg_.enc_hidden, cfg_.m, rng);
  obs_var_ = make_dense(store_, "obs_enc.var", cfg_.enc_hidden, cfg_.m, rng);
  trans_ = make_transition_model(store_, "trans", cfg_.m, cfg_.num_basis,
                                 cfg_.d_a, cfg_.control_hidden, rng);
  if (use_task_path()) {
    task_ = make_task_transform(store_, "task", cfg_.task_variant, cfg_.m,
                                cfg_.d_l, cfg_.num_basis, cfg_.task_hidden,
                                rng);
  }
  dec_hidden_ = make_dense(store_, "dec.hidden", 2 * cfg_.m, cfg_.dec_hidden,
                           rng);
  dec_mean_ = make_dense(store_, "dec.mean", cfg_.dec_hidden, cfg_.d_o, rng);
  if (cfg_.loss == LossKind::nll) {
    dec_var_hidden_ = make_dense(store_, "dec.var_hidden", 3 * cfg_.m,
                                 cfg_.dec_hidden, rng);
    dec_var_ = make_dense(store_, "dec.var", cfg_.dec_hidden, cfg_.d_o, rng);
  }
}

TaskNodes HipRssmModel::task_nodes(Tape& t, const BatchedWindows& batch) const {
  if (!use_context() || batch.context == 0) {
    return aggregate_nodes(t, prior_, Value(), Value(), 0, batch.batch);
  }
  auto [means, vars] =
      encode_context_nodes(t, ctx_enc_, t.constant(batch.ctx_inputs));
  return aggregate_nodes(t, prior_, means, vars, batch.context, batch.batch);
}

std::pair<Value, Value> HipRssmModel::encode_obs_nodes(Tape& t,
                                                       const Value& o) const {
  Value h = relu(t, obs_hidden_.forward(t, o));
  return {obs_mean_.forward(t, h),
          elu_plus_one(t, obs_var_.forward(t, h))};
}

Value HipRssmModel::decode_mean_nodes(Tape& t, const BeliefNodes& b) const {
  Value h = relu(t, dec_hidden_.forward(t, concat_cols(t, {b.mean_u,
                                                           b.mean_l})));
  return dec_mean_.forward(t, h);
}

Value HipRssmModel::decode_var_nodes(Tape& t, const BeliefNodes& b) const {
  Value h = relu(t, dec_var_hidden_.forward(
                        t, concat_cols(t, {b.var_u, b.var_l, b.cov_s})));
  return elu_plus_one(t, dec_var_.forward(t, h));
}

ForwardNodes HipRssmModel::forward_nodes(Tape& t, const BatchedWindows& batch,
                                         const Matrix& obs_mask) const {
  if (batch.steps < 1) throw DimensionMismatch("forward: T >= 1 required");
  if (obs_mask.rows() != batch.batch || obs_mask.cols() != batch.steps) {
    throw DimensionMismatch("forward: obs_mask must be B x T");
  }
  ForwardNodes out;
  out.task = task_nodes(t, batch);

  if (kind_ == ModelKind::np) {
    if (cfg_.loss != LossKind::rmse) {
      throw ConfigError("np baseline supports the rmse loss only");
    }
    // No recurrence: predict each delta from (o_t, a_t, mu_l). Masked
    // observations fall back to the most recent visible one.
    Matrix held = batch.obs[0];
    for (Eigen::Index s = 0; s < batch.steps; ++s) {
      for (Eigen::Index b = 0; b < batch.batch; ++b) {
        if (obs_mask(b, s) > 0.5) held.row(b) = batch.obs[s].row(b);
      }
      Value input = concat_cols(t, {t.constant(held),
                                    t.constant(batch.actions[s]),
                                    out.task.mean});
      out.pred_mean.push_back(np_dec_.forward(t, input));
    }
    return out;
  }

  const TaskTransform* tt = task_transform();
  const TaskNodes* task_ptr = use_task_path() ? &out.task : nullptr;
  BeliefNodes belief = initial_belief_nodes(t, batch.batch, cfg_.m);

  for (Eigen::Index s = 0; s < batch.steps; ++s) {
    const Eigen::ArrayXd col = obs_mask.col(s).array();
    const bool any = (col > 0.5).any();
    const bool all = (col > 0.5).all();
    if (any) {
      auto [w, obs_var] = encode_obs_nodes(t, t.constant(batch.obs[s]));
      BeliefNodes updated = observation_update_nodes(t, belief, w, obs_var);
      if (all) {
        belief = updated;
      } else {
        // Per-row selection keeps the tape identical across mask patterns.
        Matrix sel = obs_mask.col(s).replicate(1, cfg_.m);
        Matrix inv = Matrix::Ones(batch.batch, cfg_.m) - sel;
        auto pick = [&](const Value& a, const Value& b) {
          return add(t, mul_const(t, a, sel), mul_const(t, b, inv));
        };
        belief = BeliefNodes{pick(updated.mean_u, belief.mean_u),
                             pick(updated.mean_l, belief.mean_l),
                             pick(updated.var_u, belief.var_u),
                             pick(updated.var_l, belief.var_l),
                             pick(updated.cov_s, belief.cov_s)};
      }
    }
    out.posteriors.push_back(belief);

    belief = time_update_nodes(t, trans_, tt, belief,
                               t.constant(batch.actions[s]), task_ptr);
    out.priors.push_back(belief);
    out.pred_mean.push_back(decode_mean_nodes(t, belief));
    if (cfg_.loss == LossKind::nll) {
      out.pred_var.push_back(decode_var_nodes(t, belief));
    }
  }
  return out;
}

Value HipRssmModel::loss_nodes(Tape& t, const ForwardNodes& out,
                               const BatchedWindows& batch) const {
  if (batch.deltas.size() != static_cast<size_t>(batch.steps) ||
      batch.valid.size() != static_cast<size_t>(batch.steps)) {
    throw DimensionMismatch("loss: targets missing from batch");
  }
  double count = 0.0;
  for (const auto& v : batch.valid) count += v.sum();
  count *= static_cast<double>(cfg_.d_o);
  if (count <= 0.0) throw EmptyMask("loss: no valid prediction steps");

  Value acc = t.constant(Matrix::Zero(1, 1));
  for (Eigen::Index s = 0; s < batch.steps; ++s) {
    const Matrix mask = batch.valid[s].replicate(1, cfg_.d_o);
    Value diff = sub(t, out.pred_mean[s], t.constant(batch.deltas[s]));
    if (cfg_.loss == LossKind::rmse) {
      acc = add(t, acc, sum_all(t, mul_const(t, square(t, diff), mask)));
    } else {
      const Value& var = out.pred_var[s];
      Value term = add(t, log_elem(t, var),
                       div(t, square(t, diff), var));
      term = add_scalar(t, term, std::log(2.0 * M_PI));
      acc = add(t, acc, sum_all(t, mul_const(t, scale(t, term, 0.5), mask)));
    }
  }
  Value mean = scale(t, acc, 1.0 / count);
  return cfg_.loss == LossKind::rmse ? sqrt_elem(t, mean) : mean;
}

namespace {

BatchedWindows single_window_batch(const ModelConfig& cfg,
                                   const ContextSet& context,
                                   const Matrix& target_obs,
                                   const Matrix& target_actions) {
  if (target_obs.rows() != target_actions.rows()) {
    throw DimensionMismatch("forward: obs/action step count mismatch");
  }
  if (target_obs.cols() != cfg.d_o || target_actions.cols() != cfg.d_a) {
    throw DimensionMismatch("forward: obs/action width mismatch");
  }
  BatchedWindows batch;
  batch.batch = 1;
  batch.steps = target_obs.rows();
  batch.context = context.size();
  if (batch.context > 0) batch.ctx_inputs = context.stacked();
  for (Eigen::Index s = 0; s < batch.steps; ++s) {
    batch.obs.push_back(target_obs.row(s));
    batch.actions.push_back(target_actions.row(s));
  }
  return batch;
}

}  // namespace

ForwardOutput HipRssmModel::forward(const ContextSet& context,
                                    const Matrix& target_obs,
                                    const Matrix& target_actions,
                                    const std::vector<bool>& obs_mask) const {
  BatchedWindows batch =
      single_window_batch(cfg_, context, target_obs, target_actions);
  if (obs_mask.size() != static_cast<size_t>(batch.steps)) {
    throw DimensionMismatch("forward: mask length mismatch");
  }
  Matrix mask(1, batch.steps);
  for (Eigen::Index s = 0; s < batch.steps; ++s) {
    mask(0, s) = obs_mask[s] ? 1.0 : 0.0;
  }

  Tape t;
  t.grad_enabled = false;
  ForwardNodes nodes = forward_nodes(t, batch, mask);

  ForwardOutput out;
  out.pred_mean.resize(batch.steps, cfg_.d_o);
  for (Eigen::Index s = 0; s < batch.steps; ++s) {
    out.pred_mean.row(s) = nodes.pred_mean[s].mat().row(0);
  }
  if (!nodes.pred_var.empty()) {
    out.pred_var.resize(batch.steps, cfg_.d_o);
    for (Eigen::Index s = 0; s < batch.steps; ++s) {
      out.pred_var.row(s) = nodes.pred_var[s].mat().row(0);
    }
  }
  out.task_posterior = DiagGaussian(nodes.task.mean.mat().row(0).transpose(),
                                    nodes.task.var.mat().row(0).transpose());
  auto lower_belief = [&](const BeliefNodes& b) {
    Vector mean(2 * cfg_.m);
    mean.head(cfg_.m) = b.mean_u.mat().row(0).transpose();
    mean.tail(cfg_.m) = b.mean_l.mat().row(0).transpose();
    return FactorizedBelief(mean, b.var_u.mat().row(0).transpose(),
                            b.var_l.mat().row(0).transpose(),
                            b.cov_s.mat().row(0).transpose());
  };
  for (const auto& b : nodes.priors) out.priors.push_back(lower_belief(b));
  for (const auto& b : nodes.posteriors) {
    out.posteriors.push_back(lower_belief(b));
  }
  return out;
}

double HipRssmModel::loss(const ForwardOutput& out, const Matrix& true_deltas,
                          const std::vector<bool>& prediction_mask) const {
  const Eigen::Index steps = out.pred_mean.rows();
  if (true_deltas.rows() != steps || true_deltas.cols() != cfg_.d_o ||
      prediction_mask.size() != static_cast<size_t>(steps)) {
    throw DimensionMismatch("loss: target shape mismatch");
  }
  double count = 0.0;
  double acc = 0.0;
  for (Eigen::Index s = 0; s < steps; ++s) {
    if (!prediction_mask[s]) continue;
    count += static_cast<double>(cfg_.d_o);
    const Eigen::ArrayXd diff =
        (out.pred_mean.row(s) - true_deltas.row(s)).transpose().array();
    if (cfg_.loss == LossKind::rmse) {
      acc += diff.square().sum();
    } else {
      const Eigen::ArrayXd var = out.pred_var.row(s).transpose().array();
      acc += 0.5 * (std::log(2.0 * M_PI) * cfg_.d_o + var.log().sum() +
                    (diff.square() / var).sum());
    }
  }
  if (count <= 0.0) throw EmptyMask("loss: no valid prediction steps");
  return cfg_.loss == LossKind::rmse ? std::sqrt(acc / count) : acc / count;
}

DiagGaussian HipRssmModel::encode_observation(const Vector& o) const {
  if (o.size() != cfg_.d_o) {
    throw DimensionMismatch("encode_observation: width mismatch");
  }
  Tape t;
  t.grad_enabled = false;
  auto [w, var] = encode_obs_nodes(t, t.constant(o.transpose()));
  return DiagGaussian(w.mat().row(0).transpose(),
                      var.mat().row(0).transpose());
}

std::pair<Vector, std::optional<Vector>> HipRssmModel::decode(
    const FactorizedBelief& belief) const {
  Tape t;
  t.grad_enabled = false;
  BeliefNodes b{t.constant(belief.mean.head(cfg_.m).transpose()),
                t.constant(belief.mean.tail(cfg_.m).transpose()),
                t.constant(belief.var_u.transpose()),
                t.constant(belief.var_l.transpose()),
                t.constant(belief.cov_s.transpose())};
  Vector mean = decode_mean_nodes(t, b).mat().row(0).transpose();
  std::optional<Vector> var;
  if (cfg_.loss == LossKind::nll) {
    var = decode_var_nodes(t, b).mat().row(0).transpose();
  }
  return {mean, var};
}

}  // namespace hiprssm
