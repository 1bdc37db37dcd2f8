#include "hiprssm/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "hiprssm/errors.hpp"
#include "hiprssm/rng.hpp"

namespace hiprssm {

Protocol protocol_from_string(const std::string& s) {
  if (s == "full") return Protocol::full;
  if (s == "imputed_50") return Protocol::imputed_50;
  if (s == "multi_step") return Protocol::multi_step;
  throw ConfigError("unknown eval protocol '" + s + "'");
}

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::full:
      return "full";
    case Protocol::imputed_50:
      return "imputed_50";
    case Protocol::multi_step:
      return "multi_step";
  }
  return "?";
}

BatchedWindows make_batch(const WindowedDataset& wd,
                          const std::vector<size_t>& indices) {
  if (indices.empty()) throw DimensionMismatch("make_batch: empty batch");
  const TrajectoryDataset& ds = *wd.ds;
  const int n = wd.context_size;
  const Eigen::Index b = static_cast<Eigen::Index>(indices.size());
  const int d_o = ds.d_o();
  const int d_a = ds.d_a();

  BatchedWindows batch;
  batch.batch = b;
  batch.steps = n;
  batch.context = n;
  batch.ctx_inputs.resize(b * n, 2 * d_o + d_a);
  batch.obs.assign(n, Matrix(b, d_o));
  batch.actions.assign(n, Matrix(b, d_a));
  batch.deltas.assign(n, Matrix(b, d_o));
  batch.valid.assign(n, Matrix(b, 1));

  for (Eigen::Index i = 0; i < b; ++i) {
    const Window& w = wd.windows.at(indices[static_cast<size_t>(i)]);
    ContextSet ctx = window_context(wd, w);
    batch.ctx_inputs.middleRows(i * n, n) = ctx.stacked();
    WindowTarget tgt = window_target(wd, w);
    for (int s = 0; s < n; ++s) {
      batch.obs[s].row(i) = tgt.obs.row(s);
      batch.actions[s].row(i) = tgt.actions.row(s);
      batch.deltas[s].row(i) = tgt.deltas.row(s);
      batch.valid[s](i, 0) = tgt.valid[s] ? 1.0 : 0.0;
    }
  }
  return batch;
}

namespace {

Matrix bernoulli_mask(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                      double keep_prob) {
  Matrix mask(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      mask(r, c) = rng.bernoulli(keep_prob) ? 1.0 : 0.0;
    }
  }
  return mask;
}

// Mask for one window under a protocol, derived from the window's global
// index so it does not depend on batch composition.
Eigen::RowVectorXd protocol_mask(Protocol protocol, uint64_t eval_seed,
                                 size_t window_index, int steps,
                                 int burn_in) {
  Eigen::RowVectorXd mask = Eigen::RowVectorXd::Ones(steps);
  if (protocol == Protocol::imputed_50) {
    Rng rng(derive_seed(eval_seed, window_index));
    for (int s = 0; s < steps; ++s) mask(s) = rng.bernoulli(0.5) ? 1.0 : 0.0;
  } else if (protocol == Protocol::multi_step) {
    for (int s = burn_in; s < steps; ++s) mask(s) = 0.0;
  }
  return mask;
}

}  // namespace

TrainResult train(HipRssmModel& model, const WindowedDataset& train_windows,
                  const WindowedDataset* eval_windows, const TrainConfig& cfg,
                  const std::string& out_dir, const OptimizerState* resume) {
  cfg.validate();
  if (train_windows.size() == 0) {
    throw TrajectoryTooShort("train: no training windows");
  }
  AdamOptimizer opt(cfg.lr);
  if (resume != nullptr) {
    opt.load_state(model.params(), resume->m, resume->v, resume->step);
  }
  Rng shuffle_rng(derive_seed(cfg.seed, 0x5aff1e));
  Rng mask_rng(derive_seed(cfg.seed, 0xa5c));

  std::ofstream metrics;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    metrics.open(out_dir + "/metrics.csv");
    metrics << "epoch,train_loss,eval_rmse\n";
  }

  TrainResult result;
  std::vector<size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    double epoch_loss = 0.0;
    int batches = 0;
    for (size_t off = 0; off < order.size();
         off += static_cast<size_t>(cfg.batch_size)) {
      const size_t end =
          std::min(order.size(), off + static_cast<size_t>(cfg.batch_size));
      std::vector<size_t> idx(order.begin() + static_cast<long>(off),
                              order.begin() + static_cast<long>(end));
      BatchedWindows batch = make_batch(train_windows, idx);
      Matrix mask = bernoulli_mask(mask_rng, batch.batch, batch.steps,
                                   1.0 - cfg.train_imputation);

      Tape tape;
      ForwardNodes out = model.forward_nodes(tape, batch, mask);
      Value loss = model.loss_nodes(tape, out, batch);
      const double loss_val = loss.mat()(0, 0);
      if (!std::isfinite(loss_val)) {
        if (!out_dir.empty()) {
          save_checkpoint(out_dir + "/diagnostic", model, cfg,
                          opt.step_count(), nullptr);
        }
        throw NonFiniteLoss("loss became " + std::to_string(loss_val) +
                            " at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches));
      }
      model.params().zero_grad();
      tape.backward(loss);
      clip_gradients(model.params(), cfg.clip_norm);
      opt.step(model.params());
      epoch_loss += loss_val;
      ++batches;
    }
    epoch_loss /= std::max(1, batches);
    result.train_loss.push_back(epoch_loss);

    double eval_rmse = -1.0;
    if (eval_windows != nullptr &&
        (epoch % cfg.eval_every == 0 || epoch == cfg.epochs - 1)) {
      eval_rmse = evaluate(model, *eval_windows, Protocol::full,
                           cfg.eval_seed)
                      .one_step_rmse;
    }
    result.eval_rmse.push_back(eval_rmse);
    if (metrics.is_open()) {
      metrics << epoch << "," << epoch_loss << ",";
      if (eval_rmse >= 0.0) metrics << eval_rmse;
      metrics << "\n";
    }
  }
  result.steps = opt.step_count();
  result.opt_state.m = opt.flatten_m(model.params());
  result.opt_state.v = opt.flatten_v(model.params());
  result.opt_state.step = opt.step_count();
  return result;
}

EvalReport evaluate(const HipRssmModel& model, const WindowedDataset& windows,
                    Protocol protocol, uint64_t eval_seed, int horizon,
                    int batch_size) {
  const auto t0 = std::chrono::steady_clock::now();
  if (windows.size() == 0) throw TrajectoryTooShort("evaluate: no windows");
  const TrajectoryDataset& ds = *windows.ds;
  const int n = windows.context_size;
  const int d_o = ds.d_o();
  const int burn_in = n / 2;
  if (protocol == Protocol::multi_step) {
    if (horizon < 1 || burn_in + horizon > n) {
      throw ConfigError("multi_step: horizon must fit after the burn-in");
    }
  }

  EvalReport report;
  double sq_sum = 0.0;
  double count = 0.0;
  std::vector<double> h_sq(static_cast<size_t>(horizon), 0.0);
  std::vector<double> h_cnt(static_cast<size_t>(horizon), 0.0);

  for (size_t off = 0; off < windows.size();
       off += static_cast<size_t>(batch_size)) {
    const size_t end =
        std::min(windows.size(), off + static_cast<size_t>(batch_size));
    std::vector<size_t> idx(end - off);
    std::iota(idx.begin(), idx.end(), off);
    BatchedWindows batch = make_batch(windows, idx);

    Matrix mask(batch.batch, batch.steps);
    for (size_t i = 0; i < idx.size(); ++i) {
      mask.row(static_cast<Eigen::Index>(i)) =
          protocol_mask(protocol, eval_seed, idx[i], n, burn_in);
    }

    Tape tape;
    tape.grad_enabled = false;
    ForwardNodes out = model.forward_nodes(tape, batch, mask);

    for (size_t i = 0; i < idx.size(); ++i) {
      const Eigen::Index bi = static_cast<Eigen::Index>(i);
      const Window& w = windows.windows[idx[i]];
      report.window_task_means.push_back(
          out.task.mean.mat().row(bi).transpose());
      report.window_hidden.push_back(window_hidden_summary(windows, w));

      auto raw_delta = [&](Eigen::Index s) {
        return (out.pred_mean[s].mat().row(bi).transpose().array() *
                    ds.stats.delta_std.array() +
                ds.stats.delta_mean.array())
            .matrix();
      };

      if (protocol == Protocol::multi_step) {
        Vector pred_obs =
            ds.obs[w.traj].row(w.start + burn_in - 1).transpose();
        for (int h = 1; h <= horizon; ++h) {
          const int s = burn_in - 2 + h;  // prediction index for horizon h
          pred_obs += raw_delta(s);
          const Vector truth =
              ds.obs[w.traj].row(w.start + burn_in - 1 + h).transpose();
          h_sq[static_cast<size_t>(h - 1)] +=
              (pred_obs - truth).squaredNorm();
          h_cnt[static_cast<size_t>(h - 1)] += static_cast<double>(d_o);
        }
      } else {
        for (Eigen::Index s = 0; s < batch.steps; ++s) {
          if (batch.valid[s](bi, 0) < 0.5) continue;
          const int t = w.start + static_cast<int>(s);
          const Vector pred_next =
              ds.obs[w.traj].row(t).transpose() + raw_delta(s);
          const Vector truth = ds.obs[w.traj].row(t + 1).transpose();
          sq_sum += (pred_next - truth).squaredNorm();
          count += static_cast<double>(d_o);
        }
      }
    }
  }

  if (protocol == Protocol::multi_step) {
    report.multi_step_rmse.resize(static_cast<size_t>(horizon));
    for (int h = 0; h < horizon; ++h) {
      report.multi_step_rmse[static_cast<size_t>(h)] =
          std::sqrt(h_sq[static_cast<size_t>(h)] /
                    std::max(1.0, h_cnt[static_cast<size_t>(h)]));
    }
  } else {
    const double rmse = std::sqrt(sq_sum / std::max(1.0, count));
    if (protocol == Protocol::full) {
      report.one_step_rmse = rmse;
    } else {
      report.imputed_rmse = rmse;
    }
  }
  report.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

double zero_delta_rmse(const WindowedDataset& windows) {
  const TrajectoryDataset& ds = *windows.ds;
  double sq = 0.0, count = 0.0;
  for (const Window& w : windows.windows) {
    for (int s = 0; s < w.length; ++s) {
      const int t = w.start + s;
      if (t + 1 >= ds.traj_len()) continue;
      sq += (ds.obs[w.traj].row(t + 1) - ds.obs[w.traj].row(t)).squaredNorm();
      count += static_cast<double>(ds.d_o());
    }
  }
  return std::sqrt(sq / std::max(1.0, count));
}

std::vector<SlidingWindowResult> sliding_inference(const HipRssmModel& model,
                                                   const TrajectoryDataset& ds,
                                                   int traj_index) {
  const int n = model.config().context_size;
  if (ds.traj_len() < 2 * n) {
    throw TrajectoryTooShort("sliding_inference: traj_len < 2N");
  }
  if (traj_index < 0 || traj_index >= ds.n_traj()) {
    throw ConfigError("sliding_inference: trajectory index out of range");
  }
  WindowedDataset wd;
  wd.ds = &ds;
  wd.context_size = n;
  const int per_traj = ds.traj_len() / n;
  std::vector<SlidingWindowResult> results;
  for (int j = 1; j < per_traj; ++j) {
    Window w{traj_index, j * n, n};
    ContextSet ctx = window_context(wd, w);
    WindowTarget tgt = window_target(wd, w);
    std::vector<bool> mask(static_cast<size_t>(n), true);
    ForwardOutput out = model.forward(ctx, tgt.obs, tgt.actions, mask);

    SlidingWindowResult r;
    r.window_index = j;
    r.task_mean = out.task_posterior.mean;
    r.task_var = out.task_posterior.var;
    r.hidden_summary = window_hidden_summary(wd, w);
    r.predicted_next_obs.resize(n, ds.d_o());
    for (int s = 0; s < n; ++s) {
      const Vector delta =
          (out.pred_mean.row(s).transpose().array() *
               ds.stats.delta_std.array() +
           ds.stats.delta_mean.array())
              .matrix();
      r.predicted_next_obs.row(s) =
          ds.obs[traj_index].row(w.start + s) + delta.transpose();
    }
    results.push_back(std::move(r));
  }
  return results;
}

Matrix pca2_project(const Matrix& rows) {
  const Eigen::Index n = rows.rows();
  const Eigen::Index d = rows.cols();
  Matrix centered = rows.rowwise() - rows.colwise().mean();
  Matrix cov = centered.transpose() * centered /
               std::max<double>(1.0, static_cast<double>(n - 1));

  auto power_component = [&](const Matrix& c) {
    Vector v = Vector::Ones(d) / std::sqrt(static_cast<double>(d));
    for (int it = 0; it < 500; ++it) {
      Vector next = c * v;
      const double norm = next.norm();
      if (norm < 1e-30) return Vector(Vector::Zero(d));
      v = next / norm;
    }
    // Sign convention: largest-magnitude coordinate positive.
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0.0) v = -v;
    return v;
  };

  Matrix proj = Matrix::Zero(n, 2);
  Vector v1 = power_component(cov);
  if (v1.norm() > 0.0) {
    proj.col(0) = centered * v1;
    const double lambda1 = v1.dot(cov * v1);
    Matrix deflated = cov - lambda1 * v1 * v1.transpose();
    Vector v2 = power_component(deflated);
    if (v2.norm() > 0.0) proj.col(1) = centered * v2;
  }
  return proj;
}

void export_embeddings(const std::vector<WindowEmbedding>& rows,
                       const std::string& out_dir) {
  if (rows.size() < 2) {
    throw ConfigError("export_embeddings: need at least 2 windows");
  }
  std::filesystem::create_directories(out_dir);
  const Eigen::Index d_l = rows.front().task_mean.size();
  const Eigen::Index d_h = rows.front().hidden.size();
  Matrix mu(static_cast<Eigen::Index>(rows.size()), d_l);
  for (size_t i = 0; i < rows.size(); ++i) {
    mu.row(static_cast<Eigen::Index>(i)) = rows[i].task_mean.transpose();
  }
  Matrix proj = pca2_project(mu);

  std::ofstream full(out_dir + "/embeddings.csv");
  if (!full) throw IoError("cannot write embeddings.csv");
  full << "window";
  for (Eigen::Index i = 0; i < d_h; ++i) full << ",hidden_" << i;
  for (Eigen::Index i = 0; i < d_l; ++i) full << ",mu_" << i;
  full << ",pc1,pc2\n";
  std::ofstream pca(out_dir + "/embeddings_pca.csv");
  if (!pca) throw IoError("cannot write embeddings_pca.csv");
  pca << "window";
  for (Eigen::Index i = 0; i < d_h; ++i) pca << ",hidden_" << i;
  pca << ",pc1,pc2\n";

  for (size_t i = 0; i < rows.size(); ++i) {
    const Eigen::Index r = static_cast<Eigen::Index>(i);
    full << rows[i].window_id;
    pca << rows[i].window_id;
    for (Eigen::Index j = 0; j < d_h; ++j) {
      full << "," << rows[i].hidden(j);
      pca << "," << rows[i].hidden(j);
    }
    for (Eigen::Index j = 0; j < d_l; ++j) full << "," << rows[i].task_mean(j);
    full << "," << proj(r, 0) << "," << proj(r, 1) << "\n";
    pca << "," << proj(r, 0) << "," << proj(r, 1) << "\n";
  }
}

}  // namespace hiprssm
