#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "hiprssm/checkpoint.hpp"
#include "hiprssm/config.hpp"
#include "hiprssm/data.hpp"
#include "hiprssm/errors.hpp"
#include "hiprssm/train.hpp"

namespace {

using namespace hiprssm;

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNonFinite = 4;
constexpr int kExitMismatch = 5;

struct Args {
  std::string config;
  std::string data_dir;
  std::string out_dir;
  std::string checkpoint;
  std::string baseline = "none";
  std::string protocol = "full";
  int traj = -1;
  int horizon = 0;
  int64_t seed = -1;
  int epochs = -1;
};

RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return default_run_config();
  return load_run_config(path);
}

int cmd_generate_data(const Args& a) {
  RunConfig cfg = load_config_or_default(a.config);
  if (a.seed >= 0) cfg.sim.seed = static_cast<uint64_t>(a.seed);
  TrajectoryDataset ds = simulate(cfg.sim);
  write_dataset(ds, a.out_dir);
  std::cout << "wrote dataset to " << a.out_dir << "\n"
            << "  system:        " << ds.spec.system << "\n"
            << "  trajectories:  " << ds.n_traj() << " (" << ds.spec.n_train
            << " train / " << ds.n_traj() - ds.spec.n_train << " test)\n"
            << "  steps each:    " << ds.traj_len() << " at dt " << ds.spec.dt
            << " s\n"
            << "  segment_len:   " << ds.spec.segment_len << "\n"
            << "  obs mean/std:  " << ds.stats.obs_mean.transpose() << " / "
            << ds.stats.obs_std.transpose() << "\n"
            << "  delta std:     " << ds.stats.delta_std.transpose() << "\n";
  return 0;
}

int cmd_train(const Args& a) {
  RunConfig cfg = load_config_or_default(a.config);
  if (a.seed >= 0) cfg.train.seed = static_cast<uint64_t>(a.seed);
  if (a.epochs >= 0) cfg.train.epochs = a.epochs;
  TrajectoryDataset ds = read_dataset(a.data_dir);
  WindowedDataset all = build_windows(ds, cfg.model.context_size);
  auto [train_w, test_w] = split_windows(all);

  std::unique_ptr<HipRssmModel> model;
  OptimizerState resume_state;
  const OptimizerState* resume = nullptr;
  if (!a.checkpoint.empty()) {
    LoadedCheckpoint loaded = load_checkpoint(a.checkpoint);
    resolve_model_dims(const_cast<ModelConfig&>(loaded.model->config()),
                       ds.d_o(), ds.d_a());
    model = std::move(loaded.model);
    if (loaded.opt_state) {
      resume_state = *loaded.opt_state;
      resume = &resume_state;
    }
    cfg.train = loaded.train_cfg;
    if (a.epochs >= 0) cfg.train.epochs = a.epochs;
  } else {
    resolve_model_dims(cfg.model, ds.d_o(), ds.d_a());
    model = std::make_unique<HipRssmModel>(
        cfg.model, model_kind_from_string(a.baseline), cfg.train.seed);
  }

  TrainResult result = train(*model, train_w,
                             test_w.size() ? &test_w : nullptr, cfg.train,
                             a.out_dir, resume);
  save_checkpoint(a.out_dir + "/checkpoint", *model, cfg.train, result.steps,
                  &result.opt_state);
  std::cout << "trained " << to_string(model->kind()) << " for "
            << cfg.train.epochs << " epochs (" << result.steps << " steps)\n";
  if (!result.train_loss.empty()) {
    std::cout << "  first epoch loss: " << result.train_loss.front() << "\n"
              << "  final epoch loss: " << result.train_loss.back() << "\n";
  }
  for (auto it = result.eval_rmse.rbegin(); it != result.eval_rmse.rend();
       ++it) {
    if (*it >= 0.0) {
      std::cout << "  test one-step RMSE: " << *it << "\n";
      break;
    }
  }
  std::cout << "checkpoint written to " << a.out_dir << "/checkpoint\n";
  return 0;
}

int cmd_eval(const Args& a) {
  LoadedCheckpoint loaded = load_checkpoint(a.checkpoint);
  TrajectoryDataset ds = read_dataset(a.data_dir);
  resolve_model_dims(const_cast<ModelConfig&>(loaded.model->config()),
                     ds.d_o(), ds.d_a());
  WindowedDataset all = build_windows(ds, loaded.model->config().context_size);
  auto [train_w, test_w] = split_windows(all);
  const WindowedDataset& target = test_w.size() ? test_w : train_w;

  RunConfig cfg = load_config_or_default(a.config);
  const int horizon = a.horizon > 0 ? a.horizon : cfg.eval.horizon;
  Protocol protocol = protocol_from_string(a.protocol);
  EvalReport report = evaluate(*loaded.model, target, protocol,
                               cfg.eval.eval_seed, horizon);

  std::filesystem::create_directories(a.out_dir);
  const std::string path = a.out_dir + "/eval_" + a.protocol + ".csv";
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path + "'");
  f << "protocol,horizon,rmse,wall_clock_s\n";
  if (protocol == Protocol::multi_step) {
    for (size_t h = 0; h < report.multi_step_rmse.size(); ++h) {
      f << a.protocol << "," << h + 1 << "," << report.multi_step_rmse[h]
        << "," << report.wall_clock_s << "\n";
    }
    std::cout << "multi-step RMSE at horizon " << horizon << ": "
              << report.multi_step_rmse.back() << "\n";
  } else {
    const double rmse = protocol == Protocol::full ? report.one_step_rmse
                                                   : report.imputed_rmse;
    f << a.protocol << ",1," << rmse << "," << report.wall_clock_s << "\n";
    std::cout << a.protocol << " RMSE: " << rmse << "\n";
  }
  std::cout << "report written to " << path << "\n";
  return 0;
}

int cmd_infer(const Args& a) {
  LoadedCheckpoint loaded = load_checkpoint(a.checkpoint);
  TrajectoryDataset ds = read_dataset(a.data_dir);
  resolve_model_dims(const_cast<ModelConfig&>(loaded.model->config()),
                     ds.d_o(), ds.d_a());
  const int traj = a.traj >= 0 ? a.traj : ds.spec.n_train;
  auto results = sliding_inference(*loaded.model, ds, traj);

  std::filesystem::create_directories(a.out_dir);
  const std::string path = a.out_dir + "/infer_windows.csv";
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path + "'");
  const Eigen::Index d_h = results.front().hidden_summary.size();
  const Eigen::Index d_l = results.front().task_mean.size();
  f << "window";
  for (Eigen::Index i = 0; i < d_h; ++i) f << ",hidden_" << i;
  for (Eigen::Index i = 0; i < d_l; ++i) f << ",mu_" << i;
  for (Eigen::Index i = 0; i < d_l; ++i) f << ",var_" << i;
  f << "\n";
  for (const auto& r : results) {
    f << r.window_index;
    for (Eigen::Index i = 0; i < d_h; ++i) f << "," << r.hidden_summary(i);
    for (Eigen::Index i = 0; i < d_l; ++i) f << "," << r.task_mean(i);
    for (Eigen::Index i = 0; i < d_l; ++i) f << "," << r.task_var(i);
    f << "\n";
  }

  const std::string pred_path = a.out_dir + "/infer_predictions.csv";
  std::ofstream pf(pred_path);
  if (!pf) throw IoError("cannot write '" + pred_path + "'");
  pf << "window,step";
  for (int i = 0; i < ds.d_o(); ++i) pf << ",pred_" << i;
  for (int i = 0; i < ds.d_o(); ++i) pf << ",true_" << i;
  pf << "\n";
  for (const auto& r : results) {
    for (Eigen::Index s = 0; s < r.predicted_next_obs.rows(); ++s) {
      const int t = r.window_index * loaded.model->config().context_size +
                    static_cast<int>(s);
      pf << r.window_index << "," << s;
      for (int i = 0; i < ds.d_o(); ++i) {
        pf << "," << r.predicted_next_obs(s, i);
      }
      for (int i = 0; i < ds.d_o(); ++i) {
        if (t + 1 < ds.traj_len()) {
          pf << "," << ds.obs[traj](t + 1, i);
        } else {
          pf << ",";
        }
      }
      pf << "\n";
    }
  }
  std::cout << "inference over trajectory " << traj << ": "
            << results.size() << " windows\n"
            << "wrote " << path << " and " << pred_path << "\n";
  return 0;
}

int cmd_export_embeddings(const Args& a) {
  LoadedCheckpoint loaded = load_checkpoint(a.checkpoint);
  TrajectoryDataset ds = read_dataset(a.data_dir);
  resolve_model_dims(const_cast<ModelConfig&>(loaded.model->config()),
                     ds.d_o(), ds.d_a());
  WindowedDataset all = build_windows(ds, loaded.model->config().context_size);
  auto [train_w, test_w] = split_windows(all);
  const WindowedDataset& target = test_w.size() ? test_w : train_w;

  RunConfig cfg = load_config_or_default(a.config);
  EvalReport report =
      evaluate(*loaded.model, target, Protocol::full, cfg.eval.eval_seed);
  std::vector<WindowEmbedding> rows;
  for (size_t i = 0; i < report.window_task_means.size(); ++i) {
    rows.push_back(WindowEmbedding{static_cast<int>(i),
                                   report.window_hidden[i],
                                   report.window_task_means[i]});
  }
  export_embeddings(rows, a.out_dir);
  std::cout << "wrote " << rows.size() << " embeddings to " << a.out_dir
            << "/embeddings.csv (+ PCA projection)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HiP-RSSM: hidden-parameter recurrent state space models on "
               "synthetic changing-dynamics benchmarks"};
  app.require_subcommand(1);
  Args a;

  auto* gen = app.add_subcommand("generate-data",
                                 "Simulate a changing-dynamics dataset");
  gen->add_option("--config", a.config, "JSON run configuration");
  gen->add_option("--out", a.out_dir, "output dataset directory")->required();
  gen->add_option("--seed", a.seed, "override sim.seed");

  auto* tr = app.add_subcommand("train", "Train a model on a dataset");
  tr->add_option("--config", a.config, "JSON run configuration");
  tr->add_option("--data", a.data_dir, "dataset directory")->required();
  tr->add_option("--out", a.out_dir, "output directory")->required();
  tr->add_option("--baseline", a.baseline,
                 "model wiring: none (HiP-RSSM), context_free (RKN), np")
      ->check(CLI::IsMember({"none", "context_free", "np"}));
  tr->add_option("--checkpoint", a.checkpoint,
                 "resume from this checkpoint, continuing optimizer state");
  tr->add_option("--seed", a.seed, "override train.seed");
  tr->add_option("--epochs", a.epochs, "override train.epochs");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--config", a.config, "JSON run configuration");
  ev->add_option("--checkpoint", a.checkpoint, "checkpoint directory")
      ->required();
  ev->add_option("--data", a.data_dir, "dataset directory")->required();
  ev->add_option("--out", a.out_dir, "output directory")->required();
  ev->add_option("--protocol", a.protocol, "full | imputed_50 | multi_step")
      ->check(CLI::IsMember({"full", "imputed_50", "multi_step"}));
  ev->add_option("--horizon", a.horizon, "multi-step rollout horizon");

  auto* inf = app.add_subcommand(
      "infer", "Sliding-window task inference over one trajectory");
  inf->add_option("--checkpoint", a.checkpoint, "checkpoint directory")
      ->required();
  inf->add_option("--data", a.data_dir, "dataset directory")->required();
  inf->add_option("--out", a.out_dir, "output directory")->required();
  inf->add_option("--traj", a.traj,
                  "trajectory index (default: first test trajectory)");

  auto* emb = app.add_subcommand("export-embeddings",
                                 "Per-window task embeddings + 2-D PCA");
  emb->add_option("--config", a.config, "JSON run configuration");
  emb->add_option("--checkpoint", a.checkpoint, "checkpoint directory")
      ->required();
  emb->add_option("--data", a.data_dir, "dataset directory")->required();
  emb->add_option("--out", a.out_dir, "output directory")->required();

  auto* pc = app.add_subcommand("print-config",
                                "Print the defaulted JSON configuration");
  pc->add_option("--config", a.config,
                 "JSON run configuration to merge over the defaults");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate_data(a);
    if (tr->parsed()) return cmd_train(a);
    if (ev->parsed()) return cmd_eval(a);
    if (inf->parsed()) return cmd_infer(a);
    if (emb->parsed()) return cmd_export_embeddings(a);
    if (pc->parsed()) {
      std::cout << run_config_to_json(load_config_or_default(a.config))
                << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const CheckpointMismatch& e) {
    std::cerr << "checkpoint mismatch: " << e.what() << "\n";
    return kExitMismatch;
  } catch (const NonFiniteLoss& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return kExitNonFinite;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ShortFile& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ManifestMismatch& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
