#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hiprssm/cell.hpp"
#include "hiprssm/checkpoint.hpp"
#include "hiprssm/config.hpp"
#include "hiprssm/context.hpp"
#include "hiprssm/data.hpp"
#include "hiprssm/errors.hpp"
#include "hiprssm/gauss.hpp"
#include "hiprssm/train.hpp"

namespace py = pybind11;
using namespace hiprssm;

namespace {

py::dict dataset_summary(const TrajectoryDataset& ds) {
  py::dict d;
  d["n_traj"] = ds.n_traj();
  d["n_train"] = ds.spec.n_train;
  d["traj_len"] = ds.traj_len();
  d["d_o"] = ds.d_o();
  d["d_a"] = ds.d_a();
  return d;
}

}  // namespace

PYBIND11_MODULE(hiprssm, m) {
  m.doc() =
      "Hidden-parameter recurrent state space models: exact Gaussian task "
      "and state inference with learned dynamics, plus synthetic "
      "changing-dynamics benchmarks.";

  m.def("default_config", [] { return run_config_to_json(default_run_config()); });

  m.def(
      "generate_dataset",
      [](const std::string& config_json, const std::string& out_dir) {
        RunConfig cfg = parse_run_config(config_json);
        TrajectoryDataset ds = simulate(cfg.sim);
        write_dataset(ds, out_dir);
        return dataset_summary(ds);
      },
      py::arg("config_json"), py::arg("out_dir"));

  m.def(
      "simulate_trajectories",
      [](const std::string& config_json) {
        RunConfig cfg = parse_run_config(config_json);
        TrajectoryDataset ds = simulate(cfg.sim);
        py::dict out = dataset_summary(ds);
        out["obs"] = ds.obs;
        out["actions"] = ds.actions;
        out["hidden"] = ds.hidden;
        return out;
      },
      py::arg("config_json"));

  m.def(
      "train",
      [](const std::string& config_json, const std::string& data_dir,
         const std::string& out_dir, const std::string& baseline) {
        RunConfig cfg = parse_run_config(config_json);
        TrajectoryDataset ds = read_dataset(data_dir);
        resolve_model_dims(cfg.model, ds.d_o(), ds.d_a());
        WindowedDataset all = build_windows(ds, cfg.model.context_size);
        auto [train_w, test_w] = split_windows(all);
        HipRssmModel model(cfg.model, model_kind_from_string(baseline),
                           cfg.train.seed);
        TrainResult result = train(model, train_w,
                                   test_w.size() ? &test_w : nullptr,
                                   cfg.train, out_dir);
        save_checkpoint(out_dir + "/checkpoint", model, cfg.train,
                        result.steps, &result.opt_state);
        py::dict d;
        d["train_loss"] = result.train_loss;
        d["eval_rmse"] = result.eval_rmse;
        d["steps"] = result.steps;
        return d;
      },
      py::arg("config_json"), py::arg("data_dir"), py::arg("out_dir"),
      py::arg("baseline") = "none");

  m.def(
      "evaluate",
      [](const std::string& checkpoint_dir, const std::string& data_dir,
         const std::string& protocol, int horizon, uint64_t eval_seed) {
        LoadedCheckpoint loaded = load_checkpoint(checkpoint_dir);
        TrajectoryDataset ds = read_dataset(data_dir);
        WindowedDataset all =
            build_windows(ds, loaded.model->config().context_size);
        auto [train_w, test_w] = split_windows(all);
        EvalReport rep =
            evaluate(*loaded.model, test_w.size() ? test_w : train_w,
                     protocol_from_string(protocol), eval_seed, horizon);
        py::dict d;
        d["one_step_rmse"] = rep.one_step_rmse;
        d["imputed_rmse"] = rep.imputed_rmse;
        d["multi_step_rmse"] = rep.multi_step_rmse;
        d["wall_clock_s"] = rep.wall_clock_s;
        return d;
      },
      py::arg("checkpoint_dir"), py::arg("data_dir"),
      py::arg("protocol") = "full", py::arg("horizon") = 50,
      py::arg("eval_seed") = 12345);

  // Core closed-form updates, exposed for direct use and cross-checks.
  m.def(
      "observation_update",
      [](const Vector& mean, const Vector& var_u, const Vector& var_l,
         const Vector& cov_s, const Vector& w, const Vector& obs_var) {
        FactorizedBelief post = observation_update(
            FactorizedBelief(mean, var_u, var_l, cov_s), w, obs_var);
        return py::make_tuple(post.mean, post.var_u, post.var_l, post.cov_s);
      },
      py::arg("mean"), py::arg("var_u"), py::arg("var_l"), py::arg("cov_s"),
      py::arg("w"), py::arg("obs_var"),
      "Factorized Kalman update under H = [I 0]; returns (mean, var_u, "
      "var_l, cov_s).");

  m.def(
      "aggregate",
      [](const Vector& mu0, const Vector& var0, const Matrix& means,
         const Matrix& vars) {
        std::vector<DiagGaussian> enc;
        for (Eigen::Index i = 0; i < means.rows(); ++i) {
          enc.emplace_back(means.row(i).transpose(), vars.row(i).transpose());
        }
        DiagGaussian post = aggregate(TaskPrior{mu0, var0}, enc);
        return py::make_tuple(post.mean, post.var);
      },
      py::arg("mu0"), py::arg("var0"), py::arg("means"), py::arg("vars"),
      "Bayesian context aggregation; one encoding per row.");

  m.def(
      "to_dense",
      [](const Vector& mean, const Vector& var_u, const Vector& var_l,
         const Vector& cov_s) {
        DenseGaussian g = to_dense(FactorizedBelief(mean, var_u, var_l, cov_s));
        return py::make_tuple(g.mean, g.cov);
      },
      py::arg("mean"), py::arg("var_u"), py::arg("var_l"), py::arg("cov_s"));

  m.def("observation_model_dims",
        [](int n) { return static_cast<int>(observation_model_dims(n)); });

  py::register_exception<Error>(m, "HipRssmError");
}
