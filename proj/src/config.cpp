#include "hiprssm/config.hpp"

#include <fstream>
#include <set>

#include "hiprssm/errors.hpp"
#include "json.hpp"

namespace hiprssm {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& section,
                    const std::set<std::string>& known) {
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) {
      throw ConfigError("unknown key '" + section + "." + key + "'");
    }
  }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void parse_sim(const json& j, SimSpec& s) {
  reject_unknown(j, "sim",
                 {"system", "dt", "traj_len", "n_traj", "n_train",
                  "param_ranges", "train_task_values", "test_task_values",
                  "segment_len", "obs_noise_std", "action_policy",
                  "action_scale", "seed"});
  if (j.contains("system")) {
    // A switched system invalidates the previously defaulted ranges.
    const std::string system = j.at("system").get<std::string>();
    if (system != s.system) s.param_ranges.clear();
    s.system = system;
  }
  get_if(j, "dt", s.dt);
  get_if(j, "traj_len", s.traj_len);
  get_if(j, "n_traj", s.n_traj);
  get_if(j, "n_train", s.n_train);
  if (j.contains("param_ranges")) {
    s.param_ranges.clear();
    for (const auto& [name, r] : j.at("param_ranges").items()) {
      if (!r.is_array() || r.size() != 2) {
        throw ConfigError("sim.param_ranges." + name +
                          " must be a [lo, hi] pair");
      }
      s.param_ranges[name] =
          ParamRange{r.at(0).get<double>(), r.at(1).get<double>()};
    }
  }
  get_if(j, "train_task_values", s.train_task_values);
  get_if(j, "test_task_values", s.test_task_values);
  get_if(j, "segment_len", s.segment_len);
  get_if(j, "obs_noise_std", s.obs_noise_std);
  get_if(j, "action_policy", s.action_policy);
  get_if(j, "action_scale", s.action_scale);
  get_if(j, "seed", s.seed);
}

void parse_model(const json& j, ModelConfig& m) {
  reject_unknown(j, "model",
                 {"d_o", "d_a", "m", "d_l", "num_basis", "task_variant",
                  "enc_hidden", "ctx_hidden", "dec_hidden", "control_hidden",
                  "task_hidden", "context_size", "loss"});
  get_if(j, "d_o", m.d_o);
  get_if(j, "d_a", m.d_a);
  get_if(j, "m", m.m);
  get_if(j, "d_l", m.d_l);
  get_if(j, "num_basis", m.num_basis);
  if (j.contains("task_variant")) {
    m.task_variant = task_variant_from_string(j.at("task_variant"));
  }
  get_if(j, "enc_hidden", m.enc_hidden);
  get_if(j, "ctx_hidden", m.ctx_hidden);
  get_if(j, "dec_hidden", m.dec_hidden);
  get_if(j, "control_hidden", m.control_hidden);
  get_if(j, "task_hidden", m.task_hidden);
  get_if(j, "context_size", m.context_size);
  if (j.contains("loss")) m.loss = loss_kind_from_string(j.at("loss"));
}

void parse_train(const json& j, TrainConfig& t) {
  reject_unknown(j, "train",
                 {"lr", "batch_size", "epochs", "clip_norm", "seed", "loss",
                  "train_imputation", "eval_every", "eval_seed"});
  get_if(j, "lr", t.lr);
  get_if(j, "batch_size", t.batch_size);
  get_if(j, "epochs", t.epochs);
  get_if(j, "clip_norm", t.clip_norm);
  get_if(j, "seed", t.seed);
  if (j.contains("loss")) t.loss = loss_kind_from_string(j.at("loss"));
  get_if(j, "train_imputation", t.train_imputation);
  get_if(j, "eval_every", t.eval_every);
  get_if(j, "eval_seed", t.eval_seed);
}

void parse_eval(const json& j, EvalConfig& e) {
  reject_unknown(j, "eval", {"horizon", "eval_seed"});
  get_if(j, "horizon", e.horizon);
  get_if(j, "eval_seed", e.eval_seed);
}

}  // namespace

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.sim.apply_default_ranges();
  return cfg;
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  RunConfig cfg = default_run_config();
  try {
    reject_unknown(j, "", {"sim", "model", "train", "eval"});
    if (j.contains("sim")) parse_sim(j.at("sim"), cfg.sim);
    if (j.contains("model")) parse_model(j.at("model"), cfg.model);
    if (j.contains("train")) parse_train(j.at("train"), cfg.train);
    if (j.contains("eval")) parse_eval(j.at("eval"), cfg.eval);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field error: ") + e.what());
  }
  cfg.sim.apply_default_ranges();
  cfg.sim.validate();
  // The loss lives in the model config; train.loss mirrors it for the
  // checkpoint manifest. Keep them consistent, model wins.
  cfg.train.loss = cfg.model.loss;
  cfg.model.validate();
  cfg.train.validate();
  if (cfg.eval.horizon < 1) throw ConfigError("eval.horizon must be >= 1");
  const int burn_in = cfg.model.context_size / 2;
  if (burn_in + cfg.eval.horizon > cfg.model.context_size) {
    throw ConfigError(
        "eval.horizon must fit after the N/2 burn-in within one window");
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

std::string run_config_to_json(const RunConfig& cfg) {
  json ranges = json::object();
  for (const auto& [name, r] : cfg.sim.param_ranges) {
    ranges[name] = {r.lo, r.hi};
  }
  json j{
      {"sim",
       {{"system", cfg.sim.system},
        {"dt", cfg.sim.dt},
        {"traj_len", cfg.sim.traj_len},
        {"n_traj", cfg.sim.n_traj},
        {"n_train", cfg.sim.n_train},
        {"param_ranges", ranges},
        {"train_task_values", cfg.sim.train_task_values},
        {"test_task_values", cfg.sim.test_task_values},
        {"segment_len", cfg.sim.segment_len},
        {"obs_noise_std", cfg.sim.obs_noise_std},
        {"action_policy", cfg.sim.action_policy},
        {"action_scale", cfg.sim.action_scale},
        {"seed", cfg.sim.seed}}},
      {"model",
       {{"d_o", cfg.model.d_o},
        {"d_a", cfg.model.d_a},
        {"m", cfg.model.m},
        {"d_l", cfg.model.d_l},
        {"num_basis", cfg.model.num_basis},
        {"task_variant", to_string(cfg.model.task_variant)},
        {"enc_hidden", cfg.model.enc_hidden},
        {"ctx_hidden", cfg.model.ctx_hidden},
        {"dec_hidden", cfg.model.dec_hidden},
        {"control_hidden", cfg.model.control_hidden},
        {"task_hidden", cfg.model.task_hidden},
        {"context_size", cfg.model.context_size},
        {"loss", to_string(cfg.model.loss)}}},
      {"train",
       {{"lr", cfg.train.lr},
        {"batch_size", cfg.train.batch_size},
        {"epochs", cfg.train.epochs},
        {"clip_norm", cfg.train.clip_norm},
        {"seed", cfg.train.seed},
        {"train_imputation", cfg.train.train_imputation},
        {"eval_every", cfg.train.eval_every},
        {"eval_seed", cfg.train.eval_seed}}},
      {"eval",
       {{"horizon", cfg.eval.horizon}, {"eval_seed", cfg.eval.eval_seed}}}};
  return j.dump(2);
}

void resolve_model_dims(ModelConfig& model, int d_o, int d_a) {
  if (model.d_o == 0) model.d_o = d_o;
  if (model.d_a == 0) model.d_a = d_a;
  if (model.d_o != d_o || model.d_a != d_a) {
    throw CheckpointMismatch(
        "model d_o/d_a do not match the dataset (model " +
        std::to_string(model.d_o) + "/" + std::to_string(model.d_a) +
        ", dataset " + std::to_string(d_o) + "/" + std::to_string(d_a) + ")");
  }
}

}  // namespace hiprssm
