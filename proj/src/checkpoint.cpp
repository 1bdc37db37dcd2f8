#include "hiprssm/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include "hiprssm/errors.hpp"
#include "json.hpp"

namespace hiprssm {

using nlohmann::json;

namespace {

constexpr int kCheckpointFormatVersion = 1;

void write_flat(const std::string& path, const Eigen::VectorXd& flat) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f.write(reinterpret_cast<const char*>(flat.data()),
          static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!f) throw IoError("write failed for '" + path + "'");
}

Eigen::VectorXd read_flat(const std::string& path, Eigen::Index expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  f.seekg(0, std::ios::end);
  const auto bytes = static_cast<size_t>(f.tellg());
  if (bytes != static_cast<size_t>(expected) * sizeof(double)) {
    throw ShortFile("'" + path + "': expected " +
                    std::to_string(expected * sizeof(double)) +
                    " bytes, found " + std::to_string(bytes));
  }
  f.seekg(0, std::ios::beg);
  Eigen::VectorXd flat(expected);
  f.read(reinterpret_cast<char*>(flat.data()),
         static_cast<std::streamsize>(expected * sizeof(double)));
  if (!f) throw ShortFile("'" + path + "': truncated read");
  return flat;
}

json model_config_json(const ModelConfig& c) {
  return json{{"d_o", c.d_o},
              {"d_a", c.d_a},
              {"m", c.m},
              {"d_l", c.d_l},
              {"num_basis", c.num_basis},
              {"task_variant", to_string(c.task_variant)},
              {"enc_hidden", c.enc_hidden},
              {"ctx_hidden", c.ctx_hidden},
              {"dec_hidden", c.dec_hidden},
              {"control_hidden", c.control_hidden},
              {"task_hidden", c.task_hidden},
              {"context_size", c.context_size},
              {"loss", to_string(c.loss)}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.d_o = j.at("d_o").get<int>();
  c.d_a = j.at("d_a").get<int>();
  c.m = j.at("m").get<int>();
  c.d_l = j.at("d_l").get<int>();
  c.num_basis = j.at("num_basis").get<int>();
  c.task_variant = task_variant_from_string(j.at("task_variant"));
  c.enc_hidden = j.at("enc_hidden").get<int>();
  c.ctx_hidden = j.at("ctx_hidden").get<int>();
  c.dec_hidden = j.at("dec_hidden").get<int>();
  c.control_hidden = j.at("control_hidden").get<std::vector<int>>();
  c.task_hidden = j.at("task_hidden").get<int>();
  c.context_size = j.at("context_size").get<int>();
  c.loss = loss_kind_from_string(j.at("loss"));
  return c;
}

json train_config_json(const TrainConfig& c) {
  return json{{"lr", c.lr},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"clip_norm", c.clip_norm},
              {"seed", c.seed},
              {"loss", to_string(c.loss)},
              {"train_imputation", c.train_imputation},
              {"eval_every", c.eval_every},
              {"eval_seed", c.eval_seed}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.lr = j.at("lr").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  c.loss = loss_kind_from_string(j.at("loss"));
  c.train_imputation = j.at("train_imputation").get<double>();
  c.eval_every = j.at("eval_every").get<int>();
  c.eval_seed = j.at("eval_seed").get<uint64_t>();
  return c;
}

}  // namespace

void TrainConfig::validate() const {
  if (lr <= 0.0) throw ConfigError("train.lr must be > 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (clip_norm <= 0.0) throw ConfigError("train.clip_norm must be > 0");
  if (train_imputation < 0.0 || train_imputation >= 1.0) {
    throw ConfigError("train.train_imputation must be in [0, 1)");
  }
  if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
}

void save_checkpoint(const std::string& dir, const HipRssmModel& model,
                     const TrainConfig& train_cfg, int64_t step,
                     const OptimizerState* opt_state) {
  std::filesystem::create_directories(dir);
  const ParamStore& store = model.params();

  json params = json::array();
  for (const auto& p : store.entries()) {
    params.push_back(json{{"name", p->name},
                          {"shape", {p->value.rows(), p->value.cols()}}});
  }
  json manifest{{"format_version", kCheckpointFormatVersion},
                {"dtype", "float64_le"},
                {"model_kind", to_string(model.kind())},
                {"model", model_config_json(model.config())},
                {"train", train_config_json(train_cfg)},
                {"seed", train_cfg.seed},
                {"step", step},
                {"params", params},
                {"has_optimizer", opt_state != nullptr}};
  std::ofstream mf(dir + "/manifest.json");
  if (!mf) throw IoError("cannot write checkpoint manifest in '" + dir + "'");
  mf << manifest.dump(2) << "\n";

  write_flat(dir + "/params.bin", store.flatten_values());
  if (opt_state != nullptr) {
    Eigen::VectorXd both(opt_state->m.size() + opt_state->v.size());
    both << opt_state->m, opt_state->v;
    write_flat(dir + "/optimizer.bin", both);
  }
}

LoadedCheckpoint load_checkpoint(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw IoError("cannot read checkpoint manifest in '" + dir + "'");
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw ManifestMismatch(std::string("checkpoint manifest parse error: ") +
                           e.what());
  }
  try {
    if (manifest.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw ManifestMismatch("unsupported checkpoint format version");
    }
    if (manifest.at("dtype").get<std::string>() != "float64_le") {
      throw ManifestMismatch("unsupported checkpoint dtype");
    }
    LoadedCheckpoint out;
    out.train_cfg = train_config_from_json(manifest.at("train"));
    out.step = manifest.at("step").get<int64_t>();
    ModelConfig mc = model_config_from_json(manifest.at("model"));
    ModelKind kind = model_kind_from_string(manifest.at("model_kind"));
    out.model = std::make_unique<HipRssmModel>(mc, kind, out.train_cfg.seed);

    // The freshly constructed store must match the manifest exactly.
    const ParamStore& store = out.model->params();
    const json& params = manifest.at("params");
    if (params.size() != store.count()) {
      throw CheckpointMismatch("checkpoint parameter count mismatch");
    }
    for (size_t i = 0; i < params.size(); ++i) {
      const auto& entry = *store.entries()[i];
      if (params[i].at("name").get<std::string>() != entry.name ||
          params[i].at("shape")[0].get<Eigen::Index>() != entry.value.rows() ||
          params[i].at("shape")[1].get<Eigen::Index>() != entry.value.cols()) {
        throw CheckpointMismatch("checkpoint parameter layout mismatch at '" +
                                 entry.name + "'");
      }
    }
    out.model->params().set_values(
        read_flat(dir + "/params.bin", store.total_size()));

    if (manifest.at("has_optimizer").get<bool>()) {
      Eigen::VectorXd both =
          read_flat(dir + "/optimizer.bin", 2 * store.total_size());
      OptimizerState st;
      st.m = both.head(store.total_size());
      st.v = both.tail(store.total_size());
      st.step = out.step;
      out.opt_state = std::move(st);
    }
    return out;
  } catch (const json::exception& e) {
    throw ManifestMismatch(std::string("checkpoint manifest field error: ") +
                           e.what());
  }
}

}  // namespace hiprssm
