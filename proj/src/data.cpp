#include "hiprssm/data.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "hiprssm/errors.hpp"
#include "hiprssm/rng.hpp"
#include "json.hpp"

namespace hiprssm {

namespace {

constexpr double kGravity = 9.81;
constexpr double kSpringMassKg = 1.0;
constexpr double kDivergenceLimit = 1e6;
constexpr double kStdFloor = 1e-6;
constexpr int kDatasetFormatVersion = 1;

using nlohmann::json;

// Second-order dynamics xdot = f(state, u; params).
Eigen::Vector2d spring_mass_deriv(const Eigen::Vector2d& s, double u,
                                  const Vector& p) {
  const double k = p(0), c = p(1);
  return {s(1), (u - k * s(0) - c * s(1)) / kSpringMassKg};
}

Eigen::Vector2d pendulum_deriv(const Eigen::Vector2d& s, double u,
                               const Vector& p) {
  const double length = p(0), mass = p(1), c = p(2);
  const double inertia = mass * length * length;
  return {s(1),
          (u - c * s(1) - mass * kGravity * length * std::sin(s(0))) / inertia};
}

}  // namespace

void SimSpec::apply_default_ranges() {
  if (!param_ranges.empty()) return;
  if (system == "spring_mass") {
    param_ranges = {{"stiffness", {1.0, 10.0}}, {"damping", {0.1, 1.0}}};
  } else if (system == "pendulum") {
    param_ranges = {{"length", {0.5, 2.0}},
                    {"mass", {0.5, 3.0}},
                    {"damping", {0.1, 1.0}}};
  }
}

std::vector<std::string> SimSpec::param_names() const {
  if (system == "spring_mass") return {"stiffness", "damping"};
  if (system == "pendulum") return {"length", "mass", "damping"};
  throw ConfigError("unknown system '" + system + "'");
}

std::string SimSpec::primary_param() const {
  return system == "spring_mass" ? "stiffness" : "length";
}

int SimSpec::obs_dim() const { return system == "spring_mass" ? 1 : 2; }
int SimSpec::action_dim() const { return 1; }
int SimSpec::hidden_dim() const {
  return static_cast<int>(param_names().size());
}

void SimSpec::validate() const {
  if (system != "spring_mass" && system != "pendulum") {
    throw ConfigError("sim.system must be spring_mass or pendulum");
  }
  if (dt <= 0.0) throw ConfigError("sim.dt must be positive");
  if (traj_len < 2) throw ConfigError("sim.traj_len must be >= 2");
  if (n_traj < 1) throw ConfigError("sim.n_traj must be >= 1");
  if (n_train < 0 || n_train > n_traj) {
    throw ConfigError("sim.n_train must be in [0, n_traj]");
  }
  if (segment_len < 1 || segment_len > traj_len) {
    throw ConfigError("sim.segment_len must be in [1, traj_len]");
  }
  if (obs_noise_std < 0.0) throw ConfigError("sim.obs_noise_std must be >= 0");
  if (action_policy != "random_smooth" && action_policy != "sinusoid_mix") {
    throw ConfigError("sim.action_policy must be random_smooth or sinusoid_mix");
  }
  if (action_scale <= 0.0) throw ConfigError("sim.action_scale must be > 0");
  for (const auto& name : param_names()) {
    auto it = param_ranges.find(name);
    if (it == param_ranges.end()) {
      throw ConfigError("sim.param_ranges missing '" + name + "'");
    }
    if (it->second.lo > it->second.hi) {
      throw ConfigError("sim.param_ranges." + name + " is empty");
    }
  }
  if (train_task_values.empty() != test_task_values.empty()) {
    throw ConfigError(
        "sim.train_task_values and sim.test_task_values must be set together");
  }
}

Matrix integrate_trajectory(const std::string& system, const Matrix& params,
                            const Matrix& actions, double dt,
                            const Vector& x0) {
  if (params.rows() != actions.rows()) {
    throw DimensionMismatch("integrate: params/actions row mismatch");
  }
  auto deriv = system == "spring_mass" ? spring_mass_deriv : pendulum_deriv;
  const Eigen::Index steps = actions.rows();
  Matrix states(steps + 1, 2);
  Eigen::Vector2d s = x0;
  states.row(0) = s.transpose();
  for (Eigen::Index t = 0; t < steps; ++t) {
    const double u = actions(t, 0);
    const Vector p = params.row(t).transpose();
    const Eigen::Vector2d k1 = deriv(s, u, p);
    const Eigen::Vector2d k2 = deriv(s + 0.5 * dt * k1, u, p);
    const Eigen::Vector2d k3 = deriv(s + 0.5 * dt * k2, u, p);
    const Eigen::Vector2d k4 = deriv(s + dt * k3, u, p);
    s += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (s.cwiseAbs().maxCoeff() > kDivergenceLimit) {
      throw IntegrationDiverged("state magnitude exceeded 1e6 at step " +
                                std::to_string(t));
    }
    states.row(t + 1) = s.transpose();
  }
  return states;
}

Matrix observe_states(const std::string& system, const Matrix& states) {
  if (system == "spring_mass") return states.col(0);
  Matrix obs(states.rows(), 2);
  obs.col(0) = states.col(0).array().sin();
  obs.col(1) = states.col(0).array().cos();
  return obs;
}

namespace {

Matrix sample_hidden_params(const SimSpec& spec, bool train_split, Rng& rng) {
  const auto names = spec.param_names();
  const bool discrete = !spec.train_task_values.empty();
  const auto& task_set =
      train_split ? spec.train_task_values : spec.test_task_values;
  Matrix params(spec.traj_len, static_cast<Eigen::Index>(names.size()));
  for (int start = 0; start < spec.traj_len; start += spec.segment_len) {
    const int len = std::min(spec.segment_len, spec.traj_len - start);
    Vector seg(static_cast<Eigen::Index>(names.size()));
    for (size_t i = 0; i < names.size(); ++i) {
      const ParamRange& r = spec.param_ranges.at(names[i]);
      if (discrete && names[i] == spec.primary_param()) {
        seg(static_cast<Eigen::Index>(i)) =
            task_set[rng.index(task_set.size())];
      } else if (discrete) {
        seg(static_cast<Eigen::Index>(i)) = 0.5 * (r.lo + r.hi);
      } else {
        seg(static_cast<Eigen::Index>(i)) = rng.uniform(r.lo, r.hi);
      }
    }
    params.middleRows(start, len) = seg.transpose().replicate(len, 1);
  }
  return params;
}

Matrix sample_actions(const SimSpec& spec, Rng& rng) {
  Matrix actions(spec.traj_len, 1);
  if (spec.action_policy == "random_smooth") {
    // One-pole low pass of white noise (~1 Hz cutoff), rescaled to the
    // configured amplitude.
    const double alpha = std::exp(-2.0 * M_PI * 1.0 * spec.dt);
    const double stationary_std =
        std::sqrt((1.0 - alpha) * (1.0 - alpha) / (1.0 - alpha * alpha));
    double state = 0.0;
    for (int t = 0; t < spec.traj_len; ++t) {
      state = alpha * state + (1.0 - alpha) * rng.normal();
      actions(t, 0) = spec.action_scale / stationary_std * state;
    }
  } else {
    const int waves = 3;
    std::vector<double> amp(waves), freq(waves), phase(waves);
    for (int i = 0; i < waves; ++i) {
      amp[i] = spec.action_scale / waves * rng.uniform(0.5, 1.5);
      freq[i] = rng.uniform(0.2, 2.0);
      phase[i] = rng.uniform(0.0, 2.0 * M_PI);
    }
    for (int t = 0; t < spec.traj_len; ++t) {
      double u = 0.0;
      for (int i = 0; i < waves; ++i) {
        u += amp[i] * std::sin(2.0 * M_PI * freq[i] * t * spec.dt + phase[i]);
      }
      actions(t, 0) = u;
    }
  }
  return actions;
}

}  // namespace

TrajectoryDataset simulate(const SimSpec& spec_in) {
  SimSpec spec = spec_in;
  spec.apply_default_ranges();
  spec.validate();

  TrajectoryDataset ds;
  ds.spec = spec;
  for (int traj = 0; traj < spec.n_traj; ++traj) {
    Rng rng(derive_seed(spec.seed, static_cast<uint64_t>(traj)));
    const bool train_split = traj < spec.n_train;
    Matrix params = sample_hidden_params(spec, train_split, rng);
    Matrix actions = sample_actions(spec, rng);
    Matrix states = integrate_trajectory(spec.system, params, actions,
                                         spec.dt, Vector::Zero(2));
    Matrix obs = observe_states(spec.system, states.topRows(spec.traj_len));
    for (Eigen::Index r = 0; r < obs.rows(); ++r) {
      for (Eigen::Index c = 0; c < obs.cols(); ++c) {
        obs(r, c) += rng.normal(0.0, spec.obs_noise_std);
      }
    }
    ds.obs.push_back(std::move(obs));
    ds.actions.push_back(std::move(actions));
    ds.hidden.push_back(std::move(params));
  }
  ds.stats = compute_stats(ds);
  return ds;
}

NormStats compute_stats(const TrajectoryDataset& ds) {
  const int n_train = std::max(1, ds.spec.n_train);
  const int d_o = ds.d_o();
  const int d_a = ds.d_a();

  auto accumulate = [](const std::vector<Matrix>& rows, int count, int dim) {
    Vector mean = Vector::Zero(dim), sq = Vector::Zero(dim);
    double n = 0.0;
    for (int i = 0; i < count; ++i) {
      mean += rows[i].colwise().sum().transpose();
      sq += rows[i].array().square().colwise().sum().matrix().transpose();
      n += static_cast<double>(rows[i].rows());
    }
    mean /= n;
    Vector var = sq / n - mean.cwiseProduct(mean).eval();
    Vector std =
        var.cwiseMax(0.0).cwiseSqrt().cwiseMax(kStdFloor);
    return std::pair<Vector, Vector>(mean, std);
  };

  NormStats stats;
  std::tie(stats.obs_mean, stats.obs_std) = accumulate(ds.obs, n_train, d_o);
  std::tie(stats.act_mean, stats.act_std) =
      accumulate(ds.actions, n_train, d_a);

  std::vector<Matrix> deltas;
  for (int i = 0; i < n_train; ++i) {
    deltas.push_back(ds.obs[i].bottomRows(ds.obs[i].rows() - 1) -
                     ds.obs[i].topRows(ds.obs[i].rows() - 1));
  }
  std::tie(stats.delta_mean, stats.delta_std) =
      accumulate(deltas, n_train, d_o);
  return stats;
}

void normalize(TrajectoryDataset& ds) {
  if (!ds.stats.valid()) ds.stats = compute_stats(ds);
  for (auto& m : ds.obs) {
    m = (m.rowwise() - ds.stats.obs_mean.transpose()).array().rowwise() /
        ds.stats.obs_std.transpose().array();
  }
  for (auto& m : ds.actions) {
    m = (m.rowwise() - ds.stats.act_mean.transpose()).array().rowwise() /
        ds.stats.act_std.transpose().array();
  }
}

WindowedDataset build_windows(const TrajectoryDataset& ds, int window_len) {
  if (window_len < 1) throw ConfigError("window length must be >= 1");
  if (ds.traj_len() < 2 * window_len) {
    throw TrajectoryTooShort("traj_len " + std::to_string(ds.traj_len()) +
                             " < 2N = " + std::to_string(2 * window_len));
  }
  WindowedDataset wd;
  wd.ds = &ds;
  wd.context_size = window_len;
  const int per_traj = ds.traj_len() / window_len;
  for (int traj = 0; traj < ds.n_traj(); ++traj) {
    for (int j = 1; j < per_traj; ++j) {
      wd.windows.push_back(Window{traj, j * window_len, window_len});
    }
  }
  return wd;
}

std::pair<WindowedDataset, WindowedDataset> split_windows(
    const WindowedDataset& wd) {
  WindowedDataset train, test;
  train.ds = test.ds = wd.ds;
  train.context_size = test.context_size = wd.context_size;
  for (const Window& w : wd.windows) {
    (w.traj < wd.ds->spec.n_train ? train : test).windows.push_back(w);
  }
  return {train, test};
}

namespace {

Matrix normalize_rows(const Matrix& rows, const Vector& mean,
                      const Vector& std) {
  return (rows.rowwise() - mean.transpose()).array().rowwise() /
         std.transpose().array();
}

}  // namespace

ContextSet window_context(const WindowedDataset& wd, const Window& w) {
  const TrajectoryDataset& ds = *wd.ds;
  const NormStats& st = ds.stats;
  const int n = w.length;
  const int first = w.start - n;
  Matrix obs = normalize_rows(ds.obs[w.traj].middleRows(first, n),
                              st.obs_mean, st.obs_std);
  Matrix act = normalize_rows(ds.actions[w.traj].middleRows(first, n),
                              st.act_mean, st.act_std);
  Matrix nxt = normalize_rows(ds.obs[w.traj].middleRows(first + 1, n),
                              st.obs_mean, st.obs_std);
  return ContextSet(std::move(obs), std::move(act), std::move(nxt));
}

WindowTarget window_target(const WindowedDataset& wd, const Window& w) {
  const TrajectoryDataset& ds = *wd.ds;
  const NormStats& st = ds.stats;
  WindowTarget out;
  out.obs = normalize_rows(ds.obs[w.traj].middleRows(w.start, w.length),
                           st.obs_mean, st.obs_std);
  out.actions = normalize_rows(
      ds.actions[w.traj].middleRows(w.start, w.length), st.act_mean,
      st.act_std);
  out.deltas = Matrix::Zero(w.length, ds.d_o());
  out.valid.assign(w.length, true);
  for (int s = 0; s < w.length; ++s) {
    const int t = w.start + s;
    if (t + 1 >= ds.traj_len()) {
      out.valid[s] = false;
      continue;
    }
    out.deltas.row(s) =
        ((ds.obs[w.traj].row(t + 1) - ds.obs[w.traj].row(t)) -
         st.delta_mean.transpose())
            .array() /
        st.delta_std.transpose().array();
  }
  return out;
}

Vector window_hidden_summary(const WindowedDataset& wd, const Window& w) {
  const TrajectoryDataset& ds = *wd.ds;
  return ds.hidden[w.traj]
      .middleRows(w.start, w.length)
      .colwise()
      .mean()
      .transpose();
}

// ---- on-disk format --------------------------------------------------------

namespace {

json stats_to_json(const NormStats& st) {
  auto vec = [](const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  return json{{"obs_mean", vec(st.obs_mean)},   {"obs_std", vec(st.obs_std)},
              {"act_mean", vec(st.act_mean)},   {"act_std", vec(st.act_std)},
              {"delta_mean", vec(st.delta_mean)},
              {"delta_std", vec(st.delta_std)}};
}

Vector json_to_vec(const json& j) {
  Vector v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i];
  return v;
}

void write_tensor(const std::string& path, const std::vector<Matrix>& data) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  for (const Matrix& m : data) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        const double v = m(r, c);
        f.write(reinterpret_cast<const char*>(&v), sizeof(double));
      }
    }
  }
  if (!f) throw IoError("write failed for '" + path + "'");
}

std::vector<Matrix> read_tensor(const std::string& path, int n_traj,
                                int traj_len, int dim) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path + "' for reading");
  f.seekg(0, std::ios::end);
  const auto bytes = static_cast<size_t>(f.tellg());
  const size_t expected = static_cast<size_t>(n_traj) * traj_len * dim *
                          sizeof(double);
  if (bytes != expected) {
    throw ShortFile("'" + path + "': expected " + std::to_string(expected) +
                    " bytes, found " + std::to_string(bytes));
  }
  f.seekg(0, std::ios::beg);
  std::vector<Matrix> out;
  for (int i = 0; i < n_traj; ++i) {
    Matrix m(traj_len, dim);
    for (int r = 0; r < traj_len; ++r) {
      for (int c = 0; c < dim; ++c) {
        double v;
        f.read(reinterpret_cast<char*>(&v), sizeof(double));
        m(r, c) = v;
      }
    }
    out.push_back(std::move(m));
  }
  if (!f) throw ShortFile("'" + path + "': truncated read");
  return out;
}

}  // namespace

void write_dataset(const TrajectoryDataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const SimSpec& s = ds.spec;
  json ranges = json::object();
  for (const auto& [name, r] : s.param_ranges) {
    ranges[name] = {r.lo, r.hi};
  }
  json manifest{
      {"format_version", kDatasetFormatVersion},
      {"sim",
       {{"system", s.system},
        {"dt", s.dt},
        {"traj_len", s.traj_len},
        {"n_traj", s.n_traj},
        {"n_train", s.n_train},
        {"param_ranges", ranges},
        {"train_task_values", s.train_task_values},
        {"test_task_values", s.test_task_values},
        {"segment_len", s.segment_len},
        {"obs_noise_std", s.obs_noise_std},
        {"action_policy", s.action_policy},
        {"action_scale", s.action_scale},
        {"seed", s.seed}}},
      {"dims",
       {{"d_o", ds.d_o()}, {"d_a", ds.d_a()}, {"d_h", s.hidden_dim()}}},
      {"normalization", stats_to_json(ds.stats)},
  };
  std::ofstream mf(dir + "/manifest.json");
  if (!mf) throw IoError("cannot write manifest in '" + dir + "'");
  mf << manifest.dump(2) << "\n";
  write_tensor(dir + "/obs.bin", ds.obs);
  write_tensor(dir + "/actions.bin", ds.actions);
  write_tensor(dir + "/hidden.bin", ds.hidden);
}

TrajectoryDataset read_dataset(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw IoError("cannot read manifest in '" + dir + "'");
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& e) {
    throw ManifestMismatch(std::string("manifest parse error: ") + e.what());
  }
  try {
    if (manifest.at("format_version").get<int>() != kDatasetFormatVersion) {
      throw ManifestMismatch("unsupported dataset format version");
    }
    TrajectoryDataset ds;
    const json& sim = manifest.at("sim");
    SimSpec& s = ds.spec;
    s.system = sim.at("system").get<std::string>();
    s.dt = sim.at("dt").get<double>();
    s.traj_len = sim.at("traj_len").get<int>();
    s.n_traj = sim.at("n_traj").get<int>();
    s.n_train = sim.at("n_train").get<int>();
    for (const auto& [name, r] : sim.at("param_ranges").items()) {
      s.param_ranges[name] = ParamRange{r.at(0).get<double>(),
                                        r.at(1).get<double>()};
    }
    s.train_task_values = sim.at("train_task_values").get<std::vector<double>>();
    s.test_task_values = sim.at("test_task_values").get<std::vector<double>>();
    s.segment_len = sim.at("segment_len").get<int>();
    s.obs_noise_std = sim.at("obs_noise_std").get<double>();
    s.action_policy = sim.at("action_policy").get<std::string>();
    s.action_scale = sim.at("action_scale").get<double>();
    s.seed = sim.at("seed").get<uint64_t>();

    const json& dims = manifest.at("dims");
    const int d_o = dims.at("d_o").get<int>();
    const int d_a = dims.at("d_a").get<int>();
    const int d_h = dims.at("d_h").get<int>();
    if (d_o != s.obs_dim() || d_a != s.action_dim() ||
        d_h != s.hidden_dim()) {
      throw ManifestMismatch("manifest dims do not match the system");
    }

    const json& norm = manifest.at("normalization");
    ds.stats.obs_mean = json_to_vec(norm.at("obs_mean"));
    ds.stats.obs_std = json_to_vec(norm.at("obs_std"));
    ds.stats.act_mean = json_to_vec(norm.at("act_mean"));
    ds.stats.act_std = json_to_vec(norm.at("act_std"));
    ds.stats.delta_mean = json_to_vec(norm.at("delta_mean"));
    ds.stats.delta_std = json_to_vec(norm.at("delta_std"));
    if (ds.stats.obs_mean.size() != d_o || ds.stats.delta_std.size() != d_o ||
        ds.stats.act_mean.size() != d_a) {
      throw ManifestMismatch("normalization stats dims mismatch");
    }

    ds.obs = read_tensor(dir + "/obs.bin", s.n_traj, s.traj_len, d_o);
    ds.actions = read_tensor(dir + "/actions.bin", s.n_traj, s.traj_len, d_a);
    ds.hidden = read_tensor(dir + "/hidden.bin", s.n_traj, s.traj_len, d_h);
    return ds;
  } catch (const json::exception& e) {
    throw ManifestMismatch(std::string("manifest field error: ") + e.what());
  }
}

}  // namespace hiprssm
