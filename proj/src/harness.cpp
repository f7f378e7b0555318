#include "hvf/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace hvf {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    const auto u = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return u;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(static_cast<T>(parse_uint(key, item)));
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// Independent stream for (seed, purpose).
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

enum Stream : std::uint64_t { kInit = 1, kActions = 2, kHindsight = 3, kUpdate = 4, kEnvs = 5 };

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

// ------------------------------------------------------------------ config

void ExperimentConfig::set(const std::string& key_in, const std::string& value_in) {
  const std::string key = trim(key_in);
  const std::string v = trim(value_in);
  if (key == "run_name") run_name = v;
  else if (key == "algorithm") algorithm = v;
  else if (key == "baseline") baseline = v;
  else if (key == "env") env = v;
  else if (key == "noise_sigma") noise_sigma = parse_double(key, v);
  else if (key == "lambda") {
    if (v != "sweep") parse_double(key, v);
    lambda = v;
  } else if (key == "seeds") seeds = parse_list<std::uint64_t>(key, v);
  else if (key == "total_env_steps") total_env_steps = parse_uint(key, v);
  else if (key == "num_envs") num_envs = parse_uint(key, v);
  else if (key == "episode_cap") episode_cap = static_cast<int>(parse_uint(key, v));
  else if (key == "target_step_std") target_step_std = parse_double(key, v);
  else if (key == "policy_hidden") policy_hidden = parse_list<std::size_t>(key, v);
  else if (key == "value_hidden") value_hidden = parse_list<std::size_t>(key, v);
  else if (key == "lstm_hidden") lstm_hidden = parse_uint(key, v);
  else if (key == "init_log_std") init_log_std = parse_double(key, v);
  else if (key == "gamma") gamma = parse_double(key, v);
  else if (key == "entropy_coef") entropy_coef = parse_double(key, v);
  else if (key == "value_coef") value_coef = parse_double(key, v);
  else if (key == "lr_policy") lr_policy = parse_double(key, v);
  else if (key == "lr_value") lr_value = parse_double(key, v);
  else if (key == "max_grad_norm") max_grad_norm = parse_double(key, v);
  else if (key == "clip_eps") clip_eps = parse_double(key, v);
  else if (key == "ppo_epochs") ppo_epochs = static_cast<int>(parse_uint(key, v));
  else if (key == "ppo_minibatches") ppo_minibatches = static_cast<int>(parse_uint(key, v));
  else if (key == "reward_scale") reward_scale = parse_double(key, v);
  else if (key == "d_h") d_h = parse_uint(key, v);
  else if (key == "encoder_hidden") encoder_hidden = parse_uint(key, v);
  else if (key == "beta") beta = parse_double(key, v);
  else if (key == "c_log_std_min") c_log_std_min = parse_double(key, v);
  else if (key == "c_log_std_max") c_log_std_max = parse_double(key, v);
  else if (key == "buffer_capacity") buffer_capacity = parse_uint(key, v);
  else if (key == "hindsight_batch") hindsight_batch = parse_uint(key, v);
  else if (key == "hindsight_updates") hindsight_updates = static_cast<int>(parse_uint(key, v));
  else if (key == "lr_hindsight") lr_hindsight = parse_double(key, v);
  else if (key == "disable_lf") disable_lf = parse_bool(key, v);
  else if (key == "disable_lp") disable_lp = parse_bool(key, v);
  else if (key == "log_interval") log_interval = parse_uint(key, v);
  else if (key == "probe_k") probe_k = parse_uint(key, v);
  else if (key == "out_dir") out_dir = v;
  else throw ConfigError("unknown config key '" + key + "'");
}

std::string ExperimentConfig::serialize() const {
  std::ostringstream o;
  auto kv = [&o](const char* k, const std::string& v) { o << k << " = " << v << "\n"; };
  auto b = [](bool x) { return std::string(x ? "true" : "false"); };
  kv("run_name", run_name);
  kv("algorithm", algorithm);
  kv("baseline", baseline);
  kv("env", env);
  kv("noise_sigma", fmt(noise_sigma));
  kv("lambda", lambda);
  kv("seeds", join(seeds));
  kv("total_env_steps", std::to_string(total_env_steps));
  kv("num_envs", std::to_string(num_envs));
  kv("episode_cap", std::to_string(episode_cap));
  kv("target_step_std", fmt(target_step_std));
  kv("policy_hidden", join(policy_hidden));
  kv("value_hidden", join(value_hidden));
  kv("lstm_hidden", std::to_string(lstm_hidden));
  kv("init_log_std", fmt(init_log_std));
  kv("gamma", fmt(gamma));
  kv("entropy_coef", fmt(entropy_coef));
  kv("value_coef", fmt(value_coef));
  kv("lr_policy", fmt(lr_policy));
  kv("lr_value", fmt(lr_value));
  kv("max_grad_norm", fmt(max_grad_norm));
  kv("clip_eps", fmt(clip_eps));
  kv("ppo_epochs", std::to_string(ppo_epochs));
  kv("ppo_minibatches", std::to_string(ppo_minibatches));
  kv("reward_scale", fmt(reward_scale));
  kv("d_h", std::to_string(d_h));
  kv("encoder_hidden", std::to_string(encoder_hidden));
  kv("beta", fmt(beta));
  kv("c_log_std_min", fmt(c_log_std_min));
  kv("c_log_std_max", fmt(c_log_std_max));
  kv("buffer_capacity", std::to_string(buffer_capacity));
  kv("hindsight_batch", std::to_string(hindsight_batch));
  kv("hindsight_updates", std::to_string(hindsight_updates));
  kv("lr_hindsight", fmt(lr_hindsight));
  kv("disable_lf", b(disable_lf));
  kv("disable_lp", b(disable_lp));
  kv("log_interval", std::to_string(log_interval));
  kv("probe_k", std::to_string(probe_k));
  kv("out_dir", out_dir);
  return o.str();
}

ExperimentConfig ExperimentConfig::resolved() const {
  ExperimentConfig c = *this;
  const auto probe = make_env(c.env_config(0));
  if (c.episode_cap == 0) c.episode_cap = probe->episode_cap();
  if (c.lr_policy == 0.0) c.lr_policy = c.algorithm == "ppo" ? 3e-4 : 7e-4;
  if (c.reward_scale == 0.0) c.reward_scale = c.env == "grid_track" ? 0.01 : 1.0;
  if (c.d_h == 0) c.d_h = probe->discrete() ? 16 : 32;
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (algorithm != "a2c" && algorithm != "ppo") throw ConfigError("algorithm must be a2c or ppo");
  if (baseline != "svf" && baseline != "hvf") throw ConfigError("baseline must be svf or hvf");
  if (!is_known_env(env)) throw ConfigError("unknown env '" + env + "'");
  if (seeds.empty()) throw ConfigError("seeds must be nonempty");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  if (!sweep()) {
    const double l = lambda_value();
    if (!(l >= 0.0 && l <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  }
  if (!(c_log_std_min < c_log_std_max)) throw ConfigError("c_log_std_min must be below c_log_std_max");
  if (!(clip_eps > 0.0)) throw ConfigError("clip_eps must be positive");
  if (num_envs == 0) throw ConfigError("num_envs must be positive");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be non-negative");
  if (log_interval == 0) throw ConfigError("log_interval must be positive");
  if (probe_k == 1) throw ConfigError("probe_k must be 0 or at least 2");
  if (policy_hidden.empty() || value_hidden.empty()) throw ConfigError("hidden widths must be nonempty");
  if (ppo_epochs < 1 || ppo_minibatches < 1) throw ConfigError("ppo epochs and minibatches must be positive");
}

double ExperimentConfig::lambda_value() const {
  if (sweep()) throw ConfigError("lambda is 'sweep'; no single value");
  return parse_double("lambda", lambda);
}

EnvConfig ExperimentConfig::env_config(std::uint64_t seed) const {
  EnvConfig e;
  e.name = env;
  e.noise_sigma = noise_sigma;
  e.episode_cap = episode_cap;
  e.seed = seed;
  e.target_step_std = target_step_std;
  return e;
}

std::pair<std::string, std::string> split_assignment(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + kv + "'");
  return {trim(kv.substr(0, eq)), trim(kv.substr(eq + 1))};
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int n = 0;
  while (std::getline(ss, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    try {
      const auto [k, v] = split_assignment(line);
      cfg.set(k, v);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(n) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

const std::vector<double>& lambda_sweep_values() {
  static const std::vector<double> v{0.99, 0.98, 0.96, 0.92, 0.84, 0.68, 0.36, 0.0};
  return v;
}

// ----------------------------------------------------------------- metrics

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols{
      "env_steps", "episode_reward_mean", "episode_reward_std", "critic_mse", "L_P",
      "I_vCLUB",   "grad_variance",       "wall_seconds",       "success_rate"};
  return cols;
}

std::string metrics_header() {
  std::string h;
  for (const auto& c : metrics_columns()) h += (h.empty() ? "" : ",") + c;
  return h;
}

std::string metrics_row(const MetricsRecord& m) {
  return std::to_string(m.env_steps) + "," + fmt(m.episode_reward_mean) + "," +
         fmt(m.episode_reward_std) + "," + fmt(m.critic_mse) + "," + fmt(m.prediction_loss) +
         "," + fmt(m.vclub) + "," + fmt(m.grad_variance) + "," + fmt(m.wall_seconds) + "," +
         fmt(m.success_rate);
}

MetricsTable read_metrics(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw std::runtime_error("cannot read " + csv.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(csv.string() + ": missing header");
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(trim(c));
  }
  MetricsTable table;
  for (const auto& c : cols) table[c];
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t i = 0;
    while (std::getline(ss, cell, ',') && i < cols.size()) {
      table[cols[i++]].push_back(std::strtod(cell.c_str(), nullptr));
    }
    if (i != cols.size()) throw std::runtime_error(csv.string() + ": short row");
  }
  return table;
}

// ---------------------------------------------------------------- training

std::shared_ptr<TrainedAgent> make_agent(const ExperimentConfig& cfg_in, std::uint64_t seed) {
  auto agent = std::make_shared<TrainedAgent>();
  agent->cfg = cfg_in.resolved();
  agent->seed = seed;
  const ExperimentConfig& cfg = agent->cfg;

  auto env_rng = stream(seed, kEnvs);
  for (std::size_t i = 0; i < cfg.num_envs; ++i) {
    agent->envs.push_back(make_env(cfg.env_config(env_rng())));
  }
  const Environment& e0 = *agent->envs.front();

  auto init = stream(seed, kInit);
  agent->policy = PolicyNet(e0.obs_dim(), e0.action_dim(), e0.discrete(), cfg.policy_hidden, init,
                            cfg.init_log_std);
  if (cfg.baseline == "hvf") {
    agent->critic.kind = BaselineKind::Hindsight;
    agent->critic.hvf =
        HindsightValueNet(e0.obs_dim(), cfg.d_h, cfg.lstm_hidden, cfg.value_hidden, init);
    EncoderConfig ec;
    ec.obs_dim = e0.obs_dim();
    ec.action_dim = e0.action_dim();
    ec.discrete = e0.discrete();
    ec.d_h = cfg.d_h;
    ec.hidden = cfg.encoder_hidden;
    ec.log_std_min = cfg.c_log_std_min;
    ec.log_std_max = cfg.c_log_std_max;
    agent->encoder.emplace(ec, init);
    agent->buffer = std::make_unique<ReplayBuffer>(cfg.buffer_capacity);
  } else {
    agent->critic.kind = BaselineKind::StateValue;
    agent->critic.svf = StateValueNet(e0.obs_dim(), cfg.value_hidden, init);
  }
  return agent;
}

namespace {

PPOConfig update_config(const ExperimentConfig& cfg) {
  PPOConfig u;
  u.gamma = cfg.gamma;
  u.lambda = cfg.lambda_value();
  u.entropy_coef = cfg.entropy_coef;
  u.value_coef = cfg.value_coef;
  u.lr_policy = cfg.lr_policy;
  u.lr_value = cfg.lr_value;
  u.max_grad_norm = cfg.max_grad_norm;
  u.clip_eps = cfg.clip_eps;
  u.epochs = cfg.ppo_epochs;
  u.minibatches = cfg.ppo_minibatches;
  return u;
}

HindsightUpdateConfig hindsight_config(const ExperimentConfig& cfg) {
  HindsightUpdateConfig h;
  h.batch_size = cfg.hindsight_batch;
  h.beta = cfg.beta;
  h.lr_f = h.lr_p = h.lr_c = cfg.lr_hindsight;
  h.disable_lf = cfg.disable_lf;
  h.disable_lp = cfg.disable_lp;
  return h;
}

/// Running sums between two log rows.
struct Window {
  std::vector<double> rewards;
  std::size_t successes = 0;
  std::vector<double> critic_mse, lp, vclub;

  void clear() { *this = Window{}; }
};

MetricsRecord close_window(const Window& w, std::uint64_t steps, double seconds, bool has_goal,
                           bool hindsight) {
  MetricsRecord m;
  m.env_steps = steps;
  m.episode_reward_mean = mean_of(w.rewards);
  m.episode_reward_std = std_of(w.rewards);
  m.critic_mse = mean_of(w.critic_mse);
  m.prediction_loss = hindsight ? mean_of(w.lp) : kNaN;
  m.vclub = hindsight ? mean_of(w.vclub) : kNaN;
  m.grad_variance = kNaN;
  m.wall_seconds = seconds;
  m.success_rate = has_goal && !w.rewards.empty()
                       ? static_cast<double>(w.successes) / static_cast<double>(w.rewards.size())
                       : kNaN;
  return m;
}

void prepare_batch(TrainedAgent& agent, std::vector<Trajectory>& trajs, double lambda) {
  if (agent.encoder) attach_hindsight(trajs, *agent.encoder);
  compute_advantages(trajs, agent.critic, agent.cfg.gamma, lambda);
}

}  // namespace

SeedResult train_seed(const ExperimentConfig& cfg_in, std::uint64_t seed) {
  SeedResult result;
  result.seed = seed;
  result.agent = make_agent(cfg_in, seed);
  TrainedAgent& agent = *result.agent;
  const ExperimentConfig& cfg = agent.cfg;
  const PPOConfig ucfg = update_config(cfg);
  const HindsightUpdateConfig hcfg = hindsight_config(cfg);
  const bool has_goal = cfg.env == "grid_migrate";

  auto act_rng = stream(seed, kActions);
  auto hs_rng = stream(seed, kHindsight);
  auto upd_rng = stream(seed, kUpdate);
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  Window w;
  std::uint64_t steps = 0;
  std::uint64_t next_log = cfg.log_interval;
  try {
    while (steps < cfg.total_env_steps) {
      auto trajs = collect_episodes(agent.envs, agent.policy, act_rng, cfg.reward_scale);
      for (const auto& t : trajs) {
        steps += t.size();
        w.rewards.push_back(t.raw_reward);
        if (t.success) ++w.successes;
      }
      if (agent.encoder) {
        for (const auto& t : trajs) {
          for (const auto& step : t.steps) agent.buffer->push(step);
        }
        for (int k = 0; k < cfg.hindsight_updates; ++k) {
          const auto hs = hindsight_update(*agent.encoder, *agent.buffer, hcfg, hs_rng);
          if (hs.ran) {
            w.lp.push_back(hs.prediction_loss);
            w.vclub.push_back(hs.vclub);
          }
        }
      }
      prepare_batch(agent, trajs, ucfg.lambda);
      const UpdateStats us = cfg.algorithm == "ppo"
                                 ? ppo_update(agent.policy, agent.critic, trajs, ucfg, upd_rng)
                                 : a2c_update(agent.policy, agent.critic, trajs, ucfg);
      w.critic_mse.push_back(us.critic_mse);
      if (steps >= next_log || steps >= cfg.total_env_steps) {
        result.metrics.push_back(close_window(w, steps, elapsed(), has_goal, agent.encoder.has_value()));
        w.clear();
        while (next_log <= steps) next_log += cfg.log_interval;
      }
    }
  } catch (const NonFiniteError& e) {
    result.failed = true;
    result.error = e.what();
    if (!w.rewards.empty()) {
      result.metrics.push_back(close_window(w, steps, elapsed(), has_goal, agent.encoder.has_value()));
    }
  }
  result.env_steps = steps;
  if (!result.failed && cfg.probe_k >= 2 && !result.metrics.empty()) {
    result.metrics.back().grad_variance = probe_agent(agent, cfg.probe_k, seed ^ 0x9e3779b97f4a7c15ULL);
  }
  return result;
}

double probe_agent(TrainedAgent& agent, std::size_t k, std::uint64_t probe_seed) {
  auto rng = stream(probe_seed, kActions);
  const double lambda = agent.cfg.sweep() ? 1.0 : agent.cfg.lambda_value();
  std::vector<std::vector<Trajectory>> batches;
  for (std::size_t i = 0; i < k; ++i) {
    auto trajs = collect_episodes(agent.envs, agent.policy, rng, agent.cfg.reward_scale);
    prepare_batch(agent, trajs, lambda);
    batches.push_back(std::move(trajs));
  }
  return gradient_variance_probe(agent.policy, batches);
}

// ------------------------------------------------------------- checkpoints

namespace {

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::ifstream& in, const fs::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw std::runtime_error(path.string() + ": truncated checkpoint");
  }
  return v;
}

constexpr char kMagic[8] = {'H', 'V', 'F', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void append_store(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
                  const ParamStore& store) {
  for (const auto& p : store.params()) out.emplace_back(prefix + p.name, p.value);
}

}  // namespace

void save_checkpoint(const fs::path& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw std::runtime_error(path.string() + ": not a checkpoint");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw std::runtime_error(path.string() + ": unsupported version " + std::to_string(version));
  }
  const auto count = get<std::uint32_t>(in, path);
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get<std::uint32_t>(in, path), '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name.size()))) {
      throw std::runtime_error(path.string() + ": truncated checkpoint");
    }
    std::vector<std::size_t> dims(get<std::uint32_t>(in, path));
    std::size_t n = 1;
    for (auto& d : dims) {
      d = get<std::uint64_t>(in, path);
      n *= d;
    }
    std::vector<double> data(n);
    if (!in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
      throw std::runtime_error(path.string() + ": truncated checkpoint");
    }
    out.emplace_back(std::move(name), Tensor(std::move(dims), std::move(data)));
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> agent_tensors(const TrainedAgent& agent) {
  std::vector<std::pair<std::string, Tensor>> out;
  append_store(out, "policy/", agent.policy.params);
  append_store(out, "critic/", agent.critic.params());
  if (agent.encoder) {
    append_store(out, "encoder/", agent.encoder->f);
    append_store(out, "encoder/", agent.encoder->p);
    append_store(out, "encoder/", agent.encoder->c);
  }
  return out;
}

// ----------------------------------------------------------------- outputs

void write_seed_outputs(const fs::path& dir, const ExperimentConfig& cfg, const SeedResult& r) {
  fs::create_directories(dir);
  {
    std::ofstream csv(dir / "metrics.csv");
    csv << metrics_header() << "\n";
    for (const auto& m : r.metrics) csv << metrics_row(m) << "\n";
  }
  {
    std::ofstream man(dir / "manifest.txt");
    man << cfg.serialize();
    man << "seed = " << r.seed << "\n";
    man << "status = " << (r.failed ? "failed" : "completed") << "\n";
    man << "env_steps_completed = " << r.env_steps << "\n";
    if (r.failed) man << "error = " << r.error << "\n";
  }
  if (r.agent) save_checkpoint(dir / "checkpoint.bin", agent_tensors(*r.agent));
}

namespace {

std::vector<SeedResult> run_seeds(const ExperimentConfig& cfg, const fs::path& dir) {
  std::vector<SeedResult> out;
  for (auto seed : cfg.seeds) {
    SeedResult r = train_seed(cfg, seed);
    write_seed_outputs(dir / ("seed" + std::to_string(seed)), cfg, r);
    out.push_back(std::move(r));
  }
  return out;
}

double final_quartile_reward(const std::vector<SeedResult>& seeds) {
  std::vector<double> per_seed;
  for (const auto& s : seeds) {
    std::vector<double> r;
    for (const auto& m : s.metrics) r.push_back(m.episode_reward_mean);
    per_seed.push_back(s.failed ? -std::numeric_limits<double>::infinity()
                                : final_window_mean(r, 0.25));
  }
  return mean_of(per_seed);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg_in) {
  const ExperimentConfig cfg = cfg_in.resolved();
  ExperimentResult result;
  result.run_dir = fs::path(cfg.out_dir) / cfg.run_name;
  fs::create_directories(result.run_dir);
  if (!cfg.sweep()) {
    result.seeds = run_seeds(cfg, result.run_dir);
    return result;
  }
  std::ofstream summary(result.run_dir / "sweep.txt");
  double best = -std::numeric_limits<double>::infinity();
  for (double lambda : lambda_sweep_values()) {
    ExperimentConfig sub = cfg;
    sub.lambda = fmt_short(lambda);
    auto seeds = run_seeds(sub, result.run_dir / ("lambda" + sub.lambda));
    const double score = final_quartile_reward(seeds);
    result.sweep_scores.emplace_back(lambda, score);
    summary << "lambda = " << sub.lambda << "  final_quartile_reward = " << fmt(score) << "\n";
    if (!result.best_lambda || score > best) {
      best = score;
      result.best_lambda = lambda;
      result.seeds = std::move(seeds);
    }
  }
  summary << "best_lambda = " << fmt_short(*result.best_lambda) << "\n";
  return result;
}

// ---------------------------------------------------------------- analysis

double final_window_mean(const std::vector<double>& values, double fraction) {
  if (values.empty()) return kNaN;
  const auto n = values.size();
  const auto take = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(static_cast<double>(n) * fraction)));
  std::vector<double> tail;
  for (std::size_t i = n - std::min(take, n); i < n; ++i) {
    if (!std::isnan(values[i])) tail.push_back(values[i]);
  }
  return mean_of(tail);
}

std::vector<fs::path> seed_dirs(const fs::path& run_dir) {
  std::vector<std::pair<std::uint64_t, fs::path>> found;
  if (!fs::is_directory(run_dir)) throw std::runtime_error(run_dir.string() + " is not a directory");
  for (const auto& e : fs::directory_iterator(run_dir)) {
    const auto name = e.path().filename().string();
    if (!e.is_directory() || name.rfind("seed", 0) != 0) continue;
    try {
      found.emplace_back(std::stoull(name.substr(4)), e.path());
    } catch (const std::exception&) {
    }
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& [s, p] : found) out.push_back(p);
  if (out.empty()) throw std::runtime_error(run_dir.string() + ": no seed directories");
  return out;
}

std::map<std::string, std::string> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto [k, v] = split_assignment(line);
    out[k] = v;
  }
  return out;
}

MIDiagnostics mi_diagnostics(const fs::path& run_dir) {
  MIDiagnostics d;
  for (const auto& dir : seed_dirs(run_dir)) {
    const auto man = read_manifest(dir / "manifest.txt");
    if (man.at("baseline") != "hvf") {
      d.rows.clear();
      d.notice = "run uses the state-value baseline; no hindsight diagnostics";
      return d;
    }
    const auto table = read_metrics(dir / "metrics.csv");
    d.rows.push_back({std::stoull(man.at("seed")), final_window_mean(table.at("L_P"), 0.25),
                      final_window_mean(table.at("I_vCLUB"), 0.25)});
  }
  return d;
}

std::string MIDiagnostics::format() const {
  if (!notice.empty()) return notice + "\n";
  std::ostringstream o;
  o << "seed,L_P,I_vCLUB\n";
  for (const auto& r : rows) o << r.seed << "," << fmt_short(r.prediction_loss) << "," << fmt_short(r.vclub) << "\n";
  return o.str();
}

Comparison compare_runs(const std::vector<fs::path>& run_dirs, const std::string& metric,
                        double window) {
  if (run_dirs.size() < 2) throw std::invalid_argument("compare_runs: need at least two runs");
  const auto& cols = metrics_columns();
  if (std::find(cols.begin(), cols.end(), metric) == cols.end()) {
    throw std::invalid_argument("compare_runs: unknown metric '" + metric + "'");
  }
  Comparison c;
  c.metric = metric;
  for (const auto& run : run_dirs) {
    RunSummary s;
    s.run_dir = run;
    for (const auto& dir : seed_dirs(run)) {
      const auto table = read_metrics(dir / "metrics.csv");
      const auto it = table.find(metric);
      const double v = it == table.end() ? kNaN : final_window_mean(it->second, window);
      if (std::isnan(v)) {
        throw std::invalid_argument("compare_runs: " + dir.string() + " does not record " + metric);
      }
      s.per_seed.push_back(v);
    }
    s.mean = mean_of(s.per_seed);
    s.std = std_of(s.per_seed);
    c.runs.push_back(std::move(s));
  }
  c.order.resize(c.runs.size());
  std::iota(c.order.begin(), c.order.end(), 0);
  std::stable_sort(c.order.begin(), c.order.end(),
                   [&](auto a, auto b) { return c.runs[a].mean < c.runs[b].mean; });
  for (std::size_t i = 0; i + 1 < c.order.size(); ++i) {
    const auto& lo = c.runs[c.order[i]];
    const auto& hi = c.runs[c.order[i + 1]];
    c.separated.push_back(lo.mean + lo.std < hi.mean - hi.std);
  }
  return c;
}

bool Comparison::any_difference() const {
  return std::any_of(separated.begin(), separated.end(), [](bool b) { return b; });
}

std::string Comparison::format() const {
  std::ostringstream o;
  o << "metric: " << metric << "\n";
  for (const auto& r : runs) {
    o << "  " << r.run_dir.string() << ": " << fmt_short(r.mean) << " +- " << fmt_short(r.std)
      << " (" << r.per_seed.size() << " seeds)\n";
  }
  if (!any_difference()) {
    o << "ordering: no difference\n";
    return o.str();
  }
  o << "ordering (increasing): ";
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i) o << (separated[i - 1] ? " < " : " ~ ");
    o << runs[order[i]].run_dir.filename().string();
  }
  o << "\n";
  return o.str();
}

}  // namespace hvf
