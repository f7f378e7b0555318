#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hvf/pg.hpp"

namespace hvf {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything that determines a run. Fields left at their "auto" value
/// (0, negative, or empty as documented) are filled by resolve() from the
/// algorithm and environment.
struct ExperimentConfig {
  std::string run_name = "run";
  std::string algorithm = "a2c";  // a2c | ppo
  std::string baseline = "svf";   // svf | hvf
  std::string env = "grid_track";
  double noise_sigma = 0.0;
  std::string lambda = "1";  // a number in [0, 1], or "sweep"
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::uint64_t total_env_steps = 200000;
  std::size_t num_envs = 8;
  int episode_cap = 0;  // auto: environment default
  double target_step_std = 0.05;

  std::vector<std::size_t> policy_hidden{64, 64};
  std::vector<std::size_t> value_hidden{64, 64};
  std::size_t lstm_hidden = 32;
  double init_log_std = -0.5;

  double gamma = 0.99;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double lr_policy = 0.0;  // auto: 7e-4 (a2c), 3e-4 (ppo)
  double lr_value = 1e-3;
  double max_grad_norm = 0.5;
  double clip_eps = 0.2;
  int ppo_epochs = 4;
  int ppo_minibatches = 4;
  double reward_scale = 0.0;  // auto: 0.01 for grid_track, 1 otherwise

  std::size_t d_h = 0;  // auto: 16 discrete, 32 continuous
  std::size_t encoder_hidden = 64;
  double beta = 1.0;
  // The gridworld recipes narrow this to [-0.5, 0.5] (see README).
  double c_log_std_min = -6.0;
  double c_log_std_max = 2.0;
  std::size_t buffer_capacity = 50000;
  std::size_t hindsight_batch = 256;
  int hindsight_updates = 4;
  double lr_hindsight = 1e-3;
  bool disable_lf = false;
  bool disable_lp = false;

  std::uint64_t log_interval = 2000;
  std::size_t probe_k = 0;  // > 1: gradient variance probe after training
  std::string out_dir = "runs";

  /// Applies one "key=value" assignment. Throws ConfigError on unknown keys
  /// or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Fills auto fields and checks invariants.
  ExperimentConfig resolved() const;
  void validate() const;
  /// All fields as "key = value" lines, in a fixed order.
  std::string serialize() const;

  bool sweep() const { return lambda == "sweep"; }
  double lambda_value() const;
  EnvConfig env_config(std::uint64_t seed) const;
};

/// Flat text: one "key = value" per line, '#' starts a comment.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Splits "key=value".
std::pair<std::string, std::string> split_assignment(const std::string& kv);

/// The lambda values tried by a sweep.
const std::vector<double>& lambda_sweep_values();

struct MetricsRecord {
  std::uint64_t env_steps = 0;
  double episode_reward_mean = 0.0;
  double episode_reward_std = 0.0;
  double critic_mse = 0.0;
  double prediction_loss = 0.0;  // L_P; nan without a hindsight encoder
  double vclub = 0.0;            // I_vCLUB; nan without a hindsight encoder
  double grad_variance = 0.0;    // nan unless probed
  double wall_seconds = 0.0;
  double success_rate = 0.0;     // nan for environments without a goal
};

const std::vector<std::string>& metrics_columns();
std::string metrics_header();
std::string metrics_row(const MetricsRecord& m);

/// Column name -> values, read back from a metrics CSV.
using MetricsTable = std::map<std::string, std::vector<double>>;
MetricsTable read_metrics(const std::filesystem::path& csv);

/// Trained components of one seed.
struct TrainedAgent {
  ExperimentConfig cfg;
  std::uint64_t seed = 0;
  std::vector<std::unique_ptr<Environment>> envs;
  PolicyNet policy;
  Critic critic;
  std::optional<EncoderNets> encoder;
  std::unique_ptr<ReplayBuffer> buffer;
};

struct SeedResult {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  std::uint64_t env_steps = 0;
  std::vector<MetricsRecord> metrics;
  std::shared_ptr<TrainedAgent> agent;
};

/// Training loop for one seed with a numeric lambda. Writes nothing.
/// A non-finite loss stops the run, sets failed and keeps the metrics so far.
SeedResult train_seed(const ExperimentConfig& cfg, std::uint64_t seed);

/// Builds the agent for a seed without training it.
std::shared_ptr<TrainedAgent> make_agent(const ExperimentConfig& cfg, std::uint64_t seed);

/// Collects K batches of episodes with the frozen agent and returns the
/// trace of the policy-gradient covariance.
double probe_agent(TrainedAgent& agent, std::size_t k, std::uint64_t probe_seed);

/// Writes <dir>/metrics.csv, manifest.txt and checkpoint.bin.
void write_seed_outputs(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                        const SeedResult& result);

struct ExperimentResult {
  std::filesystem::path run_dir;
  std::vector<SeedResult> seeds;
  /// Sweep only: the chosen lambda and the per-lambda final-quartile reward.
  std::optional<double> best_lambda;
  std::vector<std::pair<double, double>> sweep_scores;
};

/// Runs every seed, writes <out>/<run_name>/seed<k>/... For a lambda sweep
/// each value runs under <out>/<run_name>/lambda<v>/ and the best one (by
/// final-quartile reward averaged over seeds) is recorded in sweep.txt.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// -------------------------------------------------------------- checkpoints

/// Layout (little endian): "HVFCKPT\0", u32 version (=1), u32 count, then per
/// tensor: u32 name length, name bytes, u32 ndim, u64 dims[ndim], f64 data.
void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::filesystem::path& path);
std::vector<std::pair<std::string, Tensor>> agent_tensors(const TrainedAgent& agent);

// -------------------------------------------------------------- analysis

/// Mean over the last `fraction` of rows, skipping nan entries. nan when
/// nothing remains.
double final_window_mean(const std::vector<double>& values, double fraction);

struct MIDiagnosticRow {
  std::uint64_t seed = 0;
  double prediction_loss = 0.0;
  double vclub = 0.0;
};
struct MIDiagnostics {
  std::string notice;  // non-empty when the table is empty on purpose
  std::vector<MIDiagnosticRow> rows;
  std::string format() const;
};
/// Final-quartile L_P and I_vCLUB per seed of a run directory.
MIDiagnostics mi_diagnostics(const std::filesystem::path& run_dir);

struct RunSummary {
  std::filesystem::path run_dir;
  std::vector<double> per_seed;
  double mean = 0.0;
  double std = 0.0;
};
struct Comparison {
  std::string metric;
  std::vector<RunSummary> runs;
  /// Run indices ordered by increasing mean, and whether each adjacent pair
  /// is separated (non-overlapping mean +- std).
  std::vector<std::size_t> order;
  std::vector<bool> separated;
  bool any_difference() const;
  std::string format() const;
};
Comparison compare_runs(const std::vector<std::filesystem::path>& run_dirs,
                        const std::string& metric, double window = 0.25);

/// seed<k> subdirectories of a run directory, in seed order.
std::vector<std::filesystem::path> seed_dirs(const std::filesystem::path& run_dir);
std::map<std::string, std::string> read_manifest(const std::filesystem::path& path);

}  // namespace hvf
