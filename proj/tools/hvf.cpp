// Command-line entry point: train, diagnose, compare.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "hvf/harness.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Hindsight value function experiments"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Run an experiment from a config file");
  std::string config_path;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> overrides;
  train->add_option("--config", config_path, "Config file (key = value lines)")->required();
  train->add_option("--seed", seeds, "Run only these seeds");
  train->add_option("--override", overrides, "key=value applied after the file");

  auto* diagnose = app.add_subcommand("diagnose", "Final-quartile L_P and I_vCLUB per seed");
  std::string diag_dir;
  diagnose->add_option("run_dir", diag_dir)->required();

  auto* compare = app.add_subcommand("compare", "Compare a metric across runs");
  std::vector<std::string> compare_dirs;
  std::string metric = "episode_reward_mean";
  double window = 0.25;
  compare->add_option("run_dirs", compare_dirs)->required()->expected(2, -1);
  compare->add_option("--metric", metric);
  compare->add_option("--window", window)->check(CLI::Range(0.0, 1.0));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      auto cfg = hvf::load_config(config_path);
      for (const auto& o : overrides) {
        const auto [k, v] = hvf::split_assignment(o);
        cfg.set(k, v);
      }
      if (!seeds.empty()) cfg.seeds = seeds;
      const auto result = hvf::run_experiment(cfg);
      int failed = 0;
      for (const auto& s : result.seeds) {
        const auto& last = s.metrics.empty() ? hvf::MetricsRecord{} : s.metrics.back();
        std::printf("seed %llu: %s, %llu env steps, last reward %.4g\n",
                    static_cast<unsigned long long>(s.seed), s.failed ? "FAILED" : "ok",
                    static_cast<unsigned long long>(s.env_steps), last.episode_reward_mean);
        if (s.failed) {
          std::printf("  %s\n", s.error.c_str());
          ++failed;
        }
      }
      if (result.best_lambda) std::printf("best lambda: %g\n", *result.best_lambda);
      std::printf("outputs in %s\n", result.run_dir.string().c_str());
      return failed ? 2 : 0;
    }
    if (*diagnose) {
      std::cout << hvf::mi_diagnostics(diag_dir).format();
      return 0;
    }
    if (*compare) {
      std::vector<fs::path> dirs(compare_dirs.begin(), compare_dirs.end());
      std::cout << hvf::compare_runs(dirs, metric, window).format();
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
