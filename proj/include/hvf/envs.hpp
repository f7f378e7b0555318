#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hvf {

using Observation = std::vector<double>;

/// Discrete environments use `index` (0=up, 1=down, 2=left, 3=right);
/// continuous ones use `values`.
struct Action {
  std::size_t index = 0;
  std::vector<double> values;
};

struct Transition {
  Observation s;
  Action a;
  Observation s_next;
  double r = 0.0;
  bool done = false;
  /// Grid Migrate only: this step reached the goal cell.
  bool reached_goal = false;
};

class EpisodeDoneError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct EnvConfig {
  std::string name = "grid_track";  // grid_track | grid_migrate | point_tracker
  double noise_sigma = 0.0;         // grid_migrate reward noise
  int episode_cap = 0;              // 0 selects the environment default (20 / 50)
  std::uint64_t seed = 0;
  double target_step_std = 0.05;    // point_tracker target random walk
};

inline constexpr int kGridSize = 8;
inline constexpr int kGridEpisodeCap = 20;
inline constexpr int kPointEpisodeCap = 50;

struct Cell {
  int x = 0;
  int y = 0;
  bool operator==(const Cell&) const = default;
};

/// Moves one cell in direction `dir`, clamped to the grid.
Cell move_clamped(Cell c, std::size_t dir);

class Environment {
 public:
  virtual ~Environment() = default;

  virtual Observation reset() = 0;
  virtual Transition step(const Action& action) = 0;

  virtual std::size_t obs_dim() const = 0;
  virtual bool discrete() const = 0;
  /// Number of discrete actions, or the continuous action dimension.
  virtual std::size_t action_dim() const = 0;

  int episode_cap() const { return cap_; }
  int steps() const { return steps_; }
  bool done() const { return done_; }
  const std::string& name() const { return name_; }

 protected:
  Environment(std::string name, int cap, std::uint64_t seed)
      : name_(std::move(name)), cap_(cap), rng_(seed) {}
  void begin_step();
  bool end_step(bool terminal);

  std::string name_;
  int cap_;
  int steps_ = 0;
  bool done_ = true;
  std::mt19937_64 rng_;
};

/// Agent chases a target that takes a uniformly random step each turn.
/// Observation: agent x, y and target x, y, each divided by 7.
class GridTrack final : public Environment {
 public:
  explicit GridTrack(const EnvConfig& cfg);

  Observation reset() override;
  Transition step(const Action& action) override;
  std::size_t obs_dim() const override { return 4; }
  bool discrete() const override { return true; }
  std::size_t action_dim() const override { return 4; }

  void set_state(Cell agent, Cell target);
  Cell agent() const { return agent_; }
  Cell target() const { return target_; }
  Observation observe() const;

 private:
  Cell agent_, target_;
};

/// Fixed goal at (7,7); +1 on arrival (episode ends) plus N(0, sigma^2)
/// reward noise on every step. Observation: agent x, y divided by 7.
class GridMigrate final : public Environment {
 public:
  explicit GridMigrate(const EnvConfig& cfg);

  Observation reset() override;
  Transition step(const Action& action) override;
  std::size_t obs_dim() const override { return 2; }
  bool discrete() const override { return true; }
  std::size_t action_dim() const override { return 4; }

  void set_agent(Cell agent);
  Cell agent() const { return agent_; }
  double sigma() const { return sigma_; }
  Observation observe() const;

  static constexpr Cell kGoal{7, 7};

 private:
  Cell agent_;
  double sigma_;
};

/// Continuous 2-D tracker: agent moves by 0.1 * action, target random-walks.
/// Observation: agent position, agent velocity, target position.
class PointTracker final : public Environment {
 public:
  explicit PointTracker(const EnvConfig& cfg);

  Observation reset() override;
  Transition step(const Action& action) override;
  std::size_t obs_dim() const override { return 6; }
  bool discrete() const override { return false; }
  std::size_t action_dim() const override { return 2; }

  void set_state(std::array<double, 2> agent, std::array<double, 2> target);
  Observation observe() const;

  static constexpr double kActionScale = 0.1;
  static constexpr double kBound = 1.5;

 private:
  std::array<double, 2> agent_{}, velocity_{}, target_{};
  double target_std_;
};

std::unique_ptr<Environment> make_env(const EnvConfig& cfg);
bool is_known_env(const std::string& name);

}  // namespace hvf
