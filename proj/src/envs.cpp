#include "hvf/envs.hpp"

#include <algorithm>
#include <cmath>

namespace hvf {

namespace {

constexpr double kCellScale = 1.0 / (kGridSize - 1);

int default_cap(const EnvConfig& cfg, int fallback) {
  if (cfg.episode_cap < 0) throw std::invalid_argument("env: episode cap must be positive");
  return cfg.episode_cap == 0 ? fallback : cfg.episode_cap;
}

Cell random_cell(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> coord(0, kGridSize - 1);
  const int x = coord(rng);
  const int y = coord(rng);
  return {x, y};
}

void require_discrete(const Action& a) {
  if (a.index >= 4) throw std::invalid_argument("grid env: action index must be < 4");
}

}  // namespace

Cell move_clamped(Cell c, std::size_t dir) {
  switch (dir) {
    case 0: c.y += 1; break;  // up
    case 1: c.y -= 1; break;  // down
    case 2: c.x -= 1; break;  // left
    case 3: c.x += 1; break;  // right
    default: throw std::invalid_argument("move: direction must be < 4");
  }
  c.x = std::clamp(c.x, 0, kGridSize - 1);
  c.y = std::clamp(c.y, 0, kGridSize - 1);
  return c;
}

void Environment::begin_step() {
  if (done_) throw EpisodeDoneError(name_ + ": step() called on a finished episode");
}

bool Environment::end_step(bool terminal) {
  ++steps_;
  done_ = terminal || steps_ >= cap_;
  return done_;
}

// ---------------------------------------------------------------- GridTrack

GridTrack::GridTrack(const EnvConfig& cfg)
    : Environment("grid_track", default_cap(cfg, kGridEpisodeCap), cfg.seed) {}

Observation GridTrack::observe() const {
  return {agent_.x * kCellScale, agent_.y * kCellScale, target_.x * kCellScale,
          target_.y * kCellScale};
}

Observation GridTrack::reset() {
  agent_ = random_cell(rng_);
  do {
    target_ = random_cell(rng_);
  } while (target_ == agent_);
  steps_ = 0;
  done_ = false;
  return observe();
}

void GridTrack::set_state(Cell agent, Cell target) {
  agent_ = agent;
  target_ = target;
  steps_ = 0;
  done_ = false;
}

Transition GridTrack::step(const Action& action) {
  begin_step();
  require_discrete(action);
  Transition t;
  t.s = observe();
  t.a = action;
  agent_ = move_clamped(agent_, action.index);
  std::uniform_int_distribution<std::size_t> dir(0, 3);
  target_ = move_clamped(target_, dir(rng_));
  const double dx = agent_.x - target_.x;
  const double dy = agent_.y - target_.y;
  t.r = -(dx * dx + dy * dy);
  t.s_next = observe();
  t.done = end_step(false);
  return t;
}

// -------------------------------------------------------------- GridMigrate

GridMigrate::GridMigrate(const EnvConfig& cfg)
    : Environment("grid_migrate", default_cap(cfg, kGridEpisodeCap), cfg.seed),
      sigma_(cfg.noise_sigma) {
  if (!(sigma_ >= 0.0)) throw std::invalid_argument("grid_migrate: noise sigma must be >= 0");
}

Observation GridMigrate::observe() const { return {agent_.x * kCellScale, agent_.y * kCellScale}; }

Observation GridMigrate::reset() {
  do {
    agent_ = random_cell(rng_);
  } while (agent_ == kGoal);
  steps_ = 0;
  done_ = false;
  return observe();
}

void GridMigrate::set_agent(Cell agent) {
  agent_ = agent;
  steps_ = 0;
  done_ = false;
}

Transition GridMigrate::step(const Action& action) {
  begin_step();
  require_discrete(action);
  Transition t;
  t.s = observe();
  t.a = action;
  agent_ = move_clamped(agent_, action.index);
  t.reached_goal = agent_ == kGoal;
  std::normal_distribution<double> noise(0.0, 1.0);
  t.r = (t.reached_goal ? 1.0 : 0.0) + sigma_ * noise(rng_);
  t.s_next = observe();
  t.done = end_step(t.reached_goal);
  return t;
}

// ------------------------------------------------------------- PointTracker

PointTracker::PointTracker(const EnvConfig& cfg)
    : Environment("point_tracker", default_cap(cfg, kPointEpisodeCap), cfg.seed),
      target_std_(cfg.target_step_std) {
  if (!(target_std_ >= 0.0)) throw std::invalid_argument("point_tracker: target std must be >= 0");
}

Observation PointTracker::observe() const {
  return {agent_[0], agent_[1], velocity_[0], velocity_[1], target_[0], target_[1]};
}

Observation PointTracker::reset() {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  agent_ = {0.0, 0.0};
  velocity_ = {0.0, 0.0};
  target_[0] = u(rng_);
  target_[1] = u(rng_);
  steps_ = 0;
  done_ = false;
  return observe();
}

void PointTracker::set_state(std::array<double, 2> agent, std::array<double, 2> target) {
  agent_ = agent;
  velocity_ = {0.0, 0.0};
  target_ = target;
  steps_ = 0;
  done_ = false;
}

Transition PointTracker::step(const Action& action) {
  begin_step();
  if (action.values.size() != 2) {
    throw std::invalid_argument("point_tracker: action must be a 2-vector");
  }
  Transition t;
  t.s = observe();
  t.a = action;
  std::normal_distribution<double> walk(0.0, 1.0);
  double dist_sq = 0.0;
  for (std::size_t k = 0; k < 2; ++k) {
    const double a = std::clamp(action.values[k], -1.0, 1.0);
    const double before = agent_[k];
    agent_[k] = std::clamp(agent_[k] + kActionScale * a, -kBound, kBound);
    velocity_[k] = agent_[k] - before;
    target_[k] = std::clamp(target_[k] + target_std_ * walk(rng_), -kBound, kBound);
  }
  for (std::size_t k = 0; k < 2; ++k) {
    const double d = agent_[k] - target_[k];
    dist_sq += d * d;
  }
  t.r = -dist_sq;
  t.s_next = observe();
  t.done = end_step(false);
  return t;
}

std::unique_ptr<Environment> make_env(const EnvConfig& cfg) {
  if (cfg.name == "grid_track") return std::make_unique<GridTrack>(cfg);
  if (cfg.name == "grid_migrate") return std::make_unique<GridMigrate>(cfg);
  if (cfg.name == "point_tracker") return std::make_unique<PointTracker>(cfg);
  throw std::invalid_argument("unknown environment '" + cfg.name + "'");
}

bool is_known_env(const std::string& name) {
  return name == "grid_track" || name == "grid_migrate" || name == "point_tracker";
}

}  // namespace hvf
