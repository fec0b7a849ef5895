#ifndef FDT_ENV_HPP_
#define FDT_ENV_HPP_

#include <string>

#include "fdt/feedback.hpp"
#include "fdt/grid/observe.hpp"
#include "fdt/levels.hpp"
#include "fdt/task.hpp"

namespace fdt::env {

struct StepOutcome {
  grid::Observation observation;
  double reward = 0.0;
  feedback::FeedbackEvent feedback;
  bool terminated = false;
  bool truncated = false;
  bool state_changed = false;
};

// One episode: deterministic world, mission, sub-goal tracking, feedback.
// reward = 1 - reward_decay * step_count / max_steps on success, else 0.
class Episode {
 public:
  static constexpr double kRewardDecay = 0.9;

  static Episode reset(const levels::LevelConfig& config, std::uint64_t seed);
  static Episode reset(levels::LevelName name, std::uint64_t seed);

  StepOutcome step(grid::Action action);

  bool done() const { return terminated_ || truncated_; }
  bool terminated() const { return terminated_; }
  bool truncated() const { return truncated_; }
  const grid::EnvState& state() const { return state_; }
  const lang::MissionSpec& mission() const { return mission_; }
  const task::SubGoalTracker& tracker() const { return tracker_; }
  const levels::LevelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  grid::Observation observation() const { return grid::render_observation(state_); }
  double gc_success() const { return task::gc_success(tracker_); }

 private:
  levels::LevelConfig config_;
  grid::EnvState state_;
  lang::MissionSpec mission_;
  task::SubGoalTracker tracker_;
  std::uint64_t seed_ = 0;
  bool terminated_ = false;
  bool truncated_ = false;
};

}  // namespace fdt::env

#endif  // FDT_ENV_HPP_
