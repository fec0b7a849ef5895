#include "fdt/env.hpp"

#include <stdexcept>

namespace fdt::env {

Episode Episode::reset(const levels::LevelConfig& config, std::uint64_t seed) {
  levels::GeneratedLevel gen = levels::generate_level(config, seed);
  Episode ep;
  ep.config_ = gen.config;
  ep.state_ = std::move(gen.state);
  ep.mission_ = std::move(gen.mission);
  ep.tracker_ = task::decompose(ep.mission_);
  ep.seed_ = seed;
  return ep;
}

Episode Episode::reset(levels::LevelName name, std::uint64_t seed) {
  return reset(levels::default_config(name), seed);
}

StepOutcome Episode::step(grid::Action action) {
  if (done()) throw std::logic_error("step() called on a finished episode");

  const grid::EnvState pre = state_;
  StepOutcome out;
  out.state_changed = grid::apply_action(state_, action);
  state_.step_count += 1;

  out.feedback = feedback::feedback_for_step(tracker_, pre, action, state_);
  const std::optional<task::SubGoal> newly = task::update(tracker_, pre, action, state_);

  if (newly && newly->is_final) {
    terminated_ = true;
    out.reward = 1.0 - kRewardDecay * (static_cast<double>(state_.step_count) /
                                       static_cast<double>(state_.max_steps));
  } else if (state_.step_count >= state_.max_steps) {
    truncated_ = true;
  }
  out.terminated = terminated_;
  out.truncated = truncated_;
  out.observation = grid::render_observation(state_);
  return out;
}

}  // namespace fdt::env
