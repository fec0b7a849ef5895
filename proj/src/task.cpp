#include "fdt/task.hpp"

#include <cstdlib>

namespace fdt::task {

using grid::Action;
using grid::EnvState;
using grid::Pos;
using lang::Loc;
using lang::Verb;

namespace {

bool is_move_or_turn(Action a) {
  return a == Action::forward || a == Action::turn_left || a == Action::turn_right;
}

bool adjacent4(Pos a, Pos b) {
  return std::abs(a.x - b.x) + std::abs(a.y - b.y) == 1;
}

bool loc_matches(Loc loc, Pos pos, const EnvState& state) {
  const Pos rel{pos.x - state.start_pos.x, pos.y - state.start_pos.y};
  switch (loc) {
    case Loc::above:
      return rel.y < 0;
    case Loc::below:
      return rel.y > 0;
    case Loc::on_your_left: {
      const Pos left = dir_vec(rotate_left(state.start_dir));
      return rel.x * left.x + rel.y * left.y > 0;
    }
    case Loc::on_your_right: {
      const Pos right = dir_vec(rotate_right(state.start_dir));
      return rel.x * right.x + rel.y * right.y > 0;
    }
  }
  return false;
}

// Any cell adjacent to `pos` holding an object that matches `desc`.
bool next_to_matching(const lang::ObjectDescriptor& desc, Pos pos, const EnvState& state) {
  static constexpr Pos kOffsets[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  for (const Pos& d : kOffsets) {
    const Pos p{pos.x + d.x, pos.y + d.y};
    if (!state.in_bounds(p)) continue;
    const grid::Cell& c = state.at(p);
    if (c.has_object() && descriptor_matches(desc, c.obj, p, state)) return true;
  }
  return false;
}

}  // namespace

bool descriptor_matches(const lang::ObjectDescriptor& desc, const grid::WorldObject& obj,
                        Pos pos, const EnvState& state) {
  if (obj.kind != desc.kind || obj.color != desc.color) return false;
  if (desc.loc && !loc_matches(*desc.loc, pos, state)) return false;
  return true;
}

SubGoalTracker decompose(const lang::MissionSpec& mission) {
  SubGoalTracker tracker;
  for (const lang::Clause& c : mission.clauses) {
    switch (c.verb) {
      case Verb::go_to:
        tracker.subgoals.push_back({SubGoalKind::go_to, c.target, std::nullopt, false, false});
        break;
      case Verb::pick_up:
        tracker.subgoals.push_back({SubGoalKind::go_to, c.target, std::nullopt, false, false});
        tracker.subgoals.push_back({SubGoalKind::pick_up, c.target, std::nullopt, false, false});
        break;
      case Verb::open:
        tracker.subgoals.push_back({SubGoalKind::go_to, c.target, std::nullopt, false, false});
        tracker.subgoals.push_back({SubGoalKind::open, c.target, std::nullopt, false, false});
        break;
      case Verb::put_next:
        tracker.subgoals.push_back({SubGoalKind::go_to, c.target, std::nullopt, false, false});
        tracker.subgoals.push_back({SubGoalKind::pick_up, c.target, std::nullopt, false, false});
        tracker.subgoals.push_back(
            {SubGoalKind::go_next_to, *c.fixed_target, std::nullopt, false, false});
        tracker.subgoals.push_back(
            {SubGoalKind::put_next, c.target, c.fixed_target, false, false});
        break;
    }
  }
  tracker.subgoals.back().is_final = true;
  return tracker;
}

bool subgoal_satisfied_by(const SubGoal& sg, const EnvState& pre, Action action,
                          const EnvState& post) {
  // A blocked forward is a no-op and can never satisfy a goal condition;
  // this keeps rule and task feedback mutually exclusive.
  const bool moved_or_turned =
      is_move_or_turn(action) &&
      (action != Action::forward || !(post.agent_pos == pre.agent_pos));
  switch (sg.kind) {
    case SubGoalKind::go_to: {
      if (!moved_or_turned) return false;
      const Pos fp = post.front_pos();
      if (!post.in_bounds(fp)) return false;
      const grid::Cell& front = post.at(fp);
      return front.has_object() && descriptor_matches(sg.target, front.obj, fp, post);
    }
    case SubGoalKind::go_next_to: {
      if (!moved_or_turned) return false;
      const Pos fp = post.front_pos();
      if (!post.in_bounds(fp)) return false;
      return next_to_matching(sg.target, fp, post);
    }
    case SubGoalKind::pick_up: {
      if (action != Action::pickup) return false;
      if (!post.carrying || pre.carrying) return false;
      return descriptor_matches(sg.target, *post.carrying, pre.front_pos(), post);
    }
    case SubGoalKind::open: {
      if (action != Action::toggle) return false;
      const Pos fp = post.front_pos();
      if (!post.in_bounds(fp)) return false;
      const grid::Cell& front = post.at(fp);
      return front.has_object() && front.obj.is_door() &&
             front.obj.door_state == grid::DoorState::open &&
             descriptor_matches(sg.target, front.obj, fp, post);
    }
    case SubGoalKind::put_next: {
      if (action != Action::drop) return false;
      if (!pre.carrying || post.carrying) return false;
      const Pos fp = post.front_pos();
      if (!post.in_bounds(fp)) return false;
      const grid::Cell& dropped = post.at(fp);
      if (!dropped.has_object() || !descriptor_matches(sg.target, dropped.obj, fp, post)) {
        return false;
      }
      return next_to_matching(*sg.fixed_target, fp, post);
    }
  }
  return false;
}

std::optional<SubGoal> update(SubGoalTracker& tracker, const EnvState& pre, Action action,
                              const EnvState& post) {
  if (tracker.complete()) return std::nullopt;
  SubGoal& sg = tracker.subgoals[static_cast<std::size_t>(tracker.satisfied_count)];
  if (!subgoal_satisfied_by(sg, pre, action, post)) return std::nullopt;
  sg.satisfied = true;
  ++tracker.satisfied_count;
  return sg;
}

double gc_success(const SubGoalTracker& tracker) {
  if (tracker.subgoals.empty()) return 0.0;
  return static_cast<double>(tracker.satisfied_count) /
         static_cast<double>(tracker.subgoals.size());
}

}  // namespace fdt::task
