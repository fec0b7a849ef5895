#ifndef FDT_TASK_HPP_
#define FDT_TASK_HPP_

#include <optional>
#include <vector>

#include "fdt/grid/state.hpp"
#include "fdt/mission.hpp"

namespace fdt::task {

enum class SubGoalKind : std::uint8_t {
  go_to = 0,
  go_next_to = 1,
  pick_up = 2,
  open = 3,
  put_next = 4,
};

struct SubGoal {
  SubGoalKind kind = SubGoalKind::go_to;
  lang::ObjectDescriptor target;
  std::optional<lang::ObjectDescriptor> fixed_target;
  bool satisfied = false;
  bool is_final = false;
};

struct SubGoalTracker {
  std::vector<SubGoal> subgoals;
  int satisfied_count = 0;

  bool complete() const { return satisfied_count == static_cast<int>(subgoals.size()); }
  const SubGoal& current() const { return subgoals[static_cast<std::size_t>(satisfied_count)]; }
};

// go_to -> [go_to]; pick_up -> [go_to, pick_up]; open -> [go_to, open];
// put_next -> [go_to(A), pick_up(A), go_next_to(B), put_next(A, B)].
SubGoalTracker decompose(const lang::MissionSpec& mission);

// True when `obj` sitting at `pos` matches the descriptor. Location language
// is resolved against the start pose recorded in `state`.
bool descriptor_matches(const lang::ObjectDescriptor& desc, const grid::WorldObject& obj,
                        grid::Pos pos, const grid::EnvState& state);

// Whether the transition pre --action--> post satisfies `sg`'s predicate.
bool subgoal_satisfied_by(const SubGoal& sg, const grid::EnvState& pre, grid::Action action,
                          const grid::EnvState& post);

// Evaluates only the first unsatisfied sub-goal; satisfied flags are monotone.
std::optional<SubGoal> update(SubGoalTracker& tracker, const grid::EnvState& pre,
                              grid::Action action, const grid::EnvState& post);

double gc_success(const SubGoalTracker& tracker);

}  // namespace fdt::task

#endif  // FDT_TASK_HPP_
