#ifndef FDT_FEEDBACK_HPP_
#define FDT_FEEDBACK_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fdt/grid/state.hpp"
#include "fdt/task.hpp"

namespace fdt::feedback {

inline constexpr const char* kNoFeedbackText = "No feedback available.";
inline constexpr int kTemplateVersion = 1;

enum class FeedbackKind : std::uint8_t { rule = 0, task = 1, none = 2 };

struct FeedbackEvent {
  FeedbackKind kind = FeedbackKind::none;
  std::string text = kNoFeedbackText;
  std::string template_id = "none";
  std::map<std::string, std::string> slots;
};

struct TemplateDef {
  std::string id;
  std::string text;
};

// All templates (17 rule rows, 5 task rows, the no-feedback constant),
// in table order.
const std::vector<TemplateDef>& template_table();
const std::string& template_text(const std::string& id);
std::string render_template(const std::string& id,
                            const std::map<std::string, std::string>& slots);

// Matches the unique rule row violated by taking `action` in `pre`.
// Returns nothing when the action is legal.
std::optional<FeedbackEvent> rule_feedback(const grid::EnvState& pre, grid::Action action);

// Emits the task row for the tracker's current goal condition when the
// transition newly satisfies it. Does not advance the tracker.
std::optional<FeedbackEvent> task_feedback(const task::SubGoalTracker& tracker,
                                           const grid::EnvState& pre, grid::Action action,
                                           const grid::EnvState& post);

// Task event if present, else rule event, else the no-feedback constant.
FeedbackEvent feedback_for_step(const task::SubGoalTracker& tracker, const grid::EnvState& pre,
                                grid::Action action, const grid::EnvState& post);

// Kind of a rendered feedback string, recovered from its template prefix.
FeedbackKind classify_feedback_text(const std::string& text);

// Number of rule rows matching (pre, action); the rows are constructed to be
// mutually exclusive, so this is 0 or 1.
int count_matching_rule_rows(const grid::EnvState& pre, grid::Action action);

struct ClosureVocab {
  std::vector<std::string> goal_descriptions;  // rendered non-door descriptors
  std::vector<std::string> door_descriptions;  // rendered door descriptors
  std::vector<grid::Kind> portable_kinds;
  std::vector<grid::Color> colors;
  bool include_door_rows = false;
};

// Every feedback string reachable under the vocabulary: templates crossed
// with their slot fillings, plus the no-feedback constant.
std::vector<std::string> enumerate_feedback_strings(const ClosureVocab& vocab);

}  // namespace fdt::feedback

#endif  // FDT_FEEDBACK_HPP_
