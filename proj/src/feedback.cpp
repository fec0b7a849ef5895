#include "fdt/feedback.hpp"

#include <array>
#include <functional>
#include <stdexcept>

namespace fdt::feedback {

using grid::Action;
using grid::Cell;
using grid::DoorState;
using grid::EnvState;
using grid::Kind;

namespace {

const std::vector<TemplateDef>& make_table() {
  static const std::vector<TemplateDef> kTable = {
      {"rule.forward.wall",
       "Not a good idea! You can't move forward while you're facing the wall."},
      {"rule.forward.object",
       "Not a good idea! You can't move forward here as there's a {object} blocking the way."},
      {"rule.forward.closed_door",
       "Not a good idea! You can't move forward here as the door in front of you is closed."},
      {"rule.forward.locked_door",
       "Not a good idea! You can't move forward here as the door in front of you is locked."},
      {"rule.pickup.wall", "Not a good idea! You can't pick up the wall."},
      {"rule.pickup.empty",
       "Not a good idea! There's nothing in front of you, and you can't pick up empty space."},
      {"rule.pickup.door", "Not a good idea! You can't pick up doors."},
      {"rule.pickup.carrying",
       "Not a good idea! You can't pick up another object while you're already carrying one."},
      {"rule.drop.wall", "Don't do that! You can't drop an object while you're facing the wall."},
      {"rule.drop.object",
       "Don't do that! You can't drop an object on top of another object, and there's already a "
       "{object type} in front of you."},
      {"rule.drop.door", "Don't do that! You can't drop an object while you're facing a door."},
      {"rule.drop.not_carrying",
       "Don't do that! You're not carrying any object so dropping has no effect."},
      {"rule.toggle.wall", "That won't work here. You can't open the wall."},
      {"rule.toggle.object", "That won't work here. You can't open {object type}s."},
      {"rule.toggle.empty",
       "That won't work. There's nothing in front of you, and you can't open empty space."},
      {"rule.toggle.locked_no_key",
       "That won't work here. You can't open a locked door without a key of the same color as "
       "the door, and you're not carrying any key."},
      {"rule.toggle.locked_wrong_key",
       "That won't work here. You can't open a locked door without a key of the same color as "
       "the door. You're carrying a {key color} key, but the door in front of you is {door "
       "color}."},
      {"task.go_to",
       "Fantastic! You've completed {a part of }your task by going to {goal object "
       "description}."},
      {"task.go_next_to",
       "That's right! You've completed {a part of }your task by going next to {goal object "
       "description}."},
      {"task.open",
       "That's correct! You've completed {a part of }your task by opening {goal door "
       "description}."},
      {"task.pick_up",
       "Great job! You've completed {a part of }your task by picking up {goal object "
       "description}."},
      {"task.put_next",
       "That's right! You've completed {a part of }your task by going next to {goal object "
       "description}."},
      {"none", kNoFeedbackText},
  };
  return kTable;
}

// Predicates over the cell in front of the agent and the carried object.
struct RuleRow {
  Action action;
  std::function<bool(const EnvState&, const Cell&)> matches;
  const char* template_id;
  // Fills row-specific slots from the pre-state.
  std::function<void(const EnvState&, const Cell&, std::map<std::string, std::string>&)> fill;
};

bool is_non_door_object(const Cell& c) { return c.has_object() && !c.obj.is_door(); }
bool is_door(const Cell& c) { return c.has_object() && c.obj.is_door(); }
bool door_in(const Cell& c, DoorState s) { return is_door(c) && c.obj.door_state == s; }

void no_slots(const EnvState&, const Cell&, std::map<std::string, std::string>&) {}

const std::vector<RuleRow>& rule_rows() {
  static const std::vector<RuleRow> kRows = {
      // forward
      {Action::forward, [](const EnvState&, const Cell& f) { return f.is_wall(); },
       "rule.forward.wall", no_slots},
      {Action::forward, [](const EnvState&, const Cell& f) { return is_non_door_object(f); },
       "rule.forward.object",
       [](const EnvState&, const Cell& f, auto& slots) {
         slots["object"] = std::string(grid::kind_name(f.obj.kind));
       }},
      {Action::forward,
       [](const EnvState&, const Cell& f) { return door_in(f, DoorState::closed); },
       "rule.forward.closed_door", no_slots},
      {Action::forward,
       [](const EnvState&, const Cell& f) { return door_in(f, DoorState::locked); },
       "rule.forward.locked_door", no_slots},
      // pickup
      {Action::pickup, [](const EnvState&, const Cell& f) { return f.is_wall(); },
       "rule.pickup.wall", no_slots},
      {Action::pickup, [](const EnvState&, const Cell& f) { return f.is_empty(); },
       "rule.pickup.empty", no_slots},
      {Action::pickup, [](const EnvState&, const Cell& f) { return is_door(f); },
       "rule.pickup.door", no_slots},
      {Action::pickup,
       [](const EnvState& s, const Cell& f) {
         return is_non_door_object(f) && s.carrying.has_value();
       },
       "rule.pickup.carrying", no_slots},
      // drop
      {Action::drop,
       [](const EnvState& s, const Cell& f) { return s.carrying.has_value() && f.is_wall(); },
       "rule.drop.wall", no_slots},
      {Action::drop,
       [](const EnvState& s, const Cell& f) {
         return s.carrying.has_value() && is_non_door_object(f);
       },
       "rule.drop.object",
       [](const EnvState&, const Cell& f, auto& slots) {
         slots["object type"] = std::string(grid::kind_name(f.obj.kind));
       }},
      {Action::drop,
       [](const EnvState& s, const Cell& f) { return s.carrying.has_value() && is_door(f); },
       "rule.drop.door", no_slots},
      {Action::drop, [](const EnvState& s, const Cell&) { return !s.carrying.has_value(); },
       "rule.drop.not_carrying", no_slots},
      // toggle
      {Action::toggle, [](const EnvState&, const Cell& f) { return f.is_wall(); },
       "rule.toggle.wall", no_slots},
      {Action::toggle,
       [](const EnvState&, const Cell& f) {
         return is_non_door_object(f) && f.obj.kind != Kind::box;
       },
       "rule.toggle.object",
       [](const EnvState&, const Cell& f, auto& slots) {
         slots["object type"] = std::string(grid::kind_name(f.obj.kind));
       }},
      {Action::toggle, [](const EnvState&, const Cell& f) { return f.is_empty(); },
       "rule.toggle.empty", no_slots},
      {Action::toggle,
       [](const EnvState& s, const Cell& f) {
         return door_in(f, DoorState::locked) &&
                !(s.carrying && s.carrying->kind == Kind::key);
       },
       "rule.toggle.locked_no_key", no_slots},
      {Action::toggle,
       [](const EnvState& s, const Cell& f) {
         return door_in(f, DoorState::locked) && s.carrying &&
                s.carrying->kind == Kind::key && s.carrying->color != f.obj.color;
       },
       "rule.toggle.locked_wrong_key",
       [](const EnvState& s, const Cell& f, auto& slots) {
         slots["key color"] = std::string(grid::color_name(s.carrying->color));
         slots["door color"] = std::string(grid::color_name(f.obj.color));
       }},
  };
  return kRows;
}

const char* task_template_id(task::SubGoalKind kind) {
  switch (kind) {
    case task::SubGoalKind::go_to: return "task.go_to";
    case task::SubGoalKind::go_next_to: return "task.go_next_to";
    case task::SubGoalKind::pick_up: return "task.pick_up";
    case task::SubGoalKind::open: return "task.open";
    case task::SubGoalKind::put_next: return "task.put_next";
  }
  return "none";
}

}  // namespace

const std::vector<TemplateDef>& template_table() { return make_table(); }

const std::string& template_text(const std::string& id) {
  for (const TemplateDef& t : template_table()) {
    if (t.id == id) return t.text;
  }
  throw std::invalid_argument("unknown feedback template: " + id);
}

std::string render_template(const std::string& id,
                            const std::map<std::string, std::string>& slots) {
  const std::string& pattern = template_text(id);
  std::string out;
  out.reserve(pattern.size() + 16);
  for (std::size_t i = 0; i < pattern.size();) {
    if (pattern[i] == '{') {
      const std::size_t close = pattern.find('}', i);
      if (close == std::string::npos) throw std::logic_error("unterminated slot in " + id);
      const std::string name = pattern.substr(i + 1, close - i - 1);
      const auto it = slots.find(name);
      if (it == slots.end()) throw std::invalid_argument("missing slot {" + name + "} for " + id);
      out += it->second;
      i = close + 1;
    } else {
      out.push_back(pattern[i]);
      ++i;
    }
  }
  return out;
}

std::optional<FeedbackEvent> rule_feedback(const EnvState& pre, Action action) {
  const grid::Pos fp = pre.front_pos();
  const Cell front = pre.in_bounds(fp) ? pre.at(fp) : Cell::make_wall();
  for (const RuleRow& row : rule_rows()) {
    if (row.action != action || !row.matches(pre, front)) continue;
    FeedbackEvent ev;
    ev.kind = FeedbackKind::rule;
    ev.template_id = row.template_id;
    row.fill(pre, front, ev.slots);
    ev.text = render_template(ev.template_id, ev.slots);
    return ev;
  }
  return std::nullopt;
}

int count_matching_rule_rows(const EnvState& pre, Action action) {
  const grid::Pos fp = pre.front_pos();
  const Cell front = pre.in_bounds(fp) ? pre.at(fp) : Cell::make_wall();
  int n = 0;
  for (const RuleRow& row : rule_rows()) {
    if (row.action == action && row.matches(pre, front)) ++n;
  }
  return n;
}

std::optional<FeedbackEvent> task_feedback(const task::SubGoalTracker& tracker,
                                           const EnvState& pre, Action action,
                                           const EnvState& post) {
  if (tracker.complete()) return std::nullopt;
  const task::SubGoal& sg = tracker.current();
  if (!task::subgoal_satisfied_by(sg, pre, action, post)) return std::nullopt;

  FeedbackEvent ev;
  ev.kind = FeedbackKind::task;
  ev.template_id = task_template_id(sg.kind);
  ev.slots["a part of "] = sg.is_final ? "" : "a part of ";
  // PutNext reports the fixed goal the moved object ended up next to.
  const lang::ObjectDescriptor& desc =
      sg.kind == task::SubGoalKind::put_next ? *sg.fixed_target : sg.target;
  const char* slot =
      sg.kind == task::SubGoalKind::open ? "goal door description" : "goal object description";
  ev.slots[slot] = desc.render();
  ev.text = render_template(ev.template_id, ev.slots);
  return ev;
}

FeedbackEvent feedback_for_step(const task::SubGoalTracker& tracker, const EnvState& pre,
                                Action action, const EnvState& post) {
  if (auto ev = task_feedback(tracker, pre, action, post)) return *ev;
  if (auto ev = rule_feedback(pre, action)) return *ev;
  return FeedbackEvent{};
}

FeedbackKind classify_feedback_text(const std::string& text) {
  if (text == kNoFeedbackText) return FeedbackKind::none;
  for (const TemplateDef& t : template_table()) {
    if (t.id == "none") continue;
    const std::size_t brace = t.text.find('{');
    const std::string prefix = brace == std::string::npos ? t.text : t.text.substr(0, brace);
    if (text.compare(0, prefix.size(), prefix) == 0) {
      return t.id.compare(0, 4, "rule") == 0 ? FeedbackKind::rule : FeedbackKind::task;
    }
  }
  throw std::invalid_argument("string is not a known feedback template: " + text);
}

std::vector<std::string> enumerate_feedback_strings(const ClosureVocab& vocab) {
  std::vector<std::string> out;
  out.emplace_back(kNoFeedbackText);

  auto add = [&out](const std::string& id, const std::map<std::string, std::string>& slots) {
    out.push_back(render_template(id, slots));
  };

  add("rule.forward.wall", {});
  for (Kind k : vocab.portable_kinds) {
    add("rule.forward.object", {{"object", std::string(grid::kind_name(k))}});
    add("rule.drop.object", {{"object type", std::string(grid::kind_name(k))}});
    if (k != Kind::box) {
      add("rule.toggle.object", {{"object type", std::string(grid::kind_name(k))}});
    }
  }
  add("rule.pickup.wall", {});
  add("rule.pickup.empty", {});
  add("rule.pickup.carrying", {});
  add("rule.drop.wall", {});
  add("rule.drop.not_carrying", {});
  add("rule.toggle.wall", {});
  add("rule.toggle.empty", {});
  if (vocab.include_door_rows) {
    add("rule.forward.closed_door", {});
    add("rule.forward.locked_door", {});
    add("rule.pickup.door", {});
    add("rule.drop.door", {});
    add("rule.toggle.locked_no_key", {});
    for (grid::Color key : vocab.colors) {
      for (grid::Color door : vocab.colors) {
        if (key == door) continue;
        add("rule.toggle.locked_wrong_key",
            {{"key color", std::string(grid::color_name(key))},
             {"door color", std::string(grid::color_name(door))}});
      }
    }
  }

  static const char* kParts[2] = {"", "a part of "};
  for (const char* part : kParts) {
    for (const std::string& desc : vocab.goal_descriptions) {
      add("task.go_to", {{"a part of ", part}, {"goal object description", desc}});
      add("task.go_next_to", {{"a part of ", part}, {"goal object description", desc}});
      add("task.pick_up", {{"a part of ", part}, {"goal object description", desc}});
      add("task.put_next", {{"a part of ", part}, {"goal object description", desc}});
    }
    for (const std::string& desc : vocab.door_descriptions) {
      add("task.go_to", {{"a part of ", part}, {"goal object description", desc}});
      add("task.open", {{"a part of ", part}, {"goal door description", desc}});
    }
  }
  return out;
}

}  // namespace fdt::feedback
