#include "fdt/levels.hpp"

#include <algorithm>
#include <deque>

#include "fdt/task.hpp"
#include "fdt/util/errors.hpp"

namespace fdt::levels {

using grid::Cell;
using grid::Color;
using grid::Direction;
using grid::DoorState;
using grid::EnvState;
using grid::Kind;
using grid::Pos;
using grid::WorldObject;
using lang::Clause;
using lang::Loc;
using lang::MissionSpec;
using lang::ObjectDescriptor;
using lang::Verb;
using util::Rng;

namespace {

constexpr Kind kPortableKinds[3] = {Kind::ball, Kind::box, Kind::key};
constexpr Loc kAllLocs[4] = {Loc::on_your_left, Loc::on_your_right, Loc::above, Loc::below};

struct PlacedObject {
  WorldObject obj;
  Pos pos;
};

std::vector<PlacedObject> world_objects(const EnvState& state) {
  std::vector<PlacedObject> objs;
  for (int y = 0; y < state.height; ++y) {
    for (int x = 0; x < state.width; ++x) {
      const Cell& c = state.at({x, y});
      if (c.has_object()) objs.push_back({c.obj, {x, y}});
    }
  }
  return objs;
}

std::vector<Pos> empty_cells(const EnvState& state) {
  std::vector<Pos> cells;
  for (int y = 0; y < state.height; ++y) {
    for (int x = 0; x < state.width; ++x) {
      const Pos p{x, y};
      if (state.at(p).is_empty() && !(p == state.agent_pos)) cells.push_back(p);
    }
  }
  return cells;
}

EnvState build_layout(const LevelConfig& config, Rng& rng) {
  EnvState st;
  st.width = config.grid_width();
  st.height = config.grid_height();
  st.cells.assign(static_cast<std::size_t>(st.width * st.height), Cell{});
  st.max_steps = config.max_steps;

  const int span = config.room_size - 1;
  auto is_boundary = [&](int v, int count) {
    if (v == 0 || v == count * span) return true;
    return v % span == 0;
  };
  for (int y = 0; y < st.height; ++y) {
    for (int x = 0; x < st.width; ++x) {
      if (is_boundary(x, config.room_cols) || is_boundary(y, config.room_rows)) {
        st.at({x, y}) = Cell::make_wall();
      }
    }
  }

  if (config.layout == Layout::maze) {
    auto add_door = [&](Pos p) {
      WorldObject door;
      door.kind = Kind::door;
      door.color = static_cast<Color>(rng.below_int(grid::kColorCount));
      door.door_state = rng.flip() ? DoorState::open : DoorState::closed;
      st.at(p) = Cell::make_object(door);
    };
    // One door in every shared wall, at a random offset.
    for (int c = 1; c < config.room_cols; ++c) {
      for (int r = 0; r < config.room_rows; ++r) {
        const int x = c * span;
        const int y = r * span + 1 + rng.below_int(span - 1);
        add_door({x, y});
      }
    }
    for (int r = 1; r < config.room_rows; ++r) {
      for (int c = 0; c < config.room_cols; ++c) {
        const int y = r * span;
        const int x = c * span + 1 + rng.below_int(span - 1);
        add_door({x, y});
      }
    }
  }
  return st;
}

void place_agent(EnvState& st, Rng& rng) {
  std::vector<Pos> cells;
  for (int y = 0; y < st.height; ++y) {
    for (int x = 0; x < st.width; ++x) {
      if (st.at({x, y}).is_empty()) cells.push_back({x, y});
    }
  }
  st.agent_pos = cells[rng.below(cells.size())];
  st.agent_dir = static_cast<Direction>(rng.below_int(4));
  st.start_pos = st.agent_pos;
  st.start_dir = st.agent_dir;
  st.step_count = 0;
}

void place_objects(EnvState& st, int count, Rng& rng) {
  std::vector<Pos> cells = empty_cells(st);
  for (int i = 0; i < count && !cells.empty(); ++i) {
    const std::size_t idx = rng.below(cells.size());
    WorldObject obj;
    obj.kind = kPortableKinds[rng.below_int(3)];
    obj.color = static_cast<Color>(rng.below_int(grid::kColorCount));
    st.at(cells[idx]) = Cell::make_object(obj);
    cells.erase(cells.begin() + static_cast<std::ptrdiff_t>(idx));
  }
}

int count_matches(const EnvState& st, const ObjectDescriptor& desc) {
  int n = 0;
  for (const PlacedObject& o : world_objects(st)) {
    if (task::descriptor_matches(desc, o.obj, o.pos, st)) ++n;
  }
  return n;
}

std::vector<Loc> satisfied_axes(const EnvState& st, const PlacedObject& o) {
  std::vector<Loc> axes;
  for (Loc l : kAllLocs) {
    ObjectDescriptor d{true, o.obj.color, o.obj.kind, l};
    if (task::descriptor_matches(d, o.obj, o.pos, st)) axes.push_back(l);
  }
  return axes;
}

// Builds the descriptor for a chosen goal instance; picks a location axis
// when the level requires one. Returns nullopt when no axis fits.
std::optional<ObjectDescriptor> make_descriptor(const EnvState& st, const PlacedObject& o,
                                                bool with_loc, Rng& rng) {
  ObjectDescriptor d{true, o.obj.color, o.obj.kind, std::nullopt};
  if (with_loc) {
    const std::vector<Loc> axes = satisfied_axes(st, o);
    if (axes.empty()) return std::nullopt;
    d.loc = axes[rng.below(axes.size())];
  }
  d.definite = count_matches(st, d) == 1;
  return d;
}

Verb sample_verb(LevelName name, Rng& rng) {
  switch (name) {
    case LevelName::GoToObj:
    case LevelName::GoToLocal:
      return Verb::go_to;
    case LevelName::PickupLoc:
    case LevelName::Pickup:
      return Verb::pick_up;
    case LevelName::PutNextLocal:
    case LevelName::PutNext:
      return Verb::put_next;
    case LevelName::Synth:
    case LevelName::SynthLoc: {
      constexpr Verb kVerbs[4] = {Verb::go_to, Verb::pick_up, Verb::open, Verb::put_next};
      return kVerbs[rng.below_int(4)];
    }
  }
  return Verb::go_to;
}

std::optional<MissionSpec> sample_mission(const LevelConfig& config, EnvState& st, Rng& rng) {
  const Verb verb = sample_verb(config.name, rng);
  const bool with_loc = uses_loc_language(config.name);
  const int goals = verb == Verb::put_next ? 2 : verb == Verb::open ? 0 : 1;
  place_objects(st, config.distractors + goals, rng);

  std::vector<PlacedObject> objs = world_objects(st);
  std::vector<PlacedObject> portable;
  std::vector<PlacedObject> doors;
  for (const PlacedObject& o : objs) {
    (o.obj.is_door() ? doors : portable).push_back(o);
  }

  auto pick = [&rng](const std::vector<PlacedObject>& pool) {
    return pool[rng.below(pool.size())];
  };

  Clause clause;
  clause.verb = verb;
  switch (verb) {
    case Verb::go_to: {
      std::vector<PlacedObject> pool = portable;
      pool.insert(pool.end(), doors.begin(), doors.end());
      if (pool.empty()) return std::nullopt;
      const auto d = make_descriptor(st, pick(pool), with_loc, rng);
      if (!d) return std::nullopt;
      clause.target = *d;
      break;
    }
    case Verb::pick_up: {
      if (portable.empty()) return std::nullopt;
      const auto d = make_descriptor(st, pick(portable), with_loc, rng);
      if (!d) return std::nullopt;
      clause.target = *d;
      break;
    }
    case Verb::open: {
      if (doors.empty()) return std::nullopt;
      const auto d = make_descriptor(st, pick(doors), with_loc, rng);
      if (!d) return std::nullopt;
      clause.target = *d;
      break;
    }
    case Verb::put_next: {
      if (portable.empty()) return std::nullopt;
      const PlacedObject a = pick(portable);
      std::vector<PlacedObject> others;
      for (const PlacedObject& o : portable) {
        if (o.obj.kind != a.obj.kind || o.obj.color != a.obj.color) others.push_back(o);
      }
      if (others.empty()) return std::nullopt;
      const PlacedObject b = pick(others);
      const auto da = make_descriptor(st, a, with_loc, rng);
      if (!da) return std::nullopt;
      const auto db = make_descriptor(st, b, false, rng);
      clause.target = *da;
      clause.fixed_target = *db;
      break;
    }
  }
  return lang::make_mission(clause);
}

std::vector<char> reachable_map(const EnvState& st) {
  std::vector<char> reach(static_cast<std::size_t>(st.width * st.height), 0);
  auto idx = [&st](Pos p) { return static_cast<std::size_t>(p.y * st.width + p.x); };
  auto passable = [&st](Pos p) {
    const Cell& c = st.at(p);
    if (c.is_empty()) return true;
    // Closed doors can be toggled open on approach; locked ones cannot.
    return c.has_object() && c.obj.is_door() && c.obj.door_state != DoorState::locked;
  };
  std::deque<Pos> queue{st.agent_pos};
  reach[idx(st.agent_pos)] = 1;
  while (!queue.empty()) {
    const Pos p = queue.front();
    queue.pop_front();
    static constexpr Pos kOffsets[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (const Pos& d : kOffsets) {
      const Pos n{p.x + d.x, p.y + d.y};
      if (!st.in_bounds(n) || reach[idx(n)] || !passable(n)) continue;
      reach[idx(n)] = 1;
      queue.push_back(n);
    }
  }
  return reach;
}

}  // namespace

std::string_view level_name_str(LevelName name) {
  switch (name) {
    case LevelName::GoToObj: return "GoToObj";
    case LevelName::GoToLocal: return "GoToLocal";
    case LevelName::PickupLoc: return "PickupLoc";
    case LevelName::PutNextLocal: return "PutNextLocal";
    case LevelName::Pickup: return "Pickup";
    case LevelName::PutNext: return "PutNext";
    case LevelName::Synth: return "Synth";
    case LevelName::SynthLoc: return "SynthLoc";
  }
  return "?";
}

LevelName level_from_string(std::string_view s) {
  for (LevelName name : all_levels()) {
    if (level_name_str(name) == s) return name;
  }
  throw ConfigError("unknown level name: " + std::string(s));
}

const std::vector<LevelName>& all_levels() {
  static const std::vector<LevelName> kLevels = {
      LevelName::GoToObj, LevelName::GoToLocal, LevelName::PickupLoc, LevelName::PutNextLocal,
      LevelName::Pickup,  LevelName::PutNext,   LevelName::Synth,     LevelName::SynthLoc};
  return kLevels;
}

LevelConfig default_config(LevelName name) {
  LevelConfig c;
  c.name = name;
  switch (name) {
    case LevelName::GoToObj:
      c.max_steps = 64;
      c.distractors = 0;
      break;
    case LevelName::GoToLocal:
      c.max_steps = 64;
      c.distractors = 7;
      break;
    case LevelName::PickupLoc:
      c.max_steps = 64;
      c.distractors = 7;
      break;
    case LevelName::PutNextLocal:
      c.max_steps = 128;
      c.distractors = 6;
      break;
    case LevelName::Pickup:
      c.max_steps = 576;
      c.distractors = 17;
      break;
    case LevelName::PutNext:
      c.max_steps = 1152;
      c.distractors = 16;
      break;
    case LevelName::Synth:
      c.max_steps = 1152;
      c.distractors = 16;
      break;
    case LevelName::SynthLoc:
      c.max_steps = 1152;
      c.distractors = 16;
      break;
  }
  const bool maze = name == LevelName::Pickup || name == LevelName::PutNext ||
                    name == LevelName::Synth || name == LevelName::SynthLoc;
  c.layout = maze ? Layout::maze : Layout::single_room;
  c.room_rows = maze ? 3 : 1;
  c.room_cols = maze ? 3 : 1;
  c.room_size = 8;
  c.dataset_instances = maze ? 1280 : 128;
  c.trajectories_per_instance = 10;
  return c;
}

void validate_config(const LevelConfig& config) {
  if (config.room_size < 4) throw ConfigError("room_size must be at least 4");
  if (config.room_rows < 1 || config.room_cols < 1) {
    throw ConfigError("room grid must be at least 1x1");
  }
  if (config.max_steps < 1) throw ConfigError("max_steps must be positive");
  if (config.distractors < 0) throw ConfigError("distractors must be non-negative");
  const int interior = config.room_rows * config.room_cols * (config.room_size - 2) *
                       (config.room_size - 2);
  if (config.distractors + 3 > interior) {
    throw ConfigError("not enough interior cells for the requested objects");
  }
  if ((config.layout == Layout::maze) != (config.room_rows * config.room_cols > 1)) {
    throw ConfigError("layout kind does not match the room grid");
  }
}

bool uses_loc_language(LevelName name) {
  return name == LevelName::PickupLoc || name == LevelName::SynthLoc;
}

bool has_put_next(LevelName name) {
  return name == LevelName::PutNextLocal || name == LevelName::PutNext ||
         name == LevelName::Synth || name == LevelName::SynthLoc;
}

bool mission_achievable(const EnvState& st, const MissionSpec& mission) {
  const Clause& clause = mission.clause();
  const std::vector<char> reach = reachable_map(st);
  auto idx = [&st](Pos p) { return static_cast<std::size_t>(p.y * st.width + p.x); };
  auto adj_reachable = [&](Pos p) {
    static constexpr Pos kOffsets[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (const Pos& d : kOffsets) {
      const Pos n{p.x + d.x, p.y + d.y};
      if (st.in_bounds(n) && reach[idx(n)]) return true;
    }
    return false;
  };
  const std::vector<PlacedObject> objs = world_objects(st);

  if (clause.verb != Verb::put_next) {
    for (const PlacedObject& o : objs) {
      if (task::descriptor_matches(clause.target, o.obj, o.pos, st) && adj_reachable(o.pos)) {
        return true;
      }
    }
    return false;
  }

  // put-next: an approachable instance of the move goal, plus a drop cell
  // adjacent to some fixed-goal instance. The drop cell may be the move
  // goal's own cell (it frees up once picked).
  std::vector<PlacedObject> movable;
  for (const PlacedObject& o : objs) {
    if (task::descriptor_matches(clause.target, o.obj, o.pos, st) && adj_reachable(o.pos)) {
      movable.push_back(o);
    }
  }
  if (movable.empty()) return false;
  for (const PlacedObject& b : objs) {
    if (!task::descriptor_matches(*clause.fixed_target, b.obj, b.pos, st)) continue;
    static constexpr Pos kOffsets[4] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    for (const Pos& d : kOffsets) {
      const Pos c{b.pos.x + d.x, b.pos.y + d.y};
      if (!st.in_bounds(c)) continue;
      bool cell_free = st.at(c).is_empty();
      if (!cell_free) {
        for (const PlacedObject& a : movable) {
          if (a.pos == c) {
            cell_free = true;
            break;
          }
        }
      }
      if (!cell_free || !adj_reachable(c)) continue;
      if (clause.target.loc) {
        ObjectDescriptor probe = clause.target;
        WorldObject dummy{probe.kind, probe.color, DoorState::open};
        if (!task::descriptor_matches(probe, dummy, c, st)) continue;
      }
      return true;
    }
  }
  return false;
}

GeneratedLevel generate_level(const LevelConfig& config, std::uint64_t seed) {
  validate_config(config);
  Rng rng = util::child_rng(seed, "level-gen", util::fnv1a(level_name_str(config.name)));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    EnvState st = build_layout(config, rng);
    place_agent(st, rng);
    std::optional<MissionSpec> mission = sample_mission(config, st, rng);
    if (!mission) continue;
    if (!mission_achievable(st, *mission)) continue;
    st.rng_state = rng.state();
    return {config, st, *mission};
  }
  throw std::runtime_error("level generation failed to find an achievable layout");
}

GeneratedLevel generate_level(LevelName name, std::uint64_t seed) {
  return generate_level(default_config(name), seed);
}

std::vector<std::string> enumerate_mission_strings(LevelName name) {
  std::vector<std::string> out;
  const bool with_loc = uses_loc_language(name);

  auto descriptors = [&](bool doors, bool loc) {
    std::vector<ObjectDescriptor> ds;
    for (int art = 0; art < 2; ++art) {
      for (int c = 0; c < grid::kColorCount; ++c) {
        std::vector<Kind> kinds;
        if (doors) {
          kinds = {Kind::door};
        } else {
          kinds = {Kind::ball, Kind::box, Kind::key};
        }
        for (Kind k : kinds) {
          if (loc) {
            for (Loc l : kAllLocs) {
              ds.push_back({art == 0, static_cast<Color>(c), k, l});
            }
          } else {
            ds.push_back({art == 0, static_cast<Color>(c), k, std::nullopt});
          }
        }
      }
    }
    return ds;
  };

  auto add_clause = [&out](Verb v, const ObjectDescriptor& t,
                           const std::optional<ObjectDescriptor>& f = std::nullopt) {
    Clause c{v, t, f};
    out.push_back(c.render());
  };

  const bool synth = name == LevelName::Synth || name == LevelName::SynthLoc;
  const bool wants_goto = name == LevelName::GoToObj || name == LevelName::GoToLocal || synth;
  const bool wants_pickup =
      name == LevelName::PickupLoc || name == LevelName::Pickup || synth;
  const bool wants_putnext = has_put_next(name);

  if (wants_goto) {
    for (const auto& d : descriptors(false, with_loc)) add_clause(Verb::go_to, d);
    if (synth) {
      for (const auto& d : descriptors(true, with_loc)) add_clause(Verb::go_to, d);
    }
  }
  if (wants_pickup) {
    for (const auto& d : descriptors(false, with_loc)) add_clause(Verb::pick_up, d);
  }
  if (synth) {
    for (const auto& d : descriptors(true, with_loc)) add_clause(Verb::open, d);
  }
  if (wants_putnext) {
    for (const auto& a : descriptors(false, with_loc)) {
      for (const auto& b : descriptors(false, false)) {
        add_clause(Verb::put_next, a, b);
      }
    }
  }
  return out;
}

std::vector<std::string> enumerate_goal_descriptions(LevelName name, bool doors) {
  std::vector<std::string> out;
  const bool with_loc = uses_loc_language(name);
  const std::vector<Kind> kinds =
      doors ? std::vector<Kind>{Kind::door} : std::vector<Kind>{Kind::ball, Kind::box, Kind::key};
  for (int art = 0; art < 2; ++art) {
    for (int c = 0; c < grid::kColorCount; ++c) {
      for (Kind k : kinds) {
        ObjectDescriptor base{art == 0, static_cast<Color>(c), k, std::nullopt};
        out.push_back(base.render());
        if (with_loc) {
          for (Loc l : kAllLocs) {
            ObjectDescriptor d = base;
            d.loc = l;
            out.push_back(d.render());
          }
        }
      }
    }
  }
  return out;
}

}  // namespace fdt::levels
