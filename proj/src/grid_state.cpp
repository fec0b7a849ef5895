#include "fdt/grid/state.hpp"

#include <sstream>

namespace fdt::grid {

std::string_view kind_name(Kind k) {
  switch (k) {
    case Kind::ball: return "ball";
    case Kind::box: return "box";
    case Kind::key: return "key";
    case Kind::door: return "door";
  }
  return "?";
}

std::string_view color_name(Color c) {
  switch (c) {
    case Color::blue: return "blue";
    case Color::green: return "green";
    case Color::grey: return "grey";
    case Color::red: return "red";
    case Color::purple: return "purple";
    case Color::yellow: return "yellow";
  }
  return "?";
}

std::string_view action_name(Action a) {
  switch (a) {
    case Action::turn_left: return "turn_left";
    case Action::turn_right: return "turn_right";
    case Action::forward: return "forward";
    case Action::pickup: return "pickup";
    case Action::drop: return "drop";
    case Action::toggle: return "toggle";
  }
  return "?";
}

Kind kind_from_name(std::string_view s) {
  if (s == "ball") return Kind::ball;
  if (s == "box") return Kind::box;
  if (s == "key") return Kind::key;
  if (s == "door") return Kind::door;
  throw std::invalid_argument("unknown object kind: " + std::string(s));
}

Color color_from_name(std::string_view s) {
  if (s == "blue") return Color::blue;
  if (s == "green") return Color::green;
  if (s == "grey") return Color::grey;
  if (s == "red") return Color::red;
  if (s == "purple") return Color::purple;
  if (s == "yellow") return Color::yellow;
  throw std::invalid_argument("unknown color: " + std::string(s));
}

std::string EnvState::serialize_world() const {
  std::string out;
  out.reserve(static_cast<std::size_t>(width * height) * 3 + 32);
  auto put_i32 = [&out](int v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put_i32(width);
  put_i32(height);
  for (const Cell& c : cells) {
    out.push_back(static_cast<char>(c.type));
    if (c.has_object()) {
      out.push_back(static_cast<char>(c.obj.kind));
      out.push_back(static_cast<char>(c.obj.color));
      out.push_back(static_cast<char>(c.obj.is_door() ? static_cast<int>(c.obj.door_state) : 0));
    }
  }
  put_i32(agent_pos.x);
  put_i32(agent_pos.y);
  out.push_back(static_cast<char>(agent_dir));
  out.push_back(carrying ? 1 : 0);
  if (carrying) {
    out.push_back(static_cast<char>(carrying->kind));
    out.push_back(static_cast<char>(carrying->color));
  }
  return out;
}

std::string EnvState::serialize() const {
  std::string out = serialize_world();
  auto put_i32 = [&out](int v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  auto put_u64 = [&out](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  };
  put_i32(step_count);
  put_i32(max_steps);
  put_u64(rng_state);
  put_i32(start_pos.x);
  put_i32(start_pos.y);
  out.push_back(static_cast<char>(start_dir));
  return out;
}

bool apply_action(EnvState& state, Action action) {
  switch (action) {
    case Action::turn_left:
      state.agent_dir = rotate_left(state.agent_dir);
      return true;
    case Action::turn_right:
      state.agent_dir = rotate_right(state.agent_dir);
      return true;
    case Action::forward: {
      const Pos target = state.front_pos();
      if (!state.in_bounds(target) || blocks_entry(state.at(target))) return false;
      state.agent_pos = target;
      return true;
    }
    case Action::pickup: {
      const Pos fp = state.front_pos();
      if (!state.in_bounds(fp)) return false;
      const Cell& front = state.at(fp);
      if (!front.has_object() || front.obj.is_door() || state.carrying) return false;
      state.carrying = front.obj;
      state.at(fp) = Cell{};
      return true;
    }
    case Action::drop: {
      const Pos fp = state.front_pos();
      if (!state.carrying || !state.in_bounds(fp) || !state.at(fp).is_empty()) return false;
      state.at(fp) = Cell::make_object(*state.carrying);
      state.carrying.reset();
      return true;
    }
    case Action::toggle: {
      const Pos fp = state.front_pos();
      if (!state.in_bounds(fp)) return false;
      Cell& front = state.at(fp);
      if (!front.has_object()) return false;
      if (front.obj.is_door()) {
        switch (front.obj.door_state) {
          case DoorState::open:
            front.obj.door_state = DoorState::closed;
            return true;
          case DoorState::closed:
            front.obj.door_state = DoorState::open;
            return true;
          case DoorState::locked:
            if (state.carrying && state.carrying->kind == Kind::key &&
                state.carrying->color == front.obj.color) {
              front.obj.door_state = DoorState::open;
              return true;
            }
            return false;
        }
        return false;
      }
      if (front.obj.kind == Kind::box) {
        // Opening a box destroys it (boxes are empty here).
        front = Cell{};
        return true;
      }
      return false;
    }
  }
  return false;
}

}  // namespace fdt::grid
