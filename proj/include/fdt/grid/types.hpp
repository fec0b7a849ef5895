#ifndef FDT_GRID_TYPES_HPP_
#define FDT_GRID_TYPES_HPP_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fdt::grid {

enum class Kind : std::uint8_t { ball = 0, box = 1, key = 2, door = 3 };
enum class Color : std::uint8_t { blue = 0, green = 1, grey = 2, red = 3, purple = 4, yellow = 5 };
enum class DoorState : std::uint8_t { open = 0, closed = 1, locked = 2 };

inline constexpr int kKindCount = 4;
inline constexpr int kColorCount = 6;

// Action ids are part of the dataset file format; do not reorder.
enum class Action : std::uint8_t {
  turn_left = 0,
  turn_right = 1,
  forward = 2,
  pickup = 3,
  drop = 4,
  toggle = 5,
};
inline constexpr int kActionCount = 6;

enum class Direction : std::uint8_t { north = 0, east = 1, south = 2, west = 3 };

struct Pos {
  int x = 0;
  int y = 0;
  bool operator==(const Pos&) const = default;
};

inline Pos dir_vec(Direction d) {
  switch (d) {
    case Direction::north: return {0, -1};
    case Direction::east: return {1, 0};
    case Direction::south: return {0, 1};
    case Direction::west: return {-1, 0};
  }
  return {0, 0};
}

inline Direction rotate_left(Direction d) {
  return static_cast<Direction>((static_cast<int>(d) + 3) % 4);
}
inline Direction rotate_right(Direction d) {
  return static_cast<Direction>((static_cast<int>(d) + 1) % 4);
}

struct WorldObject {
  Kind kind = Kind::ball;
  Color color = Color::blue;
  DoorState door_state = DoorState::open;  // meaningful iff kind == door

  bool is_door() const { return kind == Kind::door; }
  bool operator==(const WorldObject& o) const {
    if (kind != o.kind || color != o.color) return false;
    return kind != Kind::door || door_state == o.door_state;
  }
};

enum class CellType : std::uint8_t { empty = 0, wall = 1, object = 2 };

struct Cell {
  CellType type = CellType::empty;
  WorldObject obj;  // meaningful iff type == object

  static Cell make_wall() { return Cell{CellType::wall, {}}; }
  static Cell make_object(WorldObject o) { return Cell{CellType::object, o}; }
  bool is_empty() const { return type == CellType::empty; }
  bool is_wall() const { return type == CellType::wall; }
  bool has_object() const { return type == CellType::object; }
  bool is_open_door() const {
    return has_object() && obj.is_door() && obj.door_state == DoorState::open;
  }
};

std::string_view kind_name(Kind k);
std::string_view color_name(Color c);
std::string_view action_name(Action a);
Kind kind_from_name(std::string_view s);
Color color_from_name(std::string_view s);

}  // namespace fdt::grid

#endif  // FDT_GRID_TYPES_HPP_
