#ifndef FDT_GRID_STATE_HPP_
#define FDT_GRID_STATE_HPP_

#include <optional>
#include <string>
#include <vector>

#include "fdt/grid/types.hpp"

namespace fdt::grid {

// Full world state. Plain value type: copying it snapshots the world.
struct EnvState {
  int width = 0;
  int height = 0;
  std::vector<Cell> cells;
  Pos agent_pos;
  Direction agent_dir = Direction::north;
  std::optional<WorldObject> carrying;
  int step_count = 0;
  int max_steps = 1;
  std::uint64_t rng_state = 0;
  // Start pose is frozen at reset; location language is resolved against it.
  Pos start_pos;
  Direction start_dir = Direction::north;

  bool in_bounds(Pos p) const {
    return p.x >= 0 && p.x < width && p.y >= 0 && p.y < height;
  }
  const Cell& at(Pos p) const { return cells[static_cast<std::size_t>(p.y * width + p.x)]; }
  Cell& at(Pos p) { return cells[static_cast<std::size_t>(p.y * width + p.x)]; }
  Pos front_pos() const {
    const Pos d = dir_vec(agent_dir);
    return {agent_pos.x + d.x, agent_pos.y + d.y};
  }
  const Cell& front_cell() const { return at(front_pos()); }

  // Canonical bytes for grid, agent pose and carried object; step counters
  // and rng excluded. A no-op action leaves this unchanged.
  std::string serialize_world() const;
  // Full canonical serialization including counters and rng state.
  std::string serialize() const;
};

// Applies movement/pickup/drop/toggle semantics. Returns true when the world
// (grid, agent pose, or carried object) changed. Does not touch step_count.
bool apply_action(EnvState& state, Action action);

// True when `cell` blocks the agent from walking onto it.
inline bool blocks_entry(const Cell& cell) {
  if (cell.is_empty()) return false;
  return !cell.is_open_door();
}

}  // namespace fdt::grid

#endif  // FDT_GRID_STATE_HPP_
