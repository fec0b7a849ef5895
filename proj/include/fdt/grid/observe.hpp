#ifndef FDT_GRID_OBSERVE_HPP_
#define FDT_GRID_OBSERVE_HPP_

#include <array>
#include <cstdint>

#include "fdt/grid/state.hpp"

namespace fdt::grid {

inline constexpr int kViewSize = 7;
inline constexpr int kViewChannels = 3;
inline constexpr int kViewAgentX = 3;
inline constexpr int kViewAgentY = 6;

// Observation channel encodings. 0 is reserved for "unseen" / "none".
inline constexpr int kObsUnseen = 0;
inline constexpr int kObsEmpty = 1;
inline constexpr int kObsWall = 2;
inline int obs_kind_id(Kind k) { return 3 + static_cast<int>(k); }
inline int obs_color_id(Color c) { return 1 + static_cast<int>(c); }
inline int obs_door_id(DoorState s) { return 1 + static_cast<int>(s); }

// 7x7x3 egocentric view, agent at bottom-center facing up.
// Channels: object-kind id, color id, door-state id.
struct Observation {
  std::array<std::int8_t, kViewSize * kViewSize * kViewChannels> v{};

  std::int8_t& at(int x, int y, int c) {
    return v[static_cast<std::size_t>((y * kViewSize + x) * kViewChannels + c)];
  }
  std::int8_t at(int x, int y, int c) const {
    return v[static_cast<std::size_t>((y * kViewSize + x) * kViewChannels + c)];
  }
  bool operator==(const Observation&) const = default;
};

// True when the open segment between the centers of `from` and `to` crosses
// the interior of no sight-blocking cell (walls, closed/locked doors). The
// endpoints' own cells never block. Exact integer arithmetic.
bool line_of_sight(const EnvState& state, Pos from, Pos to);

Observation render_observation(const EnvState& state);

// World tile under a view coordinate; may be out of bounds.
Pos view_to_world(const EnvState& state, int vx, int vy);

}  // namespace fdt::grid

#endif  // FDT_GRID_OBSERVE_HPP_
