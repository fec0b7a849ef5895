#include "fdt/grid/observe.hpp"

#include <algorithm>
#include <cstdlib>

namespace fdt::grid {

namespace {

bool blocks_sight(const Cell& c) {
  if (c.is_wall()) return true;
  return c.has_object() && c.obj.is_door() && c.obj.door_state != DoorState::open;
}

// Exact rational t = num/den with den > 0.
struct Frac {
  long long num;
  long long den;
};

bool frac_less(Frac a, Frac b) { return a.num * b.den < b.num * a.den; }

// Open-interval intersection test between the segment p0 + t*(p1-p0),
// t in [0,1], and the open square (c, c+2) x (cy, cy+2) in doubled coords.
bool segment_hits_open_square(long long p0x, long long p0y, long long p1x, long long p1y,
                              long long cx, long long cy) {
  const long long dx = p1x - p0x;
  const long long dy = p1y - p0y;
  Frac lo{0, 1};
  Frac hi{1, 1};
  auto clip_axis = [&](long long p0, long long d, long long lo_edge, long long hi_edge) -> bool {
    if (d == 0) return p0 > lo_edge && p0 < hi_edge;
    long long n0 = lo_edge - p0;
    long long n1 = hi_edge - p0;
    long long den = d;
    if (den < 0) {
      den = -den;
      n0 = -n0;
      n1 = -n1;
      std::swap(n0, n1);
    }
    const Frac a{n0, den};
    const Frac b{n1, den};
    if (frac_less(lo, a)) lo = a;
    if (frac_less(b, hi)) hi = b;
    return true;
  };
  if (!clip_axis(p0x, dx, cx, cx + 2)) return false;
  if (!clip_axis(p0y, dy, cy, cy + 2)) return false;
  return frac_less(lo, hi);
}

}  // namespace

bool line_of_sight(const EnvState& state, Pos from, Pos to) {
  if (from == to) return true;
  const long long ax = 2LL * from.x + 1, ay = 2LL * from.y + 1;
  const long long tx = 2LL * to.x + 1, ty = 2LL * to.y + 1;
  const int x_lo = std::min(from.x, to.x), x_hi = std::max(from.x, to.x);
  const int y_lo = std::min(from.y, to.y), y_hi = std::max(from.y, to.y);
  for (int y = y_lo; y <= y_hi; ++y) {
    for (int x = x_lo; x <= x_hi; ++x) {
      const Pos p{x, y};
      if (p == from || p == to) continue;
      if (!blocks_sight(state.at(p))) continue;
      if (segment_hits_open_square(ax, ay, tx, ty, 2LL * x, 2LL * y)) return false;
    }
  }
  return true;
}

Pos view_to_world(const EnvState& state, int vx, int vy) {
  const Pos f = dir_vec(state.agent_dir);
  const Pos r = dir_vec(rotate_right(state.agent_dir));
  const int fwd = kViewAgentY - vy;
  const int lat = vx - kViewAgentX;
  return {state.agent_pos.x + f.x * fwd + r.x * lat,
          state.agent_pos.y + f.y * fwd + r.y * lat};
}

Observation render_observation(const EnvState& state) {
  Observation obs;
  for (int vy = 0; vy < kViewSize; ++vy) {
    for (int vx = 0; vx < kViewSize; ++vx) {
      const Pos w = view_to_world(state, vx, vy);
      int kind_id = kObsUnseen;
      int color_id = 0;
      int door_id = 0;
      if (state.in_bounds(w) && line_of_sight(state, state.agent_pos, w)) {
        const bool agent_cell = (w == state.agent_pos);
        if (agent_cell && state.carrying) {
          kind_id = obs_kind_id(state.carrying->kind);
          color_id = obs_color_id(state.carrying->color);
        } else {
          const Cell& c = state.at(w);
          switch (c.type) {
            case CellType::empty:
              kind_id = kObsEmpty;
              break;
            case CellType::wall:
              kind_id = kObsWall;
              color_id = obs_color_id(Color::grey);
              break;
            case CellType::object:
              kind_id = obs_kind_id(c.obj.kind);
              color_id = obs_color_id(c.obj.color);
              if (c.obj.is_door()) door_id = obs_door_id(c.obj.door_state);
              break;
          }
        }
      }
      obs.at(vx, vy, 0) = static_cast<std::int8_t>(kind_id);
      obs.at(vx, vy, 1) = static_cast<std::int8_t>(color_id);
      obs.at(vx, vy, 2) = static_cast<std::int8_t>(door_id);
    }
  }
  return obs;
}

}  // namespace fdt::grid
