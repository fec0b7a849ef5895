#ifndef FDT_LEVELS_HPP_
#define FDT_LEVELS_HPP_

#include <string>
#include <vector>

#include "fdt/grid/state.hpp"
#include "fdt/mission.hpp"
#include "fdt/util/rng.hpp"

namespace fdt::levels {

enum class LevelName : std::uint8_t {
  GoToObj = 0,
  GoToLocal = 1,
  PickupLoc = 2,
  PutNextLocal = 3,
  Pickup = 4,
  PutNext = 5,
  Synth = 6,
  SynthLoc = 7,
};

inline constexpr int kLevelCount = 8;

enum class Layout : std::uint8_t { single_room = 0, maze = 1 };

struct LevelConfig {
  LevelName name = LevelName::GoToObj;
  Layout layout = Layout::single_room;
  int room_size = 8;   // tiles per room side, walls included
  int room_rows = 1;
  int room_cols = 1;
  int max_steps = 64;
  int distractors = 0;  // objects placed beyond those the mission needs
  // Episode budget for dataset generation at full scale.
  int dataset_instances = 128;
  int trajectories_per_instance = 10;

  int grid_width() const { return room_cols * (room_size - 1) + 1; }
  int grid_height() const { return room_rows * (room_size - 1) + 1; }
};

std::string_view level_name_str(LevelName name);
LevelName level_from_string(std::string_view s);
const std::vector<LevelName>& all_levels();

// Table defaults for a level; throws ConfigError on unknown names.
LevelConfig default_config(LevelName name);
void validate_config(const LevelConfig& config);

// Whether missions in this level carry location language.
bool uses_loc_language(LevelName name);
// Whether the level's mission space includes put-next instructions.
bool has_put_next(LevelName name);

struct GeneratedLevel {
  LevelConfig config;
  grid::EnvState state;
  lang::MissionSpec mission;
};

// Deterministic layout + mission generation. Layouts whose mission the
// breadth-first planner cannot certify achievable are resampled.
GeneratedLevel generate_level(const LevelConfig& config, std::uint64_t seed);
GeneratedLevel generate_level(LevelName name, std::uint64_t seed);

// Breadth-first certificate that `mission` can be completed from `state`.
// Treats object cells as impassable and closed doors as openable; exposed
// for tests.
bool mission_achievable(const grid::EnvState& state, const lang::MissionSpec& mission);

// Mission strings and goal-description strings reachable in a level's
// grammar; used to build embedding tables.
std::vector<std::string> enumerate_mission_strings(LevelName name);
std::vector<std::string> enumerate_goal_descriptions(LevelName name, bool doors);

}  // namespace fdt::levels

#endif  // FDT_LEVELS_HPP_
