#ifndef FDT_SPLITS_HPP_
#define FDT_SPLITS_HPP_

#include <map>
#include <set>
#include <string>
#include <vector>

#include "fdt/levels.hpp"

namespace fdt::splits {

enum class Scenario : std::uint8_t {
  goal_color_type = 0,        // interpolation: yellow box
  fixed_goal_color_type = 1,  // interpolation: blue ball as the fixed goal
  agent_start_quadrant = 2,   // interpolation: top-left spawn quadrant
  relative_goal_location = 3, // extrapolation: "on your right"
  room_size = 4,              // extrapolation: rooms smaller than 8x8
};

inline constexpr int kScenarioCount = 5;
inline constexpr int kEvalSeedsPerCell = 128;
inline constexpr int kRoomSizeOod = 6;

std::string_view scenario_id(Scenario s);
Scenario scenario_from_string(std::string_view s);
bool scenario_is_interpolation(Scenario s);

// fixed_goal_color_type needs put-next missions; relative_goal_location
// needs location language. The rest apply to every level.
std::vector<Scenario> applicable_scenarios(levels::LevelName level);

// Held-out predicates triggered by the environment a seed generates.
std::set<Scenario> classify_level(const levels::GeneratedLevel& generated);
std::set<Scenario> classify_seed(const levels::LevelConfig& config, std::uint64_t seed);

struct SplitSpec {
  levels::LevelName level = levels::LevelName::GoToObj;
  std::uint64_t master_seed = 0;
  int room_size_ood = kRoomSizeOod;
  std::vector<std::uint64_t> train_seeds;
  std::vector<std::uint64_t> iid_seeds;
  std::map<Scenario, std::vector<std::uint64_t>> ood_seeds;

  // Config used for a given evaluation cell; room_size differs for the
  // room-size scenario.
  levels::LevelConfig cell_config(const std::optional<Scenario>& scenario) const;
};

struct BuildOptions {
  int train_count = 0;  // 0: level default (dataset instance count)
  int eval_count = kEvalSeedsPerCell;
  std::int64_t candidate_cap = 4'000'000;
};

// Rejection-samples candidate seeds until every quota is met. Training and
// IID seeds trigger no held-out predicate; each OOD seed triggers exactly
// its scenario's predicate.
SplitSpec build_splits(levels::LevelName level, std::uint64_t master_seed,
                       const BuildOptions& options = {});

std::string splits_to_json(const SplitSpec& spec);
SplitSpec splits_from_json(const std::string& text);
void save_splits(const SplitSpec& spec, const std::string& path);
SplitSpec load_splits(const std::string& path);

std::uint64_t seed_set_hash(const std::vector<std::uint64_t>& seeds);

}  // namespace fdt::splits

#endif  // FDT_SPLITS_HPP_
