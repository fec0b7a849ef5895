#include "fdt/splits.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fdt/util/errors.hpp"
#include "fdt/util/rng.hpp"

namespace fdt::splits {

using levels::LevelConfig;
using levels::LevelName;

namespace {

constexpr grid::Color kHeldOutGoalColor = grid::Color::yellow;
constexpr grid::Kind kHeldOutGoalKind = grid::Kind::box;
constexpr grid::Color kHeldOutFixedColor = grid::Color::blue;
constexpr grid::Kind kHeldOutFixedKind = grid::Kind::ball;
constexpr lang::Loc kHeldOutLoc = lang::Loc::on_your_right;

std::uint64_t candidate_seed(std::uint64_t master_seed, std::string_view stream,
                             std::int64_t index) {
  // splitmix64 is a bijection, so distinct indices give distinct seeds.
  return util::splitmix64(util::fnv1a(stream) ^ master_seed ^
                          util::splitmix64(static_cast<std::uint64_t>(index)));
}

}  // namespace

std::string_view scenario_id(Scenario s) {
  switch (s) {
    case Scenario::goal_color_type: return "goal_color_type";
    case Scenario::fixed_goal_color_type: return "fixed_goal_color_type";
    case Scenario::agent_start_quadrant: return "agent_start_quadrant";
    case Scenario::relative_goal_location: return "relative_goal_location";
    case Scenario::room_size: return "room_size";
  }
  return "?";
}

Scenario scenario_from_string(std::string_view s) {
  for (int i = 0; i < kScenarioCount; ++i) {
    const Scenario sc = static_cast<Scenario>(i);
    if (scenario_id(sc) == s) return sc;
  }
  throw ConfigError("unknown scenario: " + std::string(s));
}

bool scenario_is_interpolation(Scenario s) {
  return s == Scenario::goal_color_type || s == Scenario::fixed_goal_color_type ||
         s == Scenario::agent_start_quadrant;
}

std::vector<Scenario> applicable_scenarios(LevelName level) {
  std::vector<Scenario> out{Scenario::goal_color_type};
  if (levels::has_put_next(level)) out.push_back(Scenario::fixed_goal_color_type);
  out.push_back(Scenario::agent_start_quadrant);
  if (levels::uses_loc_language(level)) out.push_back(Scenario::relative_goal_location);
  out.push_back(Scenario::room_size);
  return out;
}

std::set<Scenario> classify_level(const levels::GeneratedLevel& generated) {
  std::set<Scenario> out;
  const lang::Clause& clause = generated.mission.clause();
  if (clause.target.color == kHeldOutGoalColor && clause.target.kind == kHeldOutGoalKind) {
    out.insert(Scenario::goal_color_type);
  }
  if (clause.fixed_target && clause.fixed_target->color == kHeldOutFixedColor &&
      clause.fixed_target->kind == kHeldOutFixedKind) {
    out.insert(Scenario::fixed_goal_color_type);
  }
  const grid::EnvState& st = generated.state;
  if (st.start_pos.x < st.width / 2 && st.start_pos.y < st.height / 2) {
    out.insert(Scenario::agent_start_quadrant);
  }
  if (clause.target.loc && *clause.target.loc == kHeldOutLoc) {
    out.insert(Scenario::relative_goal_location);
  }
  if (generated.config.room_size < 8) out.insert(Scenario::room_size);
  return out;
}

std::set<Scenario> classify_seed(const LevelConfig& config, std::uint64_t seed) {
  return classify_level(levels::generate_level(config, seed));
}

LevelConfig SplitSpec::cell_config(const std::optional<Scenario>& scenario) const {
  LevelConfig config = levels::default_config(level);
  if (scenario && *scenario == Scenario::room_size) config.room_size = room_size_ood;
  return config;
}

SplitSpec build_splits(LevelName level, std::uint64_t master_seed, const BuildOptions& options) {
  SplitSpec spec;
  spec.level = level;
  spec.master_seed = master_seed;

  const LevelConfig config = levels::default_config(level);
  const int train_quota = options.train_count > 0 ? options.train_count
                                                  : config.dataset_instances;
  const std::vector<Scenario> scenarios = applicable_scenarios(level);
  for (Scenario s : scenarios) spec.ood_seeds[s] = {};

  auto full = [&]() {
    if (static_cast<int>(spec.train_seeds.size()) < train_quota) return false;
    if (static_cast<int>(spec.iid_seeds.size()) < options.eval_count) return false;
    for (Scenario s : scenarios) {
      if (s == Scenario::room_size) continue;
      if (static_cast<int>(spec.ood_seeds[s].size()) < options.eval_count) return false;
    }
    return true;
  };

  for (std::int64_t i = 0; !full(); ++i) {
    if (i >= options.candidate_cap) {
      throw ConfigError("seed quota unreachable within the candidate cap for level " +
                        std::string(levels::level_name_str(level)));
    }
    const std::uint64_t seed = candidate_seed(master_seed, "split-candidates", i);
    const std::set<Scenario> triggered = classify_seed(config, seed);
    if (triggered.empty()) {
      if (static_cast<int>(spec.train_seeds.size()) < train_quota) {
        spec.train_seeds.push_back(seed);
      } else if (static_cast<int>(spec.iid_seeds.size()) < options.eval_count) {
        spec.iid_seeds.push_back(seed);
      }
    } else if (triggered.size() == 1) {
      const Scenario s = *triggered.begin();
      auto it = spec.ood_seeds.find(s);
      if (it != spec.ood_seeds.end() &&
          static_cast<int>(it->second.size()) < options.eval_count) {
        it->second.push_back(seed);
      }
    }
  }

  // Room-size cell: same level under smaller rooms; seeds must trigger no
  // other held-out predicate.
  LevelConfig small = config;
  small.room_size = spec.room_size_ood;
  std::vector<std::uint64_t>& room_seeds = spec.ood_seeds[Scenario::room_size];
  for (std::int64_t i = 0; static_cast<int>(room_seeds.size()) < options.eval_count; ++i) {
    if (i >= options.candidate_cap) {
      throw ConfigError("room-size seed quota unreachable within the candidate cap");
    }
    const std::uint64_t seed = candidate_seed(master_seed, "split-room-size", i);
    const std::set<Scenario> triggered = classify_seed(small, seed);
    if (triggered.size() == 1 && *triggered.begin() == Scenario::room_size) {
      room_seeds.push_back(seed);
    }
  }
  return spec;
}

std::string splits_to_json(const SplitSpec& spec) {
  nlohmann::ordered_json j;
  j["level"] = std::string(levels::level_name_str(spec.level));
  j["master_seed"] = spec.master_seed;
  j["room_size_ood"] = spec.room_size_ood;
  j["train_seeds"] = spec.train_seeds;
  j["iid_seeds"] = spec.iid_seeds;
  nlohmann::ordered_json ood;
  for (const auto& [scenario, seeds] : spec.ood_seeds) {
    ood[std::string(scenario_id(scenario))] = seeds;
  }
  j["ood_seeds"] = ood;
  return j.dump(2) + "\n";
}

SplitSpec splits_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed split file: ") + e.what());
  }
  SplitSpec spec;
  try {
    spec.level = levels::level_from_string(j.at("level").get<std::string>());
    spec.master_seed = j.at("master_seed").get<std::uint64_t>();
    spec.room_size_ood = j.at("room_size_ood").get<int>();
    spec.train_seeds = j.at("train_seeds").get<std::vector<std::uint64_t>>();
    spec.iid_seeds = j.at("iid_seeds").get<std::vector<std::uint64_t>>();
    for (const auto& [key, seeds] : j.at("ood_seeds").items()) {
      spec.ood_seeds[scenario_from_string(key)] = seeds.get<std::vector<std::uint64_t>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("split file missing fields: ") + e.what());
  }
  return spec;
}

void save_splits(const SplitSpec& spec, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write split file: " + path);
  const std::string text = splits_to_json(spec);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

SplitSpec load_splits(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open split file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return splits_from_json(ss.str());
}

std::uint64_t seed_set_hash(const std::vector<std::uint64_t>& seeds) {
  std::uint64_t h = util::kFnvOffset;
  for (std::uint64_t s : seeds) h = util::fnv1a_bytes(&s, sizeof(s), h);
  return h;
}

}  // namespace fdt::splits
