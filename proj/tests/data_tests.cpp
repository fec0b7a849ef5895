#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <set>

#include "fdt/data.hpp"
#include "fdt/embedding.hpp"
#include "fdt/splits.hpp"
#include "fdt/util/errors.hpp"
#include "fdt/util/hash.hpp"

using namespace fdt;
using levels::LevelName;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("fdt_test_" + name)).string();
}

}  // namespace

TEST_CASE("compute_rtg matches the discounted-return definition") {
  SUBCASE("worked example") {
    const auto rtg = data::compute_rtg({0.0, 0.0, 1.0}, 0.99);
    REQUIRE(rtg.size() == 3);
    CHECK(rtg[0] == doctest::Approx(0.9801).epsilon(1e-12));
    CHECK(rtg[1] == doctest::Approx(0.99).epsilon(1e-12));
    CHECK(rtg[2] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("zero rewards give zero rtg") {
    for (double v : data::compute_rtg(std::vector<double>(20, 0.0), 0.99)) CHECK(v == 0.0);
  }
  SUBCASE("gamma zero is the identity") {
    const std::vector<double> r = {0.3, 0.0, 0.7, 0.1};
    CHECK(data::compute_rtg(r, 0.0) == r);
  }
  SUBCASE("invalid gamma is rejected") {
    CHECK_THROWS_AS(data::compute_rtg({1.0}, 1.0), ConfigError);
    CHECK_THROWS_AS(data::compute_rtg({1.0}, -0.1), ConfigError);
  }
  SUBCASE("agrees with explicit O(T^2) summation") {
    util::Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
      const int n = 1 + rng.below_int(300);
      std::vector<double> r(static_cast<std::size_t>(n));
      for (double& v : r) v = rng.real01();
      const auto fast = data::compute_rtg(r, 0.99);
      for (int t = 0; t < n; t += 17) {
        double sum = 0.0;
        for (int u = t; u < n; ++u) sum += std::pow(0.99, u - t) * r[static_cast<std::size_t>(u)];
        CHECK(std::abs(fast[static_cast<std::size_t>(t)] - sum) <=
              1e-12 * std::max(1.0, std::abs(sum)));
      }
    }
  }
}

TEST_CASE("random policy is uniform and deterministic") {
  util::Rng rng(9);
  std::array<int, 6> counts{};
  const int n = 60000;
  for (int i = 0; i < n; ++i) counts[static_cast<std::size_t>(data::random_policy(rng))]++;
  const double expect = n / 6.0;
  const double sigma = std::sqrt(n * (1.0 / 6.0) * (5.0 / 6.0));
  for (int c : counts) CHECK(std::abs(c - expect) < 3 * sigma);

  util::Rng a(4), b(4);
  for (int i = 0; i < 100; ++i) CHECK(data::random_policy(a) == data::random_policy(b));
}

TEST_CASE("trajectory serialization round-trips bitwise") {
  const auto config = levels::default_config(LevelName::PickupLoc);
  util::Rng rng(77);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto traj = data::rollout_random_episode(config, seed, rng);
    const std::string line = data::serialize_trajectory(traj);
    const auto parsed = data::parse_trajectory(line);
    CHECK(parsed.level == traj.level);
    CHECK(parsed.seed == traj.seed);
    CHECK(parsed.mission == traj.mission);
    CHECK(parsed.success == traj.success);
    REQUIRE(parsed.steps.size() == traj.steps.size());
    for (std::size_t i = 0; i < traj.steps.size(); ++i) {
      CHECK(parsed.steps[i].obs == traj.steps[i].obs);
      CHECK(parsed.steps[i].action == traj.steps[i].action);
      CHECK(parsed.steps[i].reward == traj.steps[i].reward);  // exact: decimal string
      CHECK(parsed.steps[i].feedback == traj.steps[i].feedback);
    }
    CHECK(data::serialize_trajectory(parsed) == line);
  }
}

TEST_CASE("trajectory structure: alignment, length, first feedback") {
  const auto config = levels::default_config(LevelName::GoToObj);
  util::Rng rng(5);
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    util::Rng action_rng = util::child_rng(1, "t", seed);
    const auto traj = data::rollout_random_episode(config, seed, action_rng);
    REQUIRE(!traj.steps.empty());
    CHECK(traj.steps.size() <= static_cast<std::size_t>(config.max_steps));
    CHECK(traj.steps.front().feedback == feedback::kNoFeedbackText);

    // replay the stored actions: observations, rewards and shifted feedback
    // must reproduce the records exactly
    auto ep = env::Episode::reset(config, seed);
    grid::Observation obs = ep.observation();
    std::string pending = feedback::kNoFeedbackText;
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      CHECK(traj.steps[t].obs == obs);
      CHECK(traj.steps[t].feedback == pending);
      const auto out = ep.step(traj.steps[t].action);
      CHECK(traj.steps[t].reward == out.reward);
      pending = out.feedback.text;
      obs = out.observation;
    }
    CHECK(ep.done());
    CHECK(traj.success == ep.terminated());
  }
}

TEST_CASE("sparse-reward trajectories satisfy the power-law rtg closed form") {
  const auto config = levels::default_config(LevelName::GoToObj);
  util::Rng rng(6);
  int successes = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto traj = data::rollout_random_episode(config, seed, rng);
    const auto rtg = data::trajectory_rtg(traj, 0.99);
    const std::size_t n = traj.steps.size();
    const double terminal = traj.steps.back().reward;
    successes += traj.success;
    for (std::size_t t = 0; t < n; ++t) {
      const double expect = std::pow(0.99, static_cast<double>(n - 1 - t)) * terminal;
      CHECK(std::abs(rtg[t] - expect) <= 1e-9);
    }
  }
  CHECK(successes > 0);
}

TEST_CASE("dataset generation: counts, determinism, worker invariance") {
  data::GenerateOptions options;
  options.config = levels::default_config(LevelName::GoToObj);
  options.instance_seeds = data::consecutive_seeds(100, 6);
  options.trajectories_per_instance = 3;
  options.dataset_seed = 9;

  const std::string p1 = temp_path("ds1.jsonl");
  const std::string p2 = temp_path("ds2.jsonl");
  options.workers = 1;
  const auto m1 = data::generate_dataset(options, p1);
  options.workers = 2;
  const auto m2 = data::generate_dataset(options, p2);
  CHECK(m1.episode_count == 18);
  CHECK(m1.content_hash == m2.content_hash);
  CHECK(util::sha256_file_hex(p1) == m1.content_hash);

  const auto trajs = data::load_dataset(p1);
  CHECK(trajs.size() == 18);
  // canonical ordering: by instance seed, then trajectory index
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    CHECK(trajs[i].seed == 100 + i / 3);
  }
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("default dataset budgets match the level table") {
  for (LevelName name : levels::all_levels()) {
    const auto config = levels::default_config(name);
    const int episodes = config.dataset_instances * config.trajectories_per_instance;
    if (config.layout == levels::Layout::single_room) {
      CHECK(episodes == 1280);
    } else {
      CHECK(episodes == 12800);
    }
  }
}

TEST_CASE("manifest json round trip") {
  data::DatasetManifest m;
  m.level = "GoToObj";
  m.episode_count = 1280;
  m.instance_count = 128;
  m.trajectories_per_instance = 10;
  m.dataset_seed = 17;
  m.content_hash = "abc123";
  const auto r = data::manifest_from_json(data::manifest_to_json(m));
  CHECK(r.level == m.level);
  CHECK(r.episode_count == m.episode_count);
  CHECK(r.instance_count == m.instance_count);
  CHECK(r.policy == "uniform_random");
  CHECK(r.gamma == data::kDefaultGamma);
  CHECK(r.format_version == data::kFormatVersion);
  CHECK(r.content_hash == m.content_hash);
}

TEST_CASE("stored feedback strings live in the level closure") {
  const auto closure = embed::level_sentence_closure(LevelName::GoToObj);
  const std::set<std::string> closure_set(closure.begin(), closure.end());
  util::Rng rng(3);
  const auto config = levels::default_config(LevelName::GoToObj);
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const auto traj = data::rollout_random_episode(config, seed, rng);
    CHECK(closure_set.contains(traj.mission));
    for (const auto& step : traj.steps) CHECK(closure_set.contains(step.feedback));
  }
}

TEST_CASE("malformed trajectory lines are data errors") {
  CHECK_THROWS_AS(data::parse_trajectory("not json"), DataError);
  CHECK_THROWS_AS(data::parse_trajectory("{}"), DataError);
  CHECK_THROWS_AS(data::parse_trajectory(
                      R"({"level":"GoToObj","seed":1,"mission":"m","success":false,"steps":[]})"),
                  DataError);
}

// ---------------------------------------------------------------------------
// generalisation splits

TEST_CASE("held-out predicate classification") {
  const auto config = levels::default_config(LevelName::GoToObj);
  bool saw_yellow_box = false, saw_clean = false, saw_quadrant = false;
  for (std::uint64_t seed = 0; seed < 400 && !(saw_yellow_box && saw_clean && saw_quadrant);
       ++seed) {
    const auto gen = levels::generate_level(config, seed);
    const auto triggered = splits::classify_level(gen);
    const auto& target = gen.mission.clause().target;
    if (target.color == grid::Color::yellow && target.kind == grid::Kind::box) {
      CHECK(triggered.contains(splits::Scenario::goal_color_type));
      saw_yellow_box = true;
    } else {
      CHECK_FALSE(triggered.contains(splits::Scenario::goal_color_type));
    }
    const auto& st = gen.state;
    const bool top_left = st.start_pos.x < st.width / 2 && st.start_pos.y < st.height / 2;
    CHECK(triggered.contains(splits::Scenario::agent_start_quadrant) == top_left);
    if (top_left) saw_quadrant = true;
    if (triggered.empty()) saw_clean = true;
    CHECK_FALSE(triggered.contains(splits::Scenario::room_size));  // 8x8 default
  }
  CHECK(saw_yellow_box);
  CHECK(saw_clean);
  CHECK(saw_quadrant);
}

TEST_CASE("fixed-goal and relative-location predicates") {
  bool saw_fixed = false;
  for (std::uint64_t seed = 0; seed < 600 && !saw_fixed; ++seed) {
    const auto gen = levels::generate_level(LevelName::PutNextLocal, seed);
    const auto triggered = splits::classify_level(gen);
    const auto& fixed = gen.mission.clause().fixed_target;
    REQUIRE(fixed.has_value());
    const bool is_blue_ball =
        fixed->color == grid::Color::blue && fixed->kind == grid::Kind::ball;
    CHECK(triggered.contains(splits::Scenario::fixed_goal_color_type) == is_blue_ball);
    saw_fixed = saw_fixed || is_blue_ball;
  }
  CHECK(saw_fixed);

  bool saw_right = false;
  for (std::uint64_t seed = 0; seed < 200 && !saw_right; ++seed) {
    const auto gen = levels::generate_level(LevelName::PickupLoc, seed);
    const auto triggered = splits::classify_level(gen);
    const bool right = gen.mission.clause().target.loc == lang::Loc::on_your_right;
    CHECK(triggered.contains(splits::Scenario::relative_goal_location) == right);
    saw_right = saw_right || right;
  }
  CHECK(saw_right);
}

TEST_CASE("scenario applicability follows the level footnotes") {
  const auto goto_sc = splits::applicable_scenarios(LevelName::GoToObj);
  CHECK(std::find(goto_sc.begin(), goto_sc.end(), splits::Scenario::fixed_goal_color_type) ==
        goto_sc.end());
  CHECK(std::find(goto_sc.begin(), goto_sc.end(), splits::Scenario::relative_goal_location) ==
        goto_sc.end());
  CHECK(goto_sc.size() == 3);

  const auto pl = splits::applicable_scenarios(LevelName::PickupLoc);
  CHECK(pl.size() == 4);
  CHECK(std::find(pl.begin(), pl.end(), splits::Scenario::relative_goal_location) != pl.end());
  CHECK(std::find(pl.begin(), pl.end(), splits::Scenario::fixed_goal_color_type) == pl.end());

  CHECK(splits::applicable_scenarios(LevelName::SynthLoc).size() == 5);
  CHECK(splits::applicable_scenarios(LevelName::PutNext).size() == 4);
}

TEST_CASE("build_splits: purity, exclusivity, determinism at reduced scale") {
  splits::BuildOptions options;
  options.train_count = 12;
  options.eval_count = 6;
  const auto spec = splits::build_splits(LevelName::PickupLoc, 5, options);
  CHECK(spec.train_seeds.size() == 12);
  CHECK(spec.iid_seeds.size() == 6);
  CHECK(spec.ood_seeds.size() == 4);

  const auto config = levels::default_config(LevelName::PickupLoc);
  for (std::uint64_t s : spec.train_seeds) CHECK(splits::classify_seed(config, s).empty());
  for (std::uint64_t s : spec.iid_seeds) CHECK(splits::classify_seed(config, s).empty());
  for (const auto& [scenario, seeds] : spec.ood_seeds) {
    CHECK(seeds.size() == 6);
    const auto cell_cfg = spec.cell_config(scenario);
    for (std::uint64_t s : seeds) {
      const auto triggered = splits::classify_seed(cell_cfg, s);
      CHECK(triggered.size() == 1);
      CHECK(*triggered.begin() == scenario);
    }
  }

  // seeds are globally disjoint
  std::set<std::uint64_t> all(spec.train_seeds.begin(), spec.train_seeds.end());
  std::size_t expected = spec.train_seeds.size();
  for (std::uint64_t s : spec.iid_seeds) all.insert(s);
  expected += spec.iid_seeds.size();
  for (const auto& [_, seeds] : spec.ood_seeds) {
    all.insert(seeds.begin(), seeds.end());
    expected += seeds.size();
  }
  CHECK(all.size() == expected);

  // determinism
  const auto again = splits::build_splits(LevelName::PickupLoc, 5, options);
  CHECK(splits::splits_to_json(again) == splits::splits_to_json(spec));
  // different master seed, different splits
  const auto other = splits::build_splits(LevelName::PickupLoc, 6, options);
  CHECK(splits::splits_to_json(other) != splits::splits_to_json(spec));
}

TEST_CASE("room-size cell uses the smaller configuration") {
  splits::BuildOptions options;
  options.train_count = 4;
  options.eval_count = 4;
  const auto spec = splits::build_splits(LevelName::GoToObj, 3, options);
  const auto cfg = spec.cell_config(splits::Scenario::room_size);
  CHECK(cfg.room_size == 6);
  CHECK(spec.cell_config(std::nullopt).room_size == 8);
  for (std::uint64_t s : spec.ood_seeds.at(splits::Scenario::room_size)) {
    const auto gen = levels::generate_level(cfg, s);
    CHECK(gen.state.width == 6);
  }
}

TEST_CASE("split file round trip") {
  splits::BuildOptions options;
  options.train_count = 4;
  options.eval_count = 3;
  const auto spec = splits::build_splits(LevelName::PutNextLocal, 11, options);
  const std::string path = temp_path("splits.json");
  splits::save_splits(spec, path);
  const auto loaded = splits::load_splits(path);
  CHECK(splits::splits_to_json(loaded) == splits::splits_to_json(spec));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(splits::load_splits(path), DataError);
}

// ---------------------------------------------------------------------------
// language embeddings

TEST_CASE("hashed provider is deterministic, total and distinguishing") {
  const auto provider = embed::EmbeddingProvider::hashed();
  CHECK(provider.d_src() == 384);
  const auto a = provider.base_vector("go to the red ball");
  const auto b = provider.base_vector("go to the red ball");
  CHECK(a == b);

  const auto none = provider.base_vector(feedback::kNoFeedbackText);
  CHECK(none.norm() > 0.0f);

  const auto c = provider.base_vector("Not a good idea! You can't pick up the wall.");
  const auto d = provider.base_vector("Don't do that! You can't drop an object while you're "
                                      "facing the wall.");
  const double cos = c.dot(d) / (c.norm() * d.norm());
  CHECK(cos < 1.0 - 1e-4);

  // same seed, fresh instance: identical (frozen by construction)
  const auto provider2 = embed::EmbeddingProvider::hashed();
  CHECK(provider2.base_vector("go to the red ball") == a);
  CHECK(provider2.content_hash() == provider.content_hash());
}

TEST_CASE("GoToObj mission closure has the expected size") {
  const auto missions = levels::enumerate_mission_strings(LevelName::GoToObj);
  // 2 articles x 6 colors x 3 portable kinds; door targets are invalid here
  CHECK(missions.size() == 36);
  for (const auto& m : missions) CHECK_NOTHROW(lang::parse_mission(m));
}

TEST_CASE("closure includes every rule template with reachable slot fillings") {
  const auto closure = embed::level_sentence_closure(LevelName::Synth);
  const std::set<std::string> set(closure.begin(), closure.end());
  int rule_rows_covered = 0;
  for (const auto& t : feedback::template_table()) {
    if (t.id.rfind("rule.", 0) != 0) continue;
    std::map<std::string, std::string> slots;
    if (t.id == "rule.forward.object") slots["object"] = "ball";
    if (t.id == "rule.drop.object") slots["object type"] = "key";
    if (t.id == "rule.toggle.object") slots["object type"] = "ball";
    if (t.id == "rule.toggle.locked_wrong_key") {
      slots["key color"] = "red";
      slots["door color"] = "blue";
    }
    CHECK(set.contains(feedback::render_template(t.id, slots)));
    ++rule_rows_covered;
  }
  CHECK(rule_rows_covered == 17);
  CHECK(set.contains(feedback::kNoFeedbackText));
  CHECK(set.contains(
      "Great job! You've completed your task by picking up the yellow ball."));
  CHECK(set.contains(
      "That's correct! You've completed a part of your task by opening the red door."));
}

TEST_CASE("table provider covers live play and misses loudly") {
  const auto table = embed::build_table(LevelName::GoToObj, 64, 1);
  CHECK(table.mode() == embed::ProviderMode::table);
  util::Rng rng(8);
  const auto config = levels::default_config(LevelName::GoToObj);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto traj = data::rollout_random_episode(config, seed, rng);
    CHECK_NOTHROW(table.base_vector(traj.mission));
    for (const auto& s : traj.steps) CHECK_NOTHROW(table.base_vector(s.feedback));
  }
  CHECK_THROWS_AS(table.base_vector("definitely not in the closure"), DataError);
  const auto missing = table.missing_sentences({"go to the red ball", "xyzzy"});
  REQUIRE(missing.size() == 1);
  CHECK(missing[0] == "xyzzy");
}

TEST_CASE("embedding table file round trip is exact") {
  const auto table = embed::build_table(LevelName::GoToObj, 32, 7);
  const std::string path = temp_path("table.fdte");
  table.save_table_file(path);
  const auto loaded = embed::EmbeddingProvider::load_table_file(path);
  CHECK(loaded.d_src() == 32);
  CHECK(loaded.content_hash() == table.content_hash());
  for (const auto& s : embed::level_sentence_closure(LevelName::GoToObj)) {
    CHECK(loaded.base_vector(s) == table.base_vector(s));
  }
  std::filesystem::remove(path);
  // truncated file is rejected
  table.save_table_file(path);
  std::filesystem::resize_file(path, 40);
  CHECK_THROWS_AS(embed::EmbeddingProvider::load_table_file(path), DataError);
  std::filesystem::remove(path);
}
