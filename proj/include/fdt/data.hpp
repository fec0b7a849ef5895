#ifndef FDT_DATA_HPP_
#define FDT_DATA_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "fdt/env.hpp"
#include "fdt/util/rng.hpp"

namespace fdt::data {

inline constexpr double kDefaultGamma = 0.99;
inline constexpr int kFormatVersion = 1;

struct TimestepRecord {
  grid::Observation obs;  // observation before the action
  grid::Action action = grid::Action::turn_left;
  double reward = 0.0;
  // Feedback delivered at this timestep, i.e. produced by the previous
  // action; the first record carries the no-feedback constant.
  std::string feedback;
};

struct Trajectory {
  std::string level;
  std::uint64_t seed = 0;
  std::string mission;
  bool success = false;
  std::vector<TimestepRecord> steps;
};

// Exact backward recursion rtg[t] = r[t] + gamma * rtg[t+1].
std::vector<double> compute_rtg(const std::vector<double>& rewards, double gamma);

std::vector<double> trajectory_rtg(const Trajectory& traj, double gamma);

grid::Action random_policy(util::Rng& rng);

// Rolls one full episode to termination or truncation under the uniform
// random policy. The action stream is independent of the environment seed.
Trajectory rollout_random_episode(const levels::LevelConfig& config, std::uint64_t env_seed,
                                  util::Rng& action_rng);

// One JSON object per line; field order and number formatting are fixed so
// identical inputs produce byte-identical files.
std::string serialize_trajectory(const Trajectory& traj);
Trajectory parse_trajectory(const std::string& line);

struct DatasetManifest {
  std::string level;
  int episode_count = 0;
  int instance_count = 0;
  int trajectories_per_instance = 0;
  std::string policy = "uniform_random";
  double gamma = kDefaultGamma;
  int format_version = kFormatVersion;
  std::uint64_t dataset_seed = 0;
  std::string content_hash;  // sha256 of the trajectory file
};

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text);

struct GenerateOptions {
  levels::LevelConfig config;
  std::vector<std::uint64_t> instance_seeds;
  int trajectories_per_instance = 10;
  std::uint64_t dataset_seed = 0;
  int workers = 1;
};

// Consecutive seeds starting at `first_seed`; used when no split file
// provides filtered training seeds.
std::vector<std::uint64_t> consecutive_seeds(std::uint64_t first_seed, int count);

DatasetManifest generate_dataset(const GenerateOptions& options, const std::string& out_path);

std::vector<Trajectory> load_dataset(const std::string& path);

}  // namespace fdt::data

#endif  // FDT_DATA_HPP_
