#include "fdt/data.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fdt/util/errors.hpp"
#include "fdt/util/hash.hpp"
#include "fdt/util/threading.hpp"

namespace fdt::data {

namespace {

using json = nlohmann::json;

void append_json_string(std::string& out, const std::string& s) {
  out.push_back('"');
  for (char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(ch) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", ch);
          out += buf;
        } else {
          out.push_back(ch);
        }
    }
  }
  out.push_back('"');
}

// Shortest round-trip decimal form; stable across platforms.
std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw DataError("malformed decimal string: " + s);
  }
  return v;
}

}  // namespace

std::vector<double> compute_rtg(const std::vector<double>& rewards, double gamma) {
  if (gamma < 0.0 || gamma >= 1.0) throw ConfigError("gamma must be in [0, 1)");
  std::vector<double> rtg(rewards.size(), 0.0);
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i > 0; --i) {
    acc = rewards[i - 1] + gamma * acc;
    rtg[i - 1] = acc;
  }
  return rtg;
}

std::vector<double> trajectory_rtg(const Trajectory& traj, double gamma) {
  std::vector<double> rewards;
  rewards.reserve(traj.steps.size());
  for (const TimestepRecord& r : traj.steps) rewards.push_back(r.reward);
  return compute_rtg(rewards, gamma);
}

grid::Action random_policy(util::Rng& rng) {
  return static_cast<grid::Action>(rng.below_int(grid::kActionCount));
}

Trajectory rollout_random_episode(const levels::LevelConfig& config, std::uint64_t env_seed,
                                  util::Rng& action_rng) {
  env::Episode ep = env::Episode::reset(config, env_seed);
  Trajectory traj;
  traj.level = std::string(levels::level_name_str(config.name));
  traj.seed = env_seed;
  traj.mission = ep.mission().raw;

  grid::Observation obs = ep.observation();
  std::string pending_feedback = feedback::kNoFeedbackText;
  while (!ep.done()) {
    const grid::Action a = random_policy(action_rng);
    const env::StepOutcome out = ep.step(a);
    traj.steps.push_back({obs, a, out.reward, pending_feedback});
    pending_feedback = out.feedback.text;
    obs = out.observation;
  }
  traj.success = ep.terminated();
  return traj;
}

std::string serialize_trajectory(const Trajectory& traj) {
  std::string out;
  out.reserve(traj.steps.size() * 400 + 128);
  out += "{\"level\":";
  append_json_string(out, traj.level);
  out += ",\"seed\":";
  out += std::to_string(traj.seed);
  out += ",\"mission\":";
  append_json_string(out, traj.mission);
  out += ",\"success\":";
  out += traj.success ? "true" : "false";
  out += ",\"steps\":[";
  for (std::size_t i = 0; i < traj.steps.size(); ++i) {
    const TimestepRecord& r = traj.steps[i];
    if (i) out.push_back(',');
    out += "{\"obs\":[";
    for (std::size_t k = 0; k < r.obs.v.size(); ++k) {
      if (k) out.push_back(',');
      out += std::to_string(static_cast<int>(r.obs.v[k]));
    }
    out += "],\"action\":";
    out += std::to_string(static_cast<int>(r.action));
    out += ",\"reward\":";
    append_json_string(out, format_double(r.reward));
    out += ",\"feedback\":";
    append_json_string(out, r.feedback);
    out.push_back('}');
  }
  out += "]}";
  return out;
}

Trajectory parse_trajectory(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed trajectory line: ") + e.what());
  }
  Trajectory traj;
  try {
    traj.level = j.at("level").get<std::string>();
    traj.seed = j.at("seed").get<std::uint64_t>();
    traj.mission = j.at("mission").get<std::string>();
    traj.success = j.at("success").get<bool>();
    for (const json& js : j.at("steps")) {
      TimestepRecord rec;
      const auto& obs = js.at("obs");
      if (obs.size() != rec.obs.v.size()) throw DataError("observation has wrong length");
      for (std::size_t k = 0; k < rec.obs.v.size(); ++k) {
        rec.obs.v[k] = static_cast<std::int8_t>(obs[k].get<int>());
      }
      const int action_id = js.at("action").get<int>();
      if (action_id < 0 || action_id >= grid::kActionCount) {
        throw DataError("action id out of range: " + std::to_string(action_id));
      }
      rec.action = static_cast<grid::Action>(action_id);
      rec.reward = parse_double(js.at("reward").get<std::string>());
      rec.feedback = js.at("feedback").get<std::string>();
      traj.steps.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("trajectory line missing fields: ") + e.what());
  }
  if (traj.steps.empty()) throw DataError("trajectory has no steps");
  return traj;
}

std::string manifest_to_json(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["level"] = m.level;
  j["episode_count"] = m.episode_count;
  j["instance_count"] = m.instance_count;
  j["trajectories_per_instance"] = m.trajectories_per_instance;
  j["policy"] = m.policy;
  j["gamma"] = m.gamma;
  j["format_version"] = m.format_version;
  j["dataset_seed"] = m.dataset_seed;
  j["content_hash"] = m.content_hash;
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  DatasetManifest m;
  try {
    m.level = j.at("level").get<std::string>();
    m.episode_count = j.at("episode_count").get<int>();
    m.instance_count = j.at("instance_count").get<int>();
    m.trajectories_per_instance = j.at("trajectories_per_instance").get<int>();
    m.policy = j.at("policy").get<std::string>();
    m.gamma = j.at("gamma").get<double>();
    m.format_version = j.at("format_version").get<int>();
    m.dataset_seed = j.at("dataset_seed").get<std::uint64_t>();
    m.content_hash = j.at("content_hash").get<std::string>();
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest missing fields: ") + e.what());
  }
  return m;
}

std::vector<std::uint64_t> consecutive_seeds(std::uint64_t first_seed, int count) {
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) seeds[static_cast<std::size_t>(i)] = first_seed + i;
  return seeds;
}

DatasetManifest generate_dataset(const GenerateOptions& options, const std::string& out_path) {
  if (options.instance_seeds.empty()) throw ConfigError("instance seed list is empty");
  if (options.trajectories_per_instance < 1) {
    throw ConfigError("trajectories_per_instance must be positive");
  }
  levels::validate_config(options.config);

  const int n = static_cast<int>(options.instance_seeds.size());
  const int per = options.trajectories_per_instance;
  std::vector<std::string> chunks(static_cast<std::size_t>(n));
  util::parallel_for(n, options.workers, [&](int i) {
    const std::uint64_t env_seed = options.instance_seeds[static_cast<std::size_t>(i)];
    std::string& chunk = chunks[static_cast<std::size_t>(i)];
    for (int j = 0; j < per; ++j) {
      util::Rng action_rng = util::child_rng(
          options.dataset_seed, "policy-actions",
          util::splitmix64(env_seed) ^ static_cast<std::uint64_t>(j));
      const Trajectory traj = rollout_random_episode(options.config, env_seed, action_rng);
      chunk += serialize_trajectory(traj);
      chunk.push_back('\n');
    }
  });

  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open dataset file for writing: " + out_path);
  util::Sha256 hash;
  for (const std::string& chunk : chunks) {
    out.write(chunk.data(), static_cast<std::streamsize>(chunk.size()));
    hash.update(chunk);
  }
  out.flush();
  if (!out) throw DataError("write failed for dataset file: " + out_path);

  DatasetManifest m;
  m.level = std::string(levels::level_name_str(options.config.name));
  m.instance_count = n;
  m.trajectories_per_instance = per;
  m.episode_count = n * per;
  m.gamma = kDefaultGamma;
  m.dataset_seed = options.dataset_seed;
  m.content_hash = hash.hex_digest();
  return m;
}

std::vector<Trajectory> load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file: " + path);
  std::vector<Trajectory> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(parse_trajectory(line));
  }
  if (out.empty()) throw DataError("dataset file has no trajectories: " + path);
  return out;
}

}  // namespace fdt::data
