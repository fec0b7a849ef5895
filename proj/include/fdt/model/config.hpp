#ifndef FDT_MODEL_CONFIG_HPP_
#define FDT_MODEL_CONFIG_HPP_

#include <array>
#include <string>

#include "fdt/util/errors.hpp"

namespace fdt::model {

struct ModelConfig {
  int n_layers = 3;
  int n_heads = 1;
  int hidden = 128;
  double dropout = 0.1;
  int context_steps = 64;  // K, timesteps attended over
  int action_count = 6;
  int max_timestep = 1152;  // positional table size; >= longest episode
  int lang_src_dim = 384;   // frozen sentence-embedding width
  // Image encoder: three 2x2 stride-1 convolutions over the 7x7x3 view.
  std::array<int, 3> conv_channels{16, 32, 64};

  void validate() const {
    if (hidden < 1 || n_layers < 1 || n_heads < 1) {
      throw ConfigError("model dimensions must be positive");
    }
    if (hidden % n_heads != 0) throw ConfigError("hidden must be divisible by n_heads");
    if (context_steps < 1) throw ConfigError("context_steps must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
    if (max_timestep < 1) throw ConfigError("max_timestep must be positive");
    if (lang_src_dim < 1) throw ConfigError("lang_src_dim must be positive");
  }
};

enum class FeedbackType : std::uint8_t { rule = 0, task = 1, all = 2 };

inline std::string_view feedback_type_str(FeedbackType t) {
  switch (t) {
    case FeedbackType::rule: return "rule";
    case FeedbackType::task: return "task";
    case FeedbackType::all: return "all";
  }
  return "?";
}

inline FeedbackType feedback_type_from_string(std::string_view s) {
  if (s == "rule") return FeedbackType::rule;
  if (s == "task") return FeedbackType::task;
  if (s == "all") return FeedbackType::all;
  throw UsageError("unknown feedback type: " + std::string(s));
}

// Which conditioning signals the sequence carries. Inactive signals are
// omitted from the token layout entirely.
struct VariantSpec {
  bool use_rtg = false;
  bool use_mission = false;
  bool use_feedback = false;
  FeedbackType feedback_type = FeedbackType::all;
  bool feedback_at_inference = true;

  int tokens_per_step() const {
    return 2 + (use_rtg ? 1 : 0) + (use_mission ? 1 : 0) + (use_feedback ? 1 : 0);
  }
  bool uses_language() const { return use_mission || use_feedback; }

  void validate() const {
    if (!use_rtg && !use_mission && !use_feedback) {
      throw UsageError("at least one conditioning signal must be active");
    }
  }

  std::string to_string() const {
    std::string s;
    auto append = [&s](std::string_view part) {
      if (!s.empty()) s += '+';
      s += part;
    };
    if (use_rtg) append("rtg");
    if (use_mission) append("mission");
    if (use_feedback) {
      append("feedback:");
      s += feedback_type_str(feedback_type);
    }
    return s;
  }

  static VariantSpec from_string(std::string_view s) {
    VariantSpec v;
    std::size_t pos = 0;
    while (pos <= s.size()) {
      const std::size_t next = s.find('+', pos);
      const std::string_view part =
          s.substr(pos, next == std::string_view::npos ? s.size() - pos : next - pos);
      if (part == "rtg") {
        v.use_rtg = true;
      } else if (part == "mission") {
        v.use_mission = true;
      } else if (part.starts_with("feedback:")) {
        v.use_feedback = true;
        v.feedback_type = feedback_type_from_string(part.substr(9));
      } else if (part == "feedback") {
        v.use_feedback = true;
      } else {
        throw UsageError("unknown variant component: " + std::string(part));
      }
      if (next == std::string_view::npos) break;
      pos = next + 1;
    }
    v.validate();
    return v;
  }
};

}  // namespace fdt::model

#endif  // FDT_MODEL_CONFIG_HPP_
