#ifndef FDT_EVAL_HPP_
#define FDT_EVAL_HPP_

#include <optional>
#include <string>
#include <vector>

#include "fdt/embedding.hpp"
#include "fdt/model/network.hpp"
#include "fdt/splits.hpp"

namespace fdt::eval {

struct RolloutRecord {
  std::uint64_t seed = 0;
  double gc = 0.0;
  bool success = false;
  int steps = 0;
  double reward = 0.0;
};

// Closed-loop rollout. Maintains the last-K-timesteps window; RTG starts at
// 1 and decreases by observed rewards; feedback tokens carry the live
// feedback embedding, or the fixed placeholder when feedback_at_inference is
// off. Action selection is greedy; temperature > 0 switches to seeded
// softmax sampling.
RolloutRecord rollout(const model::Params<float>& params,
                      const embed::EmbeddingProvider& provider,
                      const levels::LevelConfig& config, std::uint64_t seed,
                      bool feedback_at_inference, double temperature = 0.0);

RolloutRecord rollout_random(const levels::LevelConfig& config, std::uint64_t seed,
                             std::uint64_t policy_seed);

struct EvalCell {
  std::string level;
  std::string variant;
  std::string split;     // "iid" | "ood"
  std::string scenario;  // empty for iid
  double gc_mean = 0.0;
  int n = 0;
  std::uint64_t seed_set_hash = 0;
  std::string checkpoint_hash = "-";
  std::vector<RolloutRecord> records;
};

struct EvaluateOptions {
  bool feedback_at_inference = true;
  int workers = 1;
  std::string checkpoint_hash = "-";
  bool include_random_baseline = true;
  std::uint64_t baseline_policy_seed = 0;
  double temperature = 0.0;  // 0 = greedy
};

inline constexpr const char* kOodAggregateScenario = "mean";

// One cell per (split, scenario): iid, each applicable OOD scenario, and an
// "ood/mean" aggregate averaged across the scenarios.
std::vector<EvalCell> evaluate(const model::Params<float>& params,
                               const embed::EmbeddingProvider& provider,
                               const splits::SplitSpec& splits, const EvaluateOptions& options);

// Random-policy cells only (the brute-force baseline).
std::vector<EvalCell> evaluate_random(const splits::SplitSpec& splits,
                                      const EvaluateOptions& options);

inline constexpr const char* kResultsCsvHeader =
    "level,variant,split,scenario,gc_success,n,seed_set_hash,checkpoint_hash";

std::string results_to_csv(const std::vector<EvalCell>& cells);
std::vector<EvalCell> results_from_csv(const std::string& text);
void write_results_csv(const std::vector<EvalCell>& cells, const std::string& path);
std::vector<EvalCell> read_results_csv(const std::string& path);

struct CompareRow {
  std::string level;
  std::string variant;
  std::string split;
  std::string scenario;
  double gc = 0.0;
  double delta = 0.0;                 // percentage points vs baseline
  std::optional<double> change;       // percentage points vs the change run
};

inline constexpr const char* kCompareCsvHeader = "level,variant,split,scenario,gc,delta,change";

// Cells are matched on (level, split, scenario); `change_run` compares a
// second evaluation of the same checkpoint (e.g. feedback toggled at
// inference) against `a`.
std::vector<CompareRow> compare_results(const std::vector<EvalCell>& a,
                                        const std::vector<EvalCell>& b,
                                        const std::vector<EvalCell>* change_run = nullptr);

std::string compare_to_csv(const std::vector<CompareRow>& rows);
void write_compare_csv(const std::vector<CompareRow>& rows, const std::string& path);

// Plain-text summary grouped by level with IID/OOD columns.
std::string compare_summary(const std::vector<CompareRow>& rows);

}  // namespace fdt::eval

#endif  // FDT_EVAL_HPP_
