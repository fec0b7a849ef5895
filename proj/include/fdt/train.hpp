#ifndef FDT_TRAIN_HPP_
#define FDT_TRAIN_HPP_

#include <functional>
#include <string>
#include <vector>

#include "fdt/data.hpp"
#include "fdt/embedding.hpp"
#include "fdt/model/network.hpp"
#include "fdt/splits.hpp"

namespace fdt::train {

struct TrainConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 1e-4;
  double adam_eps = 1e-8;
  double max_grad_norm = 0.25;
  int max_epochs = 10;
  int batch_size = 64;
  double warmup_ratio = 0.1;
  int val_interval = 500;  // optimizer steps between validation rollouts
  int val_rollout_seeds = 32;
  int patience = 0;  // validation steps; 0 selects the level default
  double early_stop_threshold = 0.01;
  std::uint64_t seed = 0;
  int epoch_size = 0;  // sub-episodes per epoch; 0 = dataset episode count
  double gamma = data::kDefaultGamma;
  // Optional: stop once training next-action accuracy reaches this level
  // (checked after each epoch); 0 disables.
  double target_train_accuracy = 0.0;

  void validate() const {
    if (lr <= 0 || batch_size < 1 || max_epochs < 1) {
      throw ConfigError("invalid optimizer configuration");
    }
    if (warmup_ratio < 0 || warmup_ratio >= 1) {
      throw ConfigError("warmup_ratio must be in [0, 1)");
    }
    if (val_interval < 1 || val_rollout_seeds < 1) {
      throw ConfigError("validation configuration must be positive");
    }
  }
};

// 8 for the first two levels, doubled after the first two and again after
// the first four.
int default_patience(levels::LevelName level);

// Linear warmup over the first warmup fraction of total steps, then linear
// decay to zero. `step` is 1-based.
double lr_at(const TrainConfig& config, long step, long total_steps);

// Uniform start in [0, len); the window runs to min(start + K, len).
struct Window {
  int start = 0;
  int length = 0;
};
Window sample_subepisode(int episode_length, int context_steps, util::Rng& rng);

// Scales all gradients so the global norm is at most max_norm; returns the
// pre-clip norm.
double clip_global_norm(model::Params<float>& grads, double max_norm);

class AdamW {
 public:
  AdamW(const model::Params<float>& params, const TrainConfig& config);
  void step(model::Params<float>& params, const model::Params<float>& grads, double lr);
  long steps_taken() const { return t_; }

 private:
  TrainConfig config_;
  model::Params<float> m_, v_;
  long t_ = 0;
};

// Dataset with per-record sentence ids and returns-to-go resolved against a
// variant's feedback filter.
struct PreparedDataset {
  std::vector<data::Trajectory> trajectories;
  model::Mat<float> sentence_base;  // lang_src_dim x n_sentences
  std::vector<std::string> sentences;
  std::vector<int> mission_ids;                // per trajectory
  std::vector<std::vector<int>> feedback_ids;  // per trajectory, per step
  std::vector<std::vector<double>> rtg;        // per trajectory

  model::StepInput step_input(int traj, int t, const model::VariantSpec& variant) const;
};

// Replaces feedback of the excluded kind with the no-feedback constant.
std::string filter_feedback(const std::string& text, model::FeedbackType type);

PreparedDataset prepare_dataset(std::vector<data::Trajectory> trajectories,
                                const model::VariantSpec& variant,
                                const embed::EmbeddingProvider& provider, double gamma);

struct TrainLogEntry {
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
  double val_gc = -1.0;  // negative: no validation at this step
  double wallclock = 0.0;
};

std::string log_entry_to_json(const TrainLogEntry& e);

struct TrainResult {
  model::Params<float> params;  // best validation checkpoint (final if none)
  std::vector<TrainLogEntry> log;
  double best_val_gc = -1.0;
  long steps_run = 0;
  double train_accuracy = 0.0;  // next-action accuracy at exit
};

// Next-action accuracy over full episodes in eval mode.
double dataset_accuracy(const model::Params<float>& params, const PreparedDataset& prepared,
                        int batch_episodes = 32);

TrainResult train(const PreparedDataset& prepared, const splits::SplitSpec& splits,
                  const embed::EmbeddingProvider& provider, const model::ModelConfig& model_cfg,
                  const model::VariantSpec& variant, const TrainConfig& config);

}  // namespace fdt::train

#endif  // FDT_TRAIN_HPP_
