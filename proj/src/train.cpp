#include "fdt/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "fdt/eval.hpp"
#include "fdt/feedback.hpp"
#include "fdt/util/errors.hpp"

namespace fdt::train {

using model::Mat;
using model::Params;
using model::StepInput;

int default_patience(levels::LevelName level) {
  switch (level) {
    case levels::LevelName::GoToObj:
    case levels::LevelName::GoToLocal:
      return 8;
    case levels::LevelName::PickupLoc:
    case levels::LevelName::PutNextLocal:
      return 16;
    default:
      return 32;
  }
}

double lr_at(const TrainConfig& config, long step, long total_steps) {
  const long warmup = std::max<long>(1, static_cast<long>(
      std::ceil(config.warmup_ratio * static_cast<double>(total_steps))));
  if (step <= warmup) {
    return config.lr * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (total_steps <= warmup) return 0.0;
  const double remaining = static_cast<double>(total_steps - step) /
                           static_cast<double>(total_steps - warmup);
  return config.lr * std::max(0.0, remaining);
}

Window sample_subepisode(int episode_length, int context_steps, util::Rng& rng) {
  const int start = rng.below_int(episode_length);
  return {start, std::min(context_steps, episode_length - start)};
}

double clip_global_norm(Params<float>& grads, double max_norm) {
  double sq = 0.0;
  grads.visit([&sq](const std::string&, auto& tensor, bool) {
    sq += static_cast<double>(tensor.template cast<double>().squaredNorm());
  });
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    // shaded slightly low so the bound holds after float rounding
    const float scale = static_cast<float>(max_norm / norm * (1.0 - 1e-6));
    grads.visit([scale](const std::string&, auto& tensor, bool) { tensor *= scale; });
  }
  return norm;
}

AdamW::AdamW(const Params<float>& params, const TrainConfig& config)
    : config_(config),
      m_(Params<float>::make(params.cfg, params.variant)),
      v_(Params<float>::make(params.cfg, params.variant)) {}

void AdamW::step(Params<float>& params, const Params<float>& grads, double lr) {
  ++t_;
  const float b1 = static_cast<float>(config_.beta1);
  const float b2 = static_cast<float>(config_.beta2);
  const float eps = static_cast<float>(config_.adam_eps);
  const float bc1 = 1.0f - std::pow(b1, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(b2, static_cast<float>(t_));
  const float lrf = static_cast<float>(lr);
  const float wd = static_cast<float>(config_.weight_decay);

  std::vector<std::pair<float*, long>> ms, vs;
  std::vector<const float*> gs;
  std::vector<bool> decay;
  m_.visit([&ms](const std::string&, auto& t, bool) { ms.push_back({t.data(), t.size()}); });
  v_.visit([&vs](const std::string&, auto& t, bool) { vs.push_back({t.data(), t.size()}); });
  const_cast<Params<float>&>(grads).visit(
      [&gs](const std::string&, auto& t, bool) { gs.push_back(t.data()); });

  std::size_t ti = 0;
  params.visit([&](const std::string&, auto& tensor, bool is_weight) {
    float* m = ms[ti].first;
    float* v = vs[ti].first;
    const float* g = gs[ti];
    float* p = tensor.data();
    const long n = ms[ti].second;
    for (long i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      const float mhat = m[i] / bc1;
      const float vhat = v[i] / bc2;
      p[i] -= lrf * (mhat / (std::sqrt(vhat) + eps));
      if (is_weight) p[i] -= lrf * wd * p[i];  // decoupled weight decay
    }
    ++ti;
  });
}

std::string filter_feedback(const std::string& text, model::FeedbackType type) {
  if (type == model::FeedbackType::all) return text;
  const feedback::FeedbackKind kind = feedback::classify_feedback_text(text);
  if (kind == feedback::FeedbackKind::none) return text;
  if (type == model::FeedbackType::rule && kind != feedback::FeedbackKind::rule) {
    return feedback::kNoFeedbackText;
  }
  if (type == model::FeedbackType::task && kind != feedback::FeedbackKind::task) {
    return feedback::kNoFeedbackText;
  }
  return text;
}

StepInput PreparedDataset::step_input(int traj, int t, const model::VariantSpec& variant) const {
  const data::Trajectory& tr = trajectories[static_cast<std::size_t>(traj)];
  StepInput in;
  in.obs = tr.steps[static_cast<std::size_t>(t)].obs;
  in.action = static_cast<int>(tr.steps[static_cast<std::size_t>(t)].action);
  in.rtg = rtg[static_cast<std::size_t>(traj)][static_cast<std::size_t>(t)];
  in.timestep = t;
  if (variant.use_mission) in.mission_sentence = mission_ids[static_cast<std::size_t>(traj)];
  if (variant.use_feedback) {
    in.feedback_sentence =
        feedback_ids[static_cast<std::size_t>(traj)][static_cast<std::size_t>(t)];
  }
  return in;
}

PreparedDataset prepare_dataset(std::vector<data::Trajectory> trajectories,
                                const model::VariantSpec& variant,
                                const embed::EmbeddingProvider& provider, double gamma) {
  PreparedDataset out;
  out.trajectories = std::move(trajectories);

  std::map<std::string, int> ids;
  auto intern = [&ids, &out](const std::string& s) {
    const auto it = ids.find(s);
    if (it != ids.end()) return it->second;
    const int id = static_cast<int>(out.sentences.size());
    out.sentences.push_back(s);
    ids.emplace(s, id);
    return id;
  };

  for (const data::Trajectory& tr : out.trajectories) {
    out.rtg.push_back(data::trajectory_rtg(tr, gamma));
    out.mission_ids.push_back(variant.use_mission ? intern(tr.mission) : model::kNoSentence);
    std::vector<int> fb;
    if (variant.use_feedback) {
      fb.reserve(tr.steps.size());
      for (const data::TimestepRecord& rec : tr.steps) {
        fb.push_back(intern(filter_feedback(rec.feedback, variant.feedback_type)));
      }
    }
    out.feedback_ids.push_back(std::move(fb));
  }

  out.sentence_base.resize(provider.d_src(), static_cast<Eigen::Index>(out.sentences.size()));
  for (std::size_t i = 0; i < out.sentences.size(); ++i) {
    out.sentence_base.col(static_cast<Eigen::Index>(i)) =
        provider.base_vector(out.sentences[i]);
  }
  return out;
}

std::string log_entry_to_json(const TrainLogEntry& e) {
  char buf[256];
  if (e.val_gc >= 0.0) {
    std::snprintf(buf, sizeof(buf),
                  "{\"step\":%ld,\"loss\":%.6f,\"lr\":%.6e,\"grad_norm\":%.6f,"
                  "\"val_gc\":%.6f,\"wallclock\":%.3f}",
                  e.step, e.loss, e.lr, e.grad_norm, e.val_gc, e.wallclock);
  } else {
    std::snprintf(buf, sizeof(buf),
                  "{\"step\":%ld,\"loss\":%.6f,\"lr\":%.6e,\"grad_norm\":%.6f,"
                  "\"val_gc\":null,\"wallclock\":%.3f}",
                  e.step, e.loss, e.lr, e.grad_norm, e.wallclock);
  }
  return buf;
}

double dataset_accuracy(const Params<float>& params, const PreparedDataset& prepared,
                        int batch_episodes) {
  const model::VariantSpec& variant = params.variant;
  const int K = params.cfg.context_steps;
  long correct = 0, count = 0;
  const int n = static_cast<int>(prepared.trajectories.size());
  for (int begin = 0; begin < n; begin += batch_episodes) {
    const int end = std::min(n, begin + batch_episodes);
    std::vector<std::vector<StepInput>> windows;
    for (int i = begin; i < end; ++i) {
      const int len = static_cast<int>(prepared.trajectories[static_cast<std::size_t>(i)].steps.size());
      for (int start = 0; start < len; start += K) {
        std::vector<StepInput> w;
        const int wl = std::min(K, len - start);
        w.reserve(static_cast<std::size_t>(wl));
        for (int t = start; t < start + wl; ++t) {
          w.push_back(prepared.step_input(i, t, variant));
        }
        windows.push_back(std::move(w));
      }
    }
    auto batch = model::assemble_sequence<float>(variant, windows, prepared.sentence_base,
                                                 params.cfg.action_count);
    model::Workspace<float> ws;
    const Mat<float>& logits = model::forward(params, batch, false, nullptr, ws);
    const model::LossResult res = model::cross_entropy(logits, batch.target);
    correct += res.correct;
    count += res.count;
  }
  return count > 0 ? static_cast<double>(correct) / static_cast<double>(count) : 0.0;
}

TrainResult train(const PreparedDataset& prepared, const splits::SplitSpec& splits,
                  const embed::EmbeddingProvider& provider, const model::ModelConfig& model_cfg,
                  const model::VariantSpec& variant, const TrainConfig& config) {
  config.validate();
  model_cfg.validate();
  variant.validate();
  if (prepared.trajectories.empty()) throw DataError("training dataset is empty");

  const auto t_start = std::chrono::steady_clock::now();
  auto wallclock = [&t_start]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  const int n_episodes = static_cast<int>(prepared.trajectories.size());
  const int epoch_size = config.epoch_size > 0 ? config.epoch_size : n_episodes;
  const long steps_per_epoch =
      (epoch_size + config.batch_size - 1) / config.batch_size;
  const long total_steps = steps_per_epoch * config.max_epochs;
  const int patience =
      config.patience > 0 ? config.patience : default_patience(splits.level);

  Params<float> params = Params<float>::make(model_cfg, variant);
  params.init(config.seed);
  Params<float> grads = Params<float>::make(model_cfg, variant);
  AdamW optimizer(params, config);

  const levels::LevelConfig level_config = levels::default_config(splits.level);
  std::vector<std::uint64_t> val_seeds(
      splits.train_seeds.begin(),
      splits.train_seeds.begin() +
          std::min<std::size_t>(static_cast<std::size_t>(config.val_rollout_seeds),
                                splits.train_seeds.size()));

  auto validate_gc = [&](const Params<float>& p) {
    double sum = 0.0;
    for (std::uint64_t seed : val_seeds) {
      sum += eval::rollout(p, provider, level_config, seed,
                           variant.feedback_at_inference).gc;
    }
    return val_seeds.empty() ? 0.0 : sum / static_cast<double>(val_seeds.size());
  };

  TrainResult result;
  result.params = params;
  double best_val = -1.0;
  int stall = 0;
  long step = 0;
  bool stop = false;

  model::Workspace<float> ws;
  for (int epoch = 0; epoch < config.max_epochs && !stop; ++epoch) {
    std::vector<int> order(static_cast<std::size_t>(n_episodes));
    std::iota(order.begin(), order.end(), 0);
    util::Rng shuffle_rng = util::child_rng(config.seed, "epoch-shuffle",
                                            static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);
    util::Rng window_rng = util::child_rng(config.seed, "subepisodes",
                                           static_cast<std::uint64_t>(epoch));

    for (long bstart = 0; bstart < epoch_size && !stop; bstart += config.batch_size) {
      const long bend = std::min<long>(epoch_size, bstart + config.batch_size);
      std::vector<std::vector<StepInput>> windows;
      windows.reserve(static_cast<std::size_t>(bend - bstart));
      for (long bi = bstart; bi < bend; ++bi) {
        const int traj = order[static_cast<std::size_t>(bi % n_episodes)];
        const int len =
            static_cast<int>(prepared.trajectories[static_cast<std::size_t>(traj)].steps.size());
        const Window w = sample_subepisode(len, model_cfg.context_steps, window_rng);
        std::vector<StepInput> steps;
        steps.reserve(static_cast<std::size_t>(w.length));
        for (int t = w.start; t < w.start + w.length; ++t) {
          steps.push_back(prepared.step_input(traj, t, variant));
        }
        windows.push_back(std::move(steps));
      }

      auto batch = model::assemble_sequence<float>(variant, windows, prepared.sentence_base,
                                                   model_cfg.action_count);
      util::Rng dropout_rng = util::child_rng(config.seed, "dropout",
                                              static_cast<std::uint64_t>(step));
      const Mat<float>& logits = model::forward(params, batch, true, &dropout_rng, ws);
      Mat<float> dlogits;
      const model::LossResult res = model::cross_entropy(logits, batch.target, &dlogits);
      if (!std::isfinite(res.loss)) {
        throw std::runtime_error("training diverged: loss is not finite at step " +
                                 std::to_string(step + 1));
      }
      grads.visit([](const std::string&, auto& t, bool) { t.setZero(); });
      model::backward(params, batch, ws, dlogits, grads);
      const double grad_norm = clip_global_norm(grads, config.max_grad_norm);
      const double lr = lr_at(config, step + 1, total_steps);
      optimizer.step(params, grads, lr);
      ++step;

      TrainLogEntry entry;
      entry.step = step;
      entry.loss = res.loss;
      entry.lr = lr;
      entry.grad_norm = grad_norm;
      entry.wallclock = wallclock();

      if (step % config.val_interval == 0) {
        const double val = validate_gc(params);
        entry.val_gc = val;
        if (val > best_val + config.early_stop_threshold) {
          stall = 0;
        } else {
          ++stall;
        }
        if (val > best_val) {
          best_val = val;
          result.params = params;
        }
        if (stall >= patience) stop = true;
      }
      result.log.push_back(entry);
    }

    if (!stop && config.target_train_accuracy > 0.0) {
      const double acc = dataset_accuracy(params, prepared);
      if (acc >= config.target_train_accuracy) stop = true;
    }
  }

  // Final validation so the last parameters can compete for best.
  const double final_val = validate_gc(params);
  TrainLogEntry entry;
  entry.step = step;
  entry.loss = result.log.empty() ? 0.0 : result.log.back().loss;
  entry.lr = 0.0;
  entry.grad_norm = 0.0;
  entry.val_gc = final_val;
  entry.wallclock = wallclock();
  result.log.push_back(entry);
  if (final_val > best_val) {
    best_val = final_val;
    result.params = params;
  }

  result.best_val_gc = best_val;
  result.steps_run = step;
  result.train_accuracy = dataset_accuracy(result.params, prepared);
  return result;
}

}  // namespace fdt::train
