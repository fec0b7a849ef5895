#include "fdt/eval.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "fdt/env.hpp"
#include "fdt/feedback.hpp"
#include "fdt/util/errors.hpp"
#include "fdt/util/rng.hpp"
#include "fdt/util/threading.hpp"

namespace fdt::eval {

using model::Mat;
using model::StepInput;
using model::Vec;

namespace {

// Per-episode cache of frozen sentence vectors.
struct SentenceCache {
  const embed::EmbeddingProvider* provider;
  std::vector<std::string> texts;
  std::map<std::string, int> index;
  Mat<float> base;

  explicit SentenceCache(const embed::EmbeddingProvider& p) : provider(&p) {
    base.resize(p.d_src(), 0);
  }

  int intern(const std::string& s) {
    const auto it = index.find(s);
    if (it != index.end()) return it->second;
    const int id = static_cast<int>(texts.size());
    texts.push_back(s);
    index.emplace(s, id);
    base.conservativeResize(Eigen::NoChange, id + 1);
    base.col(id) = provider->base_vector(s);
    return id;
  }
};

std::string filtered_feedback_text(const feedback::FeedbackEvent& ev,
                                   model::FeedbackType type) {
  if (ev.kind == feedback::FeedbackKind::none) return feedback::kNoFeedbackText;
  if (type == model::FeedbackType::rule && ev.kind != feedback::FeedbackKind::rule) {
    return feedback::kNoFeedbackText;
  }
  if (type == model::FeedbackType::task && ev.kind != feedback::FeedbackKind::task) {
    return feedback::kNoFeedbackText;
  }
  return ev.text;
}

}  // namespace

RolloutRecord rollout(const model::Params<float>& params,
                      const embed::EmbeddingProvider& provider,
                      const levels::LevelConfig& config, std::uint64_t seed,
                      bool feedback_at_inference, double temperature) {
  const model::VariantSpec& variant = params.variant;
  const model::ModelConfig& cfg = params.cfg;
  const int K = cfg.context_steps;
  const int M = variant.tokens_per_step();
  const int h = cfg.hidden;

  env::Episode ep = env::Episode::reset(config, seed);
  SentenceCache sentences(provider);
  util::Rng sample_rng = util::child_rng(seed, "rollout-sampling");
  auto select_action = [&](const model::Vec<float>& logits) {
    if (temperature <= 0.0) {
      Eigen::Index idx = 0;
      logits.maxCoeff(&idx);
      return static_cast<int>(idx);
    }
    model::Vec<float> scaled = logits / static_cast<float>(temperature);
    const float mx = scaled.maxCoeff();
    model::Vec<float> probs = (scaled.array() - mx).exp();
    probs /= probs.sum();
    double u = sample_rng.real01();
    for (int i = 0; i < probs.size(); ++i) {
      u -= probs[i];
      if (u <= 0.0) return i;
    }
    return static_cast<int>(probs.size()) - 1;
  };

  // Mission token input is constant across the episode.
  Vec<float> mission_tok;
  int mission_id = model::kNoSentence;
  if (variant.use_mission) {
    mission_id = sentences.intern(ep.mission().raw);
    mission_tok = params.mission_in_w *
                      model::project_language(params, Vec<float>(sentences.base.col(mission_id))) +
                  params.mission_in_b;
  }

  model::IncrementalState<float> cache =
      model::make_incremental(params, (K + 1) * M + M);
  std::vector<StepInput> history;
  grid::Observation obs = ep.observation();
  std::string pending_feedback = feedback::kNoFeedbackText;
  double reward_total = 0.0;
  int steps = 0;

  while (!ep.done()) {
    const int t = steps;
    const double rtg_target = 1.0 - reward_total;

    StepInput in;
    in.obs = obs;
    in.rtg = rtg_target;
    in.timestep = std::min(t, cfg.max_timestep - 1);
    in.mission_sentence = mission_id;
    if (variant.use_feedback) {
      in.feedback_sentence = feedback_at_inference ? sentences.intern(pending_feedback)
                                                   : model::kPlaceholderSentence;
    }

    int action_id;
    if (t < K) {
      // exact incremental path: the window has not started sliding yet
      const auto pos = params.pos_emb.col(in.timestep);
      Mat<float> cols(h, M - 1);
      int m = 0;
      if (variant.use_rtg) {
        cols.col(m++) = params.rtg_in_w * static_cast<float>(in.rtg) + params.rtg_in_b + pos;
      }
      if (variant.use_mission) cols.col(m++) = mission_tok + pos;
      if (variant.use_feedback) {
        Vec<float> lang =
            in.feedback_sentence == model::kPlaceholderSentence
                ? params.feedback_placeholder
                : model::project_language(
                      params, Vec<float>(sentences.base.col(in.feedback_sentence)));
        cols.col(m++) = params.feedback_in_w * lang + params.feedback_in_b + pos;
      }
      cols.col(m) = model::encode_observation(params, obs) + pos;
      const Mat<float> hidden = model::incremental_append(params, cache, cols);
      const model::Vec<float> logits = params.head_w * hidden.col(M - 2) + params.head_b;
      action_id = select_action(logits);
      // append the chosen action token so later steps can attend to it
      Vec<float> onehot = Vec<float>::Zero(cfg.action_count);
      onehot[action_id] = 1.0f;
      Mat<float> act_col(h, 1);
      act_col.col(0) = params.action_in_w * onehot + params.action_in_b + pos;
      model::incremental_append(params, cache, act_col);
    } else {
      // sliding window: rebuild the last K timesteps
      std::vector<std::vector<StepInput>> windows(1);
      windows[0].assign(history.end() - (K - 1), history.end());
      windows[0].push_back(in);
      auto batch = model::assemble_sequence<float>(variant, windows, sentences.base,
                                                   cfg.action_count);
      model::Workspace<float> ws;
      const Mat<float>& logits = model::forward(params, batch, false, nullptr, ws);
      action_id = select_action(model::Vec<float>(logits.col(batch.slots() - 1)));
    }

    const env::StepOutcome out = ep.step(static_cast<grid::Action>(action_id));
    reward_total += out.reward;
    in.action = action_id;
    history.push_back(in);
    pending_feedback = filtered_feedback_text(out.feedback, variant.feedback_type);
    obs = out.observation;
    ++steps;
  }

  RolloutRecord rec;
  rec.seed = seed;
  rec.gc = ep.gc_success();
  rec.success = ep.terminated();
  rec.steps = steps;
  rec.reward = reward_total;
  return rec;
}

RolloutRecord rollout_random(const levels::LevelConfig& config, std::uint64_t seed,
                             std::uint64_t policy_seed) {
  env::Episode ep = env::Episode::reset(config, seed);
  util::Rng rng = util::child_rng(policy_seed, "baseline-policy", seed);
  RolloutRecord rec;
  rec.seed = seed;
  while (!ep.done()) {
    const env::StepOutcome out = ep.step(static_cast<grid::Action>(rng.below_int(6)));
    rec.reward += out.reward;
    ++rec.steps;
  }
  rec.gc = ep.gc_success();
  rec.success = ep.terminated();
  return rec;
}

namespace {

struct CellPlan {
  std::string split;
  std::optional<splits::Scenario> scenario;
  const std::vector<std::uint64_t>* seeds;
};

std::vector<CellPlan> plan_cells(const splits::SplitSpec& spec) {
  std::vector<CellPlan> plan;
  plan.push_back({"iid", std::nullopt, &spec.iid_seeds});
  for (const auto& [scenario, seeds] : spec.ood_seeds) {
    plan.push_back({"ood", scenario, &seeds});
  }
  return plan;
}

template <class RolloutFn>
std::vector<EvalCell> run_cells(const splits::SplitSpec& spec, const std::string& variant,
                                const EvaluateOptions& options, RolloutFn&& fn) {
  std::vector<EvalCell> cells;
  for (const CellPlan& cp : plan_cells(spec)) {
    if (cp.seeds->empty()) {
      throw ConfigError("split file has no seeds for cell " + cp.split +
                        (cp.scenario ? "/" + std::string(splits::scenario_id(*cp.scenario)) : ""));
    }
    const levels::LevelConfig config = spec.cell_config(cp.scenario);
    EvalCell cell;
    cell.level = std::string(levels::level_name_str(spec.level));
    cell.variant = variant;
    cell.split = cp.split;
    cell.scenario = cp.scenario ? std::string(splits::scenario_id(*cp.scenario)) : "";
    cell.n = static_cast<int>(cp.seeds->size());
    cell.seed_set_hash = splits::seed_set_hash(*cp.seeds);
    cell.checkpoint_hash = options.checkpoint_hash;
    cell.records.resize(cp.seeds->size());
    util::parallel_for(static_cast<int>(cp.seeds->size()), options.workers, [&](int i) {
      cell.records[static_cast<std::size_t>(i)] =
          fn(config, (*cp.seeds)[static_cast<std::size_t>(i)]);
    });
    double sum = 0.0;
    for (const RolloutRecord& r : cell.records) sum += r.gc;
    cell.gc_mean = sum / static_cast<double>(cell.records.size());
    cells.push_back(std::move(cell));
  }

  // aggregate OOD performance averaged across the applicable scenarios
  EvalCell agg;
  agg.level = std::string(levels::level_name_str(spec.level));
  agg.variant = variant;
  agg.split = "ood";
  agg.scenario = kOodAggregateScenario;
  agg.checkpoint_hash = options.checkpoint_hash;
  std::uint64_t h = util::kFnvOffset;
  for (const EvalCell& c : cells) {
    if (c.split != "ood") continue;
    agg.gc_mean += c.gc_mean;
    agg.n += c.n;
    h = util::fnv1a_bytes(&c.seed_set_hash, sizeof(c.seed_set_hash), h);
  }
  agg.gc_mean /= static_cast<double>(spec.ood_seeds.size());
  agg.seed_set_hash = h;
  cells.push_back(std::move(agg));
  return cells;
}

}  // namespace

std::vector<EvalCell> evaluate(const model::Params<float>& params,
                               const embed::EmbeddingProvider& provider,
                               const splits::SplitSpec& splits, const EvaluateOptions& options) {
  std::vector<EvalCell> cells = run_cells(
      splits, params.variant.to_string(), options,
      [&](const levels::LevelConfig& config, std::uint64_t seed) {
        return rollout(params, provider, config, seed, options.feedback_at_inference,
                       options.temperature);
      });
  if (options.include_random_baseline) {
    const std::vector<EvalCell> baseline = evaluate_random(splits, options);
    cells.insert(cells.end(), baseline.begin(), baseline.end());
  }
  return cells;
}

std::vector<EvalCell> evaluate_random(const splits::SplitSpec& splits,
                                      const EvaluateOptions& options) {
  EvaluateOptions opts = options;
  opts.checkpoint_hash = "-";
  return run_cells(splits, "random-policy", opts,
                   [&](const levels::LevelConfig& config, std::uint64_t seed) {
                     return rollout_random(config, seed, options.baseline_policy_seed);
                   });
}

namespace {

std::string format_gc(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

std::string results_to_csv(const std::vector<EvalCell>& cells) {
  std::string out = kResultsCsvHeader;
  out.push_back('\n');
  for (const EvalCell& c : cells) {
    char hash_hex[32];
    std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                  static_cast<unsigned long long>(c.seed_set_hash));
    out += c.level + "," + c.variant + "," + c.split + "," + c.scenario + "," +
           format_gc(c.gc_mean) + "," + std::to_string(c.n) + "," + hash_hex + "," +
           c.checkpoint_hash + "\n";
  }
  return out;
}

std::vector<EvalCell> results_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kResultsCsvHeader) {
    throw DataError("results CSV has an unexpected header");
  }
  std::vector<EvalCell> cells;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 8) throw DataError("results CSV row has wrong field count");
    EvalCell c;
    c.level = f[0];
    c.variant = f[1];
    c.split = f[2];
    c.scenario = f[3];
    c.gc_mean = std::stod(f[4]);
    c.n = std::stoi(f[5]);
    c.seed_set_hash = std::stoull(f[6], nullptr, 16);
    c.checkpoint_hash = f[7];
    cells.push_back(std::move(c));
  }
  return cells;
}

void write_results_csv(const std::vector<EvalCell>& cells, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write results CSV: " + path);
  const std::string text = results_to_csv(cells);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::vector<EvalCell> read_results_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open results CSV: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return results_from_csv(ss.str());
}

std::vector<CompareRow> compare_results(const std::vector<EvalCell>& a,
                                        const std::vector<EvalCell>& b,
                                        const std::vector<EvalCell>* change_run) {
  auto key = [](const EvalCell& c) { return c.level + "|" + c.split + "|" + c.scenario; };
  // Model rows win; appended random-policy baseline rows only stand in when
  // a side holds nothing else (e.g. a --random-policy results file).
  auto index_cells = [&key](const std::vector<EvalCell>& cells) {
    std::map<std::string, const EvalCell*> out;
    for (const EvalCell& c : cells) {
      if (c.variant == "random-policy") out.try_emplace(key(c), &c);
    }
    for (const EvalCell& c : cells) {
      if (c.variant != "random-policy") out[key(c)] = &c;
    }
    return out;
  };
  const auto b_cells = index_cells(b);
  std::map<std::string, const EvalCell*> change_cells;
  if (change_run) change_cells = index_cells(*change_run);

  bool a_has_model_rows = false;
  for (const EvalCell& c : a) {
    if (c.variant != "random-policy") a_has_model_rows = true;
  }
  std::vector<CompareRow> rows;
  for (const EvalCell& c : a) {
    if (a_has_model_rows && c.variant == "random-policy") continue;
    const auto it = b_cells.find(key(c));
    if (it == b_cells.end()) {
      throw DataError("comparison cell missing from baseline results: " + key(c));
    }
    CompareRow row;
    row.level = c.level;
    row.variant = c.variant;
    row.split = c.split;
    row.scenario = c.scenario;
    row.gc = c.gc_mean;
    row.delta = (c.gc_mean - it->second->gc_mean) * 100.0;
    if (change_run) {
      const auto ct = change_cells.find(key(c));
      if (ct == change_cells.end()) {
        throw DataError("comparison cell missing from change results: " + key(c));
      }
      row.change = (ct->second->gc_mean - c.gc_mean) * 100.0;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string compare_to_csv(const std::vector<CompareRow>& rows) {
  std::string out = kCompareCsvHeader;
  out.push_back('\n');
  char buf[64];
  for (const CompareRow& r : rows) {
    out += r.level + "," + r.variant + "," + r.split + "," + r.scenario + ",";
    out += format_gc(r.gc);
    std::snprintf(buf, sizeof(buf), ",%+.2f", r.delta);
    out += buf;
    if (r.change) {
      std::snprintf(buf, sizeof(buf), ",%+.2f", *r.change);
      out += buf;
    } else {
      out += ",";
    }
    out.push_back('\n');
  }
  return out;
}

void write_compare_csv(const std::vector<CompareRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write comparison CSV: " + path);
  const std::string text = compare_to_csv(rows);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string compare_summary(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << "level            split  scenario                 gc       delta    change\n";
  for (const CompareRow& r : rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-16s %-5s  %-22s %8.4f  %+8.2f  ", r.level.c_str(),
                  r.split.c_str(), r.scenario.empty() ? "-" : r.scenario.c_str(), r.gc, r.delta);
    out << line;
    if (r.change) {
      char cbuf[32];
      std::snprintf(cbuf, sizeof(cbuf), "%+8.2f", *r.change);
      out << cbuf;
    } else {
      out << "       -";
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace fdt::eval
