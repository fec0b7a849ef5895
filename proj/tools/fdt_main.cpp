// fdt: offline-RL pipeline driver. Subcommands: gen-data, build-splits,
// train, eval, compare. Exit codes: 0 success, 1 usage, 2 data/config
// integrity, 3 runtime failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <nlohmann/json.hpp>

#include "fdt/data.hpp"
#include "fdt/eval.hpp"
#include "fdt/model/checkpoint.hpp"
#include "fdt/train.hpp"
#include "fdt/util/errors.hpp"
#include "fdt/util/hash.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

std::string data_dir_default() {
  if (const char* env = std::getenv("FDT_DATA_DIR")) return env;
  return ".";
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw fdt::DataError("cannot write file: " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw fdt::DataError("cannot open file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Writes the resolved configuration snapshot next to an output file.
void write_config_snapshot(const std::string& out_path, const ordered_json& resolved) {
  write_text(out_path + ".config.json", resolved.dump(2) + "\n");
}

// Reads a config file section; unknown keys are integrity errors.
json load_config_section(const std::string& path, const std::string& section,
                         const std::vector<std::string>& known_keys) {
  if (path.empty()) return json::object();
  json root;
  try {
    root = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw fdt::ConfigError(std::string("malformed config file: ") + e.what());
  }
  if (!root.contains(section)) return json::object();
  const json& sec = root.at(section);
  for (const auto& [key, _] : sec.items()) {
    if (std::find(known_keys.begin(), known_keys.end(), key) == known_keys.end()) {
      throw fdt::ConfigError("unknown config key \"" + key + "\" in section \"" + section +
                             "\"");
    }
  }
  return sec;
}

struct VariantFlags {
  bool use_rtg = false;
  bool use_mission = false;
  bool use_feedback = false;
  std::string feedback_type = "all";

  fdt::model::VariantSpec to_spec() const {
    fdt::model::VariantSpec v;
    v.use_rtg = use_rtg;
    v.use_mission = use_mission;
    v.use_feedback = use_feedback;
    v.feedback_type = fdt::model::feedback_type_from_string(feedback_type);
    v.validate();
    return v;
  }
};

void add_variant_flags(CLI::App* cmd, VariantFlags& flags) {
  cmd->add_flag("--use-rtg", flags.use_rtg, "Condition on returns-to-go");
  cmd->add_flag("--use-mission", flags.use_mission, "Condition on the mission string");
  auto* fb = cmd->add_flag("--use-feedback", flags.use_feedback,
                           "Condition on language feedback");
  cmd->add_option("--feedback-type", flags.feedback_type, "rule|task|all")
      ->check(CLI::IsMember({"rule", "task", "all"}))
      ->needs(fb);
}

int cmd_gen_data(const std::string& level_name, const std::string& out_dir,
                 std::uint64_t seed, int instances, int per_instance,
                 const std::string& splits_path, bool force, int workers) {
  const fdt::levels::LevelName level = fdt::levels::level_from_string(level_name);
  fdt::data::GenerateOptions options;
  options.config = fdt::levels::default_config(level);
  options.trajectories_per_instance =
      per_instance > 0 ? per_instance : options.config.trajectories_per_instance;
  options.dataset_seed = seed;
  options.workers = workers;
  if (!splits_path.empty()) {
    const auto splits = fdt::splits::load_splits(splits_path);
    if (splits.level != level) {
      throw fdt::ConfigError("split file level does not match --level");
    }
    options.instance_seeds = splits.train_seeds;
  } else {
    const int n = instances > 0 ? instances : options.config.dataset_instances;
    options.instance_seeds = fdt::data::consecutive_seeds(seed, n);
  }

  fs::create_directories(out_dir);
  const std::string data_path = (fs::path(out_dir) / "dataset.jsonl").string();
  const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
  const std::string tmp_path = data_path + ".tmp";

  const auto manifest = fdt::data::generate_dataset(options, tmp_path);
  if (fs::exists(data_path)) {
    const std::string old_hash = fdt::util::sha256_file_hex(data_path);
    if (old_hash == manifest.content_hash) {
      fs::remove(tmp_path);
      std::cout << "unchanged: " << data_path << "\n";
      std::cout << "manifest hash: sha256:" << manifest.content_hash << "\n";
      return kExitOk;
    }
    if (!force) {
      fs::remove(tmp_path);
      std::cerr << "error: " << data_path
                << " exists with different content; pass --force to overwrite\n";
      return kExitData;
    }
  }
  fs::rename(tmp_path, data_path);
  write_text(manifest_path, fdt::data::manifest_to_json(manifest));

  ordered_json resolved;
  resolved["command"] = "gen-data";
  resolved["level"] = level_name;
  resolved["seed"] = seed;
  resolved["instances"] = options.instance_seeds.size();
  resolved["trajectories_per_instance"] = options.trajectories_per_instance;
  resolved["splits"] = splits_path;
  resolved["workers"] = workers;
  write_config_snapshot(data_path, resolved);

  std::cout << "wrote " << manifest.episode_count << " episodes to " << data_path << "\n";
  std::cout << "manifest hash: sha256:" << manifest.content_hash << "\n";
  return kExitOk;
}

int cmd_build_splits(const std::string& level_name, std::uint64_t master_seed,
                     const std::string& out_path, int train_count, int eval_count) {
  const fdt::levels::LevelName level = fdt::levels::level_from_string(level_name);
  fdt::splits::BuildOptions options;
  if (train_count > 0) options.train_count = train_count;
  if (eval_count > 0) options.eval_count = eval_count;
  const auto spec = fdt::splits::build_splits(level, master_seed, options);
  fdt::splits::save_splits(spec, out_path);

  ordered_json resolved;
  resolved["command"] = "build-splits";
  resolved["level"] = level_name;
  resolved["master_seed"] = master_seed;
  resolved["train_count"] = spec.train_seeds.size();
  resolved["eval_count"] = spec.iid_seeds.size();
  write_config_snapshot(out_path, resolved);

  std::cout << "wrote splits to " << out_path << " (train " << spec.train_seeds.size()
            << ", iid " << spec.iid_seeds.size() << ", ood cells " << spec.ood_seeds.size()
            << ")\n";
  return kExitOk;
}

int cmd_train(const std::string& dataset_path, const std::string& splits_path,
              const VariantFlags& vflags, const std::string& out_path,
              const std::string& config_path, fdt::train::TrainConfig tc,
              fdt::model::ModelConfig mc, std::uint64_t embed_seed) {
  const fdt::model::VariantSpec variant = vflags.to_spec();
  const auto splits = fdt::splits::load_splits(splits_path);
  const auto level_config = fdt::levels::default_config(splits.level);
  if (mc.max_timestep == 0) mc.max_timestep = level_config.max_steps;

  const json train_cfg = load_config_section(
      config_path, "train",
      {"lr", "beta1", "beta2", "weight_decay", "max_grad_norm", "max_epochs", "batch_size",
       "warmup_ratio", "val_interval", "val_rollout_seeds", "patience", "early_stop_threshold",
       "seed", "epoch_size", "gamma", "target_train_accuracy"});
  auto apply_d = [&train_cfg](const char* key, double& v) {
    if (train_cfg.contains(key)) v = train_cfg.at(key).get<double>();
  };
  auto apply_i = [&train_cfg](const char* key, int& v) {
    if (train_cfg.contains(key)) v = train_cfg.at(key).get<int>();
  };
  apply_d("lr", tc.lr);
  apply_d("beta1", tc.beta1);
  apply_d("beta2", tc.beta2);
  apply_d("weight_decay", tc.weight_decay);
  apply_d("max_grad_norm", tc.max_grad_norm);
  apply_i("max_epochs", tc.max_epochs);
  apply_i("batch_size", tc.batch_size);
  apply_d("warmup_ratio", tc.warmup_ratio);
  apply_i("val_interval", tc.val_interval);
  apply_i("val_rollout_seeds", tc.val_rollout_seeds);
  apply_i("patience", tc.patience);
  apply_d("early_stop_threshold", tc.early_stop_threshold);
  apply_d("gamma", tc.gamma);
  apply_d("target_train_accuracy", tc.target_train_accuracy);
  if (train_cfg.contains("seed")) tc.seed = train_cfg.at("seed").get<std::uint64_t>();
  apply_i("epoch_size", tc.epoch_size);

  const auto provider = fdt::embed::EmbeddingProvider::hashed(mc.lang_src_dim, embed_seed);
  auto trajectories = fdt::data::load_dataset(dataset_path);
  const std::string level_str(fdt::levels::level_name_str(splits.level));
  for (const auto& t : trajectories) {
    if (t.level != level_str) {
      throw fdt::ConfigError("dataset level " + t.level + " does not match splits level " +
                             level_str);
    }
  }
  const auto prepared =
      fdt::train::prepare_dataset(std::move(trajectories), variant, provider, tc.gamma);

  const auto result = fdt::train::train(prepared, splits, provider, mc, variant, tc);

  fdt::model::CheckpointMeta meta;
  meta.config = mc;
  meta.variant = variant;
  meta.level = level_str;
  meta.provider_hash = provider.content_hash();
  meta.gamma = tc.gamma;
  fdt::model::save_checkpoint(result.params, meta, out_path);

  std::string log_text;
  for (const auto& e : result.log) log_text += fdt::train::log_entry_to_json(e) + "\n";
  write_text(out_path + ".log.jsonl", log_text);

  ordered_json resolved;
  resolved["command"] = "train";
  resolved["dataset"] = dataset_path;
  resolved["splits"] = splits_path;
  resolved["variant"] = variant.to_string();
  resolved["model"] = {{"n_layers", mc.n_layers},       {"n_heads", mc.n_heads},
                       {"hidden", mc.hidden},           {"dropout", mc.dropout},
                       {"context_steps", mc.context_steps}, {"max_timestep", mc.max_timestep},
                       {"lang_src_dim", mc.lang_src_dim}};
  resolved["train"] = {{"lr", tc.lr},
                       {"beta1", tc.beta1},
                       {"beta2", tc.beta2},
                       {"weight_decay", tc.weight_decay},
                       {"max_grad_norm", tc.max_grad_norm},
                       {"max_epochs", tc.max_epochs},
                       {"batch_size", tc.batch_size},
                       {"warmup_ratio", tc.warmup_ratio},
                       {"val_interval", tc.val_interval},
                       {"val_rollout_seeds", tc.val_rollout_seeds},
                       {"patience", tc.patience},
                       {"early_stop_threshold", tc.early_stop_threshold},
                       {"seed", tc.seed},
                       {"epoch_size", tc.epoch_size},
                       {"gamma", tc.gamma}};
  resolved["embed_seed"] = embed_seed;
  write_config_snapshot(out_path, resolved);

  std::cout << "trained " << result.steps_run << " steps; best validation GC "
            << result.best_val_gc << "; train accuracy " << result.train_accuracy << "\n";
  std::cout << "checkpoint: " << out_path << " sha256:" << fdt::util::sha256_file_hex(out_path)
            << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& splits_path,
             const std::string& out_path, bool no_feedback_at_inference, bool random_policy,
             int workers, std::uint64_t embed_seed, double temperature) {
  const auto splits = fdt::splits::load_splits(splits_path);
  fdt::eval::EvaluateOptions options;
  options.feedback_at_inference = !no_feedback_at_inference;
  options.workers = workers;
  options.temperature = temperature;

  std::vector<fdt::eval::EvalCell> cells;
  if (random_policy) {
    options.include_random_baseline = false;
    cells = fdt::eval::evaluate_random(splits, options);
  } else {
    const auto loaded = fdt::model::load_checkpoint(checkpoint_path);
    if (loaded.meta.level != fdt::levels::level_name_str(splits.level)) {
      throw fdt::ConfigError("checkpoint level " + loaded.meta.level +
                             " does not match splits level " +
                             std::string(fdt::levels::level_name_str(splits.level)));
    }
    const auto provider =
        fdt::embed::EmbeddingProvider::hashed(loaded.meta.config.lang_src_dim, embed_seed);
    if (provider.content_hash() != loaded.meta.provider_hash) {
      throw fdt::ConfigError("embedding provider does not match the checkpoint");
    }
    options.checkpoint_hash = "sha256:" + fdt::util::sha256_file_hex(checkpoint_path);
    cells = fdt::eval::evaluate(loaded.params, provider, splits, options);
  }
  fdt::eval::write_results_csv(cells, out_path);

  ordered_json resolved;
  resolved["command"] = "eval";
  resolved["checkpoint"] = checkpoint_path;
  resolved["splits"] = splits_path;
  resolved["feedback_at_inference"] = options.feedback_at_inference;
  resolved["random_policy"] = random_policy;
  resolved["temperature"] = temperature;
  resolved["workers"] = workers;
  write_config_snapshot(out_path, resolved);

  std::cout << "wrote " << cells.size() << " result rows to " << out_path << "\n";
  return kExitOk;
}

int cmd_compare(const std::string& a_path, const std::string& b_path,
                const std::string& change_path, const std::string& out_path,
                const std::string& summary_path) {
  const auto a = fdt::eval::read_results_csv(a_path);
  const auto b = fdt::eval::read_results_csv(b_path);
  std::optional<std::vector<fdt::eval::EvalCell>> change;
  if (!change_path.empty()) change = fdt::eval::read_results_csv(change_path);
  const auto rows = fdt::eval::compare_results(a, b, change ? &*change : nullptr);
  fdt::eval::write_compare_csv(rows, out_path);
  if (!summary_path.empty()) write_text(summary_path, fdt::eval::compare_summary(rows));
  std::cout << "wrote " << rows.size() << " comparison rows to " << out_path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"feedback-conditioned decision transformer pipeline"};
  app.require_subcommand(1);
  int workers = 1;
  app.add_option("--workers", workers, "Worker threads for generation and rollouts")
      ->check(CLI::PositiveNumber);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate an offline dataset with a random policy");
  std::string gen_level, gen_out = data_dir_default(), gen_splits;
  std::uint64_t gen_seed = 0;
  int gen_instances = 0, gen_per = 0;
  bool gen_force = false;
  gen->add_option("--level", gen_level, "Level name")->required();
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--seed", gen_seed, "Dataset seed (also first instance seed)");
  gen->add_option("--instances", gen_instances, "Environment instances (default: level table)");
  gen->add_option("--per-instance", gen_per, "Trajectories per instance (default: 10)");
  gen->add_option("--splits", gen_splits, "Split file; uses its training seeds");
  gen->add_flag("--force", gen_force, "Overwrite an existing dataset");

  // build-splits
  auto* bs = app.add_subcommand("build-splits", "Build train/IID/OOD seed splits");
  std::string bs_level, bs_out;
  std::uint64_t bs_seed = 0;
  int bs_train = 0, bs_eval = 0;
  bs->add_option("--level", bs_level, "Level name")->required();
  bs->add_option("--master-seed", bs_seed, "Master seed");
  bs->add_option("--out", bs_out, "Output JSON path")->required();
  bs->add_option("--train-count", bs_train, "Training seed count (default: level table)");
  bs->add_option("--eval-count", bs_eval, "Seeds per evaluation cell (default: 128)");

  // train
  auto* tr = app.add_subcommand("train", "Train a model variant on a dataset");
  std::string tr_dataset, tr_splits, tr_out, tr_config;
  VariantFlags tr_variant;
  fdt::train::TrainConfig tr_tc;
  fdt::model::ModelConfig tr_mc;
  tr_mc.max_timestep = 0;  // resolved from the level
  std::uint64_t tr_embed_seed = 0;
  tr->add_option("--dataset", tr_dataset, "dataset.jsonl path")->required();
  tr->add_option("--splits", tr_splits, "Split file")->required();
  tr->add_option("--out", tr_out, "Checkpoint output path")->required();
  tr->add_option("--config", tr_config, "JSON config file (flags win)");
  add_variant_flags(tr, tr_variant);
  tr->add_option("--lr", tr_tc.lr, "Learning rate");
  tr->add_option("--epochs", tr_tc.max_epochs, "Max epochs");
  tr->add_option("--batch", tr_tc.batch_size, "Batch size");
  tr->add_option("--val-interval", tr_tc.val_interval, "Steps between validations");
  tr->add_option("--patience", tr_tc.patience, "Early-stopping patience (val steps)");
  tr->add_option("--seed", tr_tc.seed, "Training seed");
  tr->add_option("--embed-seed", tr_embed_seed, "Embedding provider seed");
  tr->add_option("--layers", tr_mc.n_layers, "Decoder layers");
  tr->add_option("--heads", tr_mc.n_heads, "Attention heads");
  tr->add_option("--hidden", tr_mc.hidden, "Hidden width");
  tr->add_option("--dropout", tr_mc.dropout, "Dropout probability");
  tr->add_option("--context", tr_mc.context_steps, "Context length K in timesteps");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on IID/OOD splits");
  std::string ev_ckpt, ev_splits, ev_out;
  bool ev_no_fb = false, ev_random = false;
  std::uint64_t ev_embed_seed = 0;
  double ev_temperature = 0.0;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint path");
  ev->add_option("--splits", ev_splits, "Split file")->required();
  ev->add_option("--out", ev_out, "Results CSV path")->required();
  ev->add_flag("--no-feedback-at-inference", ev_no_fb,
               "Replace live feedback with the placeholder embedding");
  ev->add_flag("--random-policy", ev_random, "Evaluate the uniform random baseline");
  ev->add_option("--embed-seed", ev_embed_seed, "Embedding provider seed");
  ev->add_option("--temperature", ev_temperature,
                 "Sampling temperature at inference (0 = greedy)");

  // compare
  auto* cp = app.add_subcommand("compare", "Diff two results CSVs");
  std::string cp_a, cp_b, cp_change, cp_out, cp_summary;
  cp->add_option("--a", cp_a, "Results CSV under comparison")->required();
  cp->add_option("--b", cp_b, "Baseline results CSV")->required();
  cp->add_option("--change", cp_change,
                 "Second run of --a (e.g. feedback toggled at inference)");
  cp->add_option("--out", cp_out, "Comparison CSV path")->required();
  cp->add_option("--summary", cp_summary, "Optional plain-text summary path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_data(gen_level, gen_out, gen_seed, gen_instances, gen_per, gen_splits,
                          gen_force, workers);
    }
    if (bs->parsed()) return cmd_build_splits(bs_level, bs_seed, bs_out, bs_train, bs_eval);
    if (tr->parsed()) {
      return cmd_train(tr_dataset, tr_splits, tr_variant, tr_out, tr_config, tr_tc, tr_mc,
                       tr_embed_seed);
    }
    if (ev->parsed()) {
      if (!ev_random && ev_ckpt.empty()) {
        throw fdt::UsageError("--checkpoint is required unless --random-policy is set");
      }
      return cmd_eval(ev_ckpt, ev_splits, ev_out, ev_no_fb, ev_random, workers, ev_embed_seed,
                      ev_temperature);
    }
    if (cp->parsed()) return cmd_compare(cp_a, cp_b, cp_change, cp_out, cp_summary);
  } catch (const fdt::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fdt::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const fdt::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
