#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rmbench/evalbench.hpp"
#include "rmbench/training.hpp"

namespace rmbench {

// Whole-experiment configuration. JSON on disk; flags and RMBENCH_* env
// variables override file values (flags win).
struct ExperimentConfig {
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  int jobs = 0;  // parallel training workers; 0 = hardware default

  // baseline + the six finetuning configurations, reporting order
  std::vector<std::string> objectives{"baseline",          "triplet",
                                      "tcn_text",          "r3m",
                                      "vip_text",          "vip_text_plus_vip",
                                      "liv"};
  std::map<std::string, std::optional<double>> lr_overrides;

  WorldConfig world;
  struct DataCfg {
    int cap = 50000;
    double r_val = 0.1;
  } data;
  EncoderConfig encoder;  // obs_dim is forced to world.obs_dim
  struct TrainCfg {
    int epochs = 5;
    int batch_size = 32;
    std::optional<double> lr;  // unset: 1e-4, except LIV's 1e-5
    double lr_min = 1e-6;
    double grad_clip = 0.0;
  } train;
  ObjectiveConfig loss;
  struct EvalCfg {
    int n_pairs = 10000;
    int n_voc_trajectories = 50;
    VocVariant voc_variant = VocVariant::kSpearman;
  } eval;
};

// JSON (de)serialization; round-trips losslessly. from_json validates
// objective names and value ranges.
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);

// Resolution pipeline: defaults <- file <- RMBENCH_* env <- flag overrides.
// Env names join the JSON path with underscores: RMBENCH_SEED,
// RMBENCH_TRAIN_EPOCHS, RMBENCH_WORLD_HORIZON, ...
struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> jobs;
};
ExperimentConfig resolve_config(const std::optional<std::filesystem::path>& file,
                                const CliOverrides& overrides);

// Output layout under cfg.out_dir.
std::filesystem::path archive_path(const ExperimentConfig& cfg);
std::filesystem::path run_dir(const ExperimentConfig& cfg, const std::string& tag);
std::filesystem::path checkpoint_path(const ExperimentConfig& cfg, const std::string& tag);
std::filesystem::path eval_dir(const ExperimentConfig& cfg);

// Stages. Each returns whether it did work (false: satisfied by resume).
bool stage_gen(const ExperimentConfig& cfg);
bool stage_train(const ExperimentConfig& cfg, const std::string& tag_name);
void stage_eval(const ExperimentConfig& cfg);
// Re-renders the Markdown tables from eval/results.csv without re-scoring.
void stage_report(const ExperimentConfig& cfg);

// gen -> train every objective (cfg.jobs workers) -> eval. Stages already
// complete on disk are skipped, so a rerun after deleting one run directory
// retrains only that objective.
void run_all(const ExperimentConfig& cfg);

// Per-tag deterministic seeds.
std::uint64_t model_seed(const ExperimentConfig& cfg, ObjectiveTag tag);
std::uint64_t dataset_seed(const ExperimentConfig& cfg, ObjectiveTag tag);

}  // namespace rmbench
