#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "rmbench/datapipe.hpp"
#include "rmbench/encoders.hpp"
#include "rmbench/objectives.hpp"
#include "rmbench/synthworld.hpp"

namespace rmbench {

struct TrainConfig {
  int epochs = 5;
  int batch_size = 32;
  double lr = 1e-4;
  double lr_min = 1e-6;
  ObjectiveTag objective = ObjectiveTag::kTriplet;
  ObjectiveConfig loss;
  std::uint64_t seed = 0;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
};

// LIV needs the lower rate to stay stable; an explicit override wins.
double resolve_lr(ObjectiveTag tag, std::optional<double> override_lr);

// eta_min + (eta - eta_min) (1 + cos(pi step/total)) / 2, with the endpoints
// pinned exactly: step 0 -> eta, step >= total -> eta_min.
double cosine_lr(int step, int total_steps, double lr, double lr_min);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  void init(const std::vector<Parameter*>& params);
};

// Bias-corrected Adam update, in place. Non-finite gradients abort with the
// parameter's name.
void adam_step(const std::vector<Parameter*>& params,
               const std::vector<std::vector<double>>& grads, AdamState& state,
               double lr, double grad_clip = 0.0);

// Gathers one batch: per-role observation matrices are encoded through the
// image tower, goal ids through the text tower, and the in-batch negatives
// table is drawn when the objective consumes one.
EmbeddingBatch assemble_batch(const RolloutArchive& archive,
                              const FinetuneDataset& ds,
                              std::span<const int> tuple_indices,
                              RewardModel& model, Binding& bind,
                              const ObjectiveConfig& loss_cfg,
                              std::uint64_t negatives_seed);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double lr = 0.0;  // rate used by the epoch's final step
};

struct TrainResult {
  RewardModel best;  // checkpoint with the lowest validation loss
  int best_epoch = 0;
  std::vector<EpochMetrics> metrics;
  std::vector<double> lr_trace;  // per optimizer step
};

// Full loop: per epoch, reassign views, iterate shuffled batches, encode,
// loss, backward, Adam with the cosine schedule; track per-epoch train and
// validation losses (validation keeps the canonical view and a fixed batch
// order, so epochs stay comparable).
TrainResult run_training(const TrainConfig& cfg, RewardModel& model,
                         const FinetuneDataset& train_ds,
                         const FinetuneDataset& val_ds,
                         const RolloutArchive& archive);

void write_metrics_csv(const std::vector<EpochMetrics>& metrics,
                       const std::filesystem::path& path);

}  // namespace rmbench
