#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rmbench/encoders.hpp"
#include "rmbench/synthworld.hpp"

namespace rmbench {

// view_mode: a concrete view index, or kMultiView for the mean of per-view
// scores.
inline constexpr int kMultiView = -1;

std::string view_label(int view_mode);

// ---- scoring -----------------------------------------------------------

// Per-view scalar score of one recorded timestep. Implementations must be
// deterministic; evaluation treats them as read-only.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual double score(const RolloutArchive& archive, int rollout_idx, int t,
                       int view) const = 0;
};

// Multi-view score = arithmetic mean of the per-view scores.
double view_score(const Scorer& scorer, const RolloutArchive& archive,
                  int rollout_idx, int t, int view_mode);

// Goal-similarity scorer backed by a trained model: S(z_{t,view}, v_goal).
// Embeddings are cached per (rollout, view) on first touch.
class ModelScorer : public Scorer {
 public:
  explicit ModelScorer(RewardModel model);
  double score(const RolloutArchive& archive, int rollout_idx, int t,
               int view) const override;

 private:
  mutable RewardModel model_;
  mutable std::map<std::pair<int, int>, std::vector<double>> scores_;
  mutable std::map<int, std::vector<double>> goal_emb_;
};

// Test oracles.
class GroundTruthScorer : public Scorer {
 public:
  double score(const RolloutArchive& a, int r, int t, int) const override {
    return a.rollouts[static_cast<std::size_t>(r)].rewards[static_cast<std::size_t>(t)];
  }
};
class NegatedGroundTruthScorer : public Scorer {
 public:
  double score(const RolloutArchive& a, int r, int t, int) const override {
    return -a.rollouts[static_cast<std::size_t>(r)].rewards[static_cast<std::size_t>(t)];
  }
};
class ConstantScorer : public Scorer {
 public:
  explicit ConstantScorer(double v = 0.5) : v_(v) {}
  double score(const RolloutArchive&, int, int, int) const override { return v_; }

 private:
  double v_;
};

// ---- pairwise consistency benchmark -------------------------------------

struct PairRef {
  int rollout_idx = -1;
  int t = -1;
};

struct LabeledPair {
  PairRef a, b;
  int label = 0;  // 0: a has the higher ground-truth reward, 1: b does
};

struct PairwiseBenchmark {
  int task_id = -1;
  std::vector<LabeledPair> pairs;
};

// n_pairs uniform timestep pairs over the task's random and suboptimal
// rollouts; draws with ground-truth rewards closer than 1e-9 are rejected
// and redrawn. The task must be held out.
PairwiseBenchmark build_pairwise(const RolloutArchive& archive, int task_id,
                                 int n_pairs, std::uint64_t seed);

// Percentage of pairs whose predicted ordering matches the label; equal
// predicted scores count half.
double pairwise_accuracy(const Scorer& scorer, const RolloutArchive& archive,
                         const PairwiseBenchmark& bench, int view_mode);

// ---- value-order correlation ---------------------------------------------

enum class VocVariant { kSpearman, kKendall };

// Rank correlation in [-1, 1]. Average ranks on ties; x and y same length.
double spearman(const std::vector<double>& x, const std::vector<double>& y);
// Kendall tau-a; tied pairs contribute zero.
double kendall(const std::vector<double>& x, const std::vector<double>& y);

struct VocResult {
  double value = 0.0;   // percentage in [-100, 100]
  bool degenerate = false;  // zero variance in the predictions
};

// Correlation between predicted per-timestep scores and the timestep index
// along one expert rollout, as a percentage.
VocResult voc(const Scorer& scorer, const RolloutArchive& archive,
              int rollout_idx, int view_mode,
              VocVariant variant = VocVariant::kSpearman);

struct MeanSem {
  double mean = 0.0;
  double sem = 0.0;  // standard error of the mean (n-1 variance)
  int n = 0;
};

// Mean +- SEM of per-trajectory VOC over the task's first n_trajectories
// expert rollouts.
MeanSem voc_report(const Scorer& scorer, const RolloutArchive& archive,
                   int task_id, int n_trajectories, int view_mode,
                   VocVariant variant = VocVariant::kSpearman);

// ---- full evaluation -------------------------------------------------------

struct EvalRow {
  int task_id = -1;  // -1: the cross-task average row
  int view_mode = 0;
  std::string metric;  // "accuracy" | "voc"
  double value = 0.0;
  double sem = 0.0;
  bool has_sem = false;
};

struct EvalSettings {
  int n_pairs = 10000;
  int n_voc_trajectories = 50;
  std::uint64_t bench_seed = 0;
  VocVariant voc_variant = VocVariant::kSpearman;
};

struct ModelEval {
  std::string model_id;
  std::vector<EvalRow> rows;
};

// Both benchmarks over every held-out task x {each view, multi-view}, plus
// one average row per metric.
ModelEval full_eval(const Scorer& scorer, const RolloutArchive& archive,
                    const EvalSettings& settings, const std::string& model_id);

// ---- report files ---------------------------------------------------------

std::string task_label(const TaskSpec& task);

// Long-form CSV: model,task,view,metric,value,stderr
void write_results_csv(const std::vector<ModelEval>& evals,
                       const RolloutArchive& archive,
                       const std::filesystem::path& path);

// One Markdown table per metric: model columns, task x view rows, a final
// Average row. VOC cells render "mean ± sem".
void write_metric_markdown(const std::vector<ModelEval>& evals,
                           const RolloutArchive& archive,
                           const std::string& metric, const std::string& title,
                           const std::filesystem::path& path);

// Per-task CSV of predicted reward along the first expert rollout:
// timestep column plus one multi-view score column per model.
void write_reward_curves(const std::vector<std::shared_ptr<Scorer>>& scorers,
                         const std::vector<std::string>& model_ids,
                         const RolloutArchive& archive,
                         const std::filesystem::path& dir);

}  // namespace rmbench
