#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rmbench/rng.hpp"
#include "rmbench/tensor.hpp"

namespace rmbench {

// Latent state layout, all tasks:
//   [0..3]  effector position relative to the active target (delta)
//   [4]     manipulation progress q in [0,1] (2-stage tasks; 0 otherwise)
//   [5...]  distractor coordinates (slow random walk, task-irrelevant)
// Progress cues (|delta| shrinking, q rising) are target-relative, so they
// read the same across tasks; that is what lets a reward model trained on
// some goals transfer to held-out ones.
inline constexpr int kEffectorDims = 4;
inline constexpr int kManipDim = 4;  // index of q

struct WorldConfig {
  int n_train_tasks = 12;
  int n_heldout_tasks = 3;
  int distractor_dims = 3;
  int obs_dim = 32;
  int views = 3;
  int horizon = 64;          // T
  double noise_sigma = 0.02; // observation noise
  double occlusion_prob = 0.3;
  double tol = 0.05;         // success / engagement radius
  double reach_scale = 3.2;  // shaping normalizer; exceeds any start distance
  double open_rate = 0.1;    // q gained per engaged step at full effort
  double expert_gain = 0.25;
  double action_max = 0.6;
  double subopt_noise = 0.25;
  double subopt_stall_prob = 0.15;
  double distractor_step = 0.05;

  // rollout counts written by the generator
  int n_expert_train = 3;
  int n_expert_eval = 50;
  int n_random_eval = 20;
  int n_subopt_eval = 20;

  int latent_dim() const { return kEffectorDims + 1 + distractor_dims; }
};

struct TaskSpec {
  int task_id = 0;
  int goal_id = 0;
  int stages = 1;  // 1 = reach-like, 2 = navigate-then-manipulate
  int latent_dim = 8;
  std::vector<double> target;  // absolute target; shifts the start region
  double tol = 0.05;
  double reach_scale = 3.2;
  double open_rate = 0.1;
  bool held_out = false;
};

enum class PolicyTag { kExpert, kSuboptimal, kRandom };

std::string policy_name(PolicyTag p);
PolicyTag policy_from_name(const std::string& name);

struct Rollout {
  int task_id = 0;
  PolicyTag policy = PolicyTag::kExpert;
  int T = 0;
  int views = 0;
  int obs_dim = 0;
  int latent_dim = 0;
  std::vector<double> states;   // T x latent_dim
  std::vector<double> rewards;  // T
  std::vector<double> obs;      // T x views x obs_dim

  const double* state_at(int t) const { return states.data() + static_cast<std::size_t>(t) * latent_dim; }
  const double* obs_at(int t, int view) const {
    return obs.data() +
           (static_cast<std::size_t>(t) * views + static_cast<std::size_t>(view)) * obs_dim;
  }
};

// Fixed per-suite affine projections standing in for camera views. One view
// may drop the effector-delta columns (suite-level Bernoulli), emulating an
// occluded viewpoint.
struct ViewRenderer {
  int views = 0;
  int obs_dim = 0;
  int latent_dim = 0;
  double sigma = 0.0;
  std::vector<double> proj;  // views x obs_dim x latent_dim
  std::vector<double> bias;  // views x obs_dim
  int occluded_view = -1;    // -1: none
};

struct TaskSuite {
  std::uint64_t seed = 0;
  WorldConfig world;
  std::vector<TaskSpec> tasks;
  ViewRenderer renderer;

  std::vector<int> train_task_ids() const;
  std::vector<int> heldout_task_ids() const;
};

TaskSuite make_task_suite(std::uint64_t seed, int n_train_tasks,
                          int n_heldout_tasks, const WorldConfig& cfg = {});

// Shaped reward in [0, 1]; exactly 1 only at success. 2-stage tasks cap at
// 0.5 until the manipulation phase begins.
double ground_truth_reward(const TaskSpec& task, const double* state, int dim);
double ground_truth_reward(const TaskSpec& task, const std::vector<double>& state);

// Projection + bias + Gaussian noise; deterministic per seed.
std::vector<double> render_view(const ViewRenderer& r, const double* state,
                                int view_index, std::uint64_t seed);

// Runs one episode of at most T steps; the episode terminates at success
// (never before 4 recorded frames), so an expert's reward sequence is
// strictly increasing end to end. Requires T >= 4.
Rollout gen_rollout(const TaskSpec& task, const ViewRenderer& renderer,
                    const WorldConfig& cfg, PolicyTag policy, int T,
                    std::uint64_t seed);

// Deterministic rollout seed for (suite, task, policy, index).
std::uint64_t rollout_seed(std::uint64_t suite_seed, int task_id,
                           PolicyTag policy, int index);

// ---- archive ----------------------------------------------------------

struct RolloutArchive {
  TaskSuite suite;
  std::vector<Rollout> rollouts;

  const TaskSpec& task(int task_id) const;
  std::vector<int> rollout_indices(int task_id, PolicyTag policy) const;
};

// Everything the generator produced: suite, renderer, and all rollouts for
// the configured counts (train experts; held-out experts/random/suboptimal).
RolloutArchive generate_archive(std::uint64_t seed, const WorldConfig& cfg);

void save_archive(const RolloutArchive& a, const std::filesystem::path& path);
RolloutArchive load_archive(const std::filesystem::path& path);

}  // namespace rmbench
