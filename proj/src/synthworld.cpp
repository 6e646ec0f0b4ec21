#include "rmbench/synthworld.hpp"

#include <algorithm>
#include <cmath>

#include "rmbench/binio.hpp"

namespace rmbench {

std::string policy_name(PolicyTag p) {
  switch (p) {
    case PolicyTag::kExpert: return "expert";
    case PolicyTag::kSuboptimal: return "suboptimal";
    case PolicyTag::kRandom: return "random";
  }
  throw ConfigError("unknown policy tag");
}

PolicyTag policy_from_name(const std::string& name) {
  if (name == "expert") return PolicyTag::kExpert;
  if (name == "suboptimal") return PolicyTag::kSuboptimal;
  if (name == "random") return PolicyTag::kRandom;
  throw ConfigError("unknown policy '" + name + "'");
}

std::vector<int> TaskSuite::train_task_ids() const {
  std::vector<int> out;
  for (const TaskSpec& t : tasks)
    if (!t.held_out) out.push_back(t.task_id);
  return out;
}

std::vector<int> TaskSuite::heldout_task_ids() const {
  std::vector<int> out;
  for (const TaskSpec& t : tasks)
    if (t.held_out) out.push_back(t.task_id);
  return out;
}

// ---- suite construction ------------------------------------------------

TaskSuite make_task_suite(std::uint64_t seed, int n_train_tasks,
                          int n_heldout_tasks, const WorldConfig& cfg) {
  if (n_heldout_tasks < 1)
    throw ConfigError("suite needs at least one held-out task");
  if (n_train_tasks < 1)
    throw ConfigError("suite needs at least one training task");

  TaskSuite suite;
  suite.seed = seed;
  suite.world = cfg;
  suite.world.n_train_tasks = n_train_tasks;
  suite.world.n_heldout_tasks = n_heldout_tasks;

  Rng rng(mix_seed(seed, 0x501e77));
  const int total = n_train_tasks + n_heldout_tasks;
  for (int i = 0; i < total; ++i) {
    TaskSpec t;
    t.task_id = i;
    t.goal_id = i;  // unique by construction
    t.held_out = i >= n_train_tasks;
    if (t.held_out) {
      // first held-out task is the reach-like one, the rest compositional
      t.stages = (i == n_train_tasks) ? 1 : 2;
    } else {
      t.stages = (i % 2 == 0) ? 1 : 2;
    }
    t.latent_dim = cfg.latent_dim();
    t.tol = cfg.tol;
    t.reach_scale = cfg.reach_scale;
    t.open_rate = cfg.open_rate;
    t.target.resize(kEffectorDims);
    for (double& x : t.target) x = rng.uniform(-0.7, 0.7);
    suite.tasks.push_back(std::move(t));
  }

  ViewRenderer& r = suite.renderer;
  r.views = cfg.views;
  r.obs_dim = cfg.obs_dim;
  r.latent_dim = cfg.latent_dim();
  r.sigma = cfg.noise_sigma;
  const double scale = 1.0 / std::sqrt(static_cast<double>(r.latent_dim));
  r.proj.resize(static_cast<std::size_t>(r.views) * r.obs_dim * r.latent_dim);
  r.bias.resize(static_cast<std::size_t>(r.views) * r.obs_dim);
  for (double& x : r.proj) x = scale * rng.normal();
  for (double& x : r.bias) x = rng.uniform(-0.2, 0.2);
  if (cfg.views >= 3 && rng.bernoulli(cfg.occlusion_prob)) {
    // Drop the effector-delta columns from the last view: progress toward
    // the target is invisible there except through the manipulation dim.
    r.occluded_view = cfg.views - 1;
    for (int o = 0; o < r.obs_dim; ++o)
      for (int c = 0; c < kEffectorDims; ++c)
        r.proj[(static_cast<std::size_t>(r.occluded_view) * r.obs_dim + o) *
                   r.latent_dim + c] = 0.0;
  }
  return suite;
}

// ---- reward ------------------------------------------------------------

namespace {

double effector_dist(const double* state) {
  double sq = 0.0;
  for (int i = 0; i < kEffectorDims; ++i) sq += state[i] * state[i];
  return std::sqrt(sq);
}

double reach_shaping(const TaskSpec& task, double dist) {
  const double over = std::max(0.0, dist - task.tol);
  return 1.0 - std::min(1.0, over / task.reach_scale);
}

}  // namespace

double ground_truth_reward(const TaskSpec& task, const double* state, int dim) {
  if (dim != task.latent_dim)
    throw ShapeError("ground_truth_reward: state dim " + std::to_string(dim) +
                     " != task latent dim " + std::to_string(task.latent_dim));
  const double dist = effector_dist(state);
  if (task.stages == 1) return reach_shaping(task, dist);
  const double q = state[kManipDim];
  if (q > 0.0) return 0.5 + 0.5 * q;
  return 0.5 * reach_shaping(task, dist);
}

double ground_truth_reward(const TaskSpec& task, const std::vector<double>& state) {
  return ground_truth_reward(task, state.data(), static_cast<int>(state.size()));
}

// ---- rendering ---------------------------------------------------------

std::vector<double> render_view(const ViewRenderer& r, const double* state,
                                int view_index, std::uint64_t seed) {
  if (view_index < 0 || view_index >= r.views)
    throw ContractError("render_view: view index " + std::to_string(view_index) +
                        " out of range [0," + std::to_string(r.views) + ")");
  std::vector<double> out(static_cast<std::size_t>(r.obs_dim));
  const double* P = r.proj.data() +
                    static_cast<std::size_t>(view_index) * r.obs_dim * r.latent_dim;
  const double* b = r.bias.data() + static_cast<std::size_t>(view_index) * r.obs_dim;
  Rng rng(mix_seed(seed, 0xab5e));
  for (int o = 0; o < r.obs_dim; ++o) {
    double y = b[o];
    for (int c = 0; c < r.latent_dim; ++c) y += P[o * r.latent_dim + c] * state[c];
    if (r.sigma > 0.0) y += r.sigma * rng.normal();
    out[static_cast<std::size_t>(o)] = y;
  }
  return out;
}

// ---- rollout generation --------------------------------------------------

std::uint64_t rollout_seed(std::uint64_t suite_seed, int task_id,
                           PolicyTag policy, int index) {
  return mix_seed(mix_seed(mix_seed(suite_seed, 0x9000 + static_cast<std::uint64_t>(task_id)),
                           0xa000 + static_cast<std::uint64_t>(policy)),
                  0xb000 + static_cast<std::uint64_t>(index));
}

namespace {

struct Action {
  double move[kEffectorDims] = {0, 0, 0, 0};
  double effort = 0.0;  // manipulation channel in [-1, 1]
};

Action expert_action(const TaskSpec& task, const std::vector<double>& s,
                     const WorldConfig& cfg) {
  Action a;
  const double dist = effector_dist(s.data());
  if (dist > 1e-12) {
    const double step = std::min(cfg.expert_gain * dist, cfg.action_max);
    for (int i = 0; i < kEffectorDims; ++i) a.move[i] = -step * s[i] / dist;
  }
  a.effort = 1.0;
  (void)task;
  return a;
}

void apply(const TaskSpec& task, std::vector<double>& s, const Action& a,
           const WorldConfig& cfg, Rng& rng) {
  for (int i = 0; i < kEffectorDims; ++i)
    s[i] = std::clamp(s[i] + a.move[i], -1.5, 1.5);
  if (task.stages == 2 && effector_dist(s.data()) <= task.tol)
    s[kManipDim] = std::clamp(s[kManipDim] + a.effort * task.open_rate, 0.0, 1.0);
  for (int i = kManipDim + 1; i < task.latent_dim; ++i)
    s[i] = std::clamp(s[i] + cfg.distractor_step * rng.normal(), -1.0, 1.0);
}

}  // namespace

Rollout gen_rollout(const TaskSpec& task, const ViewRenderer& renderer,
                    const WorldConfig& cfg, PolicyTag policy, int T,
                    std::uint64_t seed) {
  if (T < 4)
    throw ConfigError("gen_rollout: T must be >= 4, got " + std::to_string(T));

  Rollout r;
  r.task_id = task.task_id;
  r.policy = policy;
  r.views = renderer.views;
  r.obs_dim = renderer.obs_dim;
  r.latent_dim = task.latent_dim;
  r.states.reserve(static_cast<std::size_t>(T) * task.latent_dim);
  r.rewards.reserve(static_cast<std::size_t>(T));
  r.obs.reserve(static_cast<std::size_t>(T) * renderer.views * renderer.obs_dim);

  Rng rng(mix_seed(seed, 0x5007));

  // Randomized start: effector begins at a uniform absolute position, the
  // manipulation channel closed, distractors anywhere.
  std::vector<double> s(static_cast<std::size_t>(task.latent_dim), 0.0);
  for (int i = 0; i < kEffectorDims; ++i)
    s[i] = rng.uniform(-0.7, 0.7) - task.target[static_cast<std::size_t>(i)];
  s[kManipDim] = 0.0;
  for (int i = kManipDim + 1; i < task.latent_dim; ++i) s[i] = rng.uniform(-1.0, 1.0);

  for (int t = 0; t < T; ++t) {
    r.states.insert(r.states.end(), s.begin(), s.end());
    r.rewards.push_back(ground_truth_reward(task, s));
    for (int view = 0; view < renderer.views; ++view) {
      const std::uint64_t obs_seed =
          mix_seed(seed, 0xc000 + static_cast<std::uint64_t>(t) * 7919 +
                             static_cast<std::uint64_t>(view));
      const std::vector<double> o = render_view(renderer, s.data(), view, obs_seed);
      r.obs.insert(r.obs.end(), o.begin(), o.end());
    }
    // Episodes end at success; a strictly improving expert sequence has no
    // trailing plateau. A floor of 4 frames keeps every tuple pattern valid.
    if (r.rewards.back() == 1.0 && t + 1 >= 4) break;
    if (t + 1 == T) break;

    Action a;
    switch (policy) {
      case PolicyTag::kExpert:
        a = expert_action(task, s, cfg);
        break;
      case PolicyTag::kSuboptimal: {
        a = expert_action(task, s, cfg);
        if (rng.bernoulli(cfg.subopt_stall_prob)) {
          for (double& m : a.move) m = 0.0;
          a.effort = 0.0;
        } else {
          for (double& m : a.move)
            m = std::clamp(m + cfg.subopt_noise * rng.normal(), -cfg.action_max,
                           cfg.action_max);
          a.effort = std::clamp(a.effort + cfg.subopt_noise * rng.normal(), -1.0, 1.0);
        }
        break;
      }
      case PolicyTag::kRandom:
        for (double& m : a.move) m = rng.uniform(-cfg.action_max, cfg.action_max);
        a.effort = rng.uniform(-1.0, 1.0);
        break;
    }
    apply(task, s, a, cfg, rng);
  }
  r.T = static_cast<int>(r.rewards.size());
  return r;
}

// ---- archive -------------------------------------------------------------

const TaskSpec& RolloutArchive::task(int task_id) const {
  for (const TaskSpec& t : suite.tasks)
    if (t.task_id == task_id) return t;
  throw ContractError("archive: unknown task id " + std::to_string(task_id));
}

std::vector<int> RolloutArchive::rollout_indices(int task_id, PolicyTag policy) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < rollouts.size(); ++i)
    if (rollouts[i].task_id == task_id && rollouts[i].policy == policy)
      out.push_back(static_cast<int>(i));
  return out;
}

RolloutArchive generate_archive(std::uint64_t seed, const WorldConfig& cfg) {
  RolloutArchive a;
  a.suite = make_task_suite(seed, cfg.n_train_tasks, cfg.n_heldout_tasks, cfg);
  for (const TaskSpec& task : a.suite.tasks) {
    auto gen_n = [&](PolicyTag policy, int count) {
      for (int i = 0; i < count; ++i)
        a.rollouts.push_back(gen_rollout(task, a.suite.renderer, cfg, policy,
                                         cfg.horizon,
                                         rollout_seed(seed, task.task_id, policy, i)));
    };
    if (task.held_out) {
      gen_n(PolicyTag::kExpert, cfg.n_expert_eval);
      gen_n(PolicyTag::kRandom, cfg.n_random_eval);
      gen_n(PolicyTag::kSuboptimal, cfg.n_subopt_eval);
    } else {
      gen_n(PolicyTag::kExpert, cfg.n_expert_train);
    }
  }
  return a;
}

namespace {

constexpr std::uint32_t kArchiveMagic = 0x524d4241;  // "RMBA"
constexpr std::uint32_t kArchiveVersion = 1;

void write_world(BinWriter& w, const WorldConfig& c) {
  w.i32(c.n_train_tasks);
  w.i32(c.n_heldout_tasks);
  w.i32(c.distractor_dims);
  w.i32(c.obs_dim);
  w.i32(c.views);
  w.i32(c.horizon);
  w.f64(c.noise_sigma);
  w.f64(c.occlusion_prob);
  w.f64(c.tol);
  w.f64(c.reach_scale);
  w.f64(c.open_rate);
  w.f64(c.expert_gain);
  w.f64(c.action_max);
  w.f64(c.subopt_noise);
  w.f64(c.subopt_stall_prob);
  w.f64(c.distractor_step);
  w.i32(c.n_expert_train);
  w.i32(c.n_expert_eval);
  w.i32(c.n_random_eval);
  w.i32(c.n_subopt_eval);
}

WorldConfig read_world(BinReader& r) {
  WorldConfig c;
  c.n_train_tasks = r.i32();
  c.n_heldout_tasks = r.i32();
  c.distractor_dims = r.i32();
  c.obs_dim = r.i32();
  c.views = r.i32();
  c.horizon = r.i32();
  c.noise_sigma = r.f64();
  c.occlusion_prob = r.f64();
  c.tol = r.f64();
  c.reach_scale = r.f64();
  c.open_rate = r.f64();
  c.expert_gain = r.f64();
  c.action_max = r.f64();
  c.subopt_noise = r.f64();
  c.subopt_stall_prob = r.f64();
  c.distractor_step = r.f64();
  c.n_expert_train = r.i32();
  c.n_expert_eval = r.i32();
  c.n_random_eval = r.i32();
  c.n_subopt_eval = r.i32();
  return c;
}

}  // namespace

void save_archive(const RolloutArchive& a, const std::filesystem::path& path) {
  BinWriter w(path);
  w.u32(kArchiveMagic);
  w.u32(kArchiveVersion);
  w.u64(a.suite.seed);
  write_world(w, a.suite.world);

  w.u32(static_cast<std::uint32_t>(a.suite.tasks.size()));
  for (const TaskSpec& t : a.suite.tasks) {
    w.i32(t.task_id);
    w.i32(t.goal_id);
    w.i32(t.stages);
    w.i32(t.latent_dim);
    w.f64_vec(t.target);
    w.f64(t.tol);
    w.f64(t.reach_scale);
    w.f64(t.open_rate);
    w.u32(t.held_out ? 1 : 0);
  }

  const ViewRenderer& r = a.suite.renderer;
  w.i32(r.views);
  w.i32(r.obs_dim);
  w.i32(r.latent_dim);
  w.f64(r.sigma);
  w.i32(r.occluded_view);
  w.f64_vec(r.proj);
  w.f64_vec(r.bias);

  w.u32(static_cast<std::uint32_t>(a.rollouts.size()));
  for (const Rollout& ro : a.rollouts) {
    w.i32(ro.task_id);
    w.str(policy_name(ro.policy));
    w.i32(ro.T);
    w.i32(ro.views);
    w.i32(ro.obs_dim);
    w.i32(ro.latent_dim);
    w.f64_vec(ro.states);
    w.f64_vec(ro.rewards);
    w.f64_vec(ro.obs);
  }
  w.close();
}

RolloutArchive load_archive(const std::filesystem::path& path) {
  BinReader r(path);
  if (r.u32() != kArchiveMagic)
    throw IoError("not a rollout archive: " + path.string());
  const std::uint32_t version = r.u32();
  if (version != kArchiveVersion)
    throw IoError("unsupported archive version " + std::to_string(version));

  RolloutArchive a;
  a.suite.seed = r.u64();
  a.suite.world = read_world(r);

  const std::uint32_t n_tasks = r.u32();
  for (std::uint32_t i = 0; i < n_tasks; ++i) {
    TaskSpec t;
    t.task_id = r.i32();
    t.goal_id = r.i32();
    t.stages = r.i32();
    t.latent_dim = r.i32();
    t.target = r.f64_vec();
    t.tol = r.f64();
    t.reach_scale = r.f64();
    t.open_rate = r.f64();
    t.held_out = r.u32() != 0;
    a.suite.tasks.push_back(std::move(t));
  }

  ViewRenderer& vr = a.suite.renderer;
  vr.views = r.i32();
  vr.obs_dim = r.i32();
  vr.latent_dim = r.i32();
  vr.sigma = r.f64();
  vr.occluded_view = r.i32();
  vr.proj = r.f64_vec();
  vr.bias = r.f64_vec();

  const std::uint32_t n_rollouts = r.u32();
  for (std::uint32_t i = 0; i < n_rollouts; ++i) {
    Rollout ro;
    ro.task_id = r.i32();
    ro.policy = policy_from_name(r.str());
    ro.T = r.i32();
    ro.views = r.i32();
    ro.obs_dim = r.i32();
    ro.latent_dim = r.i32();
    ro.states = r.f64_vec();
    ro.rewards = r.f64_vec();
    ro.obs = r.f64_vec();
    a.rollouts.push_back(std::move(ro));
  }
  return a;
}

}  // namespace rmbench
