#include "rmbench/evalbench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "rmbench/rng.hpp"
#include "rmbench/textio.hpp"

namespace rmbench {

std::string view_label(int view_mode) {
  if (view_mode == kMultiView) return "multi";
  return "view" + std::to_string(view_mode + 1);
}

double view_score(const Scorer& scorer, const RolloutArchive& archive,
                  int rollout_idx, int t, int view_mode) {
  const Rollout& r = archive.rollouts[static_cast<std::size_t>(rollout_idx)];
  if (view_mode == kMultiView) {
    double s = 0.0;
    for (int v = 0; v < r.views; ++v) s += scorer.score(archive, rollout_idx, t, v);
    return s / static_cast<double>(r.views);
  }
  if (view_mode < 0 || view_mode >= r.views)
    throw ContractError("view_score: view " + std::to_string(view_mode) +
                        " out of range");
  return scorer.score(archive, rollout_idx, t, view_mode);
}

// ---- ModelScorer ---------------------------------------------------------

ModelScorer::ModelScorer(RewardModel model) : model_(std::move(model)) {}

double ModelScorer::score(const RolloutArchive& archive, int rollout_idx, int t,
                          int view) const {
  const auto key = std::make_pair(rollout_idx, view);
  auto it = scores_.find(key);
  if (it == scores_.end()) {
    const Rollout& r = archive.rollouts[static_cast<std::size_t>(rollout_idx)];
    if (view < 0 || view >= r.views)
      throw ContractError("ModelScorer: view " + std::to_string(view) +
                          " missing from rollout");
    const int goal = archive.task(r.task_id).goal_id;
    auto git = goal_emb_.find(goal);
    if (git == goal_emb_.end()) {
      Binding bind;
      const Tensor v = encode_text_one(model_.text, bind, goal);
      git = goal_emb_.emplace(goal, std::vector<double>(v.data(), v.data() + v.size())).first;
    }
    const Tensor v_goal = Tensor::constant({model_.cfg.emb_dim}, git->second);

    // encode the whole rollout for this view in one pass
    std::vector<double> flat(static_cast<std::size_t>(r.T) * r.obs_dim);
    for (int step = 0; step < r.T; ++step)
      std::copy_n(r.obs_at(step, view), r.obs_dim,
                  flat.data() + static_cast<std::size_t>(step) * r.obs_dim);
    Binding bind;
    const Tensor z = encode_image(model_.image, bind,
                                  Tensor::constant({r.T, r.obs_dim}, std::move(flat)));
    std::vector<double> vals(static_cast<std::size_t>(r.T));
    for (int step = 0; step < r.T; ++step) {
      const Tensor row = Tensor::constant(
          {model_.cfg.emb_dim},
          std::vector<double>(z.data() + static_cast<std::size_t>(step) * model_.cfg.emb_dim,
                              z.data() + static_cast<std::size_t>(step + 1) * model_.cfg.emb_dim));
      vals[static_cast<std::size_t>(step)] = similarity(model_.cfg.sim, row, v_goal);
    }
    it = scores_.emplace(key, std::move(vals)).first;
  }
  return it->second[static_cast<std::size_t>(t)];
}

// ---- pairwise benchmark ----------------------------------------------------

PairwiseBenchmark build_pairwise(const RolloutArchive& archive, int task_id,
                                 int n_pairs, std::uint64_t seed) {
  const TaskSpec& task = archive.task(task_id);
  if (!task.held_out)
    throw ConfigError("build_pairwise: task " + std::to_string(task_id) +
                      " is not held out");
  std::vector<int> sources = archive.rollout_indices(task_id, PolicyTag::kRandom);
  for (int idx : archive.rollout_indices(task_id, PolicyTag::kSuboptimal))
    sources.push_back(idx);
  if (sources.empty())
    throw ConfigError("build_pairwise: no random/suboptimal rollouts for task " +
                      std::to_string(task_id));

  // flat list of candidate refs
  std::vector<PairRef> refs;
  for (int idx : sources) {
    const Rollout& r = archive.rollouts[static_cast<std::size_t>(idx)];
    for (int t = 0; t < r.T; ++t) refs.push_back({idx, t});
  }

  auto reward_of = [&](const PairRef& p) {
    return archive.rollouts[static_cast<std::size_t>(p.rollout_idx)]
        .rewards[static_cast<std::size_t>(p.t)];
  };

  PairwiseBenchmark bench;
  bench.task_id = task_id;
  bench.pairs.reserve(static_cast<std::size_t>(n_pairs));
  Rng rng(mix_seed(seed, 0xbe7c + static_cast<std::uint64_t>(task_id)));
  for (int p = 0; p < n_pairs; ++p) {
    LabeledPair pair;
    bool ok = false;
    for (int attempt = 0; attempt < 10000; ++attempt) {
      pair.a = refs[rng.uniform_int(refs.size())];
      pair.b = refs[rng.uniform_int(refs.size())];
      const double ra = reward_of(pair.a), rb = reward_of(pair.b);
      if (std::abs(ra - rb) < 1e-9) continue;  // ties excluded, redraw
      pair.label = ra > rb ? 0 : 1;
      ok = true;
      break;
    }
    if (!ok)
      throw DomainError("build_pairwise: too few distinct-reward timesteps for task " +
                        std::to_string(task_id));
    bench.pairs.push_back(pair);
  }
  return bench;
}

double pairwise_accuracy(const Scorer& scorer, const RolloutArchive& archive,
                         const PairwiseBenchmark& bench, int view_mode) {
  if (bench.pairs.empty()) throw ContractError("pairwise_accuracy: empty benchmark");
  double correct = 0.0;
  for (const LabeledPair& p : bench.pairs) {
    const double sa = view_score(scorer, archive, p.a.rollout_idx, p.a.t, view_mode);
    const double sb = view_score(scorer, archive, p.b.rollout_idx, p.b.t, view_mode);
    if (sa == sb) {
      correct += 0.5;  // tie convention: half credit
    } else {
      const int predicted = sa > sb ? 0 : 1;
      if (predicted == p.label) correct += 1.0;
    }
  }
  return 100.0 * correct / static_cast<double>(bench.pairs.size());
}

// ---- rank correlations -------------------------------------------------------

namespace {

// average ranks, 1-based; ties share the mean of their positions
std::vector<double> average_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&x](int a, int b) { return x[static_cast<std::size_t>(a)] < x[static_cast<std::size_t>(b)]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && x[static_cast<std::size_t>(order[j + 1])] ==
                            x[static_cast<std::size_t>(order[i])])
      ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t q = i; q <= j; ++q)
      ranks[static_cast<std::size_t>(order[q])] = avg;
    i = j + 1;
  }
  return ranks;
}

// centered Pearson; returns NaN when either side has zero variance
double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double num = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    num += dx * dy;
    sx += dx * dx;
    sy += dy * dy;
  }
  if (sx == 0.0 || sy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return num / std::sqrt(sx * sy);
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ContractError("spearman: need two equal-length sequences of size >= 2");
  return pearson(average_ranks(x), average_ranks(y));
}

double kendall(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw ContractError("kendall: need two equal-length sequences of size >= 2");
  const std::size_t n = x.size();
  long concordant = 0, discordant = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[j] - x[i], dy = y[j] - y[i];
      const double s = dx * dy;
      if (s > 0) ++concordant;
      else if (s < 0) ++discordant;
    }
  const double total = static_cast<double>(n) * (static_cast<double>(n) - 1.0) / 2.0;
  return static_cast<double>(concordant - discordant) / total;
}

VocResult voc(const Scorer& scorer, const RolloutArchive& archive,
              int rollout_idx, int view_mode, VocVariant variant) {
  const Rollout& r = archive.rollouts[static_cast<std::size_t>(rollout_idx)];
  if (r.policy != PolicyTag::kExpert)
    throw ContractError("voc: rollout " + std::to_string(rollout_idx) +
                        " is not an expert trajectory");
  if (r.T < 2) throw ContractError("voc: trajectory too short");

  std::vector<double> predicted(static_cast<std::size_t>(r.T));
  std::vector<double> time_index(static_cast<std::size_t>(r.T));
  for (int t = 0; t < r.T; ++t) {
    predicted[static_cast<std::size_t>(t)] =
        view_score(scorer, archive, rollout_idx, t, view_mode);
    time_index[static_cast<std::size_t>(t)] = static_cast<double>(t);
  }

  VocResult out;
  const double rho = variant == VocVariant::kSpearman
                         ? spearman(predicted, time_index)
                         : kendall(predicted, time_index);
  if (std::isnan(rho)) {
    out.value = 0.0;  // zero variance in the predictions
    out.degenerate = true;
  } else {
    out.value = 100.0 * rho;
  }
  return out;
}

MeanSem voc_report(const Scorer& scorer, const RolloutArchive& archive,
                   int task_id, int n_trajectories, int view_mode,
                   VocVariant variant) {
  const std::vector<int> experts = archive.rollout_indices(task_id, PolicyTag::kExpert);
  if (static_cast<int>(experts.size()) < n_trajectories)
    throw ConfigError("voc_report: task " + std::to_string(task_id) + " has " +
                      std::to_string(experts.size()) + " expert rollouts, need " +
                      std::to_string(n_trajectories));
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(n_trajectories));
  for (int i = 0; i < n_trajectories; ++i)
    values.push_back(voc(scorer, archive, experts[static_cast<std::size_t>(i)],
                         view_mode, variant).value);

  MeanSem ms;
  ms.n = n_trajectories;
  for (double v : values) ms.mean += v;
  ms.mean /= static_cast<double>(ms.n);
  if (ms.n > 1) {
    double var = 0.0;
    for (double v : values) var += (v - ms.mean) * (v - ms.mean);
    var /= static_cast<double>(ms.n - 1);
    ms.sem = std::sqrt(var / static_cast<double>(ms.n));
  }
  return ms;
}

// ---- full evaluation ----------------------------------------------------------

ModelEval full_eval(const Scorer& scorer, const RolloutArchive& archive,
                    const EvalSettings& settings, const std::string& model_id) {
  const std::vector<int> heldout = archive.suite.heldout_task_ids();
  if (heldout.empty()) throw ConfigError("full_eval: suite has no held-out tasks");
  const int views = archive.suite.renderer.views;

  ModelEval ev;
  ev.model_id = model_id;
  std::vector<int> modes;
  for (int v = 0; v < views; ++v) modes.push_back(v);
  modes.push_back(kMultiView);

  double acc_sum = 0.0, voc_sum = 0.0, voc_sem_sum = 0.0;
  int cells = 0;
  for (int task_id : heldout) {
    const PairwiseBenchmark bench =
        build_pairwise(archive, task_id, settings.n_pairs, settings.bench_seed);
    for (int mode : modes) {
      EvalRow acc;
      acc.task_id = task_id;
      acc.view_mode = mode;
      acc.metric = "accuracy";
      acc.value = pairwise_accuracy(scorer, archive, bench, mode);
      ev.rows.push_back(acc);

      const MeanSem ms = voc_report(scorer, archive, task_id,
                                    settings.n_voc_trajectories, mode,
                                    settings.voc_variant);
      EvalRow vr;
      vr.task_id = task_id;
      vr.view_mode = mode;
      vr.metric = "voc";
      vr.value = ms.mean;
      vr.sem = ms.sem;
      vr.has_sem = true;
      ev.rows.push_back(vr);

      acc_sum += acc.value;
      voc_sum += ms.mean;
      voc_sem_sum += ms.sem;
      ++cells;
    }
  }

  EvalRow acc_avg;
  acc_avg.task_id = -1;
  acc_avg.view_mode = kMultiView;
  acc_avg.metric = "accuracy";
  acc_avg.value = acc_sum / cells;
  ev.rows.push_back(acc_avg);

  EvalRow voc_avg;
  voc_avg.task_id = -1;
  voc_avg.view_mode = kMultiView;
  voc_avg.metric = "voc";
  voc_avg.value = voc_sum / cells;
  voc_avg.sem = voc_sem_sum / cells;  // mean of the per-cell SEMs
  voc_avg.has_sem = true;
  ev.rows.push_back(voc_avg);
  return ev;
}

// ---- report files ----------------------------------------------------------

std::string task_label(const TaskSpec& task) {
  const char* kind = task.stages == 1 ? "reach" : "open";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-%02d", kind, task.task_id);
  return buf;
}

void write_results_csv(const std::vector<ModelEval>& evals,
                       const RolloutArchive& archive,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write results: " + path.string());
  out << "model,task,view,metric,value,stderr\n";
  for (const ModelEval& ev : evals)
    for (const EvalRow& row : ev.rows) {
      const std::string task =
          row.task_id < 0 ? "average" : task_label(archive.task(row.task_id));
      out << ev.model_id << "," << task << "," << view_label(row.view_mode) << ","
          << row.metric << "," << fmt_full(row.value) << ","
          << (row.has_sem ? fmt_full(row.sem) : "") << "\n";
    }
  if (!out) throw IoError("results write failed: " + path.string());
}

namespace {

const EvalRow* find_row(const ModelEval& ev, int task_id, int view_mode,
                        const std::string& metric) {
  for (const EvalRow& r : ev.rows)
    if (r.task_id == task_id && r.view_mode == view_mode && r.metric == metric)
      return &r;
  return nullptr;
}

std::string cell_text(const EvalRow* row) {
  if (row == nullptr) return "-";
  std::string s = fmt_fixed(row->value, 2);
  if (row->has_sem) s += " ± " + fmt_fixed(row->sem, 2);
  return s;
}

}  // namespace

void write_metric_markdown(const std::vector<ModelEval>& evals,
                           const RolloutArchive& archive,
                           const std::string& metric, const std::string& title,
                           const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write table: " + path.string());
  out << "# " << title << "\n\n";
  out << "| |";
  for (const ModelEval& ev : evals) out << " " << ev.model_id << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < evals.size(); ++i) out << "---|";
  out << "\n";

  const int views = archive.suite.renderer.views;
  for (int task_id : archive.suite.heldout_task_ids()) {
    out << "| **" << task_label(archive.task(task_id)) << "** |";
    for (std::size_t i = 0; i < evals.size(); ++i) out << " |";
    out << "\n";
    std::vector<int> modes;
    for (int v = 0; v < views; ++v) modes.push_back(v);
    modes.push_back(kMultiView);
    for (int mode : modes) {
      out << "| " << view_label(mode) << " |";
      for (const ModelEval& ev : evals)
        out << " " << cell_text(find_row(ev, task_id, mode, metric)) << " |";
      out << "\n";
    }
  }
  out << "| **Average** |";
  for (const ModelEval& ev : evals)
    out << " " << cell_text(find_row(ev, -1, kMultiView, metric)) << " |";
  out << "\n";
  if (!out) throw IoError("table write failed: " + path.string());
}

void write_reward_curves(const std::vector<std::shared_ptr<Scorer>>& scorers,
                         const std::vector<std::string>& model_ids,
                         const RolloutArchive& archive,
                         const std::filesystem::path& dir) {
  if (scorers.size() != model_ids.size())
    throw ContractError("write_reward_curves: scorer/id count mismatch");
  std::filesystem::create_directories(dir);
  for (int task_id : archive.suite.heldout_task_ids()) {
    const std::vector<int> experts = archive.rollout_indices(task_id, PolicyTag::kExpert);
    if (experts.empty()) continue;
    const int rollout_idx = experts.front();
    const Rollout& r = archive.rollouts[static_cast<std::size_t>(rollout_idx)];
    const auto path = dir / ("reward_curve_" + task_label(archive.task(task_id)) + ".csv");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write curve: " + path.string());
    out << "timestep";
    for (const std::string& id : model_ids) out << "," << id;
    out << "\n";
    for (int t = 0; t < r.T; ++t) {
      out << t;
      for (const auto& s : scorers)
        out << "," << fmt_full(view_score(*s, archive, rollout_idx, t, kMultiView));
      out << "\n";
    }
    if (!out) throw IoError("curve write failed: " + path.string());
  }
}

}  // namespace rmbench
