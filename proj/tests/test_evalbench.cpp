#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "rmbench/evalbench.hpp"
#include "rmbench/rng.hpp"

using namespace rmbench;

namespace {

RolloutArchive eval_archive() {
  WorldConfig cfg;
  cfg.n_train_tasks = 2;
  cfg.n_heldout_tasks = 2;
  cfg.obs_dim = 10;
  cfg.horizon = 32;
  cfg.n_expert_train = 1;
  cfg.n_expert_eval = 6;
  cfg.n_random_eval = 3;
  cfg.n_subopt_eval = 3;
  return generate_archive(17, cfg);
}

// Brute-force Spearman for tie-free data: ranks by pairwise counting, then
// the centered product-moment formula. An independent route from the
// sort-based implementation under test.
double brute_force_spearman(const std::vector<double>& x,
                            const std::vector<double>& y) {
  const std::size_t n = x.size();
  auto counting_ranks = [n](const std::vector<double>& v) {
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n; ++i) {
      int below = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (v[j] < v[i]) ++below;
      r[i] = static_cast<double>(below) + 1.0;
    }
    return r;
  };
  const std::vector<double> rx = counting_ranks(x), ry = counting_ranks(y);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double num = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (rx[i] - mx) * (ry[i] - my);
    sx += (rx[i] - mx) * (rx[i] - mx);
    sy += (ry[i] - my) * (ry[i] - my);
  }
  return num / std::sqrt(sx * sy);
}

// Scorer driven by an explicit per-(rollout,t) table; view-independent.
class TableScorer : public Scorer {
 public:
  explicit TableScorer(std::map<std::pair<int, int>, double> table)
      : table_(std::move(table)) {}
  double score(const RolloutArchive&, int r, int t, int) const override {
    return table_.at({r, t});
  }

 private:
  std::map<std::pair<int, int>, double> table_;
};

}  // namespace

TEST_CASE("spearman matches brute force on all permutations up to length 6") {
  int cases = 0;
  for (std::size_t n = 2; n <= 6; ++n) {
    std::vector<double> perm(n), idx(n);
    std::iota(perm.begin(), perm.end(), 0.0);
    std::iota(idx.begin(), idx.end(), 0.0);
    std::vector<double> p = perm;
    do {
      CHECK(spearman(p, idx) == brute_force_spearman(p, idx));
      ++cases;
    } while (std::next_permutation(p.begin(), p.end()));
  }
  CHECK(cases == 2 + 6 + 24 + 120 + 720);
}

TEST_CASE("spearman handles ties with average ranks") {
  // x = [1, 1, 2], y = [1, 2, 3]: ranks x = [1.5, 1.5, 3]
  const double rho = spearman({1, 1, 2}, {1, 2, 3});
  CHECK(rho == doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-12));
  CHECK(spearman({1, 2, 3}, {1, 2, 3}) == 1.0);
  CHECK(spearman({3, 2, 1}, {1, 2, 3}) == -1.0);
}

TEST_CASE("kendall extremes agree with spearman") {
  CHECK(kendall({1, 2, 3, 4}, {1, 2, 3, 4}) == 1.0);
  CHECK(kendall({4, 3, 2, 1}, {1, 2, 3, 4}) == -1.0);
}

TEST_CASE("voc: monotone predictions hit the extremes") {
  const RolloutArchive archive = eval_archive();
  const int task = archive.suite.heldout_task_ids()[0];
  const int expert = archive.rollout_indices(task, PolicyTag::kExpert)[0];
  const Rollout& r = archive.rollouts[static_cast<std::size_t>(expert)];

  std::map<std::pair<int, int>, double> up, down;
  for (int t = 0; t < r.T; ++t) {
    up[{expert, t}] = 0.1 * t;
    down[{expert, t}] = -0.1 * t;
  }
  CHECK(voc(TableScorer(up), archive, expert, kMultiView).value == 100.0);
  CHECK(voc(TableScorer(down), archive, expert, kMultiView).value == -100.0);

  // constant predictions: degenerate, value 0
  const VocResult flat = voc(ConstantScorer(0.5), archive, expert, kMultiView);
  CHECK(flat.degenerate);
  CHECK(flat.value == 0.0);

  // random permutation matches the brute-force oracle exactly (T = 8 slice
  // via a fresh table over the first expert of the other held-out task)
  Rng rng(3);
  std::vector<double> vals(static_cast<std::size_t>(r.T));
  std::iota(vals.begin(), vals.end(), 1.0);
  for (std::size_t m = vals.size(); m > 1; --m)
    std::swap(vals[m - 1], vals[rng.uniform_int(m)]);
  std::map<std::pair<int, int>, double> perm;
  std::vector<double> idx(static_cast<std::size_t>(r.T));
  std::iota(idx.begin(), idx.end(), 0.0);
  for (int t = 0; t < r.T; ++t) perm[{expert, t}] = vals[static_cast<std::size_t>(t)];
  CHECK(voc(TableScorer(perm), archive, expert, kMultiView).value ==
        100.0 * brute_force_spearman(vals, idx));

  // VOC is defined on expert rollouts only
  const int rnd = archive.rollout_indices(task, PolicyTag::kRandom)[0];
  CHECK_THROWS_AS(voc(ConstantScorer(), archive, rnd, kMultiView), ContractError);
}

TEST_CASE("voc is invariant under monotone transforms of the predictions") {
  const RolloutArchive archive = eval_archive();
  const int task = archive.suite.heldout_task_ids()[0];
  const int expert = archive.rollout_indices(task, PolicyTag::kExpert)[1];
  const Rollout& r = archive.rollouts[static_cast<std::size_t>(expert)];
  Rng rng(11);
  std::map<std::pair<int, int>, double> raw, warped;
  for (int t = 0; t < r.T; ++t) {
    const double v = rng.uniform(-1, 1);
    raw[{expert, t}] = v;
    warped[{expert, t}] = std::exp(3.0 * v) + 7.0;  // strictly increasing map
  }
  CHECK(voc(TableScorer(raw), archive, expert, kMultiView).value ==
        voc(TableScorer(warped), archive, expert, kMultiView).value);
}

TEST_CASE("voc_report aggregates mean and SEM") {
  const RolloutArchive archive = eval_archive();
  const int task = archive.suite.heldout_task_ids()[0];

  // identical per-trajectory values -> SEM 0
  const MeanSem flat = voc_report(GroundTruthScorer(), archive, task, 6, kMultiView);
  CHECK(flat.n == 6);
  CHECK(flat.mean == doctest::Approx(100.0));  // expert reward is monotone
  CHECK(flat.sem == doctest::Approx(0.0).epsilon(1e-9));

  CHECK_THROWS_AS(voc_report(GroundTruthScorer(), archive, task, 7, kMultiView),
                  ConfigError);

  // hand-set list {100, 0}: mean 50, SEM 50
  std::vector<double> vals{100.0, 0.0};
  double mean = (vals[0] + vals[1]) / 2;
  double var = 0;
  for (double v : vals) var += (v - mean) * (v - mean);
  var /= (vals.size() - 1);
  const double sem = std::sqrt(var / vals.size());
  CHECK(mean == 50.0);
  CHECK(sem == 50.0);
}

TEST_CASE("build_pairwise: labels, determinism, held-out only") {
  const RolloutArchive archive = eval_archive();
  const int task = archive.suite.heldout_task_ids()[1];
  const PairwiseBenchmark bench = build_pairwise(archive, task, 500, 9);
  CHECK(bench.pairs.size() == 500);
  for (const LabeledPair& p : bench.pairs) {
    const double ra = archive.rollouts[p.a.rollout_idx].rewards[p.a.t];
    const double rb = archive.rollouts[p.b.rollout_idx].rewards[p.b.t];
    CHECK(std::abs(ra - rb) >= 1e-9);
    CHECK(p.label == (ra > rb ? 0 : 1));
    const PolicyTag pol_a = archive.rollouts[p.a.rollout_idx].policy;
    CHECK(pol_a != PolicyTag::kExpert);
  }
  const PairwiseBenchmark again = build_pairwise(archive, task, 500, 9);
  for (std::size_t i = 0; i < bench.pairs.size(); ++i) {
    CHECK(again.pairs[i].a.rollout_idx == bench.pairs[i].a.rollout_idx);
    CHECK(again.pairs[i].a.t == bench.pairs[i].a.t);
  }
  CHECK_THROWS_AS(build_pairwise(archive, 0, 10, 1), ConfigError);  // train task
}

TEST_CASE("pairwise_accuracy: oracle 100, anti-oracle 0, constant 50") {
  const RolloutArchive archive = eval_archive();
  const int task = archive.suite.heldout_task_ids()[0];
  const PairwiseBenchmark bench = build_pairwise(archive, task, 2000, 5);
  CHECK(pairwise_accuracy(GroundTruthScorer(), archive, bench, kMultiView) == 100.0);
  CHECK(pairwise_accuracy(NegatedGroundTruthScorer(), archive, bench, kMultiView) == 0.0);
  CHECK(pairwise_accuracy(ConstantScorer(), archive, bench, kMultiView) == 50.0);
  CHECK(pairwise_accuracy(GroundTruthScorer(), archive, bench, 0) == 100.0);
}

TEST_CASE("oracle/anti-oracle symmetry on arbitrary scorers") {
  const RolloutArchive archive = eval_archive();
  const int task = archive.suite.heldout_task_ids()[0];
  const PairwiseBenchmark bench = build_pairwise(archive, task, 800, 2);

  // a noisy scorer and its negation must sum to 100
  Rng rng(8);
  std::map<std::pair<int, int>, double> noisy, negated;
  for (const LabeledPair& p : bench.pairs)
    for (const PairRef& ref : {p.a, p.b})
      if (!noisy.count({ref.rollout_idx, ref.t})) {
        const double v = rng.uniform(-1, 1);
        noisy[{ref.rollout_idx, ref.t}] = v;
        negated[{ref.rollout_idx, ref.t}] = -v;
      }
  const double acc = pairwise_accuracy(TableScorer(noisy), archive, bench, kMultiView);
  const double anti = pairwise_accuracy(TableScorer(negated), archive, bench, kMultiView);
  CHECK(acc + anti == doctest::Approx(100.0).epsilon(1e-12));
}

TEST_CASE("multi-view score equals the mean of per-view scores") {
  const RolloutArchive archive = eval_archive();
  EncoderConfig ecfg;
  ecfg.obs_dim = 10;
  ecfg.hidden = {12};
  ecfg.emb_dim = 6;
  ecfg.table_dim = 4;
  RewardModel model = make_model(ecfg, static_cast<int>(archive.suite.tasks.size()), 3, "m");
  const ModelScorer scorer(model.clone());
  const int task = archive.suite.heldout_task_ids()[0];
  const int expert = archive.rollout_indices(task, PolicyTag::kExpert)[0];
  for (int t = 0; t < 6; ++t) {
    double mean = 0;
    for (int v = 0; v < 3; ++v) mean += scorer.score(archive, expert, t, v);
    mean /= 3;
    CHECK(std::abs(view_score(scorer, archive, expert, t, kMultiView) - mean) < 1e-12);
  }
}

TEST_CASE("full_eval: row arithmetic and untrained model near chance") {
  WorldConfig wcfg;
  wcfg.n_train_tasks = 2;
  wcfg.n_heldout_tasks = 2;
  wcfg.n_expert_train = 1;
  wcfg.n_expert_eval = 6;
  wcfg.n_random_eval = 4;
  wcfg.n_subopt_eval = 4;
  const RolloutArchive archive = generate_archive(17, wcfg);
  // default-scale towers: the chance-band behavior is a property of the
  // full-size random encoder
  EncoderConfig ecfg;
  RewardModel model = make_model(ecfg, static_cast<int>(archive.suite.tasks.size()), 12, "rand");

  EvalSettings settings;
  settings.n_pairs = 10000;
  settings.n_voc_trajectories = 6;
  const ModelEval ev = full_eval(ModelScorer(model.clone()), archive, settings, "rand");

  // rows per metric: tasks x (views + 1) + 1 average
  const int expected = 2 * (3 + 1) + 1;
  int acc_rows = 0, voc_rows = 0;
  for (const EvalRow& r : ev.rows) {
    if (r.metric == "accuracy") ++acc_rows;
    if (r.metric == "voc") ++voc_rows;
    if (r.metric == "accuracy" && r.task_id >= 0) {
      CHECK(r.value >= 25.0);  // per-cell sanity range
      CHECK(r.value <= 75.0);
    }
    if (r.metric == "accuracy" && r.task_id < 0) {
      CHECK(r.value >= 40.0);  // average row sits in the chance band
      CHECK(r.value <= 60.0);
    }
    if (r.metric == "voc") {
      CHECK(r.value >= -100.0 - 1e-9);
      CHECK(r.value <= 100.0 + 1e-9);
    }
  }
  CHECK(acc_rows == expected);
  CHECK(voc_rows == expected);

  // ground-truth oracle: perfect everywhere
  const ModelEval oracle = full_eval(GroundTruthScorer(), archive, settings, "oracle");
  for (const EvalRow& r : oracle.rows) {
    if (r.metric == "accuracy") CHECK(r.value == 100.0);
    if (r.metric == "voc") CHECK(r.value == doctest::Approx(100.0));
  }
}

TEST_CASE("report files: schema and determinism") {
  const RolloutArchive archive = eval_archive();
  EvalSettings settings;
  settings.n_pairs = 200;
  settings.n_voc_trajectories = 3;
  const ModelEval a = full_eval(GroundTruthScorer(), archive, settings, "oracle");
  const ModelEval b = full_eval(ConstantScorer(), archive, settings, "flat");

  const auto dir = std::filesystem::temp_directory_path() / "rmbench_eval_test";
  std::filesystem::create_directories(dir);
  write_results_csv({a, b}, archive, dir / "results.csv");
  write_metric_markdown({a, b}, archive, "accuracy", "Consistency", dir / "acc.md");
  write_metric_markdown({a, b}, archive, "voc", "VOC", dir / "voc.md");

  std::ifstream csv(dir / "results.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "model,task,view,metric,value,stderr");
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  // 2 models x 2 metrics x (2 tasks x 4 view modes + 1 average)
  CHECK(lines == 2 * 2 * 9);

  std::ifstream md(dir / "acc.md");
  const std::string md_text((std::istreambuf_iterator<char>(md)), {});
  CHECK(md_text.find("| oracle |") != std::string::npos);
  CHECK(md_text.find("**Average**") != std::string::npos);
  CHECK(md_text.find("100.00") != std::string::npos);

  // byte-identical rerun
  write_results_csv({a, b}, archive, dir / "results2.csv");
  std::ifstream f1(dir / "results.csv", std::ios::binary), f2(dir / "results2.csv", std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)), {});
  const std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);

  std::vector<std::shared_ptr<Scorer>> scorers{std::make_shared<GroundTruthScorer>(),
                                               std::make_shared<ConstantScorer>()};
  write_reward_curves(scorers, {"oracle", "flat"}, archive, dir / "curves");
  int curve_files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "curves")) {
    (void)e;
    ++curve_files;
  }
  CHECK(curve_files == 2);  // one per held-out task
  std::filesystem::remove_all(dir);
}
