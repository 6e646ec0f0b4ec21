#include "rmbench/datapipe.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>

#include <json.hpp>

#include "rmbench/rng.hpp"

namespace rmbench {
namespace {

struct Pattern {
  bool has_k = false;       // draws a k index
  bool uses_j1 = false;     // consumes timestep j+1
  bool has_goal = false;    // tuple carries the goal id
  int min_T = 2;
};

Pattern pattern_for(ObjectiveTag tag) {
  const RoleSet roles = roles_for(tag);
  Pattern p;
  p.has_k = roles.z_k;
  p.uses_j1 = roles.z_j1;
  p.has_goal = roles.v;
  // i < j always; j+1 and k each push the minimum length up by one
  p.min_T = 2 + (p.uses_j1 || p.has_k ? 1 : 0);
  if (tag == ObjectiveTag::kInfonce || tag == ObjectiveTag::kBaseline)
    throw ConfigError("'" + tag_name(tag) + "' is not a standalone sampling objective");
  return p;
}

SampleTuple draw_tuple(Rng& rng, const Pattern& p, int T) {
  SampleTuple t;
  // upper bound for j leaves room for k (strictly after j) or the j+1 slot
  const int j_max = (p.has_k || p.uses_j1) ? T - 2 : T - 1;
  t.i = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(j_max)));
  t.j = t.i + 1 +
        static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(j_max - t.i)));
  if (p.has_k)
    t.k = t.j + 1 +
          static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(T - 1 - t.j)));
  return t;
}

}  // namespace

FinetuneDataset build_dataset(const RolloutArchive& archive, ObjectiveTag tag,
                              int cap, std::uint64_t seed) {
  if (cap < 1) throw ConfigError("build_dataset: cap must be positive");
  const Pattern pat = pattern_for(tag);

  // training trajectories: expert rollouts of non-held-out tasks, archive order
  std::vector<int> trajs;
  for (std::size_t idx = 0; idx < archive.rollouts.size(); ++idx) {
    const Rollout& r = archive.rollouts[idx];
    if (r.policy != PolicyTag::kExpert) continue;
    if (archive.task(r.task_id).held_out) continue;
    if (r.T < pat.min_T) {
      std::cerr << "build_dataset: skipping trajectory " << idx << " (T=" << r.T
                << " < " << pat.min_T << " for " << tag_name(tag) << ")\n";
      continue;
    }
    trajs.push_back(static_cast<int>(idx));
  }
  if (trajs.empty())
    throw ConfigError("build_dataset: no trajectory is long enough for '" +
                      tag_name(tag) + "'");

  FinetuneDataset ds;
  ds.tag = tag;
  ds.cap = cap;
  ds.build_seed = seed;
  ds.views = archive.suite.renderer.views;
  ds.tuples.reserve(static_cast<std::size_t>(cap));

  // even allocation: first (cap % n) trajectories take one extra tuple
  const int n = static_cast<int>(trajs.size());
  const int base = cap / n;
  const int extra = cap % n;
  Rng root(mix_seed(seed, 0xda7a));
  for (int ti = 0; ti < n; ++ti) {
    const int count = base + (ti < extra ? 1 : 0);
    const Rollout& roll = archive.rollouts[static_cast<std::size_t>(trajs[ti])];
    Rng rng = root.fork(static_cast<std::uint64_t>(ti));
    for (int c = 0; c < count; ++c) {
      SampleTuple t = draw_tuple(rng, pat, roll.T);
      t.rollout_idx = trajs[static_cast<std::size_t>(ti)];
      t.goal_id = pat.has_goal ? archive.task(roll.task_id).goal_id : -1;
      ds.tuples.push_back(t);
    }
  }
  return ds;
}

FinetuneDataset reassign_views(const FinetuneDataset& ds, std::uint64_t epoch_seed) {
  FinetuneDataset out = ds;
  if (ds.views <= 1) return out;  // single view: identity
  Rng rng(mix_seed(mix_seed(ds.build_seed, 0x41e3), epoch_seed));
  for (SampleTuple& t : out.tuples)
    for (auto& slot : t.view)
      slot = static_cast<std::uint8_t>(rng.uniform_int(static_cast<std::uint64_t>(ds.views)));
  return out;
}

std::pair<FinetuneDataset, FinetuneDataset> split_dataset(
    const FinetuneDataset& ds, double r_val, std::uint64_t seed) {
  if (!(r_val > 0.0) || !(r_val < 1.0))
    throw ConfigError("split: r_val must lie in (0, 1)");
  const int n = ds.size();
  const int val_target = static_cast<int>(std::llround(r_val * n));
  if (val_target <= 0 || val_target >= n)
    throw ConfigError("split: degenerate sizes (" + std::to_string(n - val_target) +
                      "/" + std::to_string(val_target) + ")");

  // group tuple positions by trajectory, in first-appearance order
  std::vector<int> group_traj;
  std::vector<std::vector<int>> groups;
  for (int idx = 0; idx < n; ++idx) {
    const int traj = ds.tuples[static_cast<std::size_t>(idx)].rollout_idx;
    int g = -1;
    if (!group_traj.empty() && group_traj.back() == traj)
      g = static_cast<int>(groups.size()) - 1;  // tuples arrive grouped
    else
      for (std::size_t q = 0; q < group_traj.size(); ++q)
        if (group_traj[q] == traj) g = static_cast<int>(q);
    if (g < 0) {
      g = static_cast<int>(groups.size());
      group_traj.push_back(traj);
      groups.emplace_back();
    }
    groups[static_cast<std::size_t>(g)].push_back(idx);
  }

  // largest-remainder apportionment of the validation quota over groups
  const int n_groups = static_cast<int>(groups.size());
  std::vector<int> quota(static_cast<std::size_t>(n_groups));
  std::vector<std::pair<double, int>> rema;
  int assigned = 0;
  for (int g = 0; g < n_groups; ++g) {
    const double exact = static_cast<double>(val_target) *
                         static_cast<double>(groups[static_cast<std::size_t>(g)].size()) / n;
    quota[static_cast<std::size_t>(g)] = static_cast<int>(exact);
    assigned += quota[static_cast<std::size_t>(g)];
    rema.emplace_back(exact - quota[static_cast<std::size_t>(g)], g);
  }
  std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int r = 0; assigned < val_target; ++r, ++assigned)
    quota[static_cast<std::size_t>(rema[static_cast<std::size_t>(r)].second)]++;

  FinetuneDataset train = ds, val = ds;
  train.tuples.clear();
  val.tuples.clear();
  Rng rng(mix_seed(mix_seed(ds.build_seed, 0x5bb1), seed));
  for (int g = 0; g < n_groups; ++g) {
    std::vector<int>& members = groups[static_cast<std::size_t>(g)];
    // seeded Fisher-Yates, then the first quota members go to validation
    for (std::size_t m = members.size(); m > 1; --m) {
      const std::size_t pick = rng.uniform_int(m);
      std::swap(members[m - 1], members[pick]);
    }
    const int q = quota[static_cast<std::size_t>(g)];
    std::vector<int> sorted_val(members.begin(), members.begin() + q);
    std::vector<int> sorted_train(members.begin() + q, members.end());
    std::sort(sorted_val.begin(), sorted_val.end());
    std::sort(sorted_train.begin(), sorted_train.end());
    for (int idx : sorted_val) val.tuples.push_back(ds.tuples[static_cast<std::size_t>(idx)]);
    for (int idx : sorted_train) train.tuples.push_back(ds.tuples[static_cast<std::size_t>(idx)]);
  }
  return {std::move(train), std::move(val)};
}

EpochBatches epoch_batches(const FinetuneDataset& ds, int batch,
                           std::uint64_t epoch_seed, bool reassign) {
  if (batch < 1) throw ConfigError("epoch_batches: batch size must be positive");
  if (batch > ds.size())
    throw ConfigError("epoch_batches: batch size " + std::to_string(batch) +
                      " exceeds dataset size " + std::to_string(ds.size()));
  EpochBatches out;
  out.data = reassign ? reassign_views(ds, epoch_seed) : ds;

  std::vector<int> order(static_cast<std::size_t>(ds.size()));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(mix_seed(ds.build_seed, 0xba7c), epoch_seed));
  for (std::size_t m = order.size(); m > 1; --m) {
    const std::size_t pick = rng.uniform_int(m);
    std::swap(order[m - 1], order[pick]);
  }
  const int n_batches = ds.size() / batch;  // final partial batch dropped
  for (int b = 0; b < n_batches; ++b)
    out.batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b) * batch,
                             order.begin() + static_cast<std::ptrdiff_t>(b + 1) * batch);
  return out;
}

// ---- manifest ------------------------------------------------------------

void save_manifest(const FinetuneDataset& ds, std::uint64_t archive_seed,
                   const std::filesystem::path& path) {
  nlohmann::json j;
  j["version"] = 1;
  j["tag"] = tag_name(ds.tag);
  j["cap"] = ds.cap;
  j["build_seed"] = ds.build_seed;
  j["archive_seed"] = archive_seed;
  j["views"] = ds.views;
  auto& tuples = j["tuples"] = nlohmann::json::array();
  for (const SampleTuple& t : ds.tuples)
    tuples.push_back({t.rollout_idx, t.i, t.j, t.k, t.goal_id});
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  out << j.dump() << "\n";
  if (!out) throw IoError("manifest write failed: " + path.string());
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
  Manifest m;
  m.archive_seed = j.at("archive_seed").get<std::uint64_t>();
  m.dataset.tag = tag_from_name(j.at("tag").get<std::string>());
  m.dataset.cap = j.at("cap").get<int>();
  m.dataset.build_seed = j.at("build_seed").get<std::uint64_t>();
  m.dataset.views = j.at("views").get<int>();
  for (const auto& row : j.at("tuples")) {
    SampleTuple t;
    t.rollout_idx = row.at(0).get<int>();
    t.i = row.at(1).get<int>();
    t.j = row.at(2).get<int>();
    t.k = row.at(3).get<int>();
    t.goal_id = row.at(4).get<int>();
    m.dataset.tuples.push_back(t);
  }
  return m;
}

}  // namespace rmbench
