#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "rmbench/objectives.hpp"
#include "rmbench/synthworld.hpp"

namespace rmbench {

// One training example: timestep indices into a rollout plus a per-role view
// assignment. Timesteps are fixed for the dataset's lifetime; views are the
// mutable part, reassigned every epoch.
struct SampleTuple {
  int rollout_idx = -1;
  int i = -1;
  int j = -1;
  int k = -1;       // -1 when the tag has no k role; the j+1 slot is implicit
  int goal_id = -1; // -1 for image-only tags
  std::array<std::uint8_t, 4> view{0, 0, 0, 0};  // role slots i, j, j+1, k
};

struct FinetuneDataset {
  ObjectiveTag tag = ObjectiveTag::kTriplet;
  int cap = 0;
  std::uint64_t build_seed = 0;
  int views = 1;
  std::vector<SampleTuple> tuples;

  int size() const { return static_cast<int>(tuples.size()); }
};

// Draws tuples evenly across the training trajectories (per-trajectory
// counts differ by at most one), with each tuple's indices sampled
// uniformly under the tag's ordering constraints:
//   i < j < k                 (tcn, r3m)
//   i < j                     (tcn_text, triplet)
//   i < j, j+1 <= k <= T-1    (vip, vip_text_plus_vip, liv; vip_text drops k)
// Trajectories too short for the pattern are skipped with a warning on
// stderr; an empty result throws.
FinetuneDataset build_dataset(const RolloutArchive& archive, ObjectiveTag tag,
                              int cap, std::uint64_t seed);

// Fresh independent uniform view for every role slot of every tuple;
// timestep indices untouched.
FinetuneDataset reassign_views(const FinetuneDataset& ds, std::uint64_t epoch_seed);

// Disjoint train/validation partition, stratified by trajectory; the
// validation size is within one tuple of r_val * size.
std::pair<FinetuneDataset, FinetuneDataset> split_dataset(
    const FinetuneDataset& ds, double r_val, std::uint64_t seed);

// One epoch of batches: shuffled, non-overlapping index groups of exactly
// `batch` tuples (the final partial batch is dropped: in-batch negative
// terms assume a full batch). When `reassign` is set the views are redrawn
// first — the returned dataset copy carries them.
struct EpochBatches {
  FinetuneDataset data;
  std::vector<std::vector<int>> batches;
};
EpochBatches epoch_batches(const FinetuneDataset& ds, int batch,
                           std::uint64_t epoch_seed, bool reassign);

// Manifest: everything needed to rebuild the dataset against its archive,
// tuple list included so a rebuild can be verified index by index.
void save_manifest(const FinetuneDataset& ds, std::uint64_t archive_seed,
                   const std::filesystem::path& path);
struct Manifest {
  FinetuneDataset dataset;
  std::uint64_t archive_seed = 0;
};
Manifest load_manifest(const std::filesystem::path& path);

}  // namespace rmbench
