#pragma once

#include <string>
#include <vector>

#include "rmbench/encoders.hpp"
#include "rmbench/tensor.hpp"

namespace rmbench {

// Training objectives. The six entries through kLiv are the trainable
// configurations; kTcn/kVip/kInfonce are their building blocks and remain
// individually computable; kBaseline snapshots the untrained model.
enum class ObjectiveTag {
  kTriplet,
  kTcnText,
  kR3m,
  kVipText,
  kVipTextPlusVip,
  kLiv,
  kTcn,
  kVip,
  kInfonce,
  kBaseline,
};

std::string tag_name(ObjectiveTag tag);
ObjectiveTag tag_from_name(const std::string& name);
// The six finetuning configurations, in reporting order.
const std::vector<ObjectiveTag>& trainable_tags();

struct ObjectiveConfig {
  double margin = 0.3;     // triplet margin (alpha)
  double gamma = 0.98;     // VIP-family discount
  int negatives = 3;       // in-batch negatives per anchor (softmax families)
  Similarity sim = Similarity::kCosine;
  bool triplet_mean = false;  // default: plain sum over the batch

  // `negatives` only enters losses with an in-batch negative slot in their
  // denominator (TCN, TCN-text, R3M). The triplet and VIP families have no
  // such slot; for them the count acts upstream, as independent tuple
  // redraws by the sampler, and leaves the loss value itself unchanged.
};

// Per-role embedding matrices, each [B x d]. A role is "present" when the
// tensor is defined. `negatives` holds, per batch element, the indices of
// the other elements serving as its in-batch negatives; it is produced by
// sample_negatives (training) or spelled out directly (tests), keeping every
// loss a pure function of the batch.
struct EmbeddingBatch {
  Tensor z_i, z_j, z_j1, z_k, v;
  std::vector<std::vector<int>> negatives;

  int batch_size() const;
};

// Uniform sample without replacement from the other batch elements,
// `count` negatives for each of the B anchors. Requires 1 <= count < B.
std::vector<std::vector<int>> sample_negatives(int batch, int count,
                                               std::uint64_t seed);

// The losses. All return a differentiable scalar; softmax denominators go
// through max-shifted logsumexp so values stay finite for any logit size.
Tensor loss_tcn(const EmbeddingBatch& batch, const ObjectiveConfig& cfg);
Tensor loss_tcn_text(const EmbeddingBatch& batch, const ObjectiveConfig& cfg);
Tensor loss_vip(const EmbeddingBatch& batch, const ObjectiveConfig& cfg);
Tensor loss_vip_text(const EmbeddingBatch& batch, const ObjectiveConfig& cfg);
Tensor loss_infonce(const EmbeddingBatch& batch, const ObjectiveConfig& cfg);
Tensor loss_r3m(const EmbeddingBatch& batch, const ObjectiveConfig& cfg);
Tensor loss_liv(const EmbeddingBatch& batch, const ObjectiveConfig& cfg);
Tensor loss_triplet(const EmbeddingBatch& batch, const ObjectiveConfig& cfg);

Tensor compute_loss(ObjectiveTag tag, const EmbeddingBatch& batch,
                    const ObjectiveConfig& cfg);

// Roles a tag consumes: subset string of "ijp k v" used by the sampler and
// batch assembly. p = the (j+1) slot.
struct RoleSet {
  bool z_i = false, z_j = false, z_j1 = false, z_k = false, v = false;
  bool needs_negatives = false;
};
RoleSet roles_for(ObjectiveTag tag);

}  // namespace rmbench
