#include "rmbench/objectives.hpp"

#include <cmath>

#include "rmbench/rng.hpp"

namespace rmbench {

std::string tag_name(ObjectiveTag tag) {
  switch (tag) {
    case ObjectiveTag::kTriplet: return "triplet";
    case ObjectiveTag::kTcnText: return "tcn_text";
    case ObjectiveTag::kR3m: return "r3m";
    case ObjectiveTag::kVipText: return "vip_text";
    case ObjectiveTag::kVipTextPlusVip: return "vip_text_plus_vip";
    case ObjectiveTag::kLiv: return "liv";
    case ObjectiveTag::kTcn: return "tcn";
    case ObjectiveTag::kVip: return "vip";
    case ObjectiveTag::kInfonce: return "infonce";
    case ObjectiveTag::kBaseline: return "baseline";
  }
  throw ConfigError("unknown objective tag");
}

ObjectiveTag tag_from_name(const std::string& name) {
  for (ObjectiveTag t :
       {ObjectiveTag::kTriplet, ObjectiveTag::kTcnText, ObjectiveTag::kR3m,
        ObjectiveTag::kVipText, ObjectiveTag::kVipTextPlusVip,
        ObjectiveTag::kLiv, ObjectiveTag::kTcn, ObjectiveTag::kVip,
        ObjectiveTag::kInfonce, ObjectiveTag::kBaseline})
    if (tag_name(t) == name) return t;
  throw ConfigError("unknown objective '" + name + "'");
}

const std::vector<ObjectiveTag>& trainable_tags() {
  static const std::vector<ObjectiveTag> tags{
      ObjectiveTag::kTriplet,        ObjectiveTag::kTcnText,
      ObjectiveTag::kR3m,            ObjectiveTag::kVipText,
      ObjectiveTag::kVipTextPlusVip, ObjectiveTag::kLiv};
  return tags;
}

RoleSet roles_for(ObjectiveTag tag) {
  RoleSet r;
  switch (tag) {
    case ObjectiveTag::kTriplet:
      r.z_i = r.z_j = r.v = true;
      break;
    case ObjectiveTag::kTcnText:
      r.z_i = r.z_j = r.v = true;
      r.needs_negatives = true;
      break;
    case ObjectiveTag::kTcn:
      r.z_i = r.z_j = r.z_k = true;
      r.needs_negatives = true;
      break;
    case ObjectiveTag::kR3m:
      r.z_i = r.z_j = r.z_k = r.v = true;
      r.needs_negatives = true;
      break;
    case ObjectiveTag::kVip:
      r.z_i = r.z_j = r.z_j1 = r.z_k = true;
      break;
    case ObjectiveTag::kVipText:
      r.z_i = r.z_j = r.z_j1 = r.v = true;
      break;
    case ObjectiveTag::kVipTextPlusVip:
    case ObjectiveTag::kLiv:
      r.z_i = r.z_j = r.z_j1 = r.z_k = r.v = true;
      break;
    case ObjectiveTag::kInfonce:
      r.z_k = r.v = true;
      break;
    case ObjectiveTag::kBaseline:
      throw ConfigError("baseline has no loss");
  }
  return r;
}

int EmbeddingBatch::batch_size() const {
  for (const Tensor* t : {&z_i, &z_j, &z_j1, &z_k, &v})
    if (t->defined()) return t->dim(0);
  return 0;
}

std::vector<std::vector<int>> sample_negatives(int batch, int count,
                                               std::uint64_t seed) {
  if (count < 1) throw ConfigError("negatives_count must be >= 1");
  if (count >= batch)
    throw ConfigError("negatives_count " + std::to_string(count) +
                      " must be smaller than batch size " +
                      std::to_string(batch));
  Rng rng(mix_seed(seed, 0x9e6a));
  std::vector<std::vector<int>> table(static_cast<std::size_t>(batch));
  std::vector<int> pool(static_cast<std::size_t>(batch) - 1);
  for (int b = 0; b < batch; ++b) {
    int w = 0;
    for (int j = 0; j < batch; ++j)
      if (j != b) pool[static_cast<std::size_t>(w++)] = j;
    // partial Fisher-Yates: first `count` entries
    for (int m = 0; m < count; ++m) {
      const int pick =
          m + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(batch - 1 - m)));
      std::swap(pool[static_cast<std::size_t>(m)], pool[static_cast<std::size_t>(pick)]);
    }
    table[static_cast<std::size_t>(b)] =
        std::vector<int>(pool.begin(), pool.begin() + count);
  }
  return table;
}

namespace {

const Tensor& require_role(const EmbeddingBatch& batch, const Tensor& t,
                           const char* role, const char* loss) {
  if (!t.defined())
    throw ContractError(std::string(loss) + ": batch is missing role " + role);
  const int b = batch.batch_size();
  if (t.ndim() != 2 || t.dim(0) != b)
    throw ContractError(std::string(loss) + ": role " + role + " has shape " +
                        shape_str(t.shape()) + ", expected [" +
                        std::to_string(b) + ", d]");
  return t;
}

void require_negatives(const EmbeddingBatch& batch, int count, const char* loss) {
  const int b = batch.batch_size();
  if (count < 1) throw ConfigError(std::string(loss) + ": negatives_count must be >= 1");
  if (count >= b)
    throw ConfigError(std::string(loss) + ": batch size " + std::to_string(b) +
                      " must exceed negatives_count " + std::to_string(count));
  if (static_cast<int>(batch.negatives.size()) != b)
    throw ContractError(std::string(loss) +
                        ": batch is missing its in-batch negatives table");
  for (int i = 0; i < b; ++i) {
    const auto& row = batch.negatives[static_cast<std::size_t>(i)];
    if (static_cast<int>(row.size()) < count)
      throw ContractError(std::string(loss) + ": negatives table row " +
                          std::to_string(i) + " has fewer than " +
                          std::to_string(count) + " entries");
    for (int m = 0; m < count; ++m) {
      const int idx = row[static_cast<std::size_t>(m)];
      if (idx == i || idx < 0 || idx >= b)
        throw ContractError(std::string(loss) + ": invalid negative index " +
                            std::to_string(idx) + " for element " +
                            std::to_string(i));
    }
  }
}

void check_gamma(const ObjectiveConfig& cfg, const char* loss) {
  if (!(cfg.gamma > 0.0) || !(cfg.gamma < 1.0))
    throw ConfigError(std::string(loss) + ": gamma must lie in (0, 1)");
}

// Cosine works on pre-normalized rows so each role is normalized once per
// loss; neg-L2 uses the raw embeddings.
Tensor prep(Similarity sim, const Tensor& t) {
  return sim == Similarity::kCosine ? l2_normalize_rows(t) : t;
}

Tensor pair_sim(Similarity sim, const Tensor& a, const Tensor& b) {
  return sim == Similarity::kCosine ? rowwise_dot(a, b) : rowwise_neg_l2(a, b);
}

Tensor cross_sim_prepped(Similarity sim, const Tensor& a, const Tensor& b) {
  return sim == Similarity::kCosine ? matmul_tb(a, b) : cross_neg_l2(a, b);
}

// Shared body of the two TCN-style softmax losses:
//   -(1/B) sum_b log( e^{pos_b} / (e^{pos_b} + e^{second_b} + sum_m e^{neg_bm}) )
Tensor softmax_ranking_loss(const Tensor& pos, const Tensor& second,
                            std::vector<Tensor> neg_cols) {
  std::vector<Tensor> cols{pos, second};
  for (Tensor& n : neg_cols) cols.push_back(std::move(n));
  const Tensor logits = stack_cols(cols);
  const Tensor lse = logsumexp(logits, 1);
  const int b = pos.dim(0);
  return scale(sum(sub(lse, pos)), 1.0 / static_cast<double>(b));
}

}  // namespace

Tensor loss_tcn(const EmbeddingBatch& batch, const ObjectiveConfig& cfg) {
  const Tensor& zi = require_role(batch, batch.z_i, "z_i", "loss_tcn");
  const Tensor& zj = require_role(batch, batch.z_j, "z_j", "loss_tcn");
  const Tensor& zk = require_role(batch, batch.z_k, "z_k", "loss_tcn");
  require_negatives(batch, cfg.negatives, "loss_tcn");

  const Tensor zi_p = prep(cfg.sim, zi);
  const Tensor zj_p = prep(cfg.sim, zj);
  const Tensor zk_p = prep(cfg.sim, zk);
  const Tensor pos = pair_sim(cfg.sim, zi_p, zj_p);
  const Tensor second = pair_sim(cfg.sim, zi_p, zk_p);

  // negatives: the anchor against z_i of other batch elements
  std::vector<Tensor> negs;
  for (int m = 0; m < cfg.negatives; ++m) {
    std::vector<int> idx(static_cast<std::size_t>(batch.batch_size()));
    for (int b = 0; b < batch.batch_size(); ++b)
      idx[static_cast<std::size_t>(b)] =
          batch.negatives[static_cast<std::size_t>(b)][static_cast<std::size_t>(m)];
    negs.push_back(pair_sim(cfg.sim, zi_p, gather_rows(zi_p, idx)));
  }
  return softmax_ranking_loss(pos, second, std::move(negs));
}

Tensor loss_tcn_text(const EmbeddingBatch& batch, const ObjectiveConfig& cfg) {
  const Tensor& zi = require_role(batch, batch.z_i, "z_i", "loss_tcn_text");
  const Tensor& zj = require_role(batch, batch.z_j, "z_j", "loss_tcn_text");
  const Tensor& v = require_role(batch, batch.v, "v", "loss_tcn_text");
  require_negatives(batch, cfg.negatives, "loss_tcn_text");

  const Tensor zi_p = prep(cfg.sim, zi);
  const Tensor zj_p = prep(cfg.sim, zj);
  const Tensor v_p = prep(cfg.sim, v);
  const Tensor pos = pair_sim(cfg.sim, zj_p, v_p);
  const Tensor second = pair_sim(cfg.sim, zi_p, v_p);

  // negatives: z_j of other batch elements against the element's own goal
  std::vector<Tensor> negs;
  for (int m = 0; m < cfg.negatives; ++m) {
    std::vector<int> idx(static_cast<std::size_t>(batch.batch_size()));
    for (int b = 0; b < batch.batch_size(); ++b)
      idx[static_cast<std::size_t>(b)] =
          batch.negatives[static_cast<std::size_t>(b)][static_cast<std::size_t>(m)];
    negs.push_back(pair_sim(cfg.sim, gather_rows(zj_p, idx), v_p));
  }
  return softmax_ranking_loss(pos, second, std::move(negs));
}

namespace {

// VIP-shaped objective against an arbitrary target role (z_k or v):
//   (1-gamma)/B sum_b [-S(z_i, tgt)]
//     + log (1/B) sum_b exp[ S(z_j, tgt) + 1 - gamma S(z_j1, tgt) ]
Tensor vip_shaped(const Tensor& zi, const Tensor& zj, const Tensor& zj1,
                  const Tensor& tgt, const ObjectiveConfig& cfg) {
  const Tensor zi_p = prep(cfg.sim, zi);
  const Tensor zj_p = prep(cfg.sim, zj);
  const Tensor zj1_p = prep(cfg.sim, zj1);
  const Tensor tgt_p = prep(cfg.sim, tgt);
  const int b = zi.dim(0);

  const Tensor s_i = pair_sim(cfg.sim, zi_p, tgt_p);
  const Tensor s_j = pair_sim(cfg.sim, zj_p, tgt_p);
  const Tensor s_j1 = pair_sim(cfg.sim, zj1_p, tgt_p);

  const Tensor term1 =
      scale(sum(s_i), -(1.0 - cfg.gamma) / static_cast<double>(b));
  const Tensor expo = add_scalar(sub(s_j, scale(s_j1, cfg.gamma)), 1.0);
  const Tensor term2 =
      add_scalar(logsumexp(expo), -std::log(static_cast<double>(b)));
  return add(term1, term2);
}

}  // namespace

Tensor loss_vip(const EmbeddingBatch& batch, const ObjectiveConfig& cfg) {
  check_gamma(cfg, "loss_vip");
  const Tensor& zi = require_role(batch, batch.z_i, "z_i", "loss_vip");
  const Tensor& zj = require_role(batch, batch.z_j, "z_j", "loss_vip");
  const Tensor& zj1 = require_role(batch, batch.z_j1, "z_j1", "loss_vip");
  const Tensor& zk = require_role(batch, batch.z_k, "z_k", "loss_vip");
  return vip_shaped(zi, zj, zj1, zk, cfg);
}

Tensor loss_vip_text(const EmbeddingBatch& batch, const ObjectiveConfig& cfg) {
  check_gamma(cfg, "loss_vip_text");
  const Tensor& zi = require_role(batch, batch.z_i, "z_i", "loss_vip_text");
  const Tensor& zj = require_role(batch, batch.z_j, "z_j", "loss_vip_text");
  const Tensor& zj1 = require_role(batch, batch.z_j1, "z_j1", "loss_vip_text");
  const Tensor& v = require_role(batch, batch.v, "v", "loss_vip_text");
  return vip_shaped(zi, zj, zj1, v, cfg);
}

Tensor loss_infonce(const EmbeddingBatch& batch, const ObjectiveConfig& cfg) {
  const Tensor& zk = require_role(batch, batch.z_k, "z_k", "loss_infonce");
  const Tensor& v = require_role(batch, batch.v, "v", "loss_infonce");
  const int b = batch.batch_size();
  if (b < 2)
    throw ConfigError("loss_infonce: batch size must be >= 2, the denominator "
                      "averages over the other elements");

  const Tensor v_p = prep(cfg.sim, v);
  const Tensor zk_p = prep(cfg.sim, zk);
  // cross[b][j] = S(z_k^j, v^b)
  const Tensor cross = cross_sim_prepped(cfg.sim, v_p, zk_p);
  const Tensor pos = diag(cross);
  const Tensor lse_others = logsumexp_offdiag_rows(cross);
  // per element: -pos + log( (1/B) sum_{j != b} e^{s_jb} )
  return add_scalar(
      scale(sum(sub(lse_others, pos)), 1.0 / static_cast<double>(b)),
      -std::log(static_cast<double>(b)));
}

Tensor loss_r3m(const EmbeddingBatch& batch, const ObjectiveConfig& cfg) {
  return add(loss_tcn(batch, cfg), loss_tcn_text(batch, cfg));
}

Tensor loss_liv(const EmbeddingBatch& batch, const ObjectiveConfig& cfg) {
  return add(add(loss_vip(batch, cfg), loss_vip_text(batch, cfg)),
             loss_infonce(batch, cfg));
}

Tensor loss_triplet(const EmbeddingBatch& batch, const ObjectiveConfig& cfg) {
  if (!(cfg.margin > 0.0))
    throw ConfigError("loss_triplet: margin must be positive");
  const Tensor& zi = require_role(batch, batch.z_i, "z_i", "loss_triplet");
  const Tensor& zj = require_role(batch, batch.z_j, "z_j", "loss_triplet");
  const Tensor& v = require_role(batch, batch.v, "v", "loss_triplet");

  const Tensor v_p = prep(cfg.sim, v);
  const Tensor s_neg = pair_sim(cfg.sim, v_p, prep(cfg.sim, zi));
  const Tensor s_pos = pair_sim(cfg.sim, v_p, prep(cfg.sim, zj));
  const Tensor hinge = relu(add_scalar(sub(s_neg, s_pos), cfg.margin));
  return cfg.triplet_mean ? mean(hinge) : sum(hinge);
}

Tensor compute_loss(ObjectiveTag tag, const EmbeddingBatch& batch,
                    const ObjectiveConfig& cfg) {
  switch (tag) {
    case ObjectiveTag::kTriplet: return loss_triplet(batch, cfg);
    case ObjectiveTag::kTcnText: return loss_tcn_text(batch, cfg);
    case ObjectiveTag::kR3m: return loss_r3m(batch, cfg);
    case ObjectiveTag::kVipText: return loss_vip_text(batch, cfg);
    case ObjectiveTag::kVipTextPlusVip:
      return add(loss_vip_text(batch, cfg), loss_vip(batch, cfg));
    case ObjectiveTag::kLiv: return loss_liv(batch, cfg);
    case ObjectiveTag::kTcn: return loss_tcn(batch, cfg);
    case ObjectiveTag::kVip: return loss_vip(batch, cfg);
    case ObjectiveTag::kInfonce: return loss_infonce(batch, cfg);
    case ObjectiveTag::kBaseline: break;
  }
  throw ConfigError("compute_loss: '" + tag_name(tag) + "' is not a loss");
}

}  // namespace rmbench
