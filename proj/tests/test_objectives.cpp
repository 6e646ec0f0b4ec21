#include <doctest.h>

#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "rmbench/gradcheck.hpp"
#include "rmbench/objectives.hpp"
#include "rmbench/rng.hpp"

using namespace rmbench;

// ---------------------------------------------------------------------
// Naive oracle: straight transcription of each formula on plain doubles,
// no log-sum-exp stabilization, no tensor machinery. Independent of the
// implementation path it checks.
// ---------------------------------------------------------------------
namespace {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // B rows x d

double naive_dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double naive_sim(Similarity sim, const Vec& a, const Vec& b) {
  if (sim == Similarity::kCosine) {
    const double na = std::sqrt(naive_dot(a, a));
    const double nb = std::sqrt(naive_dot(b, b));
    return naive_dot(a, b) / (na * nb);
  }
  double sq = 0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  return -std::sqrt(sq);
}

struct RawBatch {
  Mat zi, zj, zj1, zk, v;
  std::vector<std::vector<int>> negs;
  int B() const { return static_cast<int>(zi.empty() ? zk.size() : zi.size()); }
};

double naive_tcn(const RawBatch& r, const ObjectiveConfig& cfg) {
  double acc = 0;
  for (int b = 0; b < r.B(); ++b) {
    const double p = std::exp(naive_sim(cfg.sim, r.zi[b], r.zj[b]));
    double den = p + std::exp(naive_sim(cfg.sim, r.zi[b], r.zk[b]));
    for (int m = 0; m < cfg.negatives; ++m)
      den += std::exp(naive_sim(cfg.sim, r.zi[b], r.zi[r.negs[b][m]]));
    acc += -std::log(p / den);
  }
  return acc / r.B();
}

double naive_tcn_text(const RawBatch& r, const ObjectiveConfig& cfg) {
  double acc = 0;
  for (int b = 0; b < r.B(); ++b) {
    const double p = std::exp(naive_sim(cfg.sim, r.zj[b], r.v[b]));
    double den = p + std::exp(naive_sim(cfg.sim, r.zi[b], r.v[b]));
    for (int m = 0; m < cfg.negatives; ++m)
      den += std::exp(naive_sim(cfg.sim, r.zj[r.negs[b][m]], r.v[b]));
    acc += -std::log(p / den);
  }
  return acc / r.B();
}

double naive_vip_target(const RawBatch& r, const ObjectiveConfig& cfg,
                        const Mat& tgt) {
  double t1 = 0, t2 = 0;
  for (int b = 0; b < r.B(); ++b) {
    t1 += -naive_sim(cfg.sim, r.zi[b], tgt[b]);
    t2 += std::exp(naive_sim(cfg.sim, r.zj[b], tgt[b]) + 1.0 -
                   cfg.gamma * naive_sim(cfg.sim, r.zj1[b], tgt[b]));
  }
  return (1.0 - cfg.gamma) / r.B() * t1 + std::log(t2 / r.B());
}

double naive_vip(const RawBatch& r, const ObjectiveConfig& cfg) {
  return naive_vip_target(r, cfg, r.zk);
}

double naive_vip_text(const RawBatch& r, const ObjectiveConfig& cfg) {
  return naive_vip_target(r, cfg, r.v);
}

double naive_infonce(const RawBatch& r, const ObjectiveConfig& cfg) {
  const int B = static_cast<int>(r.zk.size());
  double acc = 0;
  for (int b = 0; b < B; ++b) {
    const double p = std::exp(naive_sim(cfg.sim, r.zk[b], r.v[b]));
    double den = 0;
    for (int j = 0; j < B; ++j)
      if (j != b) den += std::exp(naive_sim(cfg.sim, r.zk[j], r.v[b]));
    den /= B;
    acc += -std::log(p / den);
  }
  return acc / B;
}

double naive_triplet(const RawBatch& r, const ObjectiveConfig& cfg) {
  double acc = 0;
  for (int b = 0; b < r.B(); ++b)
    acc += std::max(0.0, naive_sim(cfg.sim, r.v[b], r.zi[b]) -
                             naive_sim(cfg.sim, r.v[b], r.zj[b]) + cfg.margin);
  return cfg.triplet_mean ? acc / r.B() : acc;
}

// ---------------------------------------------------------------------

Vec random_row(Rng& rng, int d) {
  Vec v(static_cast<std::size_t>(d));
  double sq = 0;
  do {
    sq = 0;
    for (auto& x : v) {
      x = rng.uniform(-1, 1);
      sq += x * x;
    }
  } while (sq < 0.09);  // keep norms comfortably above the cosine floor
  return v;
}

Mat random_mat(Rng& rng, int B, int d) {
  Mat m;
  for (int b = 0; b < B; ++b) m.push_back(random_row(rng, d));
  return m;
}

Tensor to_tensor(const Mat& m) {
  if (m.empty()) return Tensor();
  std::vector<double> flat;
  for (const Vec& r : m) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor::constant({static_cast<int>(m.size()), static_cast<int>(m[0].size())},
                          std::move(flat));
}

RawBatch random_raw(Rng& rng, int B, int d, int negatives) {
  RawBatch r;
  r.zi = random_mat(rng, B, d);
  r.zj = random_mat(rng, B, d);
  r.zj1 = random_mat(rng, B, d);
  r.zk = random_mat(rng, B, d);
  r.v = random_mat(rng, B, d);
  r.negs = sample_negatives(B, negatives, rng.next_u64());
  return r;
}

EmbeddingBatch to_batch(const RawBatch& r) {
  EmbeddingBatch b;
  b.z_i = to_tensor(r.zi);
  b.z_j = to_tensor(r.zj);
  b.z_j1 = to_tensor(r.zj1);
  b.z_k = to_tensor(r.zk);
  b.v = to_tensor(r.v);
  b.negatives = r.negs;
  return b;
}

using LossFn = Tensor (*)(const EmbeddingBatch&, const ObjectiveConfig&);
using NaiveFn = double (*)(const RawBatch&, const ObjectiveConfig&);

const std::vector<std::tuple<const char*, LossFn, NaiveFn>> kLossTable = {
    {"tcn", loss_tcn, naive_tcn},
    {"tcn_text", loss_tcn_text, naive_tcn_text},
    {"vip", loss_vip, naive_vip},
    {"vip_text", loss_vip_text, naive_vip_text},
    {"infonce", loss_infonce, naive_infonce},
    {"triplet", loss_triplet, naive_triplet},
};

// Batch with every role equal to the same embedding replicated: all cosine
// similarities are exactly 1.
EmbeddingBatch degenerate_equal_batch(int B, int d, int negatives) {
  Mat rows;
  Vec base(static_cast<std::size_t>(d), 0.0);
  base[0] = 1.0;
  for (int b = 0; b < B; ++b) rows.push_back(base);
  RawBatch r;
  r.zi = r.zj = r.zj1 = r.zk = r.v = rows;
  r.negs = sample_negatives(B, negatives, 0);
  return to_batch(r);
}

}  // namespace

TEST_CASE("sample_negatives: uniform without replacement, well-formed") {
  const auto table = sample_negatives(8, 3, 42);
  REQUIRE(table.size() == 8);
  for (int b = 0; b < 8; ++b) {
    CHECK(table[b].size() == 3);
    std::set<int> seen;
    for (int idx : table[b]) {
      CHECK(idx != b);
      CHECK(idx >= 0);
      CHECK(idx < 8);
      CHECK(seen.insert(idx).second);  // no replacement
    }
  }
  CHECK(sample_negatives(8, 3, 42) == table);  // deterministic
  CHECK_THROWS_AS(sample_negatives(3, 3, 0), ConfigError);
  CHECK_THROWS_AS(sample_negatives(4, 0, 0), ConfigError);
}

TEST_CASE("loss_tcn: symmetric denominator gives log 3") {
  ObjectiveConfig cfg;
  cfg.negatives = 1;
  const EmbeddingBatch batch = degenerate_equal_batch(2, 4, 1);
  CHECK(std::abs(loss_tcn(batch, cfg).item() - std::log(3.0)) < 1e-14);
}

TEST_CASE("loss_tcn: dominant positive saturates to zero") {
  // neg-L2 lets the positive logit dominate: anchor == positive (sim 0),
  // everything else far away (sim -12).
  ObjectiveConfig cfg;
  cfg.sim = Similarity::kNegL2;
  cfg.negatives = 1;
  RawBatch r;
  const Vec at{0, 0}, far{12, 0}, far2{0, 12};
  r.zi = {at, far2};
  r.zj = r.zi;           // positive at distance 0
  r.zk = {far, {12, 12}};
  r.negs = {{1}, {0}};   // other element's z_i is also far
  ObjectiveConfig c2 = cfg;
  const double val = loss_tcn(to_batch(r), c2).item();
  CHECK(val > 0.0);
  CHECK(val < 1e-4);
}

TEST_CASE("loss_tcn_text: symmetric case gives log 3") {
  ObjectiveConfig cfg;
  cfg.negatives = 1;
  const EmbeddingBatch batch = degenerate_equal_batch(2, 4, 1);
  CHECK(std::abs(loss_tcn_text(batch, cfg).item() - std::log(3.0)) < 1e-14);
}

TEST_CASE("loss_tcn_text: separated positives match the naive value") {
  // S(z_j, v) = 1, S(z_i, v) = -1, in-batch negative also at -1.
  RawBatch r;
  r.zi = {{-1, 0}, {1, 0}};
  r.zj = {{1, 0}, {-1, 0}};
  r.v = {{1, 0}, {-1, 0}};
  r.negs = {{1}, {0}};
  ObjectiveConfig cfg;
  cfg.negatives = 1;
  const double got = loss_tcn_text(to_batch(r), cfg).item();
  const double expected = std::log(1.0 + 2.0 * std::exp(-2.0));
  CHECK(std::abs(got - expected) < 1e-12);
  CHECK(got > 0.0);
  CHECK(got < 0.5);
}

TEST_CASE("loss_vip / loss_vip_text: zero-similarity case is exactly 1") {
  // Mutually orthogonal roles at B = 1: every similarity is 0.
  RawBatch r;
  r.zi = {{1, 0, 0, 0, 0}};
  r.zj = {{0, 1, 0, 0, 0}};
  r.zj1 = {{0, 0, 1, 0, 0}};
  r.zk = {{0, 0, 0, 1, 0}};
  r.v = {{0, 0, 0, 0, 1}};
  ObjectiveConfig cfg;
  CHECK(std::abs(loss_vip(to_batch(r), cfg).item() - 1.0) < 1e-14);
  CHECK(std::abs(loss_vip_text(to_batch(r), cfg).item() - 1.0) < 1e-14);
}

TEST_CASE("loss_infonce: all-equal similarities give -log 2 at B = 2") {
  const EmbeddingBatch batch = degenerate_equal_batch(2, 4, 1);
  ObjectiveConfig cfg;
  CHECK(std::abs(loss_infonce(batch, cfg).item() + std::log(2.0)) < 1e-14);
}

TEST_CASE("loss_infonce: rejects batches of one") {
  RawBatch r;
  r.zk = {{1, 0}};
  r.v = {{0, 1}};
  ObjectiveConfig cfg;
  CHECK_THROWS_AS(loss_infonce(to_batch(r), cfg), ConfigError);
}

TEST_CASE("every loss matches its naive-formula oracle") {
  Rng rng(2024);
  for (const Similarity sim : {Similarity::kCosine, Similarity::kNegL2}) {
    for (int trial = 0; trial < 8; ++trial) {
      const int B = 4;
      const int d = 6;
      ObjectiveConfig cfg;
      cfg.sim = sim;
      cfg.negatives = 2;
      const RawBatch raw = random_raw(rng, B, d, cfg.negatives);
      const EmbeddingBatch batch = to_batch(raw);
      for (const auto& [name, fn, oracle] : kLossTable) {
        const double got = fn(batch, cfg).item();
        const double want = oracle(raw, cfg);
        INFO(name << " sim=" << similarity_name(sim));
        CHECK(std::abs(got - want) < 1e-10);
      }
    }
  }
}

TEST_CASE("compositionality: r3m and liv equal their component sums exactly") {
  Rng rng(555);
  ObjectiveConfig cfg;
  cfg.negatives = 2;
  for (int trial = 0; trial < 25; ++trial) {
    const RawBatch raw = random_raw(rng, 4, 8, cfg.negatives);
    const EmbeddingBatch batch = to_batch(raw);
    CHECK(loss_r3m(batch, cfg).item() ==
          loss_tcn(batch, cfg).item() + loss_tcn_text(batch, cfg).item());
    CHECK(loss_liv(batch, cfg).item() ==
          loss_vip(batch, cfg).item() + loss_vip_text(batch, cfg).item() +
              loss_infonce(batch, cfg).item());
    const Tensor vpv = compute_loss(ObjectiveTag::kVipTextPlusVip, batch, cfg);
    CHECK(vpv.item() ==
          loss_vip_text(batch, cfg).item() + loss_vip(batch, cfg).item());
  }
}

TEST_CASE("loss_liv: orthogonal zero-similarity case equals 2 - log 2") {
  // Ten orthogonal directions make every similarity zero, including the
  // cross-batch InfoNCE terms.
  auto unit = [](int d, int k) {
    Vec v(static_cast<std::size_t>(d), 0.0);
    v[static_cast<std::size_t>(k)] = 1.0;
    return v;
  };
  RawBatch r;
  const int d = 10;
  r.zi = {unit(d, 0), unit(d, 5)};
  r.zj = {unit(d, 1), unit(d, 6)};
  r.zj1 = {unit(d, 2), unit(d, 7)};
  r.zk = {unit(d, 3), unit(d, 8)};
  r.v = {unit(d, 4), unit(d, 9)};
  r.negs = {{1}, {0}};
  ObjectiveConfig cfg;
  cfg.negatives = 1;
  const EmbeddingBatch batch = to_batch(r);
  const double got = loss_liv(batch, cfg).item();
  // components: VIP = 1, VIP-text = 1, InfoNCE = -log 2
  const double by_components = naive_vip(r, cfg) + naive_vip_text(r, cfg) +
                               naive_infonce(r, cfg);
  CHECK(std::abs(got - (2.0 - std::log(2.0))) < 1e-12);
  CHECK(std::abs(got - by_components) < 1e-12);
}

TEST_CASE("loss_triplet: margin cases") {
  ObjectiveConfig cfg;  // margin 0.3
  SUBCASE("margin satisfied -> exactly zero") {
    // S(v,z_i) = 0.2, S(v,z_j) = 0.8 via planar angles
    const double a1 = std::acos(0.2), a2 = std::acos(0.8);
    RawBatch r;
    r.v = {{1, 0}};
    r.zi = {{std::cos(a1), std::sin(a1)}};
    r.zj = {{std::cos(a2), std::sin(a2)}};
    CHECK(loss_triplet(to_batch(r), cfg).item() == 0.0);
  }
  SUBCASE("equal similarities leave the margin") {
    RawBatch r;
    r.v = {{1, 0}, {0, 1}};
    r.zi = {{0, 1}, {1, 0}};
    r.zj = {{0, 1}, {1, 0}};
    // sum reduction: one margin per element
    CHECK(std::abs(loss_triplet(to_batch(r), cfg).item() - 2 * 0.3) < 1e-14);
    ObjectiveConfig mcfg = cfg;
    mcfg.triplet_mean = true;
    CHECK(std::abs(loss_triplet(to_batch(r), mcfg).item() - 0.3) < 1e-14);
  }
  SUBCASE("random batch matches the elementwise hand formula") {
    Rng rng(31337);
    for (int t = 0; t < 10; ++t) {
      const RawBatch raw = random_raw(rng, 8, 5, 1);
      CHECK(std::abs(loss_triplet(to_batch(raw), cfg).item() -
                     naive_triplet(raw, cfg)) < 1e-12);
    }
  }
  SUBCASE("strictly positive iff some element violates the margin") {
    Rng rng(9);
    const RawBatch raw = random_raw(rng, 6, 4, 1);
    const double val = loss_triplet(to_batch(raw), cfg).item();
    bool violated = false;
    for (int b = 0; b < 6; ++b)
      if (naive_sim(cfg.sim, raw.v[b], raw.zj[b]) <
          naive_sim(cfg.sim, raw.v[b], raw.zi[b]) + cfg.margin)
        violated = true;
    CHECK((val > 0.0) == violated);
  }
}

TEST_CASE("gradients: every loss passes the finite-difference oracle") {
  Rng rng(777);
  ObjectiveConfig base;
  base.negatives = 1;
  for (const int B : {2, 4, 8}) {
    for (const int d : {4, 16}) {
      const RawBatch raw = random_raw(rng, B, d, base.negatives);
      for (const auto& [name, fn, oracle] : kLossTable) {
        (void)oracle;
        INFO(name << " B=" << B << " d=" << d);
        const auto loss_fn = fn;
        const auto negs = raw.negs;
        const double err = grad_check(
            [loss_fn, negs, &base](Tape&, const std::vector<Tensor>& in) {
              EmbeddingBatch b;
              b.z_i = in[0];
              b.z_j = in[1];
              b.z_j1 = in[2];
              b.z_k = in[3];
              b.v = in[4];
              b.negatives = negs;
              return loss_fn(b, base);
            },
            {to_tensor(raw.zi), to_tensor(raw.zj), to_tensor(raw.zj1),
             to_tensor(raw.zk), to_tensor(raw.v)});
        CHECK(err < 1e-4);
      }
    }
  }
}

TEST_CASE("gradients: composite losses") {
  Rng rng(888);
  ObjectiveConfig cfg;
  cfg.negatives = 2;
  const RawBatch raw = random_raw(rng, 4, 8, cfg.negatives);
  for (const ObjectiveTag tag : {ObjectiveTag::kR3m, ObjectiveTag::kLiv,
                                 ObjectiveTag::kVipTextPlusVip}) {
    const auto negs = raw.negs;
    const double err = grad_check(
        [tag, negs, &cfg](Tape&, const std::vector<Tensor>& in) {
          EmbeddingBatch b;
          b.z_i = in[0];
          b.z_j = in[1];
          b.z_j1 = in[2];
          b.z_k = in[3];
          b.v = in[4];
          b.negatives = negs;
          return compute_loss(tag, b, cfg);
        },
        {to_tensor(raw.zi), to_tensor(raw.zj), to_tensor(raw.zj1),
         to_tensor(raw.zk), to_tensor(raw.v)});
    INFO(tag_name(tag));
    CHECK(err < 1e-4);
  }
}

TEST_CASE("missing roles and bad configs are rejected") {
  Rng rng(4);
  const RawBatch raw = random_raw(rng, 4, 4, 1);
  EmbeddingBatch batch = to_batch(raw);
  ObjectiveConfig cfg;
  cfg.negatives = 1;

  EmbeddingBatch no_k = batch;
  no_k.z_k = Tensor();
  CHECK_THROWS_AS(loss_tcn(no_k, cfg), ContractError);
  CHECK_THROWS_AS(loss_vip(no_k, cfg), ContractError);

  EmbeddingBatch no_v = batch;
  no_v.v = Tensor();
  CHECK_THROWS_AS(loss_triplet(no_v, cfg), ContractError);
  CHECK_THROWS_AS(loss_tcn_text(no_v, cfg), ContractError);

  ObjectiveConfig too_many = cfg;
  too_many.negatives = 4;  // == batch size
  CHECK_THROWS_AS(loss_tcn(batch, too_many), ConfigError);

  ObjectiveConfig bad_gamma = cfg;
  bad_gamma.gamma = 1.0;
  CHECK_THROWS_AS(loss_vip(batch, bad_gamma), ConfigError);

  EmbeddingBatch no_table = batch;
  no_table.negatives.clear();
  CHECK_THROWS_AS(loss_tcn(no_table, cfg), ContractError);
}

TEST_CASE("losses stay finite for logit magnitudes up to 50") {
  // neg-L2 distances near 50 push raw exponents to e^{+-50}; the stabilized
  // path must stay finite.
  ObjectiveConfig cfg;
  cfg.sim = Similarity::kNegL2;
  cfg.negatives = 1;
  RawBatch r;
  r.zi = {{0, 0}, {50, 0}};
  r.zj = {{50, 0}, {0, 0}};
  r.zj1 = {{0, 50}, {50, 50}};
  r.zk = {{50, 50}, {0, 50}};
  r.v = {{25, 25}, {-25, 0}};
  r.negs = {{1}, {0}};
  const EmbeddingBatch batch = to_batch(r);
  for (const auto& [name, fn, oracle] : kLossTable) {
    (void)oracle;
    INFO(name);
    CHECK(std::isfinite(fn(batch, cfg).item()));
  }
}

TEST_CASE("cosine scaling invariance of every loss (property)") {
  Rng rng(123);
  ObjectiveConfig cfg;
  cfg.negatives = 2;
  for (int trial = 0; trial < 5; ++trial) {
    RawBatch raw = random_raw(rng, 4, 6, cfg.negatives);
    const EmbeddingBatch batch = to_batch(raw);
    RawBatch scaled = raw;
    const double c = rng.uniform(0.2, 8.0);
    // rescale one role per trial, rotating through roles
    Mat* roles[5] = {&scaled.zi, &scaled.zj, &scaled.zj1, &scaled.zk, &scaled.v};
    for (auto& row : *roles[trial % 5])
      for (auto& x : row) x *= c;
    const EmbeddingBatch sbatch = to_batch(scaled);
    for (const auto& [name, fn, oracle] : kLossTable) {
      (void)oracle;
      INFO(name << " trial=" << trial);
      CHECK(std::abs(fn(batch, cfg).item() - fn(sbatch, cfg).item()) < 1e-8);
    }
    CHECK(std::abs(loss_r3m(batch, cfg).item() - loss_r3m(sbatch, cfg).item()) < 1e-8);
    CHECK(std::abs(loss_liv(batch, cfg).item() - loss_liv(sbatch, cfg).item()) < 1e-8);
  }
}

TEST_CASE("tag round-trip and role table") {
  for (ObjectiveTag t : trainable_tags()) CHECK(tag_from_name(tag_name(t)) == t);
  CHECK_THROWS_AS(tag_from_name("nope"), ConfigError);
  CHECK(roles_for(ObjectiveTag::kTriplet).v);
  CHECK(!roles_for(ObjectiveTag::kTriplet).z_k);
  CHECK(roles_for(ObjectiveTag::kLiv).z_j1);
  CHECK(roles_for(ObjectiveTag::kR3m).needs_negatives);
  CHECK(!roles_for(ObjectiveTag::kVipText).needs_negatives);
}
