#include "rmbench/training.hpp"

#include <cmath>
#include <fstream>
#include <iostream>

#include "rmbench/kernels.hpp"
#include "rmbench/rng.hpp"
#include "rmbench/textio.hpp"

namespace rmbench {

double resolve_lr(ObjectiveTag tag, std::optional<double> override_lr) {
  if (override_lr.has_value()) return *override_lr;
  return tag == ObjectiveTag::kLiv ? 1e-5 : 1e-4;
}

double cosine_lr(int step, int total_steps, double lr, double lr_min) {
  if (step < 0) throw ContractError("cosine_lr: negative step");
  if (total_steps < 1) return lr_min;
  if (step == 0) return lr;
  if (step >= total_steps) return lr_min;
  const double phase = 3.14159265358979323846 * static_cast<double>(step) /
                       static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr - lr_min) * (1.0 + std::cos(phase));
}

void AdamState::init(const std::vector<Parameter*>& params) {
  step = 0;
  m.clear();
  v.clear();
  for (const Parameter* p : params) {
    m.emplace_back(p->size(), 0.0);
    v.emplace_back(p->size(), 0.0);
  }
}

void adam_step(const std::vector<Parameter*>& params,
               const std::vector<std::vector<double>>& grads, AdamState& state,
               double lr, double grad_clip) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ContractError("adam_step: parameter/gradient/state count mismatch");
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (grads[t].size() != params[t]->size())
      throw ContractError("adam_step: gradient shape mismatch for " + params[t]->name);
    for (double g : grads[t])
      if (!std::isfinite(g))
        throw NumericalError("adam_step: non-finite gradient in parameter '" +
                             params[t]->name + "'");
  }

  double clip_scale = 1.0;
  if (grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& g : grads) sq += kern::active().dot(g.data(), g.data(), g.size());
    const double norm = std::sqrt(sq);
    if (norm > grad_clip) clip_scale = grad_clip / norm;
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    double* p = params[t]->data->data();
    double* mt = state.m[t].data();
    double* vt = state.v[t].data();
    const double* g = grads[t].data();
    for (std::size_t i = 0; i < params[t]->size(); ++i) {
      const double gi = g[i] * clip_scale;
      mt[i] = state.beta1 * mt[i] + (1.0 - state.beta1) * gi;
      vt[i] = state.beta2 * vt[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = mt[i] / bc1;
      const double vhat = vt[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

EmbeddingBatch assemble_batch(const RolloutArchive& archive,
                              const FinetuneDataset& ds,
                              std::span<const int> tuple_indices,
                              RewardModel& model, Binding& bind,
                              const ObjectiveConfig& loss_cfg,
                              std::uint64_t negatives_seed) {
  const RoleSet roles = roles_for(ds.tag);
  const int B = static_cast<int>(tuple_indices.size());
  const int obs_dim = archive.suite.renderer.obs_dim;

  auto obs_matrix = [&](auto timestep_of, auto view_of) {
    std::vector<double> flat(static_cast<std::size_t>(B) * obs_dim);
    for (int b = 0; b < B; ++b) {
      const SampleTuple& t = ds.tuples[static_cast<std::size_t>(tuple_indices[b])];
      const Rollout& r = archive.rollouts[static_cast<std::size_t>(t.rollout_idx)];
      const double* src = r.obs_at(timestep_of(t), view_of(t));
      std::copy_n(src, obs_dim, flat.data() + static_cast<std::size_t>(b) * obs_dim);
    }
    return Tensor::constant({B, obs_dim}, std::move(flat));
  };

  EmbeddingBatch batch;
  if (roles.z_i)
    batch.z_i = encode_image(model.image, bind,
                             obs_matrix([](const SampleTuple& t) { return t.i; },
                                        [](const SampleTuple& t) { return t.view[0]; }));
  if (roles.z_j)
    batch.z_j = encode_image(model.image, bind,
                             obs_matrix([](const SampleTuple& t) { return t.j; },
                                        [](const SampleTuple& t) { return t.view[1]; }));
  if (roles.z_j1)
    batch.z_j1 = encode_image(model.image, bind,
                              obs_matrix([](const SampleTuple& t) { return t.j + 1; },
                                         [](const SampleTuple& t) { return t.view[2]; }));
  if (roles.z_k)
    batch.z_k = encode_image(model.image, bind,
                             obs_matrix([](const SampleTuple& t) { return t.k; },
                                        [](const SampleTuple& t) { return t.view[3]; }));
  if (roles.v) {
    std::vector<int> goals(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b)
      goals[static_cast<std::size_t>(b)] =
          ds.tuples[static_cast<std::size_t>(tuple_indices[b])].goal_id;
    batch.v = encode_text(model.text, bind, goals);
  }
  if (roles.needs_negatives)
    batch.negatives = sample_negatives(B, loss_cfg.negatives, negatives_seed);
  return batch;
}

namespace {

double epoch_loss(const RolloutArchive& archive, const FinetuneDataset& data,
                  const std::vector<std::vector<int>>& batches,
                  RewardModel& model, const TrainConfig& cfg,
                  std::uint64_t negatives_root) {
  double total = 0.0;
  int count = 0;
  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    Binding bind;  // no tape: evaluation only
    const EmbeddingBatch batch =
        assemble_batch(archive, data, batches[bi], model, bind, cfg.loss,
                       mix_seed(negatives_root, bi));
    total += compute_loss(cfg.objective, batch, cfg.loss).item();
    ++count;
  }
  return count > 0 ? total / count : std::numeric_limits<double>::quiet_NaN();
}

std::string describe_batch(const FinetuneDataset& ds,
                           const std::vector<int>& batch) {
  std::string s = "tuples";
  const std::size_t show = std::min<std::size_t>(batch.size(), 4);
  for (std::size_t b = 0; b < show; ++b) {
    const SampleTuple& t = ds.tuples[static_cast<std::size_t>(batch[b])];
    s += " (r" + std::to_string(t.rollout_idx) + ":" + std::to_string(t.i) + "," +
         std::to_string(t.j) + "," + std::to_string(t.k) + ")";
  }
  if (batch.size() > show) s += " ...";
  return s;
}

}  // namespace

TrainResult run_training(const TrainConfig& cfg, RewardModel& model,
                         const FinetuneDataset& train_ds,
                         const FinetuneDataset& val_ds,
                         const RolloutArchive& archive) {
  if (train_ds.tag != cfg.objective)
    throw ConfigError("run_training: dataset tag '" + tag_name(train_ds.tag) +
                      "' does not match objective '" + tag_name(cfg.objective) + "'");
  if (cfg.epochs < 1) throw ConfigError("run_training: epochs must be >= 1");
  if (!(cfg.lr > cfg.lr_min) || !(cfg.lr_min > 0.0))
    throw ConfigError("run_training: need lr > lr_min > 0");
  if (cfg.objective == ObjectiveTag::kLiv && cfg.lr > 1.5e-5)
    std::cerr << "run_training: LIV at lr " << cfg.lr
              << " is unstable; 1e-5 is recommended\n";

  const int steps_per_epoch = train_ds.size() / cfg.batch_size;
  if (steps_per_epoch < 1)
    throw ConfigError("run_training: dataset smaller than one batch");
  const int total_steps = cfg.epochs * steps_per_epoch;
  // denominator total_steps - 1: the first step runs at lr, the last at lr_min
  const int denom = std::max(1, total_steps - 1);

  std::vector<Parameter*> params = model.trainable_parameters();
  if (params.empty()) throw ConfigError("run_training: nothing is trainable");
  AdamState adam;
  adam.init(params);

  TrainResult result;
  result.lr_trace.reserve(static_cast<std::size_t>(total_steps));

  const bool has_val = val_ds.size() >= cfg.batch_size;
  int global_step = 0;
  bool best_set = false;
  double best_val = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::uint64_t epoch_seed = mix_seed(cfg.seed, 0xe90c + static_cast<std::uint64_t>(epoch));
    const EpochBatches eb = epoch_batches(train_ds, cfg.batch_size, epoch_seed, true);

    double loss_sum = 0.0;
    double last_lr = 0.0;
    for (std::size_t bi = 0; bi < eb.batches.size(); ++bi) {
      Tape tape;
      Binding bind(&tape);
      const EmbeddingBatch batch =
          assemble_batch(archive, eb.data, eb.batches[bi], model, bind, cfg.loss,
                         mix_seed(epoch_seed, bi));
      const Tensor loss = compute_loss(cfg.objective, batch, cfg.loss);
      const double loss_val = loss.item();
      if (!std::isfinite(loss_val))
        throw NumericalError("run_training: non-finite loss at epoch " +
                             std::to_string(epoch) + " batch " + std::to_string(bi) +
                             "; " + describe_batch(eb.data, eb.batches[bi]));
      loss_sum += loss_val;
      tape.backward(loss);

      std::vector<std::vector<double>> grads;
      grads.reserve(params.size());
      for (Parameter* p : params) {
        const std::vector<double>* g = bind.grad_of(*p);
        grads.push_back(g ? *g : std::vector<double>(p->size(), 0.0));
      }
      last_lr = cosine_lr(global_step, denom, cfg.lr, cfg.lr_min);
      result.lr_trace.push_back(last_lr);
      adam_step(params, grads, adam, last_lr, cfg.grad_clip);
      ++global_step;
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_sum / static_cast<double>(eb.batches.size());
    em.lr = last_lr;
    if (has_val) {
      // fixed order, canonical views: comparable across epochs
      const EpochBatches vb = epoch_batches(val_ds, cfg.batch_size, 0, false);
      em.val_loss = epoch_loss(archive, vb.data, vb.batches, model, cfg,
                               mix_seed(cfg.seed, 0x7a1));
      if (em.val_loss < best_val) {
        best_val = em.val_loss;
        result.best = model.clone();
        result.best_epoch = epoch;
        best_set = true;
      }
    }
    result.metrics.push_back(em);
  }
  if (!best_set) {
    result.best = model.clone();
    result.best_epoch = cfg.epochs - 1;
  }
  return result;
}

void write_metrics_csv(const std::vector<EpochMetrics>& metrics,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics: " + path.string());
  out << "epoch,train_loss,val_loss,lr\n";
  for (const EpochMetrics& m : metrics)
    out << m.epoch << "," << fmt_full(m.train_loss) << "," << fmt_full(m.val_loss)
        << "," << fmt_full(m.lr) << "\n";
  if (!out) throw IoError("metrics write failed: " + path.string());
}

}  // namespace rmbench
