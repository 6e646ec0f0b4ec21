#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rmbench/tensor.hpp"

namespace rmbench {

// Named weight array. Buffers are shared into tape leaves without copying;
// the optimizer mutates them in place between steps.
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::shared_ptr<std::vector<double>> data;
  bool trainable = true;

  std::size_t size() const { return data ? data->size() : 0; }
  Parameter clone() const {
    Parameter p = *this;
    p.data = std::make_shared<std::vector<double>>(*data);
    return p;
  }
};

// Registers each parameter on a tape at most once per step, so gradient
// contributions from every use accumulate into one leaf. A binding without a
// tape produces plain constants (inference path).
class Binding {
 public:
  Binding() = default;
  explicit Binding(Tape* tape) : tape_(tape) {}

  Tensor of(Parameter& p);
  Tensor input(std::vector<int> shape, std::vector<double> data) const {
    return Tensor::constant(std::move(shape), std::move(data));
  }
  Tape* tape() const { return tape_; }

  // Gradient of a bound trainable parameter after backward; nullptr if it
  // never flowed.
  const std::vector<double>* grad_of(const Parameter& p) const;

 private:
  Tape* tape_ = nullptr;
  std::map<const Parameter*, Tensor> leaves_;
};

enum class Similarity { kCosine, kNegL2 };

std::string similarity_name(Similarity s);
Similarity similarity_from_name(const std::string& name);

// Scalar similarity of two embedding vectors. Cosine normalizes both sides
// (norms <= 1e-12 rejected); neg-L2 returns -||a-b||.
double similarity(Similarity s, const Tensor& a, const Tensor& b);

// Batched, differentiable forms used by the losses: rows of a paired with
// rows of b (rowwise) or all pairs (cross, [rows(a) x rows(b)]).
Tensor rowwise_similarity(Similarity s, const Tensor& a, const Tensor& b);
Tensor cross_similarity(Similarity s, const Tensor& a, const Tensor& b);

struct LoraConfig {
  bool enabled = false;
  int rank = 16;
  double alpha = 32.0;
  enum class Targets { kVision, kText, kBoth } targets = Targets::kBoth;
};

// Low-rank adapter on a linear layer: x W + (alpha/rank) (x A) B with
// A[in x rank], B[rank x out]. B starts at zero so the adapted forward
// equals the frozen forward at initialization.
struct LoraAdapter {
  int rank = 16;
  double alpha = 32.0;
  Parameter down;  // in x rank
  Parameter up;    // rank x out

  double scaling() const { return alpha / static_cast<double>(rank); }
};

struct Linear {
  Parameter weight;  // in x out
  Parameter bias;    // out
  std::optional<LoraAdapter> lora;

  int in_dim() const { return weight.shape[0]; }
  int out_dim() const { return weight.shape[1]; }
};

// y = x W + b (+ LoRA path); x is [batch x in].
Tensor linear_forward(Linear& layer, Binding& bind, const Tensor& x);

struct EncoderConfig {
  int obs_dim = 32;
  std::vector<int> hidden{256, 256};
  int emb_dim = 64;   // shared embedding dimension d
  int table_dim = 32; // goal-id embedding width before projection
  Similarity sim = Similarity::kCosine;
  bool freeze_base = false;  // train only LoRA matrices
  LoraConfig lora;
};

// Observation tower: MLP with tanh hidden activations, linear head.
struct ImageEncoder {
  std::vector<Linear> layers;

  int obs_dim() const { return layers.front().in_dim(); }
  int emb_dim() const { return layers.back().out_dim(); }
  ImageEncoder clone() const;
};

// Goal tower: one learned row per goal id, projected into the shared space.
struct TextEncoder {
  Parameter table;  // n_goals x table_dim
  Linear proj;      // table_dim -> emb_dim

  int n_goals() const { return table.shape[0]; }
  int emb_dim() const { return proj.out_dim(); }
  TextEncoder clone() const;
};

ImageEncoder make_image_encoder(const EncoderConfig& cfg, std::uint64_t seed);
TextEncoder make_text_encoder(const EncoderConfig& cfg, int n_goals,
                              std::uint64_t seed);

// [batch x obs_dim] -> [batch x emb_dim]
Tensor encode_image(ImageEncoder& enc, Binding& bind, const Tensor& obs);
// Single observation convenience: [obs_dim] -> [emb_dim]
Tensor encode_image_one(ImageEncoder& enc, Binding& bind, const Tensor& obs);

// goal ids -> [batch x emb_dim]; unknown id throws ContractError.
Tensor encode_text(TextEncoder& enc, Binding& bind, const std::vector<int>& goal_ids);
Tensor encode_text_one(TextEncoder& enc, Binding& bind, int goal_id);

enum class MergeStatus { kMerged, kNoAdapters };

// Folds W' = W + (alpha/rank) A B into each adapted layer and removes the
// adapters. Merging an encoder without adapters is a warning no-op.
MergeStatus merge_lora(ImageEncoder& enc);
MergeStatus merge_lora(TextEncoder& enc);

// Full model: both towers plus metadata, as written by training.
struct RewardModel {
  EncoderConfig cfg;
  ImageEncoder image;
  TextEncoder text;
  std::string id;  // objective tag or "baseline"
  std::uint64_t seed = 0;

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> trainable_parameters();
  RewardModel clone() const;
};

RewardModel make_model(const EncoderConfig& cfg, int n_goals, std::uint64_t seed,
                       const std::string& id);

// Versioned binary checkpoint; float payload round-trips bit-exactly.
void save_checkpoint(const RewardModel& model, const std::filesystem::path& path);
RewardModel load_checkpoint(const std::filesystem::path& path);

}  // namespace rmbench
