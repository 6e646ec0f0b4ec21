#include "rmbench/encoders.hpp"

#include <cmath>

#include "rmbench/binio.hpp"
#include "rmbench/kernels.hpp"
#include "rmbench/rng.hpp"

namespace rmbench {

// ---- Binding -----------------------------------------------------------

Tensor Binding::of(Parameter& p) {
  if (tape_ == nullptr)
    return Tensor::wrap(p.shape, p.data, nullptr, -1);
  auto it = leaves_.find(&p);
  if (it != leaves_.end()) return it->second;
  const Tensor leaf = tape_->leaf(p.shape, p.data, p.trainable);
  leaves_.emplace(&p, leaf);
  return leaf;
}

const std::vector<double>* Binding::grad_of(const Parameter& p) const {
  if (tape_ == nullptr) return nullptr;
  auto it = leaves_.find(&p);
  if (it == leaves_.end() || !it->second.tracked()) return nullptr;
  return tape_->grad_of(it->second.node());
}

// ---- similarity --------------------------------------------------------

std::string similarity_name(Similarity s) {
  return s == Similarity::kCosine ? "cosine" : "neg_l2";
}

Similarity similarity_from_name(const std::string& name) {
  if (name == "cosine") return Similarity::kCosine;
  if (name == "neg_l2") return Similarity::kNegL2;
  throw ConfigError("unknown similarity '" + name + "' (cosine|neg_l2)");
}

double similarity(Similarity s, const Tensor& a, const Tensor& b) {
  if (a.ndim() != 1 || b.ndim() != 1 || a.size() != b.size())
    throw ShapeError("similarity: expected equal-length vectors, got " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  if (s == Similarity::kCosine)
    return kern::active().dot(l2_normalize(a).data(), l2_normalize(b).data(),
                              a.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.at(i) - b.at(i);
    sq += d * d;
  }
  return -std::sqrt(sq);
}

Tensor rowwise_similarity(Similarity s, const Tensor& a, const Tensor& b) {
  if (s == Similarity::kCosine)
    return rowwise_dot(l2_normalize_rows(a), l2_normalize_rows(b));
  return rowwise_neg_l2(a, b);
}

Tensor cross_similarity(Similarity s, const Tensor& a, const Tensor& b) {
  if (s == Similarity::kCosine)
    return matmul_tb(l2_normalize_rows(a), l2_normalize_rows(b));
  return cross_neg_l2(a, b);
}

// ---- construction ------------------------------------------------------

namespace {

Parameter make_param(std::string name, std::vector<int> shape,
                     std::vector<double> data, bool trainable) {
  return Parameter{std::move(name), std::move(shape),
                   std::make_shared<std::vector<double>>(std::move(data)),
                   trainable};
}

std::vector<double> xavier_uniform(Rng& rng, int fan_in, int fan_out) {
  const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(static_cast<std::size_t>(fan_in) * fan_out);
  for (auto& x : w) x = rng.uniform(-s, s);
  return w;
}

Linear make_linear(const std::string& name, int in, int out, Rng& rng,
                   bool trainable, bool with_lora, const LoraConfig& lc) {
  Linear l;
  l.weight = make_param(name + ".w", {in, out}, xavier_uniform(rng, in, out),
                        trainable);
  l.bias = make_param(name + ".b", {out},
                      std::vector<double>(static_cast<std::size_t>(out), 0.0),
                      trainable);
  if (with_lora) {
    if (lc.rank <= 0) throw ConfigError("lora rank must be positive");
    LoraAdapter a;
    a.rank = lc.rank;
    a.alpha = lc.alpha;
    // Adapter init draws from a forked stream so base weights are identical
    // with and without LoRA for the same seed.
    Rng lrng = rng.fork(0x10aa);
    std::vector<double> down(static_cast<std::size_t>(in) * lc.rank);
    for (auto& x : down) x = 0.01 * lrng.normal();
    a.down = make_param(name + ".lora_a", {in, lc.rank}, std::move(down), true);
    a.up = make_param(name + ".lora_b", {lc.rank, out},
                      std::vector<double>(static_cast<std::size_t>(lc.rank) * out, 0.0),
                      true);
    l.lora = std::move(a);
  }
  return l;
}

bool lora_on_vision(const LoraConfig& lc) {
  return lc.enabled && (lc.targets == LoraConfig::Targets::kVision ||
                        lc.targets == LoraConfig::Targets::kBoth);
}

bool lora_on_text(const LoraConfig& lc) {
  return lc.enabled && (lc.targets == LoraConfig::Targets::kText ||
                        lc.targets == LoraConfig::Targets::kBoth);
}

}  // namespace

ImageEncoder make_image_encoder(const EncoderConfig& cfg, std::uint64_t seed) {
  if (cfg.obs_dim <= 0 || cfg.emb_dim <= 0)
    throw ConfigError("encoder dims must be positive");
  if (cfg.freeze_base && !cfg.lora.enabled)
    throw ConfigError("freeze_base without LoRA leaves nothing trainable");
  Rng rng(mix_seed(seed, 0x11a6e001));
  ImageEncoder enc;
  const bool with_lora = lora_on_vision(cfg.lora);
  std::vector<int> widths{cfg.obs_dim};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(cfg.emb_dim);
  for (std::size_t i = 0; i + 1 < widths.size(); ++i)
    enc.layers.push_back(make_linear("img.l" + std::to_string(i), widths[i],
                                     widths[i + 1], rng, !cfg.freeze_base,
                                     with_lora, cfg.lora));
  return enc;
}

TextEncoder make_text_encoder(const EncoderConfig& cfg, int n_goals,
                              std::uint64_t seed) {
  if (n_goals <= 0) throw ConfigError("text encoder needs at least one goal id");
  Rng rng(mix_seed(seed, 0x7e070002));
  TextEncoder enc;
  // Rows are kept small at init so unseen goal ids stay close to the learned
  // projection bias, which carries the cross-goal progress direction.
  std::vector<double> table(static_cast<std::size_t>(n_goals) * cfg.table_dim);
  for (auto& x : table) x = 0.1 * rng.normal();
  enc.table = make_param("txt.table", {n_goals, cfg.table_dim},
                         std::move(table), !cfg.freeze_base);
  enc.proj = make_linear("txt.proj", cfg.table_dim, cfg.emb_dim, rng,
                         !cfg.freeze_base, lora_on_text(cfg.lora), cfg.lora);
  return enc;
}

// ---- forward -----------------------------------------------------------

Tensor linear_forward(Linear& layer, Binding& bind, const Tensor& x) {
  if (x.ndim() != 2 || x.dim(1) != layer.in_dim())
    throw ShapeError("linear: input " + shape_str(x.shape()) +
                     " does not match weight " + shape_str(layer.weight.shape));
  Tensor y = matmul(x, bind.of(layer.weight));
  if (layer.lora.has_value()) {
    LoraAdapter& a = *layer.lora;
    const Tensor low = matmul(matmul(x, bind.of(a.down)), bind.of(a.up));
    y = add(y, scale(low, a.scaling()));
  }
  return add_rowvec(y, bind.of(layer.bias));
}

Tensor encode_image(ImageEncoder& enc, Binding& bind, const Tensor& obs) {
  Tensor h = obs;
  for (std::size_t i = 0; i < enc.layers.size(); ++i) {
    h = linear_forward(enc.layers[i], bind, h);
    if (i + 1 < enc.layers.size()) h = tanh(h);
  }
  return h;
}

Tensor encode_image_one(ImageEncoder& enc, Binding& bind, const Tensor& obs) {
  if (obs.ndim() != 1)
    throw ShapeError("encode_image_one: expected a vector, got " +
                     shape_str(obs.shape()));
  const Tensor batch = Tensor::wrap({1, static_cast<int>(obs.size())},
                                    obs.storage(), obs.tape(), obs.node());
  const Tensor out = encode_image(enc, bind, batch);
  return Tensor::wrap({out.dim(1)}, out.storage(), out.tape(), out.node());
}

Tensor encode_text(TextEncoder& enc, Binding& bind,
                   const std::vector<int>& goal_ids) {
  for (int g : goal_ids)
    if (g < 0 || g >= enc.n_goals())
      throw ContractError("encode_text: unknown goal id " + std::to_string(g));
  const Tensor rows = gather_rows(bind.of(enc.table), goal_ids);
  return linear_forward(enc.proj, bind, rows);
}

Tensor encode_text_one(TextEncoder& enc, Binding& bind, int goal_id) {
  const Tensor out = encode_text(enc, bind, {goal_id});
  return Tensor::wrap({out.dim(1)}, out.storage(), out.tape(), out.node());
}

// ---- LoRA merge --------------------------------------------------------

namespace {

MergeStatus merge_layer_list(std::vector<Linear*> layers) {
  bool any = false;
  for (Linear* l : layers) {
    if (!l->lora.has_value()) continue;
    any = true;
    const LoraAdapter& a = *l->lora;
    const std::size_t in = static_cast<std::size_t>(l->in_dim());
    const std::size_t out = static_cast<std::size_t>(l->out_dim());
    const std::size_t r = static_cast<std::size_t>(a.rank);
    std::vector<double> delta(in * out, 0.0);
    kern::active().matmul_acc(a.down.data->data(), a.up.data->data(),
                              delta.data(), in, r, out);
    kern::active().acc_scaled(l->weight.data->data(), delta.data(),
                              a.scaling(), in * out);
    l->lora.reset();
  }
  return any ? MergeStatus::kMerged : MergeStatus::kNoAdapters;
}

}  // namespace

MergeStatus merge_lora(ImageEncoder& enc) {
  std::vector<Linear*> ls;
  for (Linear& l : enc.layers) ls.push_back(&l);
  return merge_layer_list(std::move(ls));
}

MergeStatus merge_lora(TextEncoder& enc) {
  return merge_layer_list({&enc.proj});
}

// ---- model -------------------------------------------------------------

namespace {

Linear clone_linear(const Linear& l) {
  Linear c;
  c.weight = l.weight.clone();
  c.bias = l.bias.clone();
  if (l.lora.has_value()) {
    LoraAdapter a;
    a.rank = l.lora->rank;
    a.alpha = l.lora->alpha;
    a.down = l.lora->down.clone();
    a.up = l.lora->up.clone();
    c.lora = std::move(a);
  }
  return c;
}

void collect_linear(Linear& l, std::vector<Parameter*>& out) {
  out.push_back(&l.weight);
  out.push_back(&l.bias);
  if (l.lora.has_value()) {
    out.push_back(&l.lora->down);
    out.push_back(&l.lora->up);
  }
}

}  // namespace

ImageEncoder ImageEncoder::clone() const {
  ImageEncoder c;
  for (const Linear& l : layers) c.layers.push_back(clone_linear(l));
  return c;
}

TextEncoder TextEncoder::clone() const {
  TextEncoder c;
  c.table = table.clone();
  c.proj = clone_linear(proj);
  return c;
}

std::vector<Parameter*> RewardModel::parameters() {
  std::vector<Parameter*> out;
  for (Linear& l : image.layers) collect_linear(l, out);
  out.push_back(&text.table);
  collect_linear(text.proj, out);
  return out;
}

std::vector<Parameter*> RewardModel::trainable_parameters() {
  std::vector<Parameter*> out;
  for (Parameter* p : parameters())
    if (p->trainable) out.push_back(p);
  return out;
}

RewardModel RewardModel::clone() const {
  RewardModel m;
  m.cfg = cfg;
  m.image = image.clone();
  m.text = text.clone();
  m.id = id;
  m.seed = seed;
  return m;
}

RewardModel make_model(const EncoderConfig& cfg, int n_goals,
                       std::uint64_t seed, const std::string& id) {
  RewardModel m;
  m.cfg = cfg;
  m.image = make_image_encoder(cfg, seed);
  m.text = make_text_encoder(cfg, n_goals, seed);
  m.id = id;
  m.seed = seed;
  return m;
}

// ---- checkpoint --------------------------------------------------------

namespace {

constexpr std::uint32_t kCheckpointMagic = 0x524d4243;  // "RMBC"
constexpr std::uint32_t kCheckpointVersion = 1;

void write_param(BinWriter& w, const Parameter& p) {
  w.str(p.name);
  w.i32_vec(p.shape);
  w.u32(p.trainable ? 1 : 0);
  w.f64_vec(*p.data);
}

Parameter read_param(BinReader& r) {
  Parameter p;
  p.name = r.str();
  p.shape = r.i32_vec();
  p.trainable = r.u32() != 0;
  p.data = std::make_shared<std::vector<double>>(r.f64_vec());
  std::size_t n = 1;
  for (int d : p.shape) n *= static_cast<std::size_t>(d);
  if (n != p.data->size())
    throw IoError("checkpoint: parameter '" + p.name + "' shape/data mismatch");
  return p;
}

void write_linear(BinWriter& w, const Linear& l) {
  write_param(w, l.weight);
  write_param(w, l.bias);
  w.u32(l.lora.has_value() ? 1 : 0);
  if (l.lora.has_value()) {
    w.i32(l.lora->rank);
    w.f64(l.lora->alpha);
    write_param(w, l.lora->down);
    write_param(w, l.lora->up);
  }
}

Linear read_linear(BinReader& r) {
  Linear l;
  l.weight = read_param(r);
  l.bias = read_param(r);
  if (r.u32() != 0) {
    LoraAdapter a;
    a.rank = r.i32();
    a.alpha = r.f64();
    a.down = read_param(r);
    a.up = read_param(r);
    l.lora = std::move(a);
  }
  return l;
}

}  // namespace

void save_checkpoint(const RewardModel& model, const std::filesystem::path& path) {
  BinWriter w(path);
  w.u32(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.str(model.id);
  w.u64(model.seed);

  const EncoderConfig& c = model.cfg;
  w.i32(c.obs_dim);
  w.i32_vec(c.hidden);
  w.i32(c.emb_dim);
  w.i32(c.table_dim);
  w.str(similarity_name(c.sim));
  w.u32(c.freeze_base ? 1 : 0);
  w.u32(c.lora.enabled ? 1 : 0);
  w.i32(c.lora.rank);
  w.f64(c.lora.alpha);
  w.i32(static_cast<int>(c.lora.targets));

  w.u32(static_cast<std::uint32_t>(model.image.layers.size()));
  for (const Linear& l : model.image.layers) write_linear(w, l);
  write_param(w, model.text.table);
  write_linear(w, model.text.proj);
  w.close();
}

RewardModel load_checkpoint(const std::filesystem::path& path) {
  BinReader r(path);
  if (r.u32() != kCheckpointMagic)
    throw IoError("not a checkpoint file: " + path.string());
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  RewardModel m;
  m.id = r.str();
  m.seed = r.u64();
  m.cfg.obs_dim = r.i32();
  m.cfg.hidden = r.i32_vec();
  m.cfg.emb_dim = r.i32();
  m.cfg.table_dim = r.i32();
  m.cfg.sim = similarity_from_name(r.str());
  m.cfg.freeze_base = r.u32() != 0;
  m.cfg.lora.enabled = r.u32() != 0;
  m.cfg.lora.rank = r.i32();
  m.cfg.lora.alpha = r.f64();
  m.cfg.lora.targets = static_cast<LoraConfig::Targets>(r.i32());

  const std::uint32_t n_layers = r.u32();
  for (std::uint32_t i = 0; i < n_layers; ++i)
    m.image.layers.push_back(read_linear(r));
  m.text.table = read_param(r);
  m.text.proj = read_linear(r);
  return m;
}

}  // namespace rmbench
