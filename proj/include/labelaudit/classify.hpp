#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "labelaudit/corpus.hpp"
#include "labelaudit/io.hpp"
#include "labelaudit/rng.hpp"

namespace labelaudit {

// ---------------------------------------------------------------------------
// Configs
// ---------------------------------------------------------------------------

struct MlpConfig {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;
  bool use_skip = false;
  bool use_layer_norm = false;
  double dropout_p = 0.0;
  std::size_t output_dim = static_cast<std::size_t>(kNumLabels);

  void validate() const {
    if (input_dim < 1) throw std::runtime_error("mlp: input_dim must be >= 1");
    if (output_dim < 1) throw std::runtime_error("mlp: output_dim must be >= 1");
    for (const std::size_t h : hidden_dims)
      if (h < 1) throw std::runtime_error("mlp: hidden widths must be >= 1");
    if (dropout_p < 0.0 || dropout_p >= 1.0)
      throw std::runtime_error("mlp: dropout_p must lie in [0,1)");
    if (use_skip)
      for (std::size_t i = 0; i + 1 < hidden_dims.size(); ++i)
        if (hidden_dims[i] != hidden_dims[i + 1])
          throw std::runtime_error(
              "mlp: skip connections require equal consecutive hidden widths");
  }
};

struct TrainConfig {
  double lr0 = 0.001;
  double decay_factor = 0.9;
  int decay_every_epochs = 5;
  double weight_decay = 0.01;
  int epochs = 50;
  int batch_size = 32;
  std::int64_t seed = 0;

  void validate() const {
    if (!(lr0 > 0.0)) throw std::runtime_error("train: lr0 must be > 0");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0))
      throw std::runtime_error("train: decay_factor must lie in (0,1]");
    if (decay_every_epochs < 1) throw std::runtime_error("train: decay_every_epochs must be >= 1");
    if (weight_decay < 0.0) throw std::runtime_error("train: weight_decay must be >= 0");
    if (epochs < 1) throw std::runtime_error("train: epochs must be >= 1");
    if (batch_size < 1) throw std::runtime_error("train: batch_size must be >= 1");
  }
};

// Schedule defaults for the tabular model: 0.001 stepped down by 0.9 every
// 5 epochs, weight decay 0.01, 50 epochs. Pair with dropout_p = 0.1.
inline TrainConfig tabular_train_defaults() { return TrainConfig{}; }

// Defaults for the fused model: 5 epochs, batch 64, lr 1e-5 stepped down by
// 0.7 every epoch, weight decay 0.01. Pair with dropout_p = 0.2.
inline TrainConfig multimodal_train_defaults() {
  TrainConfig cfg;
  cfg.lr0 = 1e-5;
  cfg.decay_factor = 0.7;
  cfg.decay_every_epochs = 1;
  cfg.weight_decay = 0.01;
  cfg.epochs = 5;
  cfg.batch_size = 64;
  return cfg;
}

inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  return cfg.lr0 * std::pow(cfg.decay_factor, epoch / cfg.decay_every_epochs);
}

struct FusionConfig {
  std::size_t text_dim = 1;
  MlpConfig tabular_branch;   // embedding head, linear output (no softmax)
  MlpConfig classifier_head;  // input = text_dim + branch output width

  void validate() const {
    if (text_dim < 1) throw std::runtime_error("fusion: text_dim must be >= 1");
    tabular_branch.validate();
    classifier_head.validate();
    if (classifier_head.input_dim != text_dim + tabular_branch.output_dim)
      throw std::runtime_error("fusion: classifier input width must equal text_dim + "
                               "tabular branch output width");
  }
};

// ---------------------------------------------------------------------------
// Model storage: one flat parameter vector, offsets derived from the config
// ---------------------------------------------------------------------------

struct MlpLayout {
  struct Layer {
    std::size_t in = 0, out = 0;
    std::size_t w = 0, b = 0, gamma = 0, beta = 0;
    bool has_norm = false;
  };
  std::vector<Layer> hidden;
  Layer output;
  std::size_t total = 0;
};

inline MlpLayout mlp_layout(const MlpConfig& cfg) {
  MlpLayout layout;
  std::size_t offset = 0;
  std::size_t in = cfg.input_dim;
  for (const std::size_t out : cfg.hidden_dims) {
    MlpLayout::Layer l;
    l.in = in;
    l.out = out;
    l.w = offset;
    offset += in * out;
    l.b = offset;
    offset += out;
    l.has_norm = cfg.use_layer_norm;
    if (l.has_norm) {
      l.gamma = offset;
      offset += out;
      l.beta = offset;
      offset += out;
    }
    layout.hidden.push_back(l);
    in = out;
  }
  layout.output.in = in;
  layout.output.out = cfg.output_dim;
  layout.output.w = offset;
  offset += in * cfg.output_dim;
  layout.output.b = offset;
  offset += cfg.output_dim;
  layout.total = offset;
  return layout;
}

struct Mlp {
  MlpConfig cfg;
  MlpLayout layout;
  std::vector<double> params;
};

// Fan-in-scaled uniform init from the supplied stream; norm scales start at
// identity (gamma 1, beta 0).
inline Mlp init_mlp(const MlpConfig& cfg, Rng& rng) {
  cfg.validate();
  Mlp m;
  m.cfg = cfg;
  m.layout = mlp_layout(cfg);
  m.params.assign(m.layout.total, 0.0);
  const auto fill_linear = [&](const MlpLayout::Layer& l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    for (std::size_t i = 0; i < l.in * l.out; ++i) m.params[l.w + i] = rng.uniform(-bound, bound);
    for (std::size_t i = 0; i < l.out; ++i) m.params[l.b + i] = rng.uniform(-bound, bound);
    if (l.has_norm)
      for (std::size_t i = 0; i < l.out; ++i) {
        m.params[l.gamma + i] = 1.0;
        m.params[l.beta + i] = 0.0;
      }
  };
  for (const auto& l : m.layout.hidden) fill_linear(l);
  fill_linear(m.layout.output);
  return m;
}

enum class RunMode { train, eval };

inline constexpr double kLayerNormEps = 1e-5;

namespace detail {

struct LayerCache {
  std::vector<double> input;
  std::vector<double> xhat;   // LN only
  double invstd = 0.0;        // LN only
  std::vector<double> h;      // pre-activation after optional norm
  std::vector<double> mask;   // inverted-dropout multipliers; empty when inactive
  bool skip = false;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  std::vector<double> head_input;
};

inline void linear_forward(std::span<const double> params, const MlpLayout::Layer& l,
                           std::span<const double> x, std::vector<double>& out) {
  out.assign(l.out, 0.0);
  for (std::size_t r = 0; r < l.out; ++r) {
    double acc = params[l.b + r];
    const std::size_t base = l.w + r * l.in;
    for (std::size_t c = 0; c < l.in; ++c) acc += params[base + c] * x[c];
    out[r] = acc;
  }
}

// Hidden block: linear -> optional layer norm -> relu -> optional dropout ->
// optional identity skip (when the widths match).
inline std::vector<double> mlp_forward_impl(const Mlp& m, std::span<const double> input,
                                            RunMode mode, Rng* rng, ForwardCache* cache) {
  if (input.size() != m.cfg.input_dim)
    throw std::runtime_error("mlp: input width " + std::to_string(input.size()) +
                             " does not match configured " + std::to_string(m.cfg.input_dim));
  const bool dropout_active = mode == RunMode::train && m.cfg.dropout_p > 0.0;
  if (dropout_active && rng == nullptr)
    throw std::runtime_error("mlp: dropout in train mode needs an rng");

  std::vector<double> cur(input.begin(), input.end());
  for (const auto& l : m.layout.hidden) {
    LayerCache lc;
    if (cache) lc.input = cur;

    std::vector<double> z;
    linear_forward(m.params, l, cur, z);

    if (l.has_norm) {
      double mean = 0.0;
      for (const double v : z) mean += v;
      mean /= static_cast<double>(l.out);
      double var = 0.0;
      for (const double v : z) var += (v - mean) * (v - mean);
      var /= static_cast<double>(l.out);
      const double invstd = 1.0 / std::sqrt(var + kLayerNormEps);
      std::vector<double> xhat(l.out);
      for (std::size_t i = 0; i < l.out; ++i) xhat[i] = (z[i] - mean) * invstd;
      for (std::size_t i = 0; i < l.out; ++i)
        z[i] = m.params[l.gamma + i] * xhat[i] + m.params[l.beta + i];
      if (cache) {
        lc.xhat = std::move(xhat);
        lc.invstd = invstd;
      }
    }
    if (cache) lc.h = z;

    for (double& v : z) v = v > 0.0 ? v : 0.0;

    if (dropout_active) {
      const double keep_scale = 1.0 / (1.0 - m.cfg.dropout_p);
      std::vector<double> mask(l.out);
      for (std::size_t i = 0; i < l.out; ++i)
        mask[i] = (rng->uniform() >= m.cfg.dropout_p) ? keep_scale : 0.0;
      for (std::size_t i = 0; i < l.out; ++i) z[i] *= mask[i];
      if (cache) lc.mask = std::move(mask);
    }

    const bool skip = m.cfg.use_skip && l.in == l.out;
    if (skip)
      for (std::size_t i = 0; i < l.out; ++i) z[i] += cur[i];
    if (cache) {
      lc.skip = skip;
      cache->layers.push_back(std::move(lc));
    }
    cur = std::move(z);
  }

  if (cache) cache->head_input = cur;
  std::vector<double> out;
  linear_forward(m.params, m.layout.output, cur, out);
  for (const double v : out)
    if (!std::isfinite(v)) throw std::runtime_error("mlp: non-finite activation");
  return out;
}

// Backpropagates d_out (gradient at the linear head output) into grads;
// optionally returns the gradient with respect to the model input.
inline void mlp_backward_impl(const Mlp& m, const ForwardCache& cache,
                              std::span<const double> d_out, std::vector<double>& grads,
                              std::vector<double>* d_input) {
  const auto& out_l = m.layout.output;
  std::vector<double> d_cur(out_l.in, 0.0);
  for (std::size_t r = 0; r < out_l.out; ++r) {
    const double g = d_out[r];
    grads[out_l.b + r] += g;
    const std::size_t base = out_l.w + r * out_l.in;
    for (std::size_t c = 0; c < out_l.in; ++c) {
      grads[base + c] += g * cache.head_input[c];
      d_cur[c] += m.params[base + c] * g;
    }
  }

  for (std::size_t li = m.layout.hidden.size(); li-- > 0;) {
    const auto& l = m.layout.hidden[li];
    const auto& lc = cache.layers[li];

    std::vector<double> d_skip;
    if (lc.skip) d_skip = d_cur;

    if (!lc.mask.empty())
      for (std::size_t i = 0; i < l.out; ++i) d_cur[i] *= lc.mask[i];

    for (std::size_t i = 0; i < l.out; ++i)
      if (lc.h[i] <= 0.0) d_cur[i] = 0.0;

    if (l.has_norm) {
      std::vector<double> d_xhat(l.out);
      for (std::size_t i = 0; i < l.out; ++i) {
        grads[l.gamma + i] += d_cur[i] * lc.xhat[i];
        grads[l.beta + i] += d_cur[i];
        d_xhat[i] = d_cur[i] * m.params[l.gamma + i];
      }
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t i = 0; i < l.out; ++i) {
        m1 += d_xhat[i];
        m2 += d_xhat[i] * lc.xhat[i];
      }
      m1 /= static_cast<double>(l.out);
      m2 /= static_cast<double>(l.out);
      for (std::size_t i = 0; i < l.out; ++i)
        d_cur[i] = lc.invstd * (d_xhat[i] - m1 - lc.xhat[i] * m2);
    }

    std::vector<double> d_prev(l.in, 0.0);
    for (std::size_t r = 0; r < l.out; ++r) {
      const double g = d_cur[r];
      grads[l.b + r] += g;
      const std::size_t base = l.w + r * l.in;
      for (std::size_t c = 0; c < l.in; ++c) {
        grads[base + c] += g * lc.input[c];
        d_prev[c] += m.params[base + c] * g;
      }
    }
    if (!d_skip.empty())
      for (std::size_t c = 0; c < l.in; ++c) d_prev[c] += d_skip[c];
    d_cur = std::move(d_prev);
  }
  if (d_input) *d_input = std::move(d_cur);
}

}  // namespace detail

inline std::vector<double> softmax(std::span<const double> logits) {
  double max_logit = -std::numeric_limits<double>::infinity();
  for (const double v : logits) max_logit = std::max(max_logit, v);
  std::vector<double> probs(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - max_logit);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
  return probs;
}

// Linear head output (no softmax); the embedding-head view of the network.
inline std::vector<double> mlp_forward_linear(const Mlp& m, std::span<const double> input,
                                              RunMode mode, Rng* rng = nullptr) {
  return detail::mlp_forward_impl(m, input, mode, rng, nullptr);
}

// Probability vector over the output classes; softmax of the linear head.
inline std::vector<double> mlp_forward(const Mlp& m, std::span<const double> input, RunMode mode,
                                       Rng* rng = nullptr) {
  return softmax(detail::mlp_forward_impl(m, input, mode, rng, nullptr));
}

// ---------------------------------------------------------------------------
// Loss and gradients
// ---------------------------------------------------------------------------

struct Dataset {
  std::vector<std::vector<double>> inputs;
  std::vector<int> targets;  // 0..output_dim-1

  std::size_t size() const { return inputs.size(); }
};

inline void check_targets(const std::vector<int>& targets, std::size_t num_classes) {
  for (const int t : targets)
    if (t < 0 || static_cast<std::size_t>(t) >= num_classes)
      throw std::runtime_error("label index " + std::to_string(t) + " outside the valid range");
}

// Mean cross-entropy over the batch plus gradients for every parameter,
// accumulated by reverse-mode traversal of the cached forward pass.
inline double mlp_loss_and_grads(const Mlp& m, const Dataset& batch, RunMode mode, Rng* rng,
                                 std::vector<double>& grads) {
  if (batch.size() == 0) throw std::runtime_error("loss_and_grads: empty batch");
  if (batch.inputs.size() != batch.targets.size())
    throw std::runtime_error("loss_and_grads: inputs/targets size mismatch");
  check_targets(batch.targets, m.cfg.output_dim);

  grads.assign(m.layout.total, 0.0);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    detail::ForwardCache cache;
    const auto logits = detail::mlp_forward_impl(m, batch.inputs[s], mode, rng, &cache);
    const auto probs = softmax(logits);
    const auto target = static_cast<std::size_t>(batch.targets[s]);
    loss += -std::log(std::max(probs[target], 1e-300)) * inv_batch;

    std::vector<double> d_logits(probs);
    d_logits[target] -= 1.0;
    for (double& g : d_logits) g *= inv_batch;
    detail::mlp_backward_impl(m, cache, d_logits, grads, nullptr);
  }
  return loss;
}

inline double mlp_loss(const Mlp& m, const Dataset& batch, RunMode mode, Rng* rng = nullptr) {
  if (batch.size() == 0) throw std::runtime_error("loss: empty batch");
  check_targets(batch.targets, m.cfg.output_dim);
  double loss = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto probs = mlp_forward(m, batch.inputs[s], mode, rng);
    loss += -std::log(std::max(probs[static_cast<std::size_t>(batch.targets[s])], 1e-300));
  }
  return loss / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

// Decoupled weight decay: the decay term acts on the weights directly and the
// moment estimates see only the gradient.
inline void adamw_step(std::vector<double>& params, const std::vector<double>& grads,
                       AdamState& state, double lr, double weight_decay, double beta1 = 0.9,
                       double beta2 = 0.999, double eps = 1e-8) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::runtime_error("adamw_step: shape mismatch");
  ++state.t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    params[i] -= lr * weight_decay * params[i] + lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TabularStats {
  std::map<std::string, double> mean;
  std::map<std::string, double> std_dev;
};

struct ModelCheckpoint {
  int version = 1;
  std::string kind;  // "mlp" | "fusion"
  MlpConfig mlp_config;
  FusionConfig fusion_config;
  TrainConfig train_config;
  int epoch = -1;
  double val_loss = std::numeric_limits<double>::infinity();
  std::vector<EpochRecord> history;
  std::vector<double> params;         // mlp
  std::vector<double> branch_params;  // fusion
  std::vector<double> head_params;    // fusion
  TabularStats tabular_stats;
};

namespace detail {

inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, int batch_size,
                                                           Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

inline Dataset gather(const Dataset& d, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.inputs.reserve(idx.size());
  out.targets.reserve(idx.size());
  for (const std::size_t i : idx) {
    out.inputs.push_back(d.inputs[i]);
    out.targets.push_back(d.targets[i]);
  }
  return out;
}

}  // namespace detail

// Full training loop: stepped-geometric learning-rate schedule, AdamW updates,
// per-epoch validation loss in eval mode, checkpoint at the lowest validation
// loss. One seed drives init, shuffling, and dropout, so identical
// (seed, data, config) reruns produce identical checkpoints.
inline ModelCheckpoint train_mlp(const MlpConfig& mlp_cfg, const Dataset& train_set,
                                 const Dataset& val_set, const TrainConfig& cfg) {
  mlp_cfg.validate();
  cfg.validate();
  if (train_set.size() == 0) throw std::runtime_error("train: empty training set");
  if (val_set.size() == 0) throw std::runtime_error("train: empty validation set");

  Rng rng(static_cast<std::uint64_t>(cfg.seed));
  Mlp model = init_mlp(mlp_cfg, rng);
  AdamState state(model.params.size());
  std::vector<double> grads;

  ModelCheckpoint ckpt;
  ckpt.kind = "mlp";
  ckpt.mlp_config = mlp_cfg;
  ckpt.train_config = cfg;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    double epoch_loss = 0.0;
    for (const auto& idx : detail::epoch_batches(train_set.size(), cfg.batch_size, rng)) {
      const Dataset batch = detail::gather(train_set, idx);
      const double loss = mlp_loss_and_grads(model, batch, RunMode::train, &rng, grads);
      epoch_loss += loss * static_cast<double>(batch.size());
      adamw_step(model.params, grads, state, lr, cfg.weight_decay);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = epoch_loss / static_cast<double>(train_set.size());
    rec.val_loss = mlp_loss(model, val_set, RunMode::eval);
    ckpt.history.push_back(rec);
    if (rec.val_loss < ckpt.val_loss) {
      ckpt.val_loss = rec.val_loss;
      ckpt.epoch = epoch;
      ckpt.params = model.params;
    }
  }
  return ckpt;
}

// ---------------------------------------------------------------------------
// Fusion model: tabular branch -> embedding, concatenated with the text
// embedding, classified by a second network
// ---------------------------------------------------------------------------

struct FusionModel {
  FusionConfig cfg;
  Mlp branch;
  Mlp head;
};

inline FusionModel init_fusion(const FusionConfig& cfg, Rng& rng) {
  cfg.validate();
  FusionModel m;
  m.cfg = cfg;
  m.branch = init_mlp(cfg.tabular_branch, rng);
  m.head = init_mlp(cfg.classifier_head, rng);
  return m;
}

struct FusionDataset {
  std::vector<std::vector<double>> text;
  std::vector<std::vector<double>> tabular;
  std::vector<int> targets;

  std::size_t size() const { return targets.size(); }
};

inline std::vector<double> fusion_forward(const FusionModel& m, std::span<const double> text,
                                          std::span<const double> tabular, RunMode mode,
                                          Rng* rng = nullptr) {
  if (text.size() != m.cfg.text_dim) throw std::runtime_error("fusion: text width mismatch");
  const auto tab_embedding = mlp_forward_linear(m.branch, tabular, mode, rng);
  std::vector<double> joint(text.begin(), text.end());
  joint.insert(joint.end(), tab_embedding.begin(), tab_embedding.end());
  return mlp_forward(m.head, joint, mode, rng);
}

inline double fusion_loss_and_grads(const FusionModel& m, const FusionDataset& batch,
                                    RunMode mode, Rng* rng, std::vector<double>& branch_grads,
                                    std::vector<double>& head_grads) {
  if (batch.size() == 0) throw std::runtime_error("loss_and_grads: empty batch");
  check_targets(batch.targets, m.cfg.classifier_head.output_dim);
  branch_grads.assign(m.branch.layout.total, 0.0);
  head_grads.assign(m.head.layout.total, 0.0);
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    detail::ForwardCache branch_cache;
    const auto tab_embedding =
        detail::mlp_forward_impl(m.branch, batch.tabular[s], mode, rng, &branch_cache);
    std::vector<double> joint(batch.text[s].begin(), batch.text[s].end());
    joint.insert(joint.end(), tab_embedding.begin(), tab_embedding.end());

    detail::ForwardCache head_cache;
    const auto logits = detail::mlp_forward_impl(m.head, joint, mode, rng, &head_cache);
    const auto probs = softmax(logits);
    const auto target = static_cast<std::size_t>(batch.targets[s]);
    loss += -std::log(std::max(probs[target], 1e-300)) * inv_batch;

    std::vector<double> d_logits(probs);
    d_logits[target] -= 1.0;
    for (double& g : d_logits) g *= inv_batch;

    std::vector<double> d_joint;
    detail::mlp_backward_impl(m.head, head_cache, d_logits, head_grads, &d_joint);
    // The text embedding is a fixed input; only the branch half flows back.
    const std::span<const double> d_tab(d_joint.data() + m.cfg.text_dim,
                                        d_joint.size() - m.cfg.text_dim);
    detail::mlp_backward_impl(m.branch, branch_cache, d_tab, branch_grads, nullptr);
  }
  return loss;
}

inline double fusion_loss(const FusionModel& m, const FusionDataset& batch, RunMode mode,
                          Rng* rng = nullptr) {
  if (batch.size() == 0) throw std::runtime_error("loss: empty batch");
  double loss = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto probs = fusion_forward(m, batch.text[s], batch.tabular[s], mode, rng);
    loss += -std::log(std::max(probs[static_cast<std::size_t>(batch.targets[s])], 1e-300));
  }
  return loss / static_cast<double>(batch.size());
}

inline ModelCheckpoint train_fusion(const FusionConfig& fusion_cfg, const FusionDataset& train_set,
                                    const FusionDataset& val_set, const TrainConfig& cfg) {
  fusion_cfg.validate();
  cfg.validate();
  if (train_set.size() == 0) throw std::runtime_error("train: empty training set");
  if (val_set.size() == 0) throw std::runtime_error("train: empty validation set");

  Rng rng(static_cast<std::uint64_t>(cfg.seed));
  FusionModel model = init_fusion(fusion_cfg, rng);
  AdamState branch_state(model.branch.params.size());
  AdamState head_state(model.head.params.size());
  std::vector<double> branch_grads, head_grads;

  ModelCheckpoint ckpt;
  ckpt.kind = "fusion";
  ckpt.fusion_config = fusion_cfg;
  ckpt.train_config = cfg;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at_epoch(cfg, epoch);
    double epoch_loss = 0.0;
    for (const auto& idx : detail::epoch_batches(train_set.size(), cfg.batch_size, rng)) {
      FusionDataset batch;
      for (const std::size_t i : idx) {
        batch.text.push_back(train_set.text[i]);
        batch.tabular.push_back(train_set.tabular[i]);
        batch.targets.push_back(train_set.targets[i]);
      }
      const double loss =
          fusion_loss_and_grads(model, batch, RunMode::train, &rng, branch_grads, head_grads);
      epoch_loss += loss * static_cast<double>(batch.size());
      adamw_step(model.branch.params, branch_grads, branch_state, lr, cfg.weight_decay);
      adamw_step(model.head.params, head_grads, head_state, lr, cfg.weight_decay);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = epoch_loss / static_cast<double>(train_set.size());
    rec.val_loss = fusion_loss(model, val_set, RunMode::eval);
    ckpt.history.push_back(rec);
    if (rec.val_loss < ckpt.val_loss) {
      ckpt.val_loss = rec.val_loss;
      ckpt.epoch = epoch;
      ckpt.branch_params = model.branch.params;
      ckpt.head_params = model.head.params;
    }
  }
  return ckpt;
}

// ---------------------------------------------------------------------------
// Tabular encoding
// ---------------------------------------------------------------------------

// Means and standard deviations of the numeric features, computed on the
// training split only.
inline TabularStats compute_tabular_stats(const TabularSchema& schema,
                                          const std::vector<const Document*>& train_docs) {
  TabularStats stats;
  for (const auto& f : schema.features) {
    if (f.kind != FeatureKind::numeric) continue;
    std::vector<double> values;
    for (const Document* doc : train_docs) {
      const auto it = doc->tabular.find(f.name);
      if (it == doc->tabular.end()) continue;
      if (std::holds_alternative<std::int64_t>(it->second))
        values.push_back(static_cast<double>(std::get<std::int64_t>(it->second)));
      else if (std::holds_alternative<double>(it->second))
        values.push_back(std::get<double>(it->second));
    }
    double mean = 0.0;
    for (const double v : values) mean += v;
    if (!values.empty()) mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (const double v : values) var += (v - mean) * (v - mean);
    if (!values.empty()) var /= static_cast<double>(values.size());
    stats.mean[f.name] = values.empty() ? 0.0 : mean;
    stats.std_dev[f.name] = values.empty() ? 0.0 : std::sqrt(var);
  }
  return stats;
}

// Numeric features are z-scored against the training stats (zero when the
// training std is zero, zero when missing); categoricals are one-hot with an
// extra unknown bucket that also absorbs unseen and missing values.
inline std::vector<double> encode_tabular(const Document& doc, const TabularSchema& schema,
                                          const TabularStats& stats) {
  std::vector<double> out;
  out.reserve(schema.encoded_width());
  for (const auto& f : schema.features) {
    const auto it = doc.tabular.find(f.name);
    if (f.kind == FeatureKind::numeric) {
      double slot = 0.0;
      if (it != doc.tabular.end()) {
        double x = 0.0;
        if (std::holds_alternative<std::int64_t>(it->second))
          x = static_cast<double>(std::get<std::int64_t>(it->second));
        else if (std::holds_alternative<double>(it->second))
          x = std::get<double>(it->second);
        else
          throw std::runtime_error("encode_tabular: feature '" + f.name + "' is not numeric");
        const double sd = stats.std_dev.at(f.name);
        slot = (sd > 0.0) ? (x - stats.mean.at(f.name)) / sd : 0.0;
      }
      out.push_back(slot);
    } else {
      const std::size_t width = f.categories.size() + 1;
      std::size_t hot = f.categories.size();  // unknown bucket
      if (it != doc.tabular.end()) {
        if (!std::holds_alternative<std::string>(it->second))
          throw std::runtime_error("encode_tabular: feature '" + f.name + "' is not categorical");
        const auto& value = std::get<std::string>(it->second);
        const auto pos = std::find(f.categories.begin(), f.categories.end(), value);
        if (pos != f.categories.end())
          hot = static_cast<std::size_t>(pos - f.categories.begin());
      }
      for (std::size_t i = 0; i < width; ++i) out.push_back(i == hot ? 1.0 : 0.0);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

inline Label argmax_label(std::span<const double> probs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = i;  // ties stay with the lowest index
  return label_from_index(static_cast<int>(best));
}

inline std::vector<Label> predict(const Mlp& m, const std::vector<std::vector<double>>& inputs) {
  std::vector<Label> out;
  out.reserve(inputs.size());
  for (const auto& x : inputs) out.push_back(argmax_label(mlp_forward(m, x, RunMode::eval)));
  return out;
}

inline Mlp mlp_from_checkpoint(const ModelCheckpoint& ckpt) {
  if (ckpt.kind != "mlp") throw std::runtime_error("checkpoint does not hold an mlp model");
  Mlp m;
  m.cfg = ckpt.mlp_config;
  m.layout = mlp_layout(m.cfg);
  if (ckpt.params.size() != m.layout.total)
    throw std::runtime_error("checkpoint parameter count does not match config");
  m.params = ckpt.params;
  return m;
}

inline FusionModel fusion_from_checkpoint(const ModelCheckpoint& ckpt) {
  if (ckpt.kind != "fusion") throw std::runtime_error("checkpoint does not hold a fusion model");
  FusionModel m;
  m.cfg = ckpt.fusion_config;
  m.branch.cfg = m.cfg.tabular_branch;
  m.branch.layout = mlp_layout(m.branch.cfg);
  m.head.cfg = m.cfg.classifier_head;
  m.head.layout = mlp_layout(m.head.cfg);
  if (ckpt.branch_params.size() != m.branch.layout.total ||
      ckpt.head_params.size() != m.head.layout.total)
    throw std::runtime_error("checkpoint parameter count does not match config");
  m.branch.params = ckpt.branch_params;
  m.head.params = ckpt.head_params;
  return m;
}

// ---------------------------------------------------------------------------
// Checkpoint serialization (self-describing JSON container)
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json mlp_config_to_json(const MlpConfig& cfg) {
  return {{"input_dim", cfg.input_dim},     {"hidden_dims", cfg.hidden_dims},
          {"use_skip", cfg.use_skip},       {"use_layer_norm", cfg.use_layer_norm},
          {"dropout_p", cfg.dropout_p},     {"output_dim", cfg.output_dim}};
}

inline MlpConfig mlp_config_from_json(const nlohmann::json& j) {
  MlpConfig cfg;
  cfg.input_dim = j.at("input_dim").get<std::size_t>();
  cfg.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
  cfg.use_skip = j.at("use_skip").get<bool>();
  cfg.use_layer_norm = j.at("use_layer_norm").get<bool>();
  cfg.dropout_p = j.at("dropout_p").get<double>();
  cfg.output_dim = j.at("output_dim").get<std::size_t>();
  return cfg;
}

inline nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return {{"lr0", cfg.lr0},
          {"decay_factor", cfg.decay_factor},
          {"decay_every_epochs", cfg.decay_every_epochs},
          {"weight_decay", cfg.weight_decay},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"seed", cfg.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.lr0 = j.at("lr0").get<double>();
  cfg.decay_factor = j.at("decay_factor").get<double>();
  cfg.decay_every_epochs = j.at("decay_every_epochs").get<int>();
  cfg.weight_decay = j.at("weight_decay").get<double>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.batch_size = j.at("batch_size").get<int>();
  cfg.seed = j.at("seed").get<std::int64_t>();
  return cfg;
}

}  // namespace detail

inline nlohmann::json checkpoint_to_json(const ModelCheckpoint& ckpt) {
  nlohmann::json j;
  j["version"] = ckpt.version;
  j["kind"] = ckpt.kind;
  if (ckpt.kind == "mlp") {
    j["mlp_config"] = detail::mlp_config_to_json(ckpt.mlp_config);
    j["params"] = ckpt.params;
  } else {
    j["fusion_config"] = {
        {"text_dim", ckpt.fusion_config.text_dim},
        {"tabular_branch", detail::mlp_config_to_json(ckpt.fusion_config.tabular_branch)},
        {"classifier_head", detail::mlp_config_to_json(ckpt.fusion_config.classifier_head)}};
    j["branch_params"] = ckpt.branch_params;
    j["head_params"] = ckpt.head_params;
  }
  j["train_config"] = detail::train_config_to_json(ckpt.train_config);
  j["epoch"] = ckpt.epoch;
  j["val_loss"] = ckpt.val_loss;
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& r : ckpt.history)
    hist.push_back({{"epoch", r.epoch},
                    {"lr", r.lr},
                    {"train_loss", r.train_loss},
                    {"val_loss", r.val_loss}});
  j["history"] = hist;
  j["tabular_stats"] = {{"mean", ckpt.tabular_stats.mean},
                        {"std_dev", ckpt.tabular_stats.std_dev}};
  return j;
}

inline ModelCheckpoint checkpoint_from_json(const nlohmann::json& j) {
  ModelCheckpoint ckpt;
  ckpt.version = j.at("version").get<int>();
  if (ckpt.version != 1) throw std::runtime_error("unsupported checkpoint version");
  ckpt.kind = j.at("kind").get<std::string>();
  if (ckpt.kind == "mlp") {
    ckpt.mlp_config = detail::mlp_config_from_json(j.at("mlp_config"));
    ckpt.params = j.at("params").get<std::vector<double>>();
  } else if (ckpt.kind == "fusion") {
    const auto& fj = j.at("fusion_config");
    ckpt.fusion_config.text_dim = fj.at("text_dim").get<std::size_t>();
    ckpt.fusion_config.tabular_branch = detail::mlp_config_from_json(fj.at("tabular_branch"));
    ckpt.fusion_config.classifier_head = detail::mlp_config_from_json(fj.at("classifier_head"));
    ckpt.branch_params = j.at("branch_params").get<std::vector<double>>();
    ckpt.head_params = j.at("head_params").get<std::vector<double>>();
  } else {
    throw std::runtime_error("unknown checkpoint kind '" + ckpt.kind + "'");
  }
  ckpt.train_config = detail::train_config_from_json(j.at("train_config"));
  ckpt.epoch = j.at("epoch").get<int>();
  ckpt.val_loss = j.at("val_loss").get<double>();
  for (const auto& rj : j.at("history")) {
    EpochRecord r;
    r.epoch = rj.at("epoch").get<int>();
    r.lr = rj.at("lr").get<double>();
    r.train_loss = rj.at("train_loss").get<double>();
    r.val_loss = rj.at("val_loss").get<double>();
    ckpt.history.push_back(r);
  }
  if (j.contains("tabular_stats")) {
    ckpt.tabular_stats.mean =
        j["tabular_stats"].at("mean").get<std::map<std::string, double>>();
    ckpt.tabular_stats.std_dev =
        j["tabular_stats"].at("std_dev").get<std::map<std::string, double>>();
  }
  return ckpt;
}

inline void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path) {
  write_file(path, checkpoint_to_json(ckpt).dump() + "\n");
}

inline ModelCheckpoint load_checkpoint(const std::string& path) {
  try {
    return checkpoint_from_json(nlohmann::json::parse(slurp_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": malformed checkpoint: " + e.what());
  }
}

}  // namespace labelaudit
