#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "stridezero/metrics.hpp"
#include "stridezero/network.hpp"
#include "stridezero/raster.hpp"
#include "stridezero/transform.hpp"

namespace sz {

struct TrainConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0005;
  int64_t batch_tiles = 2;
  int64_t total_iterations = 150000;
  double lr_drop_factor = 10.0;
  double lr_drop_at_fraction = 2.0 / 3.0;
  double init_sigma = 0.01;
  uint64_t seed = 1;
  int64_t log_every = 1;

  void validate() const {
    if (learning_rate <= 0 || momentum < 0 || weight_decay < 0) {
      throw ParameterError("learning rate must be positive, momentum/decay non-negative");
    }
    if (lr_drop_at_fraction <= 0.0 || lr_drop_at_fraction >= 1.0) {
      throw ParameterError("lr drop fraction must lie in (0,1)");
    }
    if (batch_tiles < 1 || total_iterations < 1) {
      throw ParameterError("batch tiles and iteration count must be >= 1");
    }
  }
};

// Stepped schedule: the base rate drops by lr_drop_factor once the iteration
// index reaches ceil(fraction * total).
inline double learning_rate_at(const TrainConfig& cfg, int64_t iter) {
  const int64_t drop_at = static_cast<int64_t>(
      std::ceil(cfg.lr_drop_at_fraction * static_cast<double>(cfg.total_iterations)));
  return iter >= drop_at ? cfg.learning_rate / cfg.lr_drop_factor : cfg.learning_rate;
}

template <typename T>
struct LossResultT {
  double loss = 0.0;
  TensorT<T> grad;          // d(mean NLL)/d(logits), zero at masked pixels
  bool all_masked = false;  // warning flag; loss 0 and zero gradient
};

// Mean negative log-likelihood of the labels under a probability map
// [K,H,W], ignoring masked pixels.  The returned gradient is the fused
// softmax+NLL form (p - onehot)/N_unmasked, i.e. the gradient with respect
// to the logits that produced probs.
template <typename T>
LossResultT<T> softmax_xent_loss(const TensorT<T>& probs, const LabelImage& labels,
                                 const IgnoreMask& mask) {
  if (probs.rank() != 3) {
    throw DimensionError("softmax_xent_loss: probability map must be [K,H,W]");
  }
  const int64_t k = probs.extent(0), h = probs.extent(1), w = probs.extent(2);
  if (labels.height != h || labels.width != w) {
    throw DimensionError("softmax_xent_loss: probability map is " + std::to_string(h) + "x" +
                         std::to_string(w) + " but labels are " + std::to_string(labels.height) +
                         "x" + std::to_string(labels.width));
  }
  if (mask.height != h || mask.width != w) {
    throw DimensionError("softmax_xent_loss: mask extent disagrees with labels");
  }

  LossResultT<T> out;
  out.grad = TensorT<T>(probs.shape());
  int64_t n_unmasked = 0;
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      if (!mask.ignored(y, x)) ++n_unmasked;
    }
  }
  if (n_unmasked == 0) {
    out.all_masked = true;
    return out;
  }

  double nll = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n_unmasked);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      if (mask.ignored(y, x)) continue;
      const int64_t label = labels.at(y, x);
      if (label < 0 || label >= k) {
        throw DataError("label " + std::to_string(label) + " outside [0," + std::to_string(k) +
                        ") at (" + std::to_string(y) + "," + std::to_string(x) + ")");
      }
      const double p = std::max(static_cast<double>(probs.at(label, y, x)), 1e-30);
      nll -= std::log(p);
      for (int64_t c = 0; c < k; ++c) {
        out.grad.at(c, y, x) = static_cast<T>(
            (static_cast<double>(probs.at(c, y, x)) - (c == label ? 1.0 : 0.0)) * inv_n);
      }
    }
  }
  out.loss = nll * inv_n;
  return out;
}

// v <- mu*v - lr*(g + wd*w); w <- w + v.
template <typename T>
void sgd_step(WeightStoreT<T>& weights, const WeightStoreT<T>& grads, WeightStoreT<T>& velocity,
              const TrainConfig& cfg, int64_t iter) {
  const double lr = learning_rate_at(cfg, iter);
  for (size_t e = 0; e < weights.entries.size(); ++e) {
    auto& w = weights.entries[e];
    const auto& g = grads.entries[e];
    auto& v = velocity.entries[e];
    if (w.layer != g.layer || w.layer != v.layer || !w.kernel.same_shape(g.kernel)) {
      throw DimensionError("sgd_step: weight/gradient/velocity structures disagree");
    }
    for (int64_t i = 0; i < w.kernel.numel(); ++i) {
      v.kernel[i] = static_cast<T>(cfg.momentum * v.kernel[i] -
                                   lr * (g.kernel[i] + cfg.weight_decay * w.kernel[i]));
      w.kernel[i] += v.kernel[i];
    }
    for (size_t i = 0; i < w.bias.size(); ++i) {
      v.bias[i] = static_cast<T>(cfg.momentum * v.bias[i] -
                                 lr * (g.bias[i] + cfg.weight_decay * w.bias[i]));
      w.bias[i] += v.bias[i];
    }
  }
}

struct TrainingTile {
  Tensor image;  // [C,t,t]
  LabelImage labels;
  IgnoreMask mask;
};

namespace detail {

// Name of the layer feeding the terminal softmax.
inline std::string presoftmax_layer(const NetworkSpec& net) {
  const LayerSpec& last = net.layers.back();
  if (last.kind != LayerKind::kSoftmax) {
    throw SemanticError("training needs a terminal softmax layer");
  }
  return last.inputs[0];
}

}  // namespace detail

// Forward to the logits, restore full resolution bilinearly when the network
// is still strided, and score against full-resolution labels.  Returns the
// probability map, the loss and the gradient already mapped back to the
// logits' resolution.
template <typename T>
struct TileLossT {
  double loss = 0.0;
  bool all_masked = false;
  TensorT<T> logit_grad;
  TensorT<T> probs;
};

template <typename T>
TileLossT<T> tile_loss(const NetworkSpec& net, const TraceT<T>& trace, const LabelImage& labels,
                       const IgnoreMask& mask, int64_t residual_stride) {
  const std::string logits_name = detail::presoftmax_layer(net);
  const TensorT<T>& logits = trace.activations.at(logits_name);
  TensorT<T> up = residual_stride > 1 ? bilinear_upsample(logits, residual_stride) : logits;
  TensorT<T> probs = softmax_channels(up);
  LossResultT<T> l = softmax_xent_loss(probs, labels, mask);
  TileLossT<T> out;
  out.loss = l.loss;
  out.all_masked = l.all_masked;
  out.probs = std::move(probs);
  if (l.all_masked) {
    out.logit_grad = TensorT<T>(logits.shape());
  } else {
    out.logit_grad = residual_stride > 1
                         ? bilinear_upsample_backward(logits.shape(), residual_stride, l.grad)
                         : std::move(l.grad);
  }
  return out;
}

struct TrainResult {
  WeightStore weights;
  std::vector<std::pair<int64_t, double>> loss_curve;
  int64_t all_masked_tiles = 0;
};

// Fully-convolutional training over tiles: forward in train mode, restore
// resolution, mean cross-entropy, backward, momentum update.  Tile order is
// reshuffled every epoch from the config seed; with one thread the run is
// bit-reproducible for a fixed seed.
inline TrainResult train_loop(
    const NetworkSpec& net, const std::vector<TrainingTile>& tiles, const TrainConfig& cfg,
    std::function<void(int64_t, const WeightStore&)> snapshot = {}, int64_t snapshot_every = 0) {
  cfg.validate();
  net.validate();
  if (tiles.empty()) throw DataError("train_loop: no training tiles");
  const FieldSummary field = receptive_field(net);
  for (const auto& t : tiles) {
    if (t.image.rank() != 3) throw DataError("train_loop: tiles must be [C,t,t]");
    if (t.image.extent(1) < field.support_h || t.image.extent(2) < field.support_w) {
      throw DataError("train_loop: tile " + std::to_string(t.image.extent(1)) + "x" +
                      std::to_string(t.image.extent(2)) + " smaller than the network support " +
                      std::to_string(field.support_h) + "x" + std::to_string(field.support_w));
    }
  }
  const std::string logits_name = detail::presoftmax_layer(net);
  const std::string input_name = net.inputs.at(0).name;

  TrainResult result;
  result.weights = init_weights(net, cfg.init_sigma, cfg.seed);
  WeightStore velocity = result.weights.zeros_like();

  std::vector<size_t> order(tiles.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 shuffle_gen(cfg.seed ^ 0x5bf03635);
  std::shuffle(order.begin(), order.end(), shuffle_gen);
  size_t cursor = 0;

  for (int64_t iter = 0; iter < cfg.total_iterations; ++iter) {
    WeightStore grads = result.weights.zeros_like();
    double batch_loss = 0.0;
    for (int64_t b = 0; b < cfg.batch_tiles; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), shuffle_gen);
        cursor = 0;
      }
      const TrainingTile& tile = tiles[order[cursor++]];
      ForwardOptions opts;
      opts.train = true;
      opts.dropout_seed = cfg.seed + static_cast<uint64_t>(iter) * 1315423911ULL +
                          static_cast<uint64_t>(b);
      auto trace = forward(net, result.weights, {{input_name, tile.image}}, opts);
      auto tl = tile_loss(net, trace, tile.labels, tile.mask, field.stride);
      if (tl.all_masked) {
        ++result.all_masked_tiles;
        continue;
      }
      batch_loss += tl.loss;
      auto back = backward(net, result.weights, trace, {{logits_name, tl.logit_grad}});
      const double scale = 1.0 / static_cast<double>(cfg.batch_tiles);
      for (size_t e = 0; e < grads.entries.size(); ++e) {
        auto& acc = grads.entries[e];
        const auto& g = back.weight_grads.entries[e];
        for (int64_t i = 0; i < acc.kernel.numel(); ++i) {
          acc.kernel[i] += static_cast<float>(g.kernel[i] * scale);
        }
        for (size_t i = 0; i < acc.bias.size(); ++i) {
          acc.bias[i] += static_cast<float>(g.bias[i] * scale);
        }
      }
    }
    sgd_step(result.weights, grads, velocity, cfg, iter);
    if (iter % cfg.log_every == 0 || iter + 1 == cfg.total_iterations) {
      result.loss_curve.emplace_back(iter, batch_loss / static_cast<double>(cfg.batch_tiles));
    }
    if (snapshot && snapshot_every > 0 && (iter + 1) % snapshot_every == 0) {
      snapshot(iter + 1, result.weights);
    }
  }
  return result;
}

// Central-difference check of the full training composite (forward, bilinear
// restoration, softmax cross-entropy) against the analytic backward pass, in
// 64-bit.  Returns the worst relative error over every parameter.  Weights
// are redrawn until no relu input sits within `kink_margin` of zero so the
// numerical derivative never straddles the kink.
inline double grad_check(const NetworkSpec& net, const TrainConfig& cfg, double eps = 1e-4,
                         double kink_margin = 1e-2) {
  net.validate();
  const FieldSummary field = receptive_field(net);
  const std::string logits_name = detail::presoftmax_layer(net);
  const std::string input_name = net.inputs.at(0).name;
  // multiple of the output spacing, so the restored map matches the labels
  int64_t tile_extent = std::max<int64_t>(field.support_h, 8);
  tile_extent = (tile_extent + field.stride - 1) / field.stride * field.stride;

  std::mt19937_64 gen(cfg.seed);
  TensorD image({net.inputs.at(0).channels, tile_extent, tile_extent});
  std::uniform_real_distribution<double> u(0.2, 1.0);
  for (int64_t i = 0; i < image.numel(); ++i) image[i] = u(gen);

  LabelImage labels(tile_extent, tile_extent);
  const int64_t k = net.classes > 0 ? net.classes : 2;
  for (int64_t i = 0; i < labels.numel(); ++i) {
    labels.data[static_cast<size_t>(i)] = static_cast<uint8_t>(gen() % k);
  }
  IgnoreMask mask(tile_extent, tile_extent);

  ForwardOptions opts;
  opts.train = true;
  opts.dropout_seed = cfg.seed;

  WeightStoreD weights;
  for (int attempt = 0; attempt < 64; ++attempt) {
    weights = init_weights<double>(net, 0.35, cfg.seed + 1000 + attempt);
    auto trace = forward(net, weights, {{input_name, image}}, opts);
    bool clean = true;
    for (const auto& l : net.layers) {
      if (l.kind != LayerKind::kRelu) continue;
      const TensorD& pre = trace.activations.count(l.inputs[0])
                               ? trace.activations.at(l.inputs[0])
                               : trace.input_values.at(l.inputs[0]);
      for (int64_t i = 0; i < pre.numel() && clean; ++i) {
        if (std::abs(pre[i]) < kink_margin) clean = false;
      }
      if (!clean) break;
    }
    if (clean) break;
  }

  auto loss_of = [&] {
    auto trace = forward(net, weights, {{input_name, image}}, opts);
    return tile_loss(net, trace, labels, mask, field.stride).loss;
  };

  auto trace = forward(net, weights, {{input_name, image}}, opts);
  auto tl = tile_loss(net, trace, labels, mask, field.stride);
  auto analytic = backward(net, weights, trace, {{logits_name, tl.logit_grad}});

  double max_rel = 0.0;
  for (auto& e : weights.entries) {
    auto& ge = analytic.weight_grads.at(e.layer);
    auto probe = [&](double& param, double analytic_grad) {
      const double keep = param;
      param = keep + eps;
      const double lp = loss_of();
      param = keep - eps;
      const double lm = loss_of();
      param = keep;
      const double fd = (lp - lm) / (2 * eps);
      const double denom = std::max({std::abs(fd), std::abs(analytic_grad), 1e-6});
      max_rel = std::max(max_rel, std::abs(fd - analytic_grad) / denom);
    };
    for (int64_t i = 0; i < e.kernel.numel(); ++i) probe(e.kernel[i], ge.kernel[i]);
    for (size_t i = 0; i < e.bias.size(); ++i) probe(e.bias[i], ge.bias[i]);
  }
  return max_rel;
}

}  // namespace sz
