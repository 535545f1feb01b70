#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "stridezero/kernels.hpp"
#include "stridezero/netspec.hpp"
#include "stridezero/weights.hpp"

namespace sz {

struct ForwardOptions {
  bool train = false;
  uint64_t dropout_seed = 0;
};

// Everything the backward pass needs from a forward run: one activation per
// layer plus the dropout multipliers and pooling argmax routes.
template <typename T>
struct TraceT {
  std::map<std::string, TensorT<T>> activations;
  std::map<std::string, TensorT<T>> dropout_factors;
  std::map<std::string, ArgIndices> pool_args;
  std::map<std::string, TensorT<T>> input_values;
};

using Trace = TraceT<float>;
using TraceD = TraceT<double>;

// Evaluates the DAG in declaration order.  Inputs may be [C,H,W] or
// [N,C,H,W]; dropout is the identity in test mode and inverted dropout with a
// seeded mask in train mode.
template <typename T>
TraceT<T> forward(const NetworkSpec& net, const WeightStoreT<T>& weights,
                  const std::map<std::string, TensorT<T>>& inputs,
                  const ForwardOptions& opts = {}) {
  net.validate();
  TraceT<T> trace;
  for (const auto& decl : net.inputs) {
    auto it = inputs.find(decl.name);
    if (it == inputs.end()) {
      throw DimensionError("forward: missing tensor for input branch '" + decl.name + "'");
    }
    const int64_t c = it->second.rank() == 4 ? it->second.extent(1) : it->second.extent(0);
    if (c != decl.channels) {
      throw DimensionError("forward: input '" + decl.name + "' has " + std::to_string(c) +
                           " channels, declared " + std::to_string(decl.channels));
    }
    trace.input_values[decl.name] = it->second;
  }

  auto value_of = [&](const std::string& name) -> const TensorT<T>& {
    auto it = trace.activations.find(name);
    if (it != trace.activations.end()) return it->second;
    auto in = trace.input_values.find(name);
    if (in != trace.input_values.end()) return in->second;
    throw StateError("forward: no value for '" + name + "'");
  };

  uint64_t dropout_counter = 0;
  for (const auto& l : net.layers) {
    const TensorT<T>& x = value_of(l.inputs[0]);
    switch (l.kind) {
      case LayerKind::kConv: {
        const auto& e = weights.at(l.name);
        trace.activations[l.name] = conv2d(x, e.kernel, e.bias, l.geom);
        break;
      }
      case LayerKind::kPool: {
        auto [y, args] = maxpool2d(x, l.geom.kernel_h, l.geom.kernel_w, l.geom.stride, l.geom.pad);
        trace.activations[l.name] = std::move(y);
        trace.pool_args[l.name] = std::move(args);
        break;
      }
      case LayerKind::kRelu:
        trace.activations[l.name] = relu(x);
        break;
      case LayerKind::kDropout: {
        ++dropout_counter;
        if (opts.train) {
          auto [y, factors] = dropout_train(x, l.ratio, opts.dropout_seed * 0x9e3779b97f4a7c15ULL +
                                                            dropout_counter);
          trace.activations[l.name] = std::move(y);
          trace.dropout_factors[l.name] = std::move(factors);
        } else {
          trace.activations[l.name] = x;
        }
        break;
      }
      case LayerKind::kSoftmax:
        trace.activations[l.name] = softmax_channels(x);
        break;
      case LayerKind::kUpsample:
        trace.activations[l.name] = bilinear_upsample(x, l.factor);
        break;
      case LayerKind::kConcat:
        trace.activations[l.name] = concat_channels(x, value_of(l.inputs[1]));
        break;
      case LayerKind::kInput:
        throw SemanticError("input pseudo-layer in layer list");
    }
  }
  return trace;
}

template <typename T>
struct BackwardResultT {
  WeightStoreT<T> weight_grads;
  std::map<std::string, TensorT<T>> input_grads;
};

// Reverse-mode gradients through the DAG.  upstream_grads assigns a gradient
// tensor to one or more layer outputs (usually just the terminal layer);
// gradients of fan-out layers accumulate in declaration order.
template <typename T>
BackwardResultT<T> backward(const NetworkSpec& net, const WeightStoreT<T>& weights,
                            const TraceT<T>& trace,
                            const std::map<std::string, TensorT<T>>& upstream_grads) {
  if (trace.activations.empty()) {
    throw StateError("backward: forward trace has no activations");
  }
  std::unordered_map<std::string, TensorT<T>> grads;
  auto add_grad = [&](const std::string& name, TensorT<T> g) {
    auto it = grads.find(name);
    if (it == grads.end()) {
      grads.emplace(name, std::move(g));
    } else {
      if (!it->second.same_shape(g)) {
        throw DimensionError("backward: gradient shape mismatch at '" + name + "'");
      }
      for (int64_t i = 0; i < g.numel(); ++i) it->second[i] += g[i];
    }
  };
  for (const auto& [name, g] : upstream_grads) {
    const auto it = trace.activations.find(name);
    if (it == trace.activations.end()) {
      throw StateError("backward: upstream gradient for unknown activation '" + name + "'");
    }
    if (!it->second.same_shape(g)) {
      throw DimensionError("backward: upstream gradient shape mismatch at '" + name + "'");
    }
    add_grad(name, g);
  }

  BackwardResultT<T> out;
  out.weight_grads = weights.zeros_like();

  auto activation_of = [&](const std::string& name) -> const TensorT<T>& {
    auto it = trace.activations.find(name);
    if (it != trace.activations.end()) return it->second;
    auto in = trace.input_values.find(name);
    if (in != trace.input_values.end()) return in->second;
    throw StateError("backward: missing activation for '" + name + "'");
  };

  for (auto it = net.layers.rbegin(); it != net.layers.rend(); ++it) {
    const LayerSpec& l = *it;
    auto git = grads.find(l.name);
    if (git == grads.end()) continue;  // nothing downstream pulled on this layer
    const TensorT<T>& g = git->second;
    const TensorT<T>& x = activation_of(l.inputs[0]);
    switch (l.kind) {
      case LayerKind::kConv: {
        auto& we = out.weight_grads.at(l.name);
        add_grad(l.inputs[0],
                 conv2d_backward(x, weights.at(l.name).kernel, l.geom, g, we.kernel, we.bias));
        break;
      }
      case LayerKind::kPool:
        add_grad(l.inputs[0], maxpool2d_backward(x.shape(), trace.pool_args.at(l.name), g));
        break;
      case LayerKind::kRelu:
        add_grad(l.inputs[0], relu_backward(x, g));
        break;
      case LayerKind::kDropout: {
        auto fit = trace.dropout_factors.find(l.name);
        if (fit == trace.dropout_factors.end()) {
          add_grad(l.inputs[0], g);  // test mode: identity
        } else {
          TensorT<T> gi(g.shape());
          for (int64_t i = 0; i < g.numel(); ++i) gi[i] = g[i] * fit->second[i];
          add_grad(l.inputs[0], std::move(gi));
        }
        break;
      }
      case LayerKind::kSoftmax:
        add_grad(l.inputs[0], softmax_channels_backward(trace.activations.at(l.name), g));
        break;
      case LayerKind::kUpsample:
        add_grad(l.inputs[0], bilinear_upsample_backward(x.shape(), l.factor, g));
        break;
      case LayerKind::kConcat: {
        const TensorT<T>& b = activation_of(l.inputs[1]);
        auto [ga, gb] = concat_channels_backward(x.shape(), b.shape(), g);
        add_grad(l.inputs[0], std::move(ga));
        add_grad(l.inputs[1], std::move(gb));
        break;
      }
      case LayerKind::kInput:
        break;
    }
  }

  for (const auto& decl : net.inputs) {
    auto git = grads.find(decl.name);
    if (git != grads.end()) out.input_grads[decl.name] = std::move(git->second);
  }
  return out;
}

}  // namespace sz
