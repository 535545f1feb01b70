#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "stridezero/netspec.hpp"
#include "stridezero/tensor.hpp"

namespace sz {

// Named per-layer parameters for the conv layers of a network, in layer
// order.  Order is part of the serialized form.
template <typename T>
struct WeightStoreT {
  struct Entry {
    std::string layer;
    TensorT<T> kernel;  // [Cout,Cin,kh,kw]
    std::vector<T> bias;
  };

  std::vector<Entry> entries;

  Entry& at(const std::string& layer) {
    for (auto& e : entries)
      if (e.layer == layer) return e;
    throw StateError("no weights for layer '" + layer + "'");
  }
  const Entry& at(const std::string& layer) const {
    for (const auto& e : entries)
      if (e.layer == layer) return e;
    throw StateError("no weights for layer '" + layer + "'");
  }
  bool has(const std::string& layer) const {
    for (const auto& e : entries)
      if (e.layer == layer) return true;
    return false;
  }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto& e : entries) n += e.kernel.numel() + static_cast<int64_t>(e.bias.size());
    return n;
  }

  template <typename U>
  WeightStoreT<U> cast() const {
    WeightStoreT<U> out;
    for (const auto& e : entries) {
      typename WeightStoreT<U>::Entry ne;
      ne.layer = e.layer;
      ne.kernel = e.kernel.template cast<U>();
      ne.bias.reserve(e.bias.size());
      for (T b : e.bias) ne.bias.push_back(static_cast<U>(b));
      out.entries.push_back(std::move(ne));
    }
    return out;
  }

  // Every conv layer must have exactly one entry whose kernel matches the
  // declared geometry.
  void validate_against(const NetworkSpec& net) const {
    size_t conv_layers = 0;
    for (const auto& l : net.layers) {
      if (l.kind != LayerKind::kConv) continue;
      ++conv_layers;
      const Entry& e = at(l.name);
      const int64_t cin = net.channels_of(l.inputs[0]);
      if (e.kernel.rank() != 4 || e.kernel.extent(0) != l.out_channels ||
          e.kernel.extent(1) != cin || e.kernel.extent(2) != l.geom.kernel_h ||
          e.kernel.extent(3) != l.geom.kernel_w) {
        throw SemanticError("weights for layer '" + l.name + "' have shape " +
                            e.kernel.shape_str() + ", spec wants [" +
                            std::to_string(l.out_channels) + "," + std::to_string(cin) + "," +
                            std::to_string(l.geom.kernel_h) + "," +
                            std::to_string(l.geom.kernel_w) + "]");
      }
      if (static_cast<int64_t>(e.bias.size()) != l.out_channels) {
        throw SemanticError("bias for layer '" + l.name + "' has length " +
                            std::to_string(e.bias.size()) + ", spec wants " +
                            std::to_string(l.out_channels));
      }
    }
    if (conv_layers != entries.size()) {
      throw SemanticError("weight store has " + std::to_string(entries.size()) +
                          " entries for " + std::to_string(conv_layers) + " conv layers");
    }
  }

  // Zero-filled buffers with the same structure, for gradients and momentum.
  WeightStoreT zeros_like() const {
    WeightStoreT out;
    for (const auto& e : entries) {
      Entry ne;
      ne.layer = e.layer;
      ne.kernel = TensorT<T>(e.kernel.shape());
      ne.bias.assign(e.bias.size(), T(0));
      out.entries.push_back(std::move(ne));
    }
    return out;
  }
};

using WeightStore = WeightStoreT<float>;
using WeightStoreD = WeightStoreT<double>;

// Kernel values drawn from Normal(0, sigma), biases zero.
template <typename T = float>
WeightStoreT<T> init_weights(const NetworkSpec& net, double sigma = 0.01, uint64_t seed = 1) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist(0.0, sigma);
  WeightStoreT<T> w;
  for (const auto& l : net.layers) {
    if (l.kind != LayerKind::kConv) continue;
    typename WeightStoreT<T>::Entry e;
    e.layer = l.name;
    const int64_t cin = net.channels_of(l.inputs[0]);
    e.kernel = TensorT<T>({l.out_channels, cin, l.geom.kernel_h, l.geom.kernel_w});
    for (int64_t i = 0; i < e.kernel.numel(); ++i) e.kernel[i] = static_cast<T>(dist(gen));
    e.bias.assign(static_cast<size_t>(l.out_channels), T(0));
    w.entries.push_back(std::move(e));
  }
  return w;
}

}  // namespace sz
