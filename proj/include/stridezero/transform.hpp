#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stridezero/network.hpp"

namespace sz {

// Per-layer record of what the no-downsampling rewrite changed.
struct RewriteReport {
  struct Row {
    std::string name;
    LayerKind kind = LayerKind::kConv;
    ConvParams before;
    ConvParams after;
    int64_t out_channels = 0;  // conv only
    int64_t r = 1;             // accumulated density factor at this layer's input
  };
  std::vector<Row> rows;
  int64_t original_stride = 1;
  int64_t residual_stride = 1;

  // Text table mirroring the usual architecture-table columns.
  std::string to_table() const {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-10s %-6s %-12s %-9s %-9s %-8s %-7s %-4s\n", "layer", "kind",
                  "filter size", "filters", "dilation", "padding", "stride", "r");
    os << buf;
    for (const auto& row : rows) {
      std::string size = std::to_string(row.after.kernel_h) + "x" +
                         std::to_string(row.after.kernel_w);
      std::string filters = row.kind == LayerKind::kConv ? std::to_string(row.out_channels) : "-";
      std::string dil = row.kind == LayerKind::kConv ? std::to_string(row.after.dilation) : "-";
      std::snprintf(buf, sizeof(buf), "%-10s %-6s %-12s %-9s %-9s %-8lld %-7lld %-4lld\n",
                    row.name.c_str(), kind_name(row.kind), size.c_str(), filters.c_str(),
                    dil.c_str(), static_cast<long long>(row.after.pad),
                    static_cast<long long>(row.after.stride), static_cast<long long>(row.r));
      os << buf;
    }
    os << "original stride: " << original_stride << ", residual stride: " << residual_stride
       << "\n";
    return os.str();
  }
};

namespace detail {

// Density factor (rewritten grid points per original grid point) at every
// layer input, assuming strides up to `target` get neutralized front-first.
inline std::vector<int64_t> achievable_keep_factors(const NetworkSpec& net) {
  std::vector<int64_t> strides;
  for (const auto& l : net.layers) {
    if ((l.kind == LayerKind::kConv || l.kind == LayerKind::kPool) && l.geom.stride > 1) {
      strides.push_back(l.geom.stride);
    }
  }
  std::vector<int64_t> factors = {1};
  int64_t acc = 1;
  for (auto it = strides.rbegin(); it != strides.rend(); ++it) {
    acc *= *it;
    factors.push_back(acc);
  }
  return factors;
}

}  // namespace detail

// Turns a downsampling network into its stride-1 form.  Walking the layers in
// order with a density accumulator r (initially 1): while the accumulated
// neutralized stride is still below s/keep_factor, each strided layer's
// stride becomes 1 and r picks up the old stride.  Every layer is re-indexed
// onto the denser grid it now sees: conv dilation and padding scale by r, and
// pool windows grow to the dense extent r*(k-1)+1 with padding r*p (pool
// windows stay dense; no holes).  Parameters are untouched, so weight stores
// remain valid for the rewritten spec.
inline std::pair<NetworkSpec, RewriteReport> remove_downsampling(const NetworkSpec& net,
                                                                 int64_t keep_factor = 1) {
  net.validate();
  const FieldSummary field = receptive_field(net);
  const int64_t s = field.stride;
  if (keep_factor < 1) throw ParameterError("keep_factor must be >= 1");
  auto not_achievable = [&]() -> ParameterError {
    std::ostringstream os;
    os << "keep_factor " << keep_factor << " is not a suffix product of layer strides;"
       << " achievable values:";
    for (int64_t f : detail::achievable_keep_factors(net)) os << " " << f;
    return ParameterError(os.str());
  };
  if (s % keep_factor != 0) throw not_achievable();
  const int64_t target = s / keep_factor;

  NetworkSpec out = net;
  RewriteReport report;
  report.original_stride = s;

  // Per-branch density accumulators, keyed by layer/input name.
  std::map<std::string, int64_t> density;
  for (const auto& in : net.inputs) density[in.name] = 1;

  for (auto& l : out.layers) {
    int64_t r = density.at(l.inputs[0]);
    if (l.kind == LayerKind::kConcat) {
      const int64_t r2 = density.at(l.inputs[1]);
      if (r2 != r) {
        throw SemanticError("concat '" + l.name + "': branch densities disagree after rewrite");
      }
    }
    int64_t r_out = r;
    if (l.kind == LayerKind::kConv || l.kind == LayerKind::kPool) {
      RewriteReport::Row row;
      row.name = l.name;
      row.kind = l.kind;
      row.before = l.geom;
      row.out_channels = l.out_channels;
      row.r = r;

      if (l.kind == LayerKind::kConv) {
        l.geom.dilation *= r;
        l.geom.pad *= r;
      } else {
        l.geom.kernel_h = r * (l.geom.kernel_h - 1) + 1;
        l.geom.kernel_w = r * (l.geom.kernel_w - 1) + 1;
        l.geom.pad *= r;
      }
      if (r < target && l.geom.stride > 1) {
        r_out = r * l.geom.stride;
        l.geom.stride = 1;
      }
      row.after = l.geom;
      report.rows.push_back(row);
    }
    // relu/dropout/softmax/concat/upsample leave the density ratio unchanged
    density[l.name] = r_out;
  }

  report.residual_stride = receptive_field(out).stride;
  if (report.residual_stride != keep_factor) throw not_achievable();
  return {std::move(out), std::move(report)};
}

// Dimensions of the dense head of a classifier network, in order.
struct DenseDims {
  int64_t units = 0;
};

// Net surgery: replaces a flatten+dense classifier head with convolutions.
// The first dense layer becomes a conv with the last feature map's extent
// (computed from train_h x train_w by shape arithmetic); later dense layers
// become 1x1 convs with relu in between; the final dims entry is treated as
// the class scores and gets a terminal softmax when the spec declares
// classes.  Passing no dense dims returns the network unchanged.
inline NetworkSpec classifier_to_filter(const NetworkSpec& net, const std::vector<DenseDims>& fc,
                                        std::optional<std::pair<int64_t, int64_t>> train_hw = {}) {
  net.validate();
  if (fc.empty()) return net;
  if (!train_hw) {
    throw SemanticError(
        "classifier_to_filter: last conv extent unknown (no training input size given)");
  }

  // Shape arithmetic down the single path to the terminal layer.
  std::map<std::string, std::pair<int64_t, int64_t>> extents;
  for (const auto& in : net.inputs) extents[in.name] = *train_hw;
  for (const auto& l : net.layers) {
    auto [h, w] = extents.at(l.inputs[0]);
    switch (l.kind) {
      case LayerKind::kConv:
        h = conv_out_extent(h, l.geom.kernel_h, l.geom.stride, l.geom.pad, l.geom.dilation);
        w = conv_out_extent(w, l.geom.kernel_w, l.geom.stride, l.geom.pad, l.geom.dilation);
        break;
      case LayerKind::kPool:
        h = pool_out_extent(h, l.geom.kernel_h, l.geom.stride, l.geom.pad);
        w = pool_out_extent(w, l.geom.kernel_w, l.geom.stride, l.geom.pad);
        break;
      case LayerKind::kUpsample:
        h *= l.factor;
        w *= l.factor;
        break;
      case LayerKind::kConcat: {
        auto [h2, w2] = extents.at(l.inputs[1]);
        if (h2 != h || w2 != w) {
          throw SemanticError("classifier_to_filter: concat extents disagree at '" + l.name + "'");
        }
        break;
      }
      default:
        break;
    }
    if (h < 1 || w < 1) {
      throw SemanticError("classifier_to_filter: feature map vanishes at layer '" + l.name + "'");
    }
    extents[l.name] = {h, w};
  }
  const auto [hc, wc] = extents.at(net.terminal());

  NetworkSpec out = net;
  std::string prev = out.terminal();
  for (size_t i = 0; i < fc.size(); ++i) {
    LayerSpec conv;
    conv.name = "fc" + std::to_string(i + 1);
    while (out.find(conv.name) || out.find_input(conv.name)) conv.name += "_";
    conv.kind = LayerKind::kConv;
    conv.geom = ConvParams{i == 0 ? hc : 1, i == 0 ? wc : 1, 1, 0, 1};
    conv.out_channels = fc[i].units;
    conv.inputs = {prev};
    out.layers.push_back(conv);
    prev = conv.name;
    if (i + 1 < fc.size()) {
      LayerSpec act;
      act.name = conv.name + "_relu";
      act.kind = LayerKind::kRelu;
      act.inputs = {prev};
      out.layers.push_back(act);
      prev = act.name;
    }
  }
  if (out.classes > 0) {
    LayerSpec sm;
    sm.name = "prob";
    while (out.find(sm.name) || out.find_input(sm.name)) sm.name += "_";
    sm.kind = LayerKind::kSoftmax;
    sm.inputs = {prev};
    out.layers.push_back(sm);
  }
  out.validate();
  return out;
}

// Reshapes one dense weight matrix [units x (cin*h*w)] (row-major over
// channel, then row, then column — the flatten order of our tensors) into a
// conv kernel [units, cin, h, w].
template <typename T>
TensorT<T> dense_to_conv_kernel(const TensorT<T>& matrix, int64_t cin, int64_t h, int64_t w) {
  if (matrix.rank() != 2 || matrix.extent(1) != cin * h * w) {
    throw DimensionError("dense_to_conv_kernel: matrix shape " + matrix.shape_str() +
                         " does not flatten from [" + std::to_string(cin) + "," +
                         std::to_string(h) + "," + std::to_string(w) + "]");
  }
  return TensorT<T>({matrix.extent(0), cin, h, w}, matrix.vec());
}

template <typename T>
struct StitchResult {
  TensorT<T> output;
  int64_t passes = 0;
};

namespace detail {

// Shift the image up-left by (dy,dx), zero-filling the vacated border so all
// passes keep the original extent.
template <typename T>
TensorT<T> shift_up_left(const TensorT<T>& img, int64_t dy, int64_t dx) {
  const auto g = geom(img, "shift_up_left");
  TensorT<T> out(img.shape());
  for (int64_t n = 0; n < g.n; ++n) {
    for (int64_t c = 0; c < g.c; ++c) {
      for (int64_t y = 0; y + dy < g.h; ++y) {
        const T* src = img.data() + ((n * g.c + c) * g.h + y + dy) * g.w + dx;
        T* dst = out.data() + ((n * g.c + c) * g.h + y) * g.w;
        std::copy(src, src + (g.w - dx), dst);
      }
    }
  }
  return out;
}

}  // namespace detail

// Reference dense prediction for a downsampling network: runs the network on
// all s^2 shifted copies of the image and interleaves the coarse outputs,
//   dense[y,x] = pass(y mod s, x mod s)[y div s, x div s].
// The pass counter is part of the result.  With s=1 this is a single forward
// pass.
template <typename T>
StitchResult<T> shift_and_stitch(const NetworkSpec& net, const WeightStoreT<T>& weights,
                                 const TensorT<T>& image) {
  const int64_t s = receptive_field(net).stride;
  const std::string input_name = net.inputs.at(0).name;
  const std::string out_name = net.terminal();

  StitchResult<T> result;
  TensorT<T> dense;
  for (int64_t dy = 0; dy < s; ++dy) {
    for (int64_t dx = 0; dx < s; ++dx) {
      TensorT<T> shifted = (dy == 0 && dx == 0) ? image : detail::shift_up_left(image, dy, dx);
      auto trace = forward(net, weights, {{input_name, std::move(shifted)}});
      const TensorT<T>& coarse = trace.activations.at(out_name);
      ++result.passes;
      const auto g = detail::geom(coarse, "shift_and_stitch");
      if (result.passes == 1) {
        dense = TensorT<T>(detail::out_shape(g, g.c, g.h * s, g.w * s));
      }
      for (int64_t n = 0; n < g.n; ++n) {
        for (int64_t c = 0; c < g.c; ++c) {
          for (int64_t y = 0; y < g.h; ++y) {
            for (int64_t x = 0; x < g.w; ++x) {
              dense.data()[((n * g.c + c) * g.h * s + (y * s + dy)) * g.w * s + (x * s + dx)] =
                  coarse.data()[((n * g.c + c) * g.h + y) * g.w + x];
            }
          }
        }
      }
    }
  }
  result.output = std::move(dense);
  return result;
}

}  // namespace sz
