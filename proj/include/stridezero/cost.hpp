#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stridezero/netspec.hpp"
#include "stridezero/transform.hpp"

namespace sz {

// One convolutional layer as the analytical cost model sees it: kernel
// extent, channel fan-in/out and the downsampling level it runs at.  Under
// the model's factor-2-per-level assumption, a layer at level l processes a
// map downsampled by 2^(l-1).
struct CostLayer {
  std::string name;
  int64_t kernel_w = 1;
  int64_t kernel_h = 1;
  int64_t n_in = 0;
  int64_t n_out = 0;
  int64_t level = 1;

  int64_t macs_per_pixel() const { return kernel_w * kernel_h * n_in * n_out; }
};

inline int64_t cost_levels(const std::vector<CostLayer>& layers) {
  int64_t levels = 0;
  for (const auto& l : layers) levels = std::max(levels, l.level);
  return levels;
}

// lambda = W*H * sum_l w_l*h_l*n_l*n_{l-1}: multiply-accumulates of the
// stride-1 (no-downsampling) network.  Dilation never appears; holes are
// free.
inline int64_t lambda_no_ds(const std::vector<CostLayer>& layers, int64_t width, int64_t height) {
  int64_t sum = 0;
  for (const auto& l : layers) sum += l.macs_per_pixel();
  return width * height * sum;
}

// lambda0 = W*H * sum_l 4^(L-l+1) * w_l*h_l*n_l*n_{l-1}: the same network
// evaluated on all s^2 shifted inputs, each layer running at its own
// downsampled resolution.
inline int64_t lambda_shift_stitch(const std::vector<CostLayer>& layers, int64_t width,
                                   int64_t height) {
  const int64_t levels = cost_levels(layers);
  int64_t sum = 0;
  for (const auto& l : layers) {
    int64_t weight = 1;
    for (int64_t i = 0; i < levels - l.level + 1; ++i) weight *= 4;
    sum += weight * l.macs_per_pixel();
  }
  return width * height * sum;
}

// Speed-up ratio of no-downsampling over shift-and-stitch; the image extent
// cancels.
inline double speedup_eta(const std::vector<CostLayer>& layers) {
  if (layers.empty()) throw ParameterError("speedup_eta: need at least one layer");
  return static_cast<double>(lambda_shift_stitch(layers, 1, 1)) /
         static_cast<double>(lambda_no_ds(layers, 1, 1));
}

struct CostReport {
  std::vector<CostLayer> layers;
  int64_t width = 0;
  int64_t height = 0;
  int64_t lambda0 = 0;
  int64_t lambda = 0;
  double eta = 0.0;

  std::string to_table() const {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-10s %-8s %-6s %-6s %-6s %-16s\n", "layer", "filter", "in",
                  "out", "level", "macs/pixel");
    os << buf;
    for (const auto& l : layers) {
      const std::string k = std::to_string(l.kernel_h) + "x" + std::to_string(l.kernel_w);
      std::snprintf(buf, sizeof(buf), "%-10s %-8s %-6lld %-6lld %-6lld %-16lld\n", l.name.c_str(),
                    k.c_str(), static_cast<long long>(l.n_in), static_cast<long long>(l.n_out),
                    static_cast<long long>(l.level), static_cast<long long>(l.macs_per_pixel()));
      os << buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "input %lldx%lld\nlambda0 (shift-and-stitch) = %lld\nlambda  (no-downsampling) "
                  "= %lld\neta = %.4f\n",
                  static_cast<long long>(width), static_cast<long long>(height),
                  static_cast<long long>(lambda0), static_cast<long long>(lambda), eta);
    os << buf;
    return os.str();
  }

  // Machine-readable key=value lines.
  std::string to_keyvals() const {
    std::ostringstream os;
    os << "W=" << width << "\nH=" << height << "\nL=" << cost_levels(layers) << "\nlambda0="
       << lambda0 << "\nlambda=" << lambda << "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "eta=%.6f\n", eta);
    os << buf;
    for (const auto& l : layers) {
      os << "layer." << l.name << ".macs_per_pixel=" << l.macs_per_pixel() << "\n";
    }
    return os.str();
  }
};

inline CostReport cost_report(const std::vector<CostLayer>& layers, int64_t width,
                              int64_t height) {
  CostReport r;
  r.layers = layers;
  r.width = width;
  r.height = height;
  r.lambda0 = lambda_shift_stitch(layers, width, height);
  r.lambda = lambda_no_ds(layers, width, height);
  r.eta = speedup_eta(layers);
  return r;
}

// Cost table from a network spec: conv layers only, each assigned the level
// 1 + (number of strided layers before it along the chain).
inline std::vector<CostLayer> cost_layers_from_network(const NetworkSpec& net) {
  net.validate();
  std::vector<CostLayer> out;
  std::map<std::string, int64_t> level;
  for (const auto& in : net.inputs) level[in.name] = 1;
  for (const auto& l : net.layers) {
    int64_t lv = level.at(l.inputs[0]);
    if (l.kind == LayerKind::kConcat) lv = std::max(lv, level.at(l.inputs[1]));
    if (l.kind == LayerKind::kConv) {
      out.push_back(CostLayer{l.name, l.geom.kernel_w, l.geom.kernel_h,
                              net.channels_of(l.inputs[0]), l.out_channels, lv});
    }
    if ((l.kind == LayerKind::kConv || l.kind == LayerKind::kPool) && l.geom.stride > 1) ++lv;
    level[l.name] = lv;
  }
  return out;
}

// Line format: <name> k=HxW in=<channels> out=<channels> level=<l>
inline std::vector<CostLayer> parse_cost_table(const std::string& text) {
  std::vector<CostLayer> out;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto toks = detail::split_ws(line);
    if (toks.empty()) continue;
    CostLayer l;
    l.name = toks[0];
    l.level = static_cast<int64_t>(out.size()) + 1;  // default: own level per layer
    for (size_t i = 1; i < toks.size(); ++i) {
      const size_t eq = toks[i].find('=');
      if (eq == std::string::npos) {
        throw ParseError("line " + std::to_string(line_no) + ": expected key=value, got '" +
                         toks[i] + "'");
      }
      const std::string key = toks[i].substr(0, eq);
      const std::string val = toks[i].substr(eq + 1);
      if (key == "k") {
        const size_t x = val.find('x');
        if (x == std::string::npos) {
          throw ParseError("line " + std::to_string(line_no) + ": k wants HxW");
        }
        l.kernel_h = detail::parse_int(val.substr(0, x), line_no, "kernel height");
        l.kernel_w = detail::parse_int(val.substr(x + 1), line_no, "kernel width");
      } else if (key == "in") {
        l.n_in = detail::parse_int(val, line_no, "in");
      } else if (key == "out") {
        l.n_out = detail::parse_int(val, line_no, "out");
      } else if (key == "level") {
        l.level = detail::parse_int(val, line_no, "level");
      } else {
        throw ParseError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
      }
    }
    if (l.n_in < 1 || l.n_out < 1) {
      throw ParseError("line " + std::to_string(line_no) + ": in= and out= must be >= 1");
    }
    out.push_back(std::move(l));
  }
  if (out.empty()) throw ParseError("cost table has no layers");
  return out;
}

inline std::vector<CostLayer> parse_cost_table_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open cost table '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return parse_cost_table(os.str());
}

struct TimingResult {
  double t_stitch_seconds = 0.0;
  double t_no_ds_seconds = 0.0;
  int64_t passes = 0;
};

// Wall-clock medians of the interleaved oracle versus the rewritten dense
// forward on the same weights.  Runs are serialized on purpose.
template <typename T>
TimingResult time_comparison(const NetworkSpec& net, const WeightStoreT<T>& weights,
                             const TensorT<T>& image, int runs = 3) {
  if (runs < 1) throw ParameterError("time_comparison: runs must be >= 1");
  auto [dense_net, report] = remove_downsampling(net, 1);
  const std::string input_name = net.inputs.at(0).name;

  auto median_of = [&](auto&& fn) {
    std::vector<double> times;
    for (int i = 0; i < runs; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      fn();
      const auto t1 = std::chrono::steady_clock::now();
      times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
  };

  TimingResult r;
  r.t_stitch_seconds = median_of([&] { r.passes = shift_and_stitch(net, weights, image).passes; });
  r.t_no_ds_seconds =
      median_of([&] { forward(dense_net, weights, {{input_name, image}}); });
  return r;
}

}  // namespace sz
