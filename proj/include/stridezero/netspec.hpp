#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "stridezero/tensor.hpp"

namespace sz {

enum class LayerKind { kInput, kConv, kPool, kRelu, kDropout, kSoftmax, kUpsample, kConcat };

inline const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kInput: return "input";
    case LayerKind::kConv: return "conv";
    case LayerKind::kPool: return "pool";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kDropout: return "dropout";
    case LayerKind::kSoftmax: return "softmax";
    case LayerKind::kUpsample: return "upsample";
    case LayerKind::kConcat: return "concat";
  }
  return "?";
}

inline std::optional<LayerKind> kind_from_name(const std::string& s) {
  static const std::map<std::string, LayerKind> table = {
      {"input", LayerKind::kInput},     {"conv", LayerKind::kConv},
      {"pool", LayerKind::kPool},       {"relu", LayerKind::kRelu},
      {"dropout", LayerKind::kDropout}, {"softmax", LayerKind::kSoftmax},
      {"upsample", LayerKind::kUpsample}, {"concat", LayerKind::kConcat}};
  auto it = table.find(s);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

// One declarative layer record.  Geometry fields are meaningful for conv and
// pool layers, ratio for dropout, factor for upsample.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::kConv;
  ConvParams geom;
  int64_t out_channels = 0;  // conv only
  double ratio = 0.5;        // dropout only
  int64_t factor = 1;        // upsample only
  std::vector<std::string> inputs;
};

struct InputDecl {
  std::string name;
  int64_t channels = 0;
};

// A validated, topologically ordered network description.
struct NetworkSpec {
  std::vector<InputDecl> inputs;
  std::vector<LayerSpec> layers;
  int64_t classes = 0;

  const LayerSpec* find(const std::string& name) const {
    for (const auto& l : layers)
      if (l.name == name) return &l;
    return nullptr;
  }

  const InputDecl* find_input(const std::string& name) const {
    for (const auto& i : inputs)
      if (i.name == name) return &i;
    return nullptr;
  }

  // Channel count produced by a layer or input branch.
  int64_t channels_of(const std::string& name) const {
    if (const InputDecl* in = find_input(name)) return in->channels;
    const LayerSpec* l = find(name);
    if (!l) throw SemanticError("unknown layer '" + name + "'");
    switch (l->kind) {
      case LayerKind::kConv:
        return l->out_channels;
      case LayerKind::kConcat:
        return channels_of(l->inputs[0]) + channels_of(l->inputs[1]);
      default:
        return channels_of(l->inputs[0]);
    }
  }

  const std::string& terminal() const {
    if (layers.empty()) throw SemanticError("network has no layers");
    return layers.back().name;
  }

  void validate() const;
};

inline void NetworkSpec::validate() const {
  if (layers.empty()) throw SemanticError("network has no layers");
  if (inputs.empty()) throw SemanticError("network declares no input branches");
  std::unordered_set<std::string> seen;
  for (const auto& in : inputs) {
    if (in.channels < 1) {
      throw SemanticError("input '" + in.name + "': channel count must be >= 1");
    }
    if (!seen.insert(in.name).second) {
      throw SemanticError("duplicate name '" + in.name + "'");
    }
  }
  std::unordered_set<std::string> consumed;
  for (const auto& l : layers) {
    if (!seen.insert(l.name).second) {
      throw SemanticError("duplicate name '" + l.name + "'");
    }
    const size_t arity = l.kind == LayerKind::kConcat ? 2 : 1;
    if (l.inputs.size() != arity) {
      throw SemanticError("layer '" + l.name + "': " + kind_name(l.kind) + " takes " +
                          std::to_string(arity) + " input(s), got " +
                          std::to_string(l.inputs.size()));
    }
    for (const auto& pred : l.inputs) {
      // names must be declared earlier in the file, which keeps the list a DAG
      // in topological order.
      if (!seen.count(pred)) {
        throw SemanticError("layer '" + l.name + "': predecessor '" + pred +
                            "' is not defined above it");
      }
      consumed.insert(pred);
    }
    switch (l.kind) {
      case LayerKind::kInput:
        throw SemanticError("layer '" + l.name + "': input branches belong in header lines");
      case LayerKind::kConv:
        l.geom.validate();
        if (l.out_channels < 1) {
          throw SemanticError("layer '" + l.name + "': conv needs c=<out_channels> >= 1");
        }
        break;
      case LayerKind::kPool:
        l.geom.validate();
        if (l.geom.dilation != 1) {
          throw SemanticError("layer '" + l.name + "': pool windows are dense (d must be 1)");
        }
        break;
      case LayerKind::kDropout:
        if (l.ratio < 0.0 || l.ratio >= 1.0) {
          throw SemanticError("layer '" + l.name + "': dropout ratio must lie in [0,1)");
        }
        break;
      case LayerKind::kUpsample:
        if (l.factor < 1) {
          throw SemanticError("layer '" + l.name + "': upsample factor must be >= 1");
        }
        break;
      default:
        break;
    }
  }
  if (classes > 0) {
    // Classification networks end in exactly one softmax.
    const LayerSpec* sm = nullptr;
    for (const auto& l : layers) {
      if (l.kind == LayerKind::kSoftmax) {
        if (sm) throw SemanticError("network has more than one softmax layer");
        sm = &l;
      }
    }
    if (!sm) throw SemanticError("classification network (classes declared) needs a softmax");
    if (consumed.count(sm->name)) {
      throw SemanticError("softmax layer '" + sm->name + "' must be terminal");
    }
    if (channels_of(sm->inputs[0]) != classes) {
      throw SemanticError("softmax layer '" + sm->name + "' sees " +
                          std::to_string(channels_of(sm->inputs[0])) + " channels, expected " +
                          std::to_string(classes) + " classes");
    }
  }
}

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

inline int64_t parse_int(const std::string& s, int line_no, const std::string& what) {
  try {
    size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": bad integer for " + what + ": '" + s +
                     "'");
  }
}

inline double parse_double(const std::string& s, int line_no, const std::string& what) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": bad number for " + what + ": '" + s +
                     "'");
  }
}

}  // namespace detail

// Parses the line-oriented network format.  Header lines declare input
// branches and the class count; every other non-comment line is one layer:
//
//   input cir channels=3
//   classes 5
//   conv1 conv in=cir k=5x5 s=1 p=2 d=1 c=32
//   fuse concat in=a,b
//   up upsample in=score f=16
//
inline NetworkSpec parse_network(const std::string& text) {
  NetworkSpec net;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto toks = detail::split_ws(line);
    if (toks.empty()) continue;

    if (toks[0] == "input") {
      if (toks.size() != 3 || toks[2].rfind("channels=", 0) != 0) {
        throw ParseError("line " + std::to_string(line_no) +
                         ": expected 'input <name> channels=<C>'");
      }
      InputDecl in;
      in.name = toks[1];
      in.channels = detail::parse_int(toks[2].substr(9), line_no, "channels");
      net.inputs.push_back(in);
      continue;
    }
    if (toks[0] == "classes") {
      if (toks.size() != 2) {
        throw ParseError("line " + std::to_string(line_no) + ": expected 'classes <K>'");
      }
      net.classes = detail::parse_int(toks[1], line_no, "classes");
      continue;
    }

    if (toks.size() < 2) {
      throw ParseError("line " + std::to_string(line_no) + ": expected '<name> <kind> ...'");
    }
    LayerSpec l;
    l.name = toks[0];
    const auto kind = kind_from_name(toks[1]);
    if (!kind) {
      throw ParseError("line " + std::to_string(line_no) + ": unknown layer kind '" + toks[1] +
                       "'");
    }
    l.kind = *kind;
    for (size_t i = 2; i < toks.size(); ++i) {
      const std::string& t = toks[i];
      const size_t eq = t.find('=');
      if (eq == std::string::npos || eq == 0 || eq + 1 >= t.size()) {
        throw ParseError("line " + std::to_string(line_no) + ": expected key=value, got '" + t +
                         "'");
      }
      const std::string key = t.substr(0, eq);
      const std::string val = t.substr(eq + 1);
      if (key == "in") {
        std::istringstream vs(val);
        std::string part;
        while (std::getline(vs, part, ',')) {
          if (!part.empty()) l.inputs.push_back(part);
        }
      } else if (key == "k") {
        const size_t x = val.find('x');
        if (x == std::string::npos) {
          throw ParseError("line " + std::to_string(line_no) + ": k wants HxW, got '" + val + "'");
        }
        l.geom.kernel_h = detail::parse_int(val.substr(0, x), line_no, "kernel height");
        l.geom.kernel_w = detail::parse_int(val.substr(x + 1), line_no, "kernel width");
      } else if (key == "s") {
        l.geom.stride = detail::parse_int(val, line_no, "stride");
      } else if (key == "p") {
        l.geom.pad = detail::parse_int(val, line_no, "pad");
      } else if (key == "d") {
        l.geom.dilation = detail::parse_int(val, line_no, "dilation");
      } else if (key == "c") {
        l.out_channels = detail::parse_int(val, line_no, "out_channels");
      } else if (key == "ratio") {
        l.ratio = detail::parse_double(val, line_no, "ratio");
      } else if (key == "f") {
        l.factor = detail::parse_int(val, line_no, "factor");
      } else {
        throw ParseError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
      }
    }
    net.layers.push_back(std::move(l));
  }
  net.validate();
  return net;
}

inline NetworkSpec parse_network_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open network spec '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return parse_network(os.str());
}

// Canonical text form; parse_network(format_network(net)) reproduces net.
inline std::string format_network(const NetworkSpec& net) {
  std::ostringstream os;
  for (const auto& in : net.inputs) {
    os << "input " << in.name << " channels=" << in.channels << "\n";
  }
  if (net.classes > 0) os << "classes " << net.classes << "\n";
  for (const auto& l : net.layers) {
    os << l.name << " " << kind_name(l.kind) << " in=";
    for (size_t i = 0; i < l.inputs.size(); ++i) os << (i ? "," : "") << l.inputs[i];
    switch (l.kind) {
      case LayerKind::kConv:
        os << " k=" << l.geom.kernel_h << "x" << l.geom.kernel_w << " s=" << l.geom.stride
           << " p=" << l.geom.pad << " d=" << l.geom.dilation << " c=" << l.out_channels;
        break;
      case LayerKind::kPool:
        os << " k=" << l.geom.kernel_h << "x" << l.geom.kernel_w << " s=" << l.geom.stride
           << " p=" << l.geom.pad;
        break;
      case LayerKind::kDropout:
        os << " ratio=" << l.ratio;
        break;
      case LayerKind::kUpsample:
        os << " f=" << l.factor;
        break;
      default:
        break;
    }
    os << "\n";
  }
  return os.str();
}

// Receptive-field summary of a network: the input extent that influences one
// output value and the spacing of output samples on the input lattice.
struct FieldSummary {
  int64_t support_h = 1;
  int64_t support_w = 1;
  int64_t stride = 1;
};

// Walks the DAG accumulating (jump, support) per layer.  The jump is the
// product of layer strides seen so far; concat branches must agree on it.
inline FieldSummary receptive_field(const NetworkSpec& net) {
  net.validate();
  std::unordered_map<std::string, FieldSummary> acc;
  for (const auto& in : net.inputs) acc[in.name] = FieldSummary{};
  for (const auto& l : net.layers) {
    FieldSummary f = acc.at(l.inputs[0]);
    switch (l.kind) {
      case LayerKind::kConv:
      case LayerKind::kPool:
        f.support_h += (l.geom.effective_h() - 1) * f.stride;
        f.support_w += (l.geom.effective_w() - 1) * f.stride;
        f.stride *= l.geom.stride;
        break;
      case LayerKind::kUpsample:
        if (f.stride % l.factor != 0) {
          throw SemanticError("layer '" + l.name + "': upsample factor " +
                              std::to_string(l.factor) + " does not divide accumulated stride " +
                              std::to_string(f.stride));
        }
        f.stride /= l.factor;
        break;
      case LayerKind::kConcat: {
        const FieldSummary other = acc.at(l.inputs[1]);
        if (other.stride != f.stride) {
          throw SemanticError("layer '" + l.name + "': concat branch strides disagree (" +
                              std::to_string(f.stride) + " vs " + std::to_string(other.stride) +
                              ")");
        }
        f.support_h = std::max(f.support_h, other.support_h);
        f.support_w = std::max(f.support_w, other.support_w);
        break;
      }
      default:
        break;
    }
    acc[l.name] = f;
  }
  return acc.at(net.terminal());
}

}  // namespace sz
