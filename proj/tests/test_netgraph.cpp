#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "stridezero/network.hpp"
#include "stridezero/netspec.hpp"
#include "stridezero/weights.hpp"

using sz::NetworkSpec;
using sz::Tensor;

namespace {

std::string spec_path(const std::string& name) { return std::string(SZ_SPEC_DIR) + "/" + name; }

}  // namespace

TEST_CASE("parser accepts the standard network: 7 weighted layers, stride 16") {
  NetworkSpec net = sz::parse_network_file(spec_path("fcn_vaihingen.net"));
  int64_t weighted = 0;
  for (const auto& l : net.layers)
    if (l.kind == sz::LayerKind::kConv) ++weighted;
  REQUIRE(weighted == 7);
  REQUIRE(net.classes == 5);
  REQUIRE(sz::receptive_field(net).stride == 16);
}

TEST_CASE("parser rejects an empty layer list") {
  REQUIRE_THROWS_AS(sz::parse_network("input a channels=3\nclasses 5\n"), sz::SemanticError);
}

TEST_CASE("parser accepts the two-branch hybrid spec") {
  NetworkSpec net = sz::parse_network_file(spec_path("hybrid_potsdam.net"));
  REQUIRE(net.inputs.size() == 2);
  REQUIRE(net.find("fuse")->kind == sz::LayerKind::kConcat);
  REQUIRE(sz::receptive_field(net).stride == 32);
}

TEST_CASE("parser reports syntax errors with line numbers") {
  const std::string bad = "input a channels=3\nclasses 2\nc1 conv in=a k=3 c=4\n";
  REQUIRE_THROWS_MATCHES(
      sz::parse_network(bad), sz::ParseError,
      Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("line 3")));
}

TEST_CASE("parser reports semantic errors naming the layer") {
  const std::string bad =
      "input a channels=3\nc1 conv in=missing k=3x3 s=1 p=1 d=1 c=4\n";
  REQUIRE_THROWS_MATCHES(
      sz::parse_network(bad), sz::SemanticError,
      Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("c1")));
}

TEST_CASE("format/parse round trip preserves the network") {
  NetworkSpec net = sz::parse_network_file(spec_path("fcn_table5.net"));
  NetworkSpec again = sz::parse_network(sz::format_network(net));
  REQUIRE(again.layers.size() == net.layers.size());
  for (size_t i = 0; i < net.layers.size(); ++i) {
    REQUIRE(again.layers[i].name == net.layers[i].name);
    REQUIRE(again.layers[i].kind == net.layers[i].kind);
    REQUIRE(again.layers[i].geom.kernel_h == net.layers[i].geom.kernel_h);
    REQUIRE(again.layers[i].geom.stride == net.layers[i].geom.stride);
    REQUIRE(again.layers[i].geom.pad == net.layers[i].geom.pad);
    REQUIRE(again.layers[i].geom.dilation == net.layers[i].geom.dilation);
  }
}

TEST_CASE("forward through a single identity conv net reproduces the input") {
  const std::string text =
      "input img channels=2\n"
      "c1 conv in=img k=1x1 s=1 p=0 d=1 c=2\n";
  NetworkSpec net = sz::parse_network(text);
  sz::WeightStore w = sz::init_weights(net, 0.0, 1);
  auto& e = w.at("c1");
  e.kernel.at(0, 0, 0, 0) = 1.0f;
  e.kernel.at(1, 1, 0, 0) = 1.0f;
  Tensor x = szt::random_tensor({2, 5, 5}, 7);
  auto trace = sz::forward(net, w, {{"img", x}});
  REQUIRE(sz::max_abs_diff(trace.activations.at("c1"), x) == 0.0);
}

TEST_CASE("classifier-derived net maps a 64x64 input to a 1x1 prediction per class") {
  NetworkSpec net = sz::parse_network_file(spec_path("fcn_vaihingen_cls64.net"));
  sz::WeightStore w = sz::init_weights(net, 0.01, 3);
  Tensor x = szt::random_tensor({4, 64, 64}, 5);
  auto trace = sz::forward(net, w, {{"bands", x}});
  const Tensor& prob = trace.activations.at("prob");
  REQUIRE(prob.shape() == std::vector<int64_t>{5, 1, 1});
}

TEST_CASE("standard net maps a 128x128 tile to a 5x8x8 grid before upsampling") {
  NetworkSpec net = sz::parse_network_file(spec_path("fcn_vaihingen.net"));
  sz::WeightStore w = sz::init_weights(net, 0.01, 3);
  Tensor x = szt::random_tensor({4, 128, 128}, 5);
  auto trace = sz::forward(net, w, {{"bands", x}});
  const Tensor& prob = trace.activations.at("prob");
  REQUIRE(prob.shape() == std::vector<int64_t>{5, 8, 8});
}

TEST_CASE("forward rejects inputs whose channels disagree with the declaration") {
  NetworkSpec net = sz::parse_network_file(spec_path("fcn_vaihingen.net"));
  sz::WeightStore w = sz::init_weights(net, 0.01, 3);
  Tensor x = szt::random_tensor({3, 64, 64}, 5);
  REQUIRE_THROWS_AS(sz::forward(net, w, {{"bands", x}}), sz::DimensionError);
}

TEST_CASE("dropout is the identity in test mode") {
  const std::string text =
      "input img channels=2\n"
      "c1 conv in=img k=3x3 s=1 p=1 d=1 c=3\n"
      "d1 dropout in=c1 ratio=0.5\n";
  NetworkSpec net = sz::parse_network(text);
  sz::WeightStore w = sz::init_weights(net, 0.5, 11);
  Tensor x = szt::random_tensor({2, 6, 6}, 13);
  auto trace = sz::forward(net, w, {{"img", x}});
  REQUIRE(sz::max_abs_diff(trace.activations.at("d1"), trace.activations.at("c1")) == 0.0);
}

TEST_CASE("filter-mode forward equals the classifier applied patchwise (zero padding)") {
  // unpadded net: conv 3x3 -> relu -> pool 2x2/2 -> conv 3x3
  const std::string text =
      "input img channels=2\n"
      "c1 conv in=img k=3x3 s=1 p=0 d=1 c=3\n"
      "r1 relu in=c1\n"
      "p1 pool in=r1 k=2x2 s=2 p=0\n"
      "c2 conv in=p1 k=3x3 s=1 p=0 d=1 c=2\n";
  NetworkSpec net = sz::parse_network(text);
  sz::WeightStore w = sz::init_weights(net, 0.7, 21);
  const auto field = sz::receptive_field(net);
  REQUIRE(field.stride == 2);
  const int64_t support = field.support_h;

  Tensor image = szt::random_tensor({2, 20, 20}, 23);
  auto trace = sz::forward(net, w, {{"img", image}});
  const Tensor& grid = trace.activations.at("c2");

  for (int64_t gy = 0; gy < grid.extent(1); ++gy) {
    for (int64_t gx = 0; gx < grid.extent(2); ++gx) {
      Tensor patch({2, support, support});
      for (int64_t c = 0; c < 2; ++c)
        for (int64_t y = 0; y < support; ++y)
          for (int64_t x = 0; x < support; ++x)
            patch.at(c, y, x) = image.at(c, gy * field.stride + y, gx * field.stride + x);
      auto ptrace = sz::forward(net, w, {{"img", patch}});
      const Tensor& one = ptrace.activations.at("c2");
      REQUIRE(one.extent(1) == 1);
      for (int64_t c = 0; c < 2; ++c) {
        REQUIRE(std::abs(one.at(c, 0, 0) - grid.at(c, gy, gx)) < 1e-6);
      }
    }
  }
}

TEST_CASE("receptive field: one stride-1 conv has stride 1 and support = kernel") {
  const std::string text =
      "input img channels=1\n"
      "c1 conv in=img k=5x5 s=1 p=0 d=1 c=1\n";
  const auto field = sz::receptive_field(sz::parse_network(text));
  REQUIRE(field.stride == 1);
  REQUIRE(field.support_h == 5);
  REQUIRE(field.support_w == 5);
}

TEST_CASE("receptive field of the VGG-16 geometry spec is stride 32") {
  NetworkSpec net = sz::parse_network_file(spec_path("vgg16.net"));
  REQUIRE(sz::receptive_field(net).stride == 32);
}

TEST_CASE("receptive field stride matches the extent ratio at two input sizes") {
  NetworkSpec net = sz::parse_network_file(spec_path("fcn_vaihingen.net"));
  sz::WeightStore w = sz::init_weights(net, 0.01, 3);
  const int64_t s = sz::receptive_field(net).stride;
  for (int64_t size : {128, 256}) {
    Tensor x({4, size, size});
    auto trace = sz::forward(net, w, {{"bands", x}});
    const Tensor& out = trace.activations.at("prob");
    REQUIRE(size / out.extent(1) == s);
  }
}

TEST_CASE("receptive field rejects concat branches with disagreeing strides") {
  const std::string text =
      "input a channels=1\n"
      "input b channels=1\n"
      "p1 pool in=a k=2x2 s=2 p=0\n"
      "cc concat in=p1,b\n";
  REQUIRE_THROWS_AS(sz::receptive_field(sz::parse_network(text)), sz::SemanticError);
}

TEST_CASE("backward: zero upstream gradient gives all-zero parameter gradients") {
  NetworkSpec net = sz::parse_network(
      "input img channels=2\n"
      "c1 conv in=img k=3x3 s=1 p=1 d=1 c=3\n"
      "r1 relu in=c1\n"
      "c2 conv in=r1 k=1x1 s=1 p=0 d=1 c=2\n");
  sz::WeightStore w = sz::init_weights(net, 0.5, 99);
  Tensor x = szt::random_tensor({2, 6, 6}, 1);
  auto trace = sz::forward(net, w, {{"img", x}});
  Tensor zero(trace.activations.at("c2").shape());
  auto result = sz::backward(net, w, trace, {{"c2", zero}});
  for (const auto& e : result.weight_grads.entries) {
    for (int64_t i = 0; i < e.kernel.numel(); ++i) REQUIRE(e.kernel[i] == 0.0f);
    for (float b : e.bias) REQUIRE(b == 0.0f);
  }
}

TEST_CASE("backward: single 1x1 conv has dL/dw = x * dL/dy") {
  NetworkSpec net = sz::parse_network(
      "input img channels=1\n"
      "c1 conv in=img k=1x1 s=1 p=0 d=1 c=1\n");
  sz::WeightStore w = sz::init_weights(net, 0.0, 1);
  w.at("c1").kernel[0] = 1.5f;
  Tensor x({1, 1, 1}, {2.0f});
  auto trace = sz::forward(net, w, {{"img", x}});
  Tensor g({1, 1, 1}, {3.0f});
  auto result = sz::backward(net, w, trace, {{"c1", g}});
  REQUIRE(result.weight_grads.at("c1").kernel[0] == 6.0f);   // x * g
  REQUIRE(result.weight_grads.at("c1").bias[0] == 3.0f);     // g
  REQUIRE(result.input_grads.at("img")[0] == 4.5f);          // w * g
}

TEST_CASE("backward requires a forward trace") {
  NetworkSpec net = sz::parse_network(
      "input img channels=1\n"
      "c1 conv in=img k=1x1 s=1 p=0 d=1 c=1\n");
  sz::WeightStore w = sz::init_weights(net, 0.1, 1);
  sz::Trace empty;
  REQUIRE_THROWS_AS(sz::backward(net, w, empty, {}), sz::StateError);
}

namespace {

// Scalar functional sum(output^2)/2 for finite-difference checks; its
// gradient with respect to the output is the output itself.
double half_sq_sum(const sz::TensorD& t) {
  double s = 0.0;
  for (int64_t i = 0; i < t.numel(); ++i) s += t[i] * t[i];
  return 0.5 * s;
}

double fd_max_rel_error(const NetworkSpec& net, sz::WeightStoreD& w, const sz::TensorD& x,
                        const std::string& input_name, double eps) {
  const std::string out_name = net.terminal();
  auto loss_of = [&] {
    auto trace = sz::forward(net, w, {{input_name, x}});
    return half_sq_sum(trace.activations.at(out_name));
  };
  auto trace = sz::forward(net, w, {{input_name, x}});
  auto analytic = sz::backward(net, w, trace, {{out_name, trace.activations.at(out_name)}});

  double max_rel = 0.0;
  for (auto& e : w.entries) {
    auto& ge = analytic.weight_grads.at(e.layer);
    for (int64_t i = 0; i < e.kernel.numel(); ++i) {
      const double keep = e.kernel[i];
      e.kernel[i] = keep + eps;
      const double lp = loss_of();
      e.kernel[i] = keep - eps;
      const double lm = loss_of();
      e.kernel[i] = keep;
      const double fd = (lp - lm) / (2 * eps);
      const double denom =
          std::max({std::abs(fd), std::abs(static_cast<double>(ge.kernel[i])), 1e-8});
      max_rel = std::max(max_rel, std::abs(fd - ge.kernel[i]) / denom);
    }
    for (size_t i = 0; i < e.bias.size(); ++i) {
      const double keep = e.bias[i];
      e.bias[i] = keep + eps;
      const double lp = loss_of();
      e.bias[i] = keep - eps;
      const double lm = loss_of();
      e.bias[i] = keep;
      const double fd = (lp - lm) / (2 * eps);
      const double denom =
          std::max({std::abs(fd), std::abs(static_cast<double>(ge.bias[i])), 1e-8});
      max_rel = std::max(max_rel, std::abs(fd - ge.bias[i]) / denom);
    }
  }
  return max_rel;
}

}  // namespace

TEST_CASE("backward matches central finite differences on a random 3-layer net") {
  NetworkSpec net = sz::parse_network(
      "input img channels=2\n"
      "c1 conv in=img k=3x3 s=1 p=1 d=1 c=3\n"
      "r1 relu in=c1\n"
      "p1 pool in=r1 k=2x2 s=2 p=0\n"
      "c2 conv in=p1 k=3x3 s=1 p=1 d=1 c=2\n");
  sz::WeightStoreD w = sz::init_weights<double>(net, 0.5, 7);
  sz::TensorD x = szt::random_tensor_d({2, 8, 8}, 9, 0.1, 1.1);
  REQUIRE(fd_max_rel_error(net, w, x, "img", 1e-4) < 1e-4);
}

TEST_CASE("backward passes finite differences through concat and upsample") {
  NetworkSpec net = sz::parse_network(
      "input img channels=2\n"
      "c1 conv in=img k=3x3 s=1 p=1 d=1 c=2\n"
      "r1 relu in=c1\n"
      "p1 pool in=r1 k=3x3 s=2 p=1\n"
      "c2 conv in=p1 k=1x1 s=1 p=0 d=1 c=2\n"
      "u1 upsample in=c2 f=2\n"
      "cc concat in=u1,c1\n"
      "c3 conv in=cc k=1x1 s=1 p=0 d=1 c=2\n");
  sz::WeightStoreD w = sz::init_weights<double>(net, 0.5, 17);
  sz::TensorD x = szt::random_tensor_d({2, 6, 6}, 19, 0.1, 1.1);
  REQUIRE(fd_max_rel_error(net, w, x, "img", 1e-4) < 1e-4);
}

TEST_CASE("forward over a batch equals per-image forward") {
  NetworkSpec net = sz::parse_network(
      "input img channels=2\n"
      "c1 conv in=img k=3x3 s=1 p=1 d=1 c=3\n"
      "r1 relu in=c1\n"
      "p1 pool in=r1 k=3x3 s=2 p=1\n");
  sz::WeightStore w = sz::init_weights(net, 0.4, 5);
  Tensor batch = szt::random_tensor({2, 2, 8, 8}, 6);
  auto trace = sz::forward(net, w, {{"img", batch}});
  const Tensor& out = trace.activations.at("p1");
  for (int64_t n = 0; n < 2; ++n) {
    Tensor single({2, 8, 8});
    for (int64_t i = 0; i < single.numel(); ++i) single[i] = batch[n * single.numel() + i];
    auto st = sz::forward(net, w, {{"img", single}});
    const Tensor& sout = st.activations.at("p1");
    for (int64_t i = 0; i < sout.numel(); ++i) REQUIRE(sout[i] == out[n * sout.numel() + i]);
  }
}
