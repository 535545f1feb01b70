#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "stridezero/cost.hpp"

using sz::CostLayer;

namespace {

std::string cost_path(const std::string& name) {
  return std::string(SZ_SPEC_DIR) + "/../cost/" + name;
}

}  // namespace

TEST_CASE("lambda: one 1x1 layer on a 1x1 image is a single computation") {
  std::vector<CostLayer> layers = {{"l1", 1, 1, 1, 1, 1}};
  REQUIRE(sz::lambda_no_ds(layers, 1, 1) == 1);
}

TEST_CASE("lambda on the two-layer example evaluates to 136800") {
  std::vector<CostLayer> layers = {{"l1", 3, 3, 3, 8, 1}, {"l2", 3, 3, 8, 16, 2}};
  REQUIRE(sz::lambda_no_ds(layers, 10, 10) == 136800);
}

TEST_CASE("lambda0 on the two-layer example evaluates to 806400") {
  std::vector<CostLayer> layers = {{"l1", 3, 3, 3, 8, 1}, {"l2", 3, 3, 8, 16, 2}};
  REQUIRE(sz::lambda_shift_stitch(layers, 10, 10) == 806400);
}

TEST_CASE("lambda is blind to dilation: holes are free") {
  // the cost model sees only kernel extent and channels, so a dilated variant
  // of the same table is the same table
  std::vector<CostLayer> layers = {{"l1", 3, 3, 3, 8, 1}, {"l2", 3, 3, 8, 16, 2}};
  REQUIRE(sz::lambda_no_ds(layers, 10, 10) == 136800);
}

TEST_CASE("single-layer speed-up is exactly 4") {
  std::vector<CostLayer> layers = {{"l1", 7, 7, 3, 96, 1}};
  REQUIRE(sz::lambda_shift_stitch(layers, 5, 9) == 4 * sz::lambda_no_ds(layers, 5, 9));
  REQUIRE(sz::speedup_eta(layers) == Catch::Approx(4.0));
}

TEST_CASE("the lambda ratio is independent of the image extent") {
  std::vector<CostLayer> layers = {{"a", 3, 3, 4, 8, 1}, {"b", 5, 5, 8, 12, 2},
                                   {"c", 1, 1, 12, 6, 3}};
  const double eta = sz::speedup_eta(layers);
  for (auto [w, h] : {std::pair<int64_t, int64_t>{1, 1}, {13, 7}, {640, 480}}) {
    const double ratio = static_cast<double>(sz::lambda_shift_stitch(layers, w, h)) /
                         static_cast<double>(sz::lambda_no_ds(layers, w, h));
    REQUIRE(ratio == Catch::Approx(eta).epsilon(1e-12));
    // exact rational equality via cross multiplication
    REQUIRE(sz::lambda_shift_stitch(layers, w, h) * sz::lambda_no_ds(layers, 1, 1) ==
            sz::lambda_shift_stitch(layers, 1, 1) * sz::lambda_no_ds(layers, w, h));
  }
}

TEST_CASE("eta is invariant to uniform channel scaling") {
  std::vector<CostLayer> layers = {{"a", 3, 3, 4, 8, 1}, {"b", 3, 3, 8, 16, 2}};
  std::vector<CostLayer> scaled = layers;
  for (auto& l : scaled) {
    l.n_in *= 3;
    l.n_out *= 3;
  }
  REQUIRE(sz::speedup_eta(layers) == Catch::Approx(sz::speedup_eta(scaled)).epsilon(1e-12));
}

TEST_CASE("eta exceeds 1 for random layer tables") {
  std::mt19937_64 gen(5150);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<CostLayer> layers;
    const int n = 1 + static_cast<int>(gen() % 6);
    int64_t prev = 1 + static_cast<int64_t>(gen() % 16);
    for (int i = 0; i < n; ++i) {
      const int64_t next = 1 + static_cast<int64_t>(gen() % 32);
      const int64_t k = 1 + static_cast<int64_t>(gen() % 7);
      layers.push_back({"l" + std::to_string(i), k, k, prev, next, i + 1});
      prev = next;
    }
    REQUIRE(sz::speedup_eta(layers) > 1.0);
    REQUIRE(sz::lambda_shift_stitch(layers, 3, 3) >= sz::lambda_no_ds(layers, 3, 3));
  }
}

TEST_CASE("the shipped AlexNet-style table reproduces a speed-up of 73.24") {
  auto layers = sz::parse_cost_table_file(cost_path("alexnet.cost"));
  REQUIRE(layers.size() == 5);
  const double eta = sz::speedup_eta(layers);
  REQUIRE(std::abs(eta - 73.24) / 73.24 < 0.01);
}

TEST_CASE("the shipped VGG-16 table reproduces a speed-up of 21.29") {
  auto layers = sz::parse_cost_table_file(cost_path("vgg16.cost"));
  REQUIRE(layers.size() == 13);
  const double eta = sz::speedup_eta(layers);
  REQUIRE(std::abs(eta - 21.29) / 21.29 < 0.01);
}

TEST_CASE("cost layers derived from the VGG-16 network spec match the shipped table") {
  sz::NetworkSpec net = sz::parse_network_file(std::string(SZ_SPEC_DIR) + "/vgg16.net");
  auto derived = sz::cost_layers_from_network(net);
  // drop the dense-head convolutions (fc6/fc7/score) to mirror the table
  derived.resize(13);
  auto shipped = sz::parse_cost_table_file(cost_path("vgg16.cost"));
  REQUIRE(derived.size() == shipped.size());
  for (size_t i = 0; i < derived.size(); ++i) {
    REQUIRE(derived[i].level == shipped[i].level);
    REQUIRE(derived[i].n_in == shipped[i].n_in);
    REQUIRE(derived[i].n_out == shipped[i].n_out);
    REQUIRE(derived[i].macs_per_pixel() == shipped[i].macs_per_pixel());
  }
  REQUIRE(sz::speedup_eta(derived) == Catch::Approx(sz::speedup_eta(shipped)).epsilon(1e-12));
}

TEST_CASE("cost report serializes both table and key=value forms") {
  auto layers = sz::parse_cost_table_file(cost_path("alexnet.cost"));
  sz::CostReport r = sz::cost_report(layers, 224, 224);
  REQUIRE(r.lambda0 == sz::lambda_shift_stitch(layers, 224, 224));
  REQUIRE(r.lambda == sz::lambda_no_ds(layers, 224, 224));
  REQUIRE(r.to_keyvals().find("eta=73.2") != std::string::npos);
  REQUIRE(r.to_table().find("conv5") != std::string::npos);
}

TEST_CASE("timing: stride-4 toy net is slower interleaved than dense") {
  sz::NetworkSpec net = sz::parse_network(
      "input img channels=2\n"
      "c1 conv in=img k=3x3 s=2 p=1 d=1 c=4\n"
      "r1 relu in=c1\n"
      "c2 conv in=r1 k=3x3 s=2 p=1 d=1 c=4\n");
  sz::WeightStore w = sz::init_weights(net, 0.1, 3);
  sz::Tensor x = szt::random_tensor({2, 64, 64}, 4);
  auto t = sz::time_comparison(net, w, x, 3);
  REQUIRE(t.passes == 16);
  REQUIRE(t.t_stitch_seconds > t.t_no_ds_seconds);
}
