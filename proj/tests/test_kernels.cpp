#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "stridezero/kernels.hpp"

using sz::ConvParams;
using sz::Tensor;

namespace {

// Reference convolution: a direct sum over every tap, written from the
// definition with no shared code with the production kernel.
Tensor conv2d_reference(const Tensor& input, const Tensor& kernels, const std::vector<float>& bias,
                        const ConvParams& p) {
  const int64_t cin = input.extent(0), h = input.extent(1), w = input.extent(2);
  const int64_t cout = kernels.extent(0);
  const int64_t ho = (h + 2 * p.pad - p.dilation * (p.kernel_h - 1) - 1) / p.stride + 1;
  const int64_t wo = (w + 2 * p.pad - p.dilation * (p.kernel_w - 1) - 1) / p.stride + 1;
  Tensor out({cout, ho, wo});
  for (int64_t co = 0; co < cout; ++co) {
    for (int64_t oy = 0; oy < ho; ++oy) {
      for (int64_t ox = 0; ox < wo; ++ox) {
        float acc = bias[static_cast<size_t>(co)];
        for (int64_t ci = 0; ci < cin; ++ci) {
          for (int64_t ky = 0; ky < p.kernel_h; ++ky) {
            for (int64_t kx = 0; kx < p.kernel_w; ++kx) {
              const int64_t iy = oy * p.stride - p.pad + ky * p.dilation;
              const int64_t ix = ox * p.stride - p.pad + kx * p.dilation;
              const float v =
                  (iy >= 0 && iy < h && ix >= 0 && ix < w) ? input.at(ci, iy, ix) : 0.0f;
              acc += kernels.at(co, ci, ky, kx) * v;
            }
          }
        }
        out.at(co, oy, ox) = acc;
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("conv2d 1x1 identity kernel reproduces the input") {
  Tensor x = szt::random_tensor({3, 6, 7}, 11);
  Tensor k({3, 3, 1, 1});
  for (int64_t c = 0; c < 3; ++c) k.at(c, c, 0, 0) = 1.0f;
  ConvParams p;
  Tensor y = sz::conv2d(x, k, {0.0f, 0.0f, 0.0f}, p);
  REQUIRE(y.shape() == x.shape());
  REQUIRE(sz::max_abs_diff(x, y) == 0.0);
}

TEST_CASE("conv2d 5x5 dilation 2 pad 4 stride 1 preserves spatial size") {
  // effective extent 2*(5-1)+1 = 9
  Tensor x = szt::random_tensor({2, 13, 10}, 5);
  Tensor k = szt::random_tensor({4, 2, 5, 5}, 6);
  ConvParams p{5, 5, 1, 4, 2};
  REQUIRE(p.effective_h() == 9);
  Tensor y = sz::conv2d(x, k, std::vector<float>(4, 0.0f), p);
  REQUIRE(y.extent(1) == 13);
  REQUIRE(y.extent(2) == 10);
}

TEST_CASE("conv2d matches the direct-sum reference on a random dilated case") {
  Tensor x = szt::random_tensor({3, 8, 8}, 21);
  Tensor k = szt::random_tensor({5, 3, 3, 3}, 22);
  std::vector<float> bias = {0.1f, -0.2f, 0.3f, 0.0f, 1.5f};
  ConvParams p{3, 3, 1, 2, 2};
  Tensor got = sz::conv2d(x, k, bias, p);
  Tensor want = conv2d_reference(x, k, bias, p);
  REQUIRE(got.shape() == want.shape());
  REQUIRE(sz::max_abs_diff(got, want) == 0.0);
}

TEST_CASE("conv2d matches the reference across strides, pads and dilations") {
  std::mt19937_64 gen(77);
  for (int trial = 0; trial < 60; ++trial) {
    const int64_t cin = 1 + gen() % 3, cout = 1 + gen() % 3;
    const int64_t h = 4 + gen() % 9, w = 4 + gen() % 9;
    ConvParams p;
    p.kernel_h = 1 + gen() % 3;
    p.kernel_w = 1 + gen() % 3;
    p.stride = 1 + gen() % 3;
    p.dilation = 1 + gen() % 3;
    p.pad = gen() % 4;
    if (h + 2 * p.pad < p.effective_h() || w + 2 * p.pad < p.effective_w()) continue;
    Tensor x = szt::random_tensor({cin, h, w}, gen());
    Tensor k = szt::random_tensor({cout, cin, p.kernel_h, p.kernel_w}, gen());
    std::vector<float> bias(static_cast<size_t>(cout), 0.25f);
    Tensor got = sz::conv2d(x, k, bias, p);
    Tensor want = conv2d_reference(x, k, bias, p);
    REQUIRE(sz::max_abs_diff(got, want) == 0.0);
  }
}

TEST_CASE("conv2d output extent formula holds over an exhaustive small sweep") {
  for (int64_t x = 1; x <= 12; ++x)
    for (int64_t k = 1; k <= 5; ++k)
      for (int64_t d = 1; d <= 4; ++d)
        for (int64_t pad = 0; pad <= 8; ++pad)
          for (int64_t s = 1; s <= 4; ++s) {
            const int64_t eff = d * (k - 1) + 1;
            if (x + 2 * pad < eff) continue;
            Tensor in({1, x, x});
            Tensor ker({1, 1, k, k});
            ConvParams p{k, k, s, pad, d};
            Tensor out = sz::conv2d(in, ker, {0.0f}, p);
            const int64_t want = (x + 2 * pad - d * (k - 1) - 1) / s + 1;
            REQUIRE(out.extent(1) == want);
            REQUIRE(out.extent(2) == want);
          }
}

TEST_CASE("conv2d with dilation equals dense conv with a zero-interleaved kernel, bit-exact") {
  std::mt19937_64 gen(123);
  for (int trial = 0; trial < 25; ++trial) {
    const int64_t cin = 1 + gen() % 2, cout = 1 + gen() % 3;
    const int64_t k = 2 + gen() % 3;
    const int64_t d = 2 + gen() % 3;
    const int64_t eff = d * (k - 1) + 1;
    const int64_t h = eff + gen() % 6, w = eff + gen() % 6;
    Tensor x = szt::random_tensor({cin, h, w}, gen());
    Tensor ker = szt::random_tensor({cout, cin, k, k}, gen());
    std::vector<float> bias(static_cast<size_t>(cout));
    for (auto& b : bias) b = static_cast<float>(gen() % 7) * 0.5f;

    Tensor spread({cout, cin, eff, eff});
    for (int64_t co = 0; co < cout; ++co)
      for (int64_t ci = 0; ci < cin; ++ci)
        for (int64_t ky = 0; ky < k; ++ky)
          for (int64_t kx = 0; kx < k; ++kx)
            spread.at(co, ci, ky * d, kx * d) = ker.at(co, ci, ky, kx);

    ConvParams dil{k, k, 1, 1, d};
    ConvParams dense{eff, eff, 1, 1, 1};
    Tensor a = sz::conv2d(x, ker, bias, dil);
    Tensor b = sz::conv2d(x, spread, bias, dense);
    REQUIRE(a.shape() == b.shape());
    for (int64_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
  }
}

TEST_CASE("conv2d reports the offending axis on mismatch") {
  Tensor x({2, 4, 4});
  Tensor k({1, 3, 3, 3});
  REQUIRE_THROWS_MATCHES(sz::conv2d(x, k, {0.0f}, ConvParams{3, 3, 1, 0, 1}), sz::DimensionError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("channel")));
  Tensor k2({1, 2, 3, 3});
  REQUIRE_THROWS_MATCHES(sz::conv2d(x, k2, {0.0f}, ConvParams{3, 3, 1, 0, 4}), sz::DimensionError,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("height")));
}

TEST_CASE("maxpool2d constant input gives constant output") {
  Tensor x = Tensor::full({2, 9, 9}, 3.25f);
  auto [y, args] = sz::maxpool2d(x, 3, 3, 2, 1);
  for (int64_t i = 0; i < y.numel(); ++i) REQUIRE(y[i] == 3.25f);
  REQUIRE(args.size() == static_cast<size_t>(y.numel()));
}

TEST_CASE("maxpool2d 17x17 window pad 8 stride 1 preserves spatial size") {
  Tensor x = szt::random_tensor({1, 21, 18}, 9);
  auto [y, args] = sz::maxpool2d(x, 17, 17, 1, 8);
  REQUIRE(y.extent(1) == 21);
  REQUIRE(y.extent(2) == 18);
}

TEST_CASE("maxpool2d streaming equals the naive scan on a 16x16 / 9x9 case") {
  Tensor x = szt::random_tensor({1, 16, 16}, 31);
  auto [a, arga] = sz::maxpool2d(x, 9, 9, 1, 4);
  auto [b, argb] = sz::maxpool2d_naive(x, 9, 9, 1, 4);
  REQUIRE(a.shape() == b.shape());
  for (int64_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
  REQUIRE(arga == argb);
}

TEST_CASE("maxpool2d streaming equals the naive scan over 1000 random cases") {
  std::mt19937_64 gen(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const int64_t c = 1 + gen() % 2;
    const int64_t h = 2 + gen() % 12, w = 2 + gen() % 12;
    const int64_t kh = 1 + gen() % 5, kw = 1 + gen() % 5;
    const int64_t stride = 1 + gen() % 3;
    const int64_t pad = gen() % 3;
    if (h + 2 * pad < kh || w + 2 * pad < kw) continue;
    Tensor x({c, h, w});
    // coarse quantization to force ties
    std::uniform_int_distribution<int> q(-3, 3);
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(q(gen));
    auto [a, arga] = sz::maxpool2d(x, kh, kw, stride, pad);
    auto [b, argb] = sz::maxpool2d_naive(x, kh, kw, stride, pad);
    for (int64_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b[i]);
    REQUIRE(arga == argb);
  }
}

TEST_CASE("maxpool2d ties select the lowest linear input index") {
  Tensor x = Tensor::full({1, 4, 4}, 1.0f);
  auto [y, args] = sz::maxpool2d(x, 2, 2, 2, 0);
  REQUIRE(args == sz::ArgIndices{0, 2, 8, 10});
}

TEST_CASE("maxpool2d padding is never selected when a real pixel is in the window") {
  Tensor x = Tensor::full({1, 3, 3}, -5.0f);
  auto [y, args] = sz::maxpool2d(x, 3, 3, 1, 1);
  for (int64_t i = 0; i < y.numel(); ++i) {
    REQUIRE(y[i] == -5.0f);
    REQUIRE(args[static_cast<size_t>(i)] != sz::kNoArg);
  }
}

TEST_CASE("maxpool2d rejects windows larger than the padded input") {
  Tensor x({1, 4, 4});
  REQUIRE_THROWS_AS(sz::maxpool2d(x, 7, 7, 1, 1), sz::DimensionError);
}

TEST_CASE("maxpool2d backward routes gradient to the argmax") {
  Tensor x({1, 2, 2});
  x.at(0, 0, 0) = 1.0f;
  x.at(0, 0, 1) = 4.0f;
  x.at(0, 1, 0) = 2.0f;
  x.at(0, 1, 1) = 3.0f;
  auto [y, args] = sz::maxpool2d(x, 2, 2, 2, 0);
  Tensor g({1, 1, 1});
  g[0] = 2.5f;
  Tensor gi = sz::maxpool2d_backward(x.shape(), args, g);
  REQUIRE(gi.at(0, 0, 1) == 2.5f);
  REQUIRE(gi.at(0, 0, 0) == 0.0f);
}

TEST_CASE("relu definitional cases") {
  Tensor neg = Tensor::full({1, 2, 2}, -3.0f);
  Tensor zr = sz::relu(neg);
  for (int64_t i = 0; i < zr.numel(); ++i) REQUIRE(zr[i] == 0.0f);

  Tensor pos = Tensor::full({1, 2, 2}, 3.0f);
  REQUIRE(sz::max_abs_diff(sz::relu(pos), pos) == 0.0);

  Tensor x({3, 1, 1}, {-1.0f, 0.0f, 2.0f});
  Tensor y = sz::relu(x);
  REQUIRE(y[0] == 0.0f);
  REQUIRE(y[1] == 0.0f);
  REQUIRE(y[2] == 2.0f);
}

TEST_CASE("softmax_channels analytic cases") {
  Tensor one = szt::random_tensor({1, 3, 3}, 4);
  Tensor y = sz::softmax_channels(one);
  for (int64_t i = 0; i < y.numel(); ++i) REQUIRE(y[i] == Catch::Approx(1.0));

  Tensor two({2, 1, 1}, {0.7f, 0.7f});
  Tensor p = sz::softmax_channels(two);
  REQUIRE(p[0] == Catch::Approx(0.5));
  REQUIRE(p[1] == Catch::Approx(0.5));

  Tensor logits({2, 1, 1}, {0.0f, std::log(3.0f)});
  Tensor q = sz::softmax_channels(logits);
  REQUIRE(q[0] == Catch::Approx(0.25).margin(1e-6));
  REQUIRE(q[1] == Catch::Approx(0.75).margin(1e-6));
}

TEST_CASE("softmax_channels sums to one for large random logits") {
  Tensor x = szt::random_tensor({7, 9, 9}, 99, -50.0f, 50.0f);
  Tensor p = sz::softmax_channels(x);
  for (int64_t y = 0; y < 9; ++y) {
    for (int64_t xx = 0; xx < 9; ++xx) {
      double sum = 0.0;
      for (int64_t c = 0; c < 7; ++c) sum += p.at(c, y, xx);
      REQUIRE(std::abs(sum - 1.0) <= 1e-6);
    }
  }
}

TEST_CASE("bilinear_upsample factor 1 is the identity") {
  Tensor x = szt::random_tensor({2, 5, 4}, 3);
  REQUIRE(sz::max_abs_diff(sz::bilinear_upsample(x, 1), x) == 0.0);
}

TEST_CASE("bilinear_upsample preserves constants at any factor") {
  Tensor x = Tensor::full({3, 4, 4}, 2.5f);
  for (int64_t f : {2, 3, 5}) {
    Tensor y = sz::bilinear_upsample(x, f);
    REQUIRE(y.extent(1) == 4 * f);
    for (int64_t i = 0; i < y.numel(); ++i) REQUIRE(y[i] == Catch::Approx(2.5).margin(1e-6));
  }
}

TEST_CASE("bilinear_upsample matches a per-pixel evaluation of the coordinate formula") {
  Tensor x({1, 2, 2}, {0.0f, 1.0f, 2.0f, 3.0f});
  const int64_t f = 2;
  Tensor y = sz::bilinear_upsample(x, f);
  for (int64_t oy = 0; oy < 4; ++oy) {
    for (int64_t ox = 0; ox < 4; ++ox) {
      auto src = [&](int64_t i) {
        double s = (i + 0.5) / static_cast<double>(f) - 0.5;
        return std::min(std::max(s, 0.0), 1.0);
      };
      const double sy = src(oy), sx = src(ox);
      const int64_t y0 = static_cast<int64_t>(std::floor(sy));
      const int64_t x0 = static_cast<int64_t>(std::floor(sx));
      const int64_t y1 = std::min<int64_t>(y0 + 1, 1), x1 = std::min<int64_t>(x0 + 1, 1);
      const double wy = sy - y0, wx = sx - x0;
      const double want = (1 - wy) * ((1 - wx) * x.at(0, y0, x0) + wx * x.at(0, y0, x1)) +
                          wy * ((1 - wx) * x.at(0, y1, x0) + wx * x.at(0, y1, x1));
      REQUIRE(y.at(0, oy, ox) == Catch::Approx(want).margin(1e-6));
    }
  }
}

TEST_CASE("bilinear_upsample then subsample at the same factor is identity on constants") {
  Tensor x = Tensor::full({1, 6, 6}, -0.75f);
  for (int64_t f : {2, 4}) {
    Tensor up = sz::bilinear_upsample(x, f);
    for (int64_t yy = 0; yy < 6; ++yy)
      for (int64_t xx = 0; xx < 6; ++xx)
        REQUIRE(up.at(0, yy * f, xx * f) == Catch::Approx(-0.75).margin(1e-6));
  }
}

TEST_CASE("bilinear_upsample rejects factor < 1") {
  Tensor x({1, 2, 2});
  REQUIRE_THROWS_AS(sz::bilinear_upsample(x, 0), sz::ParameterError);
}

TEST_CASE("concat_channels layout and edge cases") {
  Tensor a = szt::random_tensor({3, 4, 5}, 1);
  Tensor b = szt::random_tensor({1, 4, 5}, 2);
  Tensor y = sz::concat_channels(a, b);
  REQUIRE(y.extent(0) == 4);
  for (int64_t yy = 0; yy < 4; ++yy)
    for (int64_t xx = 0; xx < 5; ++xx) {
      REQUIRE(y.at(0, yy, xx) == a.at(0, yy, xx));
      REQUIRE(y.at(3, yy, xx) == b.at(0, yy, xx));
    }

  Tensor c = szt::random_tensor({2, 3, 3}, 3);
  REQUIRE_THROWS_AS(sz::concat_channels(a, c), sz::DimensionError);
}

TEST_CASE("dropout_train keeps expectation and reuses the mask factors") {
  Tensor x = Tensor::full({1, 32, 32}, 1.0f);
  auto [y, factors] = sz::dropout_train(x, 0.5, 42);
  double mean = 0.0;
  for (int64_t i = 0; i < y.numel(); ++i) {
    REQUIRE((y[i] == 0.0f || y[i] == 2.0f));
    mean += y[i];
  }
  mean /= static_cast<double>(y.numel());
  REQUIRE(mean == Catch::Approx(1.0).margin(0.15));
  auto [y2, f2] = sz::dropout_train(x, 0.5, 42);
  REQUIRE(sz::max_abs_diff(y, y2) == 0.0);
}
