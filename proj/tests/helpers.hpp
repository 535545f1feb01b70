#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "stridezero/tensor.hpp"

namespace szt {

inline sz::Tensor random_tensor(std::vector<int64_t> shape, uint64_t seed, float lo = -1.0f,
                                float hi = 1.0f) {
  sz::Tensor t(std::move(shape));
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = u(gen);
  return t;
}

inline sz::TensorD random_tensor_d(std::vector<int64_t> shape, uint64_t seed, double lo = -1.0,
                                   double hi = 1.0) {
  sz::TensorD t(std::move(shape));
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = u(gen);
  return t;
}

}  // namespace szt
