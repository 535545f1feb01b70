// Regenerates the golden byte-level fixtures under tests/data/.
#include <cstdio>

#include "stridezero/io.hpp"

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : "tests/data";
  sz::Tensor band({2, 3}, {0.0f, 1.5f, -2.25f, 3.0f, 100.125f, -0.5f});
  sz::dsm_write(dir + "/golden.dsm", band);

  sz::WeightStore w;
  sz::WeightStore::Entry e1;
  e1.layer = "conv1";
  e1.kernel = sz::Tensor({2, 1, 2, 2}, {0.5f, -0.25f, 1.0f, 0.0f, -1.5f, 2.0f, 0.125f, -0.75f});
  e1.bias = {0.1f, -0.2f};
  w.entries.push_back(e1);
  sz::WeightStore::Entry e2;
  e2.layer = "score";
  e2.kernel = sz::Tensor({1, 2, 1, 1}, {3.0f, -4.0f});
  e2.bias = {0.0f};
  w.entries.push_back(e2);
  sz::weights_save(dir + "/golden.fcnw", w);

  sz::LabelImage labels(3, 2);
  for (int64_t i = 0; i < 6; ++i) labels.data[static_cast<size_t>(i)] = static_cast<uint8_t>(i);
  sz::png_write_rgb(dir + "/golden_labels.png", sz::encode_labels(labels));
  std::printf("fixtures written to %s\n", dir.c_str());
  return 0;
}
