#pragma once

#include <png.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stridezero/raster.hpp"
#include "stridezero/tensor.hpp"
#include "stridezero/weights.hpp"

namespace sz {

// ---------------------------------------------------------------------------
// label palette

struct PaletteEntry {
  uint8_t r, g, b;
  const char* name;
};

// Class index <-> display colour.  Index 5 is the catch-all class.
inline const std::array<PaletteEntry, 6>& label_palette() {
  static const std::array<PaletteEntry, 6> table = {{
      {255, 255, 255, "impervious"},
      {0, 0, 255, "building"},
      {0, 255, 255, "low_vegetation"},
      {0, 255, 0, "tree"},
      {255, 255, 0, "car"},
      {255, 0, 0, "unknown"},
  }};
  return table;
}

inline std::vector<std::string> palette_class_names(int64_t k) {
  std::vector<std::string> names;
  for (int64_t i = 0; i < k && i < 6; ++i) names.push_back(label_palette()[i].name);
  for (int64_t i = 6; i < k; ++i) names.push_back("class" + std::to_string(i));
  return names;
}

struct RgbRaster {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint8_t> data;  // interleaved rgb, row-major

  uint8_t* pixel(int64_t y, int64_t x) { return data.data() + 3 * (y * width + x); }
  const uint8_t* pixel(int64_t y, int64_t x) const { return data.data() + 3 * (y * width + x); }
};

inline RgbRaster encode_labels(const LabelImage& labels) {
  RgbRaster out;
  out.width = labels.width;
  out.height = labels.height;
  out.data.resize(static_cast<size_t>(3 * labels.width * labels.height));
  for (int64_t y = 0; y < labels.height; ++y) {
    for (int64_t x = 0; x < labels.width; ++x) {
      const uint8_t l = labels.at(y, x);
      if (l >= label_palette().size()) {
        throw DataError("label " + std::to_string(l) + " has no palette colour at (" +
                        std::to_string(y) + "," + std::to_string(x) + ")");
      }
      const PaletteEntry& p = label_palette()[l];
      uint8_t* px = out.pixel(y, x);
      px[0] = p.r;
      px[1] = p.g;
      px[2] = p.b;
    }
  }
  return out;
}

inline LabelImage decode_labels(const RgbRaster& rgb) {
  LabelImage out(rgb.width, rgb.height);
  for (int64_t y = 0; y < rgb.height; ++y) {
    for (int64_t x = 0; x < rgb.width; ++x) {
      const uint8_t* px = rgb.pixel(y, x);
      int match = -1;
      for (size_t i = 0; i < label_palette().size(); ++i) {
        const PaletteEntry& p = label_palette()[i];
        if (px[0] == p.r && px[1] == p.g && px[2] == p.b) {
          match = static_cast<int>(i);
          break;
        }
      }
      if (match < 0) {
        throw DataError("colour (" + std::to_string(px[0]) + "," + std::to_string(px[1]) + "," +
                        std::to_string(px[2]) + ") is not in the label palette at (" +
                        std::to_string(y) + "," + std::to_string(x) + ")");
      }
      out.at(y, x) = static_cast<uint8_t>(match);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// DSM raster: "DSM1", u32le width, u32le height, row-major f32le samples

namespace detail {

inline void put_u32le(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline uint32_t get_u32le(const uint8_t* p) {
  return static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
         static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
}

inline void put_f32le(std::string& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32le(out, bits);
}

inline float get_f32le(const uint8_t* p) {
  const uint32_t bits = get_u32le(p);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write '" + path + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("short write to '" + path + "'");
}

}  // namespace detail

inline std::string dsm_encode(const Tensor& band) {
  if (band.rank() != 2 && !(band.rank() == 3 && band.extent(0) == 1)) {
    throw DimensionError("dsm_encode: want a single band [H,W] or [1,H,W]");
  }
  const int64_t h = band.rank() == 2 ? band.extent(0) : band.extent(1);
  const int64_t w = band.rank() == 2 ? band.extent(1) : band.extent(2);
  std::string out;
  out.reserve(static_cast<size_t>(12 + 4 * h * w));
  out += "DSM1";
  detail::put_u32le(out, static_cast<uint32_t>(w));
  detail::put_u32le(out, static_cast<uint32_t>(h));
  for (int64_t i = 0; i < h * w; ++i) detail::put_f32le(out, band[i]);
  return out;
}

inline Tensor dsm_decode(const std::string& bytes) {
  if (bytes.size() < 12 || bytes.compare(0, 4, "DSM1") != 0) {
    throw DataError("bad DSM magic (want 'DSM1')");
  }
  const auto* p = reinterpret_cast<const uint8_t*>(bytes.data());
  const uint32_t w = detail::get_u32le(p + 4);
  const uint32_t h = detail::get_u32le(p + 8);
  if (w == 0 || h == 0) throw DataError("DSM extent is zero");
  const size_t want = 12 + 4ull * w * h;
  if (bytes.size() != want) {
    throw DataError("DSM payload truncated: " + std::to_string(bytes.size()) + " bytes, want " +
                    std::to_string(want));
  }
  Tensor band({static_cast<int64_t>(h), static_cast<int64_t>(w)});
  for (int64_t i = 0; i < band.numel(); ++i) {
    band[i] = detail::get_f32le(p + 12 + 4 * i);
    if (!std::isfinite(band[i])) {
      throw DataError("non-finite elevation sample at index " + std::to_string(i));
    }
  }
  return band;
}

inline void dsm_write(const std::string& path, const Tensor& band) {
  detail::write_file(path, dsm_encode(band));
}

inline Tensor dsm_read(const std::string& path) { return dsm_decode(detail::read_file(path)); }

// ---------------------------------------------------------------------------
// weight store: "FCNW", u32le version, u32le layer count, then per layer
// u32le name length, name bytes, 4x u32le kernel extents [Cout,Cin,kh,kw],
// f32le kernel values, f32le bias values

inline constexpr uint32_t kWeightFormatVersion = 1;

inline std::string weights_encode(const WeightStore& w) {
  std::string out;
  out += "FCNW";
  detail::put_u32le(out, kWeightFormatVersion);
  detail::put_u32le(out, static_cast<uint32_t>(w.entries.size()));
  for (const auto& e : w.entries) {
    detail::put_u32le(out, static_cast<uint32_t>(e.layer.size()));
    out += e.layer;
    for (int64_t i = 0; i < 4; ++i) {
      detail::put_u32le(out, static_cast<uint32_t>(e.kernel.extent(i)));
    }
    for (int64_t i = 0; i < e.kernel.numel(); ++i) detail::put_f32le(out, e.kernel[i]);
    for (float b : e.bias) detail::put_f32le(out, b);
  }
  return out;
}

inline WeightStore weights_decode(const std::string& bytes) {
  const auto* p = reinterpret_cast<const uint8_t*>(bytes.data());
  size_t off = 0;
  auto need = [&](size_t n) {
    if (off + n > bytes.size()) throw DataError("weight payload truncated");
  };
  need(12);
  if (bytes.compare(0, 4, "FCNW") != 0) throw DataError("bad weight magic (want 'FCNW')");
  const uint32_t version = detail::get_u32le(p + 4);
  if (version != kWeightFormatVersion) {
    throw DataError("weight format version " + std::to_string(version) + " unsupported (want " +
                    std::to_string(kWeightFormatVersion) + ")");
  }
  const uint32_t layers = detail::get_u32le(p + 8);
  off = 12;
  WeightStore w;
  for (uint32_t l = 0; l < layers; ++l) {
    need(4);
    const uint32_t name_len = detail::get_u32le(p + off);
    off += 4;
    need(name_len);
    WeightStore::Entry e;
    e.layer.assign(bytes, off, name_len);
    off += name_len;
    need(16);
    std::vector<int64_t> shape(4);
    for (int i = 0; i < 4; ++i) {
      shape[static_cast<size_t>(i)] = detail::get_u32le(p + off);
      off += 4;
    }
    int64_t numel = 1;
    for (int64_t s : shape) numel *= s;
    need(static_cast<size_t>(4 * numel));
    std::vector<float> kernel(static_cast<size_t>(numel));
    for (int64_t i = 0; i < numel; ++i) {
      kernel[static_cast<size_t>(i)] = detail::get_f32le(p + off);
      off += 4;
    }
    e.kernel = Tensor(shape, std::move(kernel));
    const int64_t cout = shape[0];
    need(static_cast<size_t>(4 * cout));
    e.bias.resize(static_cast<size_t>(cout));
    for (int64_t i = 0; i < cout; ++i) {
      e.bias[static_cast<size_t>(i)] = detail::get_f32le(p + off);
      off += 4;
    }
    w.entries.push_back(std::move(e));
  }
  if (off != bytes.size()) throw DataError("trailing bytes after weight payload");
  return w;
}

inline void weights_save(const std::string& path, const WeightStore& w) {
  detail::write_file(path, weights_encode(w));
}

inline WeightStore weights_load(const std::string& path) {
  return weights_decode(detail::read_file(path));
}

inline WeightStore weights_load_checked(const std::string& path, const NetworkSpec& net) {
  WeightStore w = weights_load(path);
  w.validate_against(net);
  return w;
}

// ---------------------------------------------------------------------------
// band means sidecar (printed with round-trip precision)

inline void means_save(const std::string& path, const std::vector<float>& means) {
  std::ostringstream os;
  for (size_t i = 0; i < means.size(); ++i) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "band%zu %.9g\n", i, means[i]);
    os << buf;
  }
  detail::write_file(path, os.str());
}

inline std::vector<float> means_load(const std::string& path) {
  std::istringstream is(detail::read_file(path));
  std::vector<float> means;
  std::string name;
  float v;
  while (is >> name >> v) means.push_back(v);
  if (means.empty()) throw DataError("no band means in '" + path + "'");
  return means;
}

// ---------------------------------------------------------------------------
// PNG (8-bit RGB and grayscale)

inline void png_write_rgb(const std::string& path, const RgbRaster& rgb) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("cannot write '" + path + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
    throw DataError("png write failed for '" + path + "'");
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(rgb.width),
               static_cast<png_uint_32>(rgb.height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int64_t y = 0; y < rgb.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(rgb.pixel(y, 0)));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

inline RgbRaster png_read_rgb(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError("cannot open '" + path + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(f);
    throw DataError("png read failed for '" + path + "'");
  }
  png_init_io(png, f);
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
      png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_read_update_info(png, info);

  RgbRaster out;
  out.width = png_get_image_width(png, info);
  out.height = png_get_image_height(png, info);
  out.data.resize(static_cast<size_t>(3 * out.width * out.height));
  if (png_get_rowbytes(png, info) != static_cast<size_t>(3 * out.width)) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(f);
    throw DataError("unexpected png row layout in '" + path + "'");
  }
  for (int64_t y = 0; y < out.height; ++y) png_read_row(png, out.pixel(y, 0), nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(f);
  return out;
}

// First three bands scaled from [0,1] to 8-bit.
inline RgbRaster bands_to_rgb(const Tensor& image) {
  if (image.rank() != 3 || image.extent(0) < 3) {
    throw DimensionError("bands_to_rgb: want [C>=3,H,W]");
  }
  RgbRaster out;
  out.height = image.extent(1);
  out.width = image.extent(2);
  out.data.resize(static_cast<size_t>(3 * out.width * out.height));
  for (int64_t y = 0; y < out.height; ++y) {
    for (int64_t x = 0; x < out.width; ++x) {
      for (int64_t c = 0; c < 3; ++c) {
        const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
        out.pixel(y, x)[c] = static_cast<uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  return out;
}

// 8-bit RGB to float bands in [0,1].
inline Tensor rgb_to_bands(const RgbRaster& rgb) {
  Tensor out({3, rgb.height, rgb.width});
  for (int64_t y = 0; y < rgb.height; ++y) {
    for (int64_t x = 0; x < rgb.width; ++x) {
      for (int64_t c = 0; c < 3; ++c) {
        out.at(c, y, x) = static_cast<float>(rgb.pixel(y, x)[c]) / 255.0f;
      }
    }
  }
  return out;
}

}  // namespace sz
