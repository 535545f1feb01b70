#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "stridezero/network.hpp"
#include "stridezero/raster.hpp"
#include "stridezero/trainer.hpp"

namespace sz {

// One georaster-like scene: float image bands [C,H,W], per-pixel labels and
// a validity mask (pixels outside a rotated source are invalid).
struct SceneRaster {
  Tensor image;
  LabelImage labels;
  std::vector<uint8_t> valid;  // 1 = valid; empty means fully valid
  std::string tag;             // e.g. "r030_f1" for augmented copies

  int64_t height() const { return image.extent(1); }
  int64_t width() const { return image.extent(2); }
  int64_t channels() const { return image.extent(0); }

  bool is_valid(int64_t y, int64_t x) const {
    return valid.empty() || valid[static_cast<size_t>(y * width() + x)] != 0;
  }
  int64_t invalid_count() const {
    int64_t n = 0;
    for (uint8_t v : valid) n += v == 0;
    return n;
  }
};

namespace detail {

// Largest axis-aligned rectangle inside a w x h rectangle rotated by
// `angle_rad` about its centre (the classic closed form: for thin rectangles
// or 45-degree squares the short side fully constrains both extents,
// otherwise two corners touch).
inline std::pair<double, double> largest_rotated_rect(double w, double h, double angle_rad) {
  const double s = std::abs(std::sin(angle_rad));
  const double c = std::abs(std::cos(angle_rad));
  if (s < 1e-12) return {w, h};
  if (c < 1e-12) return {h, w};
  const double side_long = std::max(w, h);
  const double side_short = std::min(w, h);
  if (side_short <= 2.0 * s * c * side_long || std::abs(s - c) < 1e-10) {
    const double x = 0.5 * side_short;
    if (w >= h) return {x / s, x / c};
    return {x / c, x / s};
  }
  const double cos2 = c * c - s * s;
  return {(w * c - h * s) / cos2, (h * c - w * s) / cos2};
}

}  // namespace detail

// Rotates a scene about its centre (bilinear image bands, nearest-neighbour
// labels), optionally mirrored, then crops to the largest axis-aligned
// rectangle fully inside the valid area.  Returns an empty optional when the
// inscribed rectangle undercuts min_extent.
inline std::optional<SceneRaster> rotate_and_crop(const SceneRaster& scene, double angle_deg,
                                                  bool flip, int64_t min_extent = 1) {
  const int64_t h = scene.height(), w = scene.width(), cbands = scene.channels();
  const double rad = angle_deg * M_PI / 180.0;
  const double cs = std::cos(rad), sn = std::sin(rad);
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;

  SceneRaster rot;
  rot.image = Tensor({cbands, h, w});
  rot.labels = LabelImage(w, h);
  rot.valid.assign(static_cast<size_t>(h * w), 0);

  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      // inverse map: output pixel -> source coordinate
      double ox = static_cast<double>(x) - cx;
      const double oy = static_cast<double>(y) - cy;
      if (flip) ox = -ox;
      const double sx = cs * ox - sn * oy + cx;
      const double sy = sn * ox + cs * oy + cy;
      if (sx < 0.0 || sy < 0.0 || sx > w - 1 || sy > h - 1) continue;
      const int64_t x0 = static_cast<int64_t>(std::floor(sx));
      const int64_t y0 = static_cast<int64_t>(std::floor(sy));
      const int64_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - x0, fy = sy - y0;
      if (!scene.is_valid(y0, x0) || !scene.is_valid(y0, x1) || !scene.is_valid(y1, x0) ||
          !scene.is_valid(y1, x1)) {
        continue;
      }
      for (int64_t c = 0; c < cbands; ++c) {
        const double top = scene.image.at(c, y0, x0) +
                           (scene.image.at(c, y0, x1) - scene.image.at(c, y0, x0)) * fx;
        const double bot = scene.image.at(c, y1, x0) +
                           (scene.image.at(c, y1, x1) - scene.image.at(c, y1, x0)) * fx;
        rot.image.at(c, y, x) = static_cast<float>(top + (bot - top) * fy);
      }
      const int64_t ny = fy < 0.5 ? y0 : y1;
      const int64_t nx = fx < 0.5 ? x0 : x1;
      rot.labels.at(y, x) = scene.labels.at(ny, nx);
      rot.valid[static_cast<size_t>(y * w + x)] = 1;
    }
  }

  auto [cw_d, ch_d] = detail::largest_rotated_rect(static_cast<double>(w),
                                                   static_cast<double>(h), rad);
  int64_t cw = std::min<int64_t>(static_cast<int64_t>(std::floor(cw_d)), w);
  int64_t ch = std::min<int64_t>(static_cast<int64_t>(std::floor(ch_d)), h);

  // shrink until the crop window holds only valid pixels (guards against
  // resampling right on the boundary)
  auto crop_clean = [&](int64_t cwi, int64_t chi, int64_t& y0, int64_t& x0) {
    if (cwi < 1 || chi < 1) return false;
    y0 = (h - chi) / 2;
    x0 = (w - cwi) / 2;
    for (int64_t y = y0; y < y0 + chi; ++y) {
      for (int64_t x = x0; x < x0 + cwi; ++x) {
        if (!rot.valid[static_cast<size_t>(y * w + x)]) return false;
      }
    }
    return true;
  };
  int64_t y0 = 0, x0 = 0;
  int shrink = 0;
  while (shrink < 4 && !crop_clean(cw, ch, y0, x0)) {
    --cw;
    --ch;
    ++shrink;
  }
  if (shrink == 4 || cw < min_extent || ch < min_extent) return std::nullopt;

  SceneRaster out;
  out.image = crop_spatial(rot.image, y0, x0, ch, cw);
  out.labels = LabelImage(cw, ch);
  for (int64_t y = 0; y < ch; ++y)
    for (int64_t x = 0; x < cw; ++x) out.labels.at(y, x) = rot.labels.at(y0 + y, x0 + x);
  char tag[32];
  std::snprintf(tag, sizeof(tag), "r%03d_f%d", static_cast<int>(std::lround(angle_deg)),
                flip ? 1 : 0);
  out.tag = tag;
  return out;
}

struct AugmentOptions {
  double angle_step_deg = 10.0;
  bool flips = true;
  int64_t min_extent = 1;  // augmentations whose crop undercuts this are skipped
};

// All rotations (angle_step must divide 360) times flip states; each output
// is cropped to its inscribed rectangle and carries no invalid pixels.
inline std::vector<SceneRaster> augment(const SceneRaster& scene, const AugmentOptions& opts,
                                        std::vector<std::string>* skipped = nullptr) {
  if (opts.angle_step_deg <= 0.0 ||
      std::abs(std::round(360.0 / opts.angle_step_deg) * opts.angle_step_deg - 360.0) > 1e-9) {
    throw ParameterError("angle step must divide 360 degrees");
  }
  std::vector<SceneRaster> out;
  const int64_t n_angles = static_cast<int64_t>(std::llround(360.0 / opts.angle_step_deg));
  for (int flip = 0; flip < (opts.flips ? 2 : 1); ++flip) {
    for (int64_t a = 0; a < n_angles; ++a) {
      const double angle = a * opts.angle_step_deg;
      auto scene_out = rotate_and_crop(scene, angle, flip != 0, opts.min_extent);
      if (scene_out) {
        out.push_back(std::move(*scene_out));
      } else if (skipped) {
        char tag[32];
        std::snprintf(tag, sizeof(tag), "r%03d_f%d", static_cast<int>(std::lround(angle)), flip);
        skipped->push_back(tag);
      }
    }
  }
  return out;
}

// Non-overlapping training tiles; partial edge tiles are dropped.  The tile
// mask marks invalid scene pixels.
inline std::vector<TrainingTile> make_training_tiles(const SceneRaster& scene, int64_t tile) {
  if (tile < 1) throw ParameterError("tile size must be >= 1");
  std::vector<TrainingTile> out;
  const int64_t ny = scene.height() / tile;
  const int64_t nx = scene.width() / tile;
  for (int64_t ty = 0; ty < ny; ++ty) {
    for (int64_t tx = 0; tx < nx; ++tx) {
      TrainingTile t;
      t.image = crop_spatial(scene.image, ty * tile, tx * tile, tile, tile);
      t.labels = LabelImage(tile, tile);
      t.mask = IgnoreMask(tile, tile);
      for (int64_t y = 0; y < tile; ++y) {
        for (int64_t x = 0; x < tile; ++x) {
          t.labels.at(y, x) = scene.labels.at(ty * tile + y, tx * tile + x);
          t.mask.set(y, x, !scene.is_valid(ty * tile + y, tx * tile + x));
        }
      }
      out.push_back(std::move(t));
    }
  }
  return out;
}

inline void apply_band_offsets(Tensor& image, const std::vector<float>& means) {
  const int64_t c = image.extent(0), hw = image.extent(1) * image.extent(2);
  if (static_cast<int64_t>(means.size()) != c) {
    throw DimensionError("band mean count disagrees with image channels");
  }
  for (int64_t b = 0; b < c; ++b) {
    float* plane = image.data() + b * hw;
    for (int64_t i = 0; i < hw; ++i) plane[i] -= means[static_cast<size_t>(b)];
  }
}

// Per-band scalar means over every pixel of every scene, subtracted in
// place and returned for reuse at inference time.
inline std::vector<float> mean_subtract(std::vector<SceneRaster>& scenes) {
  if (scenes.empty()) throw DataError("mean_subtract: no scenes");
  const int64_t c = scenes.front().channels();
  std::vector<double> sums(static_cast<size_t>(c), 0.0);
  int64_t count = 0;
  for (const auto& s : scenes) {
    if (s.channels() != c) throw DimensionError("mean_subtract: band counts disagree");
    const int64_t hw = s.height() * s.width();
    for (int64_t b = 0; b < c; ++b) {
      const float* plane = s.image.data() + b * hw;
      for (int64_t i = 0; i < hw; ++i) sums[static_cast<size_t>(b)] += plane[i];
    }
    count += hw;
  }
  std::vector<float> means(static_cast<size_t>(c));
  for (int64_t b = 0; b < c; ++b) {
    means[static_cast<size_t>(b)] = static_cast<float>(sums[static_cast<size_t>(b)] / count);
  }
  for (auto& s : scenes) apply_band_offsets(s.image, means);
  return means;
}

// Grid of tile origins covering a raster, overlapping by `overlap` on each
// side; edge tiles anchor inward so every pixel sees full context.
struct TilePlan {
  int64_t tile = 0;
  int64_t overlap = 0;
  std::vector<int64_t> origins_y;
  std::vector<int64_t> origins_x;
};

inline std::vector<int64_t> plan_axis(int64_t extent, int64_t tile, int64_t step) {
  std::vector<int64_t> origins;
  if (tile >= extent) {
    origins.push_back(0);
    return origins;
  }
  for (int64_t o = 0;; o += step) {
    if (o + tile >= extent) {
      origins.push_back(extent - tile);
      break;
    }
    origins.push_back(o);
  }
  return origins;
}

inline TilePlan make_tile_plan(int64_t height, int64_t width, int64_t tile, int64_t overlap) {
  if (tile < 1 || overlap < 0) throw ParameterError("tile plan needs tile >= 1, overlap >= 0");
  if (tile - 2 * overlap <= 0) {
    throw ParameterError("tile plan invalid: tile minus twice the overlap is not positive (" +
                         std::to_string(tile) + " - 2*" + std::to_string(overlap) + ")");
  }
  TilePlan plan;
  plan.tile = tile;
  plan.overlap = overlap;
  const int64_t step = tile - 2 * overlap;
  plan.origins_y = plan_axis(height, tile, step);
  plan.origins_x = plan_axis(width, tile, step);
  return plan;
}

// Default test-time plan: 512-pixel tiles overlapped by half the filter
// support, both rounded up to the output-grid spacing.
inline TilePlan default_tile_plan(const NetworkSpec& net, int64_t height, int64_t width,
                                  int64_t tile = 512) {
  const FieldSummary field = receptive_field(net);
  const int64_t f = field.stride;
  int64_t overlap = (std::max(field.support_h, field.support_w) + 1) / 2;
  overlap = (overlap + f - 1) / f * f;
  tile = std::min<int64_t>(tile, std::max(height, width));
  tile = (tile + f - 1) / f * f;
  if (tile - 2 * overlap <= 0) tile = 2 * overlap + f;
  return make_tile_plan(height, width, tile, overlap);
}

// Dense prediction over a large raster: per-tile forward, bilinear
// restoration of the class probabilities, and interior-crop mosaicking.
// Each pixel is written exactly once, by the tile whose interior owns it;
// at raster borders the border tile extends its claim outward.
template <typename T>
TensorT<T> tiled_inference(const NetworkSpec& net, const WeightStoreT<T>& weights,
                           const TensorT<T>& image, const TilePlan& plan) {
  net.validate();
  if (image.rank() != 3) throw DimensionError("tiled_inference: image must be [C,H,W]");
  const FieldSummary field = receptive_field(net);
  const int64_t f = field.stride;
  const int64_t h = image.extent(1), w = image.extent(2);
  const std::string input_name = net.inputs.at(0).name;
  const std::string out_name = net.terminal();

  TensorT<T> result;
  bool allocated = false;

  for (size_t iy = 0; iy < plan.origins_y.size(); ++iy) {
    const int64_t oy = plan.origins_y[iy];
    const int64_t tile_h = std::min(plan.tile, h);
    // claimed rows: from this tile's interior edge to the next tile's
    const int64_t claim_y0 = iy == 0 ? 0 : plan.origins_y[iy] + plan.overlap;
    const int64_t claim_y1 =
        iy + 1 == plan.origins_y.size() ? h : plan.origins_y[iy + 1] + plan.overlap;
    for (size_t ix = 0; ix < plan.origins_x.size(); ++ix) {
      const int64_t ox = plan.origins_x[ix];
      const int64_t tile_w = std::min(plan.tile, w);
      const int64_t claim_x0 = ix == 0 ? 0 : plan.origins_x[ix] + plan.overlap;
      const int64_t claim_x1 =
          ix + 1 == plan.origins_x.size() ? w : plan.origins_x[ix + 1] + plan.overlap;
      if (claim_y1 <= claim_y0 || claim_x1 <= claim_x0) continue;

      TensorT<T> tile = crop_spatial(image, oy, ox, tile_h, tile_w);
      auto trace = forward(net, weights, {{input_name, std::move(tile)}});
      const TensorT<T>& coarse = trace.activations.at(out_name);
      TensorT<T> probs = f > 1 ? bilinear_upsample(coarse, f) : coarse;
      if (probs.extent(1) != tile_h || probs.extent(2) != tile_w) {
        throw DimensionError("tiled_inference: restored tile is " +
                             std::to_string(probs.extent(1)) + "x" +
                             std::to_string(probs.extent(2)) + ", expected " +
                             std::to_string(tile_h) + "x" + std::to_string(tile_w) +
                             " (tile size must be a multiple of the output spacing)");
      }
      if (!allocated) {
        result = TensorT<T>({probs.extent(0), h, w});
        allocated = true;
      }
      for (int64_t c = 0; c < probs.extent(0); ++c) {
        for (int64_t y = claim_y0; y < claim_y1; ++y) {
          for (int64_t x = claim_x0; x < claim_x1; ++x) {
            result.at(c, y, x) = probs.at(c, y - oy, x - ox);
          }
        }
      }
    }
  }
  return result;
}

// Per-pixel argmax over the class axis.
template <typename T>
LabelImage argmax_labels(const TensorT<T>& probs) {
  if (probs.rank() != 3) throw DimensionError("argmax_labels: want [K,H,W]");
  const int64_t k = probs.extent(0), h = probs.extent(1), w = probs.extent(2);
  LabelImage out(w, h);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      int64_t best = 0;
      T best_v = probs.at(0, y, x);
      for (int64_t c = 1; c < k; ++c) {
        if (probs.at(c, y, x) > best_v) {
          best_v = probs.at(c, y, x);
          best = c;
        }
      }
      out.at(y, x) = static_cast<uint8_t>(best);
    }
  }
  return out;
}

// Deterministic five-class toy scene: textured ground (class 2), strip roads
// (0), rectangular elevated buildings (1), round trees (3) and a sprinkle of
// small cars on the roads (4, kept near one percent of the pixels).  Bands
// are three colour channels in [0,1] plus a normalized-elevation band.
inline SceneRaster synth_scene(uint64_t seed, int64_t size) {
  if (size < 128) throw ParameterError("synthetic scenes need size >= 128");
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<float> noise(-0.04f, 0.04f);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  SceneRaster s;
  s.image = Tensor({4, size, size});
  s.labels = LabelImage(size, size, 2);

  struct Paint {
    float r, g, b, dsm;
  };
  auto paint = [&](int64_t y, int64_t x, const Paint& p, uint8_t label) {
    s.image.at(0, y, x) = std::clamp(p.r + noise(gen), 0.0f, 1.0f);
    s.image.at(1, y, x) = std::clamp(p.g + noise(gen), 0.0f, 1.0f);
    s.image.at(2, y, x) = std::clamp(p.b + noise(gen), 0.0f, 1.0f);
    s.image.at(3, y, x) = std::clamp(p.dsm + 0.5f * noise(gen), 0.0f, 1.0f);
    s.labels.at(y, x) = label;
  };

  // ground
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x) paint(y, x, {0.30f, 0.65f, 0.25f, 0.05f}, 2);

  // roads: one horizontal and one vertical band
  const int64_t road_w = std::max<int64_t>(12, size / 14);
  const int64_t ry = size / 3 + static_cast<int64_t>(gen() % (size / 6));
  const int64_t rx = size / 2 + static_cast<int64_t>(gen() % (size / 8));
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x) {
      const bool on_h = y >= ry && y < ry + road_w;
      const bool on_v = x >= rx && x < rx + road_w;
      if (on_h || on_v) paint(y, x, {0.55f, 0.55f, 0.55f, 0.02f}, 0);
    }

  // buildings: elevated rectangles away from the roads
  const int n_buildings = 6 + static_cast<int>(gen() % 4);
  for (int i = 0; i < n_buildings; ++i) {
    const int64_t bh = size / 10 + static_cast<int64_t>(gen() % (size / 8));
    const int64_t bw = size / 10 + static_cast<int64_t>(gen() % (size / 8));
    const int64_t by = static_cast<int64_t>(gen() % (size - bh));
    const int64_t bx = static_cast<int64_t>(gen() % (size - bw));
    const float elev = 0.55f + 0.35f * static_cast<float>(u01(gen));
    for (int64_t y = by; y < by + bh; ++y)
      for (int64_t x = bx; x < bx + bw; ++x)
        paint(y, x, {0.75f, 0.30f, 0.28f, elev}, 1);
  }

  // trees: mid-elevation disks
  const int n_trees = 10 + static_cast<int>(gen() % 6);
  for (int i = 0; i < n_trees; ++i) {
    const int64_t r = size / 28 + static_cast<int64_t>(gen() % (size / 28));
    const int64_t ty = r + static_cast<int64_t>(gen() % (size - 2 * r));
    const int64_t tx = r + static_cast<int64_t>(gen() % (size - 2 * r));
    for (int64_t y = ty - r; y <= ty + r; ++y)
      for (int64_t x = tx - r; x <= tx + r; ++x)
        if ((y - ty) * (y - ty) + (x - tx) * (x - tx) <= r * r)
          paint(y, x, {0.05f, 0.35f, 0.08f, 0.30f}, 3);
  }

  // cars: small bright boxes on the roads, ~1% of the scene; large enough to
  // keep interior pixels under a 3-pixel boundary-ignore band
  const int64_t car_h = std::max<int64_t>(8, size / 22), car_w = car_h * 2;
  const int64_t target_car_pixels = static_cast<int64_t>(0.011 * size * size);
  int64_t car_pixels = 0;
  int guard = 0;
  while (car_pixels < target_car_pixels && guard++ < 1000) {
    const bool on_h = gen() % 2 == 0;
    const int64_t cy = on_h ? ry + 1 + static_cast<int64_t>(gen() % std::max<int64_t>(
                                            1, road_w - car_h - 1))
                            : static_cast<int64_t>(gen() % (size - car_w));
    const int64_t cx = on_h ? static_cast<int64_t>(gen() % (size - car_w))
                            : rx + 1 + static_cast<int64_t>(gen() % std::max<int64_t>(
                                           1, road_w - car_h - 1));
    const int64_t ch = on_h ? car_h : car_w;
    const int64_t cw = on_h ? car_w : car_h;
    if (cy + ch >= size || cx + cw >= size) continue;
    for (int64_t y = cy; y < cy + ch; ++y)
      for (int64_t x = cx; x < cx + cw; ++x) paint(y, x, {0.92f, 0.85f, 0.10f, 0.08f}, 4);
    car_pixels += ch * cw;
  }
  return s;
}

// Class pixel counts of a label raster.
inline std::vector<int64_t> label_histogram(const LabelImage& labels, int64_t k) {
  std::vector<int64_t> hist(static_cast<size_t>(k), 0);
  for (uint8_t v : labels.data) {
    if (v < k) ++hist[v];
  }
  return hist;
}

}  // namespace sz
