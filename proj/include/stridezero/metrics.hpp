#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stridezero/raster.hpp"

namespace sz {

// Rows are ground truth, columns are prediction.
struct ConfusionMatrix {
  int64_t k = 0;
  std::vector<int64_t> counts;  // k*k, row-major
  std::vector<std::string> class_names;

  explicit ConfusionMatrix(int64_t classes, std::vector<std::string> names = {})
      : k(classes), counts(static_cast<size_t>(classes * classes), 0),
        class_names(std::move(names)) {
    if (classes < 1) throw ParameterError("confusion matrix needs at least one class");
    if (class_names.empty()) {
      for (int64_t i = 0; i < classes; ++i) class_names.push_back("class" + std::to_string(i));
    }
  }

  int64_t& at(int64_t gt, int64_t pred) { return counts[static_cast<size_t>(gt * k + pred)]; }
  int64_t at(int64_t gt, int64_t pred) const {
    return counts[static_cast<size_t>(gt * k + pred)];
  }

  int64_t total() const {
    int64_t t = 0;
    for (int64_t c : counts) t += c;
    return t;
  }
  int64_t row_sum(int64_t gt) const {
    int64_t t = 0;
    for (int64_t p = 0; p < k; ++p) t += at(gt, p);
    return t;
  }
  int64_t col_sum(int64_t pred) const {
    int64_t t = 0;
    for (int64_t g = 0; g < k; ++g) t += at(g, pred);
    return t;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
    if (other.k != k) throw DimensionError("confusion matrix sizes disagree");
    for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
    return *this;
  }
};

namespace detail {

// Sliding min and max of uint8 labels over one line, window 2r+1 centered,
// borders truncated.  Monotonic-deque pass, cost independent of r.
inline void sliding_minmax_line(const uint8_t* vals, int64_t len, int64_t radius, uint8_t* out_min,
                                uint8_t* out_max) {
  std::deque<int64_t> qmin, qmax;
  int64_t next = 0;
  for (int64_t o = 0; o < len; ++o) {
    const int64_t hi = std::min(o + radius + 1, len);
    for (; next < hi; ++next) {
      while (!qmin.empty() && vals[qmin.back()] > vals[next]) qmin.pop_back();
      qmin.push_back(next);
      while (!qmax.empty() && vals[qmax.back()] < vals[next]) qmax.pop_back();
      qmax.push_back(next);
    }
    const int64_t lo = o - radius;
    while (qmin.front() < lo) qmin.pop_front();
    while (qmax.front() < lo) qmax.pop_front();
    out_min[o] = vals[qmin.front()];
    out_max[o] = vals[qmax.front()];
  }
}

}  // namespace detail

// Masks every pixel that has a differently-labelled pixel within Chebyshev
// distance <= radius.  Runs as separable sliding min/max over the label
// values: a square window holds two labels iff its min and max differ.
inline IgnoreMask boundary_ignore_mask(const LabelImage& gt, int64_t radius = 3) {
  if (radius < 0) throw ParameterError("boundary radius must be >= 0");
  IgnoreMask mask(gt.width, gt.height);
  if (radius == 0 || gt.numel() == 0) return mask;

  const int64_t w = gt.width, h = gt.height;
  std::vector<uint8_t> row_min(static_cast<size_t>(w * h)), row_max(static_cast<size_t>(w * h));
  for (int64_t y = 0; y < h; ++y) {
    detail::sliding_minmax_line(gt.data.data() + y * w, w, radius, row_min.data() + y * w,
                                row_max.data() + y * w);
  }
  std::vector<uint8_t> cmin(static_cast<size_t>(h)), cmax(static_cast<size_t>(h)),
      colv(static_cast<size_t>(h));
  for (int64_t x = 0; x < w; ++x) {
    for (int64_t y = 0; y < h; ++y) colv[static_cast<size_t>(y)] = row_min[y * w + x];
    detail::sliding_minmax_line(colv.data(), h, radius, cmin.data(), cmax.data());
    std::vector<uint8_t> lo(cmin);
    for (int64_t y = 0; y < h; ++y) colv[static_cast<size_t>(y)] = row_max[y * w + x];
    detail::sliding_minmax_line(colv.data(), h, radius, cmin.data(), cmax.data());
    for (int64_t y = 0; y < h; ++y) {
      mask.set(y, x, lo[static_cast<size_t>(y)] != cmax[static_cast<size_t>(y)]);
    }
  }
  return mask;
}

// Counts over unmasked pixels.  Ground-truth pixels equal to ignore_gt_label
// (when given) are skipped as well; any other label outside [0,k) is a data
// error.
inline ConfusionMatrix confusion(const LabelImage& pred, const LabelImage& gt,
                                 const IgnoreMask& mask, int64_t k,
                                 std::optional<int64_t> ignore_gt_label = {},
                                 std::vector<std::string> class_names = {}) {
  if (pred.width != gt.width || pred.height != gt.height) {
    throw DimensionError("confusion: prediction and ground truth extents disagree");
  }
  if (mask.width != gt.width || mask.height != gt.height) {
    throw DimensionError("confusion: mask extent disagrees with rasters");
  }
  ConfusionMatrix m(k, std::move(class_names));
  for (int64_t y = 0; y < gt.height; ++y) {
    for (int64_t x = 0; x < gt.width; ++x) {
      if (mask.ignored(y, x)) continue;
      const int64_t g = gt.at(y, x);
      if (ignore_gt_label && g == *ignore_gt_label) continue;
      const int64_t p = pred.at(y, x);
      if (g < 0 || g >= k) {
        throw DataError("ground-truth label " + std::to_string(g) + " outside [0," +
                        std::to_string(k) + ") at (" + std::to_string(y) + "," +
                        std::to_string(x) + ")");
      }
      if (p < 0 || p >= k) {
        throw DataError("predicted label " + std::to_string(p) + " outside [0," +
                        std::to_string(k) + ") at (" + std::to_string(y) + "," +
                        std::to_string(x) + ")");
      }
      ++m.at(g, p);
    }
  }
  return m;
}

struct Scores {
  std::vector<double> f1;            // per class; NaN when the class is vacuous
  std::vector<bool> class_in_gt;     // row sum > 0
  std::vector<bool> class_vacuous;   // absent from both gt and prediction
  double overall_f1 = 0.0;           // unweighted mean over classes present in gt
  double overall_accuracy = 0.0;     // trace / total
};

inline Scores scores(const ConfusionMatrix& m) {
  const int64_t total = m.total();
  if (total == 0) throw DataError("scores: empty confusion matrix (all pixels masked?)");
  Scores s;
  int64_t trace = 0;
  double f1_sum = 0.0;
  int64_t f1_count = 0;
  for (int64_t c = 0; c < m.k; ++c) {
    const int64_t tp = m.at(c, c);
    trace += tp;
    const int64_t fp = m.col_sum(c) - tp;
    const int64_t fn = m.row_sum(c) - tp;
    const bool in_gt = m.row_sum(c) > 0;
    const bool vacuous = !in_gt && m.col_sum(c) == 0;
    s.class_in_gt.push_back(in_gt);
    s.class_vacuous.push_back(vacuous);
    if (vacuous) {
      s.f1.push_back(std::numeric_limits<double>::quiet_NaN());
    } else {
      s.f1.push_back(2.0 * tp / static_cast<double>(2 * tp + fp + fn));
    }
    if (in_gt) {
      f1_sum += s.f1.back();
      ++f1_count;
    }
  }
  s.overall_f1 = f1_count > 0 ? f1_sum / f1_count : 0.0;
  s.overall_accuracy = static_cast<double>(trace) / static_cast<double>(total);
  return s;
}

// Per-class F1 / overall F1 / overall accuracy table.
inline std::string score_table(const ConfusionMatrix& m, const Scores& s) {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%-18s %-10s %-12s %-12s\n", "class", "F1", "gt pixels",
                "pred pixels");
  os << buf;
  for (int64_t c = 0; c < m.k; ++c) {
    if (s.class_vacuous[static_cast<size_t>(c)]) {
      std::snprintf(buf, sizeof(buf), "%-18s %-10s %-12lld %-12lld (absent)\n",
                    m.class_names[static_cast<size_t>(c)].c_str(), "-",
                    static_cast<long long>(m.row_sum(c)), static_cast<long long>(m.col_sum(c)));
    } else {
      std::snprintf(buf, sizeof(buf), "%-18s %-10.4f %-12lld %-12lld\n",
                    m.class_names[static_cast<size_t>(c)].c_str(), s.f1[static_cast<size_t>(c)],
                    static_cast<long long>(m.row_sum(c)), static_cast<long long>(m.col_sum(c)));
    }
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "overall F1 %.4f, overall accuracy %.4f, pixels %lld\n",
                s.overall_f1, s.overall_accuracy, static_cast<long long>(m.total()));
  os << buf;
  return os.str();
}

}  // namespace sz
