#pragma once

// Evaluation metrics: per-frame EPE, PCK curves, and normalized AUC windows.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace tassn::metrics {

// Wrist-relative 3D keypoints, row-major [K,3] in millimeters.
struct Pose3D {
  int K = 0;
  std::vector<double> xyz;

  double x(int k) const { return xyz[k * 3 + 0]; }
  double y(int k) const { return xyz[k * 3 + 1]; }
  double z(int k) const { return xyz[k * 3 + 2]; }
};

struct PckCurve {
  std::vector<double> thresholds_mm;  // strictly ascending
  std::vector<double> values;         // nondecreasing fractions in [0,1]
};

inline double epe(const Pose3D& pred, const Pose3D& gt) {
  if (pred.K != gt.K || pred.K <= 0)
    throw std::invalid_argument("epe: keypoint count mismatch");
  double sum = 0.0;
  for (int k = 0; k < pred.K; ++k) {
    const double dx = pred.x(k) - gt.x(k);
    const double dy = pred.y(k) - gt.y(k);
    const double dz = pred.z(k) - gt.z(k);
    sum += std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return sum / static_cast<double>(pred.K);
}

inline PckCurve pck_curve(const std::vector<Pose3D>& preds, const std::vector<Pose3D>& gts,
                          const std::vector<double>& thresholds) {
  if (preds.empty() || preds.size() != gts.size())
    throw std::invalid_argument("pck_curve: empty or misaligned inputs");
  for (size_t i = 1; i < thresholds.size(); ++i)
    if (thresholds[i] <= thresholds[i - 1])
      throw std::invalid_argument("pck_curve: thresholds must be strictly ascending");

  std::vector<double> errors;
  for (size_t f = 0; f < preds.size(); ++f) {
    if (preds[f].K != gts[f].K) throw std::invalid_argument("pck_curve: K mismatch");
    for (int k = 0; k < preds[f].K; ++k) {
      const double dx = preds[f].x(k) - gts[f].x(k);
      const double dy = preds[f].y(k) - gts[f].y(k);
      const double dz = preds[f].z(k) - gts[f].z(k);
      errors.push_back(std::sqrt(dx * dx + dy * dy + dz * dz));
    }
  }
  PckCurve c;
  c.thresholds_mm = thresholds;
  c.values.reserve(thresholds.size());
  for (double tau : thresholds) {
    std::int64_t within = 0;
    for (double e : errors)
      if (e <= tau) ++within;
    c.values.push_back(static_cast<double>(within) / static_cast<double>(errors.size()));
  }
  return c;
}

// Default 1 mm grid over [0, 50].
inline std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int mm = 0; mm <= 50; ++mm) t.push_back(static_cast<double>(mm));
  return t;
}

// Trapezoidal integral of the curve over [lo, hi] divided by (hi - lo).
// [lo, hi] must lie inside the curve's threshold range; curve values are
// interpolated linearly at the window edges.
inline double auc(const PckCurve& c, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("auc: need lo < hi");
  if (c.thresholds_mm.size() < 2) throw std::invalid_argument("auc: curve too short");
  if (lo < c.thresholds_mm.front() - 1e-12 || hi > c.thresholds_mm.back() + 1e-12)
    throw std::out_of_range("auc: window outside curve range");

  auto value_at = [&](double x) {
    auto it = std::lower_bound(c.thresholds_mm.begin(), c.thresholds_mm.end(), x);
    if (it == c.thresholds_mm.begin()) return c.values.front();
    if (it == c.thresholds_mm.end()) return c.values.back();
    const size_t i = static_cast<size_t>(it - c.thresholds_mm.begin());
    const double x0 = c.thresholds_mm[i - 1], x1 = c.thresholds_mm[i];
    const double t = (x - x0) / (x1 - x0);
    return (1.0 - t) * c.values[i - 1] + t * c.values[i];
  };

  double integral = 0.0;
  double prev_x = lo, prev_v = value_at(lo);
  for (size_t i = 0; i < c.thresholds_mm.size(); ++i) {
    const double x = c.thresholds_mm[i];
    if (x <= lo) continue;
    if (x >= hi) break;
    const double v = c.values[i];
    integral += 0.5 * (prev_v + v) * (x - prev_x);
    prev_x = x;
    prev_v = v;
  }
  integral += 0.5 * (prev_v + value_at(hi)) * (hi - prev_x);
  return integral / (hi - lo);
}

}  // namespace tassn::metrics
