#pragma once

// Camera projection and differentiable silhouette rasterization. Coverage of
// a pixel is 1 - prod_f (1 - sigmoid(d_f / tau)) with d_f the signed 2D
// distance to the projected triangle f (positive inside). Fully analytic
// gradients with respect to vertex positions.

#include "tassn/tensor.hpp"

#include <array>
#include <cmath>
#include <memory>
#include <vector>

namespace tassn::render {

struct Camera {
  double fx = 0.0, fy = 0.0;  // focal lengths, px
  double cx = 0.0, cy = 0.0;  // principal point, px
  double z_root = 0.0;        // fixed root depth, mm

  void validate() const {
    if (fx <= 0.0 || fy <= 0.0) throw std::invalid_argument("Camera: focal must be > 0");
  }
};

// Pinhole projection of wrist-relative points: u = fx*x/(z+z_root)+cx.
// pts: [M,3] -> [M,2].
inline ad::Var project(ad::Tape& tape, const Camera& cam, ad::Var pts) {
  cam.validate();
  const ad::Tensor& tp = tape.val(pts);
  if (tp.shape.size() != 2 || tp.shape[1] != 3)
    throw std::invalid_argument("project: expects [M,3] points");
  const int M = tp.shape[0];
  ad::Tensor out = ad::Tensor::zeros({M, 2});
  for (int m = 0; m < M; ++m) {
    const double x = tp.values[m * 3 + 0], y = tp.values[m * 3 + 1],
                 z = tp.values[m * 3 + 2] + cam.z_root;
    if (z <= 0.0)
      throw std::domain_error("project: point " + std::to_string(m) + " behind camera");
    out.values[m * 2 + 0] = cam.fx * x / z + cam.cx;
    out.values[m * 2 + 1] = cam.fy * y / z + cam.cy;
  }
  return tape.custom(
      std::move(out), {pts},
      [cam, M](ad::Tape&, const ad::Tensor& o, std::vector<ad::Tensor*> parents) {
        ad::Tensor& p = *parents[0];
        if (!p.requires_grad && p.grad.empty()) return;
        for (int m = 0; m < M; ++m) {
          const double x = p.values[m * 3 + 0], y = p.values[m * 3 + 1],
                       z = p.values[m * 3 + 2] + cam.z_root;
          const double gu = o.grad[m * 2 + 0], gv = o.grad[m * 2 + 1];
          p.grad[m * 3 + 0] += gu * cam.fx / z;
          p.grad[m * 3 + 1] += gv * cam.fy / z;
          p.grad[m * 3 + 2] += -(gu * cam.fx * x + gv * cam.fy * y) / (z * z);
        }
      },
      "project");
}

namespace detail {

// Point-segment distance helpers: returns squared distance, the segment
// parameter t, and the unit direction from the closest point toward p.
struct EdgeHit {
  double dist = 0.0;
  double t = 0.0;
  double nx = 0.0, ny = 0.0;
};

inline EdgeHit point_segment(double px, double py, double ax, double ay, double bx,
                             double by) {
  const double ex = bx - ax, ey = by - ay;
  const double len2 = ex * ex + ey * ey;
  double t = len2 > 0.0 ? ((px - ax) * ex + (py - ay) * ey) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double qx = ax + t * ex, qy = ay + t * ey;
  EdgeHit h;
  h.t = t;
  const double dx = px - qx, dy = py - qy;
  h.dist = std::sqrt(dx * dx + dy * dy);
  if (h.dist > 1e-12) {
    h.nx = dx / h.dist;
    h.ny = dy / h.dist;
  }
  return h;
}

struct FaceDistance {
  double signed_dist = 0.0;  // positive inside
  int edge = 0;              // nearest edge index (v[edge] -> v[(edge+1)%3])
  EdgeHit hit;
};

// Signed distance from (px,py) to the triangle with vertices v.
inline FaceDistance signed_distance(double px, double py,
                                    const std::array<double, 6>& v) {
  FaceDistance fd;
  double best = std::numeric_limits<double>::infinity();
  for (int e = 0; e < 3; ++e) {
    const int a = e, b = (e + 1) % 3;
    EdgeHit h = point_segment(px, py, v[2 * a], v[2 * a + 1], v[2 * b], v[2 * b + 1]);
    if (h.dist < best) {
      best = h.dist;
      fd.edge = e;
      fd.hit = h;
    }
  }
  // inside test: all edge cross products share the sign of the triangle area
  const double area2 = (v[2] - v[0]) * (v[5] - v[1]) - (v[4] - v[0]) * (v[3] - v[1]);
  bool inside = true;
  for (int e = 0; e < 3 && inside; ++e) {
    const int a = e, b = (e + 1) % 3;
    const double cr = (v[2 * b] - v[2 * a]) * (py - v[2 * a + 1]) -
                      (px - v[2 * a]) * (v[2 * b + 1] - v[2 * a + 1]);
    inside = (cr * area2) >= 0.0;
  }
  fd.signed_dist = inside ? best : -best;
  return fd;
}

inline double stable_sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace detail

// Soft silhouette of projected vertices. pix: [C,2] pixel coordinates from
// project(); faces index into the C vertices. Output: [H,W] in [0,1].
// Degenerate projected triangles contribute zero coverage.
inline ad::Var rasterize_projected(ad::Tape& tape, ad::Var pix,
                                   const std::vector<std::array<int, 3>>& faces,
                                   double tau, int width, int height) {
  if (tau <= 0.0) throw std::invalid_argument("rasterize: tau must be > 0");
  const ad::Tensor& tp = tape.val(pix);
  if (tp.shape.size() != 2 || tp.shape[1] != 2)
    throw std::invalid_argument("rasterize: expects [C,2] projected vertices");
  const int C = tp.shape[0];

  // Influence cutoff: sigmoid(-28) ~ 7e-13, well below the fd-check noise floor.
  const double pad = 28.0 * tau;
  const double kMinArea2 = 1e-12;

  // Grid buckets of candidate faces per 8x8 pixel cell.
  const int cell = 8;
  const int gw = (width + cell - 1) / cell, gh = (height + cell - 1) / cell;
  std::vector<std::vector<int>> buckets(static_cast<size_t>(gw) * gh);
  std::vector<std::array<double, 6>> tri(faces.size());
  std::vector<char> degenerate(faces.size(), 0);
  for (size_t f = 0; f < faces.size(); ++f) {
    for (int k = 0; k < 3; ++k) {
      const int vi = faces[f][k];
      if (vi < 0 || vi >= C) throw std::invalid_argument("rasterize: face index out of range");
      tri[f][2 * k] = tp.values[vi * 2];
      tri[f][2 * k + 1] = tp.values[vi * 2 + 1];
    }
    const auto& v = tri[f];
    const double area2 =
        (v[2] - v[0]) * (v[5] - v[1]) - (v[4] - v[0]) * (v[3] - v[1]);
    if (std::abs(area2) < kMinArea2) {
      degenerate[f] = 1;
      continue;
    }
    const double x0 = std::min({v[0], v[2], v[4]}) - pad;
    const double x1 = std::max({v[0], v[2], v[4]}) + pad;
    const double y0 = std::min({v[1], v[3], v[5]}) - pad;
    const double y1 = std::max({v[1], v[3], v[5]}) + pad;
    const int cx0 = std::max(0, static_cast<int>(std::floor(x0 / cell)));
    const int cx1 = std::min(gw - 1, static_cast<int>(std::floor(x1 / cell)));
    const int cy0 = std::max(0, static_cast<int>(std::floor(y0 / cell)));
    const int cy1 = std::min(gh - 1, static_cast<int>(std::floor(y1 / cell)));
    if (x1 < 0 || y1 < 0 || x0 > width - 1 || y0 > height - 1) continue;
    for (int cy = cy0; cy <= cy1; ++cy)
      for (int cx = cx0; cx <= cx1; ++cx)
        buckets[static_cast<size_t>(cy) * gw + cx].push_back(static_cast<int>(f));
  }

  struct Contribution {
    int pixel;
    int face;
    double sigma;
  };
  auto contribs = std::make_shared<std::vector<Contribution>>();
  auto products = std::make_shared<std::vector<double>>(static_cast<size_t>(width) * height, 1.0);

  ad::Tensor out = ad::Tensor::zeros({height, width});
  for (int i = 0; i < height; ++i) {
    for (int j = 0; j < width; ++j) {
      const auto& bucket = buckets[static_cast<size_t>(i / cell) * gw + j / cell];
      double prod = 1.0;
      const size_t mark = contribs->size();
      bool saturated = false;
      for (int f : bucket) {
        auto fd = detail::signed_distance(static_cast<double>(j), static_cast<double>(i), tri[f]);
        if (fd.signed_dist < -pad) continue;
        const double s = detail::stable_sigmoid(fd.signed_dist / tau);
        prod *= (1.0 - s);
        contribs->push_back({i * width + j, f, s});
        if (prod < 1e-25) {  // coverage is exactly 1.0 in double; grads vanish
          saturated = true;
          break;
        }
      }
      if (saturated) {
        contribs->resize(mark);
        out.values[i * width + j] = 1.0;
        (*products)[i * width + j] = 0.0;
      } else {
        out.values[i * width + j] = 1.0 - prod;
        (*products)[i * width + j] = prod;
      }
    }
  }

  auto faces_copy = faces;
  return tape.custom(
      std::move(out), {pix},
      [contribs, products, faces_copy = std::move(faces_copy), tau, width](
          ad::Tape&, const ad::Tensor& o, std::vector<ad::Tensor*> parents) {
        ad::Tensor& p = *parents[0];
        for (const auto& c : *contribs) {
          const double gs = o.grad[c.pixel];
          if (gs == 0.0) continue;
          const double prod = (*products)[c.pixel];
          const double one_minus = 1.0 - c.sigma;
          if (one_minus < 1e-25) continue;
          // ds/dsigma_f = prod over other faces = prod / (1 - sigma_f)
          const double dsigma = gs * (prod / one_minus);
          const double dd = dsigma * c.sigma * one_minus / tau;
          if (dd == 0.0) continue;
          // recompute nearest-edge geometry for this (pixel, face)
          const int i = c.pixel / width, j = c.pixel % width;
          std::array<double, 6> v;
          for (int k = 0; k < 3; ++k) {
            const int vi = faces_copy[c.face][k];
            v[2 * k] = p.values[vi * 2];
            v[2 * k + 1] = p.values[vi * 2 + 1];
          }
          auto fd = detail::signed_distance(static_cast<double>(j), static_cast<double>(i), v);
          if (fd.hit.dist <= 1e-12) continue;
          const double sign = fd.signed_dist >= 0.0 ? 1.0 : -1.0;
          const int a = faces_copy[c.face][fd.edge];
          const int b = faces_copy[c.face][(fd.edge + 1) % 3];
          // d(dist)/dA = -(1-t) n, d(dist)/dB = -t n with n unit from edge to pixel
          const double ga = dd * sign * -(1.0 - fd.hit.t);
          const double gb = dd * sign * -fd.hit.t;
          p.grad[a * 2 + 0] += ga * fd.hit.nx;
          p.grad[a * 2 + 1] += ga * fd.hit.ny;
          p.grad[b * 2 + 0] += gb * fd.hit.nx;
          p.grad[b * 2 + 1] += gb * fd.hit.ny;
        }
      },
      "rasterize_silhouette");
}

// Full differentiable pipeline: mesh [C,3] in wrist-relative mm -> [H,W].
inline ad::Var rasterize_silhouette(ad::Tape& tape, const Camera& cam, ad::Var mesh,
                                    const std::vector<std::array<int, 3>>& faces,
                                    double tau, int width, int height) {
  return rasterize_projected(tape, project(tape, cam, mesh), faces, tau, width, height);
}

}  // namespace tassn::render
