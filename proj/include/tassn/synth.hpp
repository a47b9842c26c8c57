#pragma once

// Synthetic clip generator: animates the procedural hand with smooth random
// joint trajectories, renders shaded frames with a hard z-buffer rasterizer,
// and derives exact ground truth (2D keypoints, silhouettes, dense flow,
// 3D pose/mesh). 3D ground truth is fenced off behind a training guard so it
// can only feed evaluation.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hand.hpp"
#include "io.hpp"
#include "render.hpp"

namespace tassn::synth {

// ---------------------------------------------------------------------------
// Training guard: while a TrainingScope is alive, any read of 3D ground truth
// throws and is recorded, so a training run can prove it never touched it.
struct TrainingGuard {
  static inline std::atomic<bool> active{false};
  static inline std::atomic<bool> tampered{false};
};

class TrainingScope {
 public:
  TrainingScope() { TrainingGuard::active = true; }
  ~TrainingScope() { TrainingGuard::active = false; }
  TrainingScope(const TrainingScope&) = delete;
  TrainingScope& operator=(const TrainingScope&) = delete;
};

inline void guard_3d_access() {
  if (TrainingGuard::active) {
    TrainingGuard::tampered = true;
    throw std::logic_error("3D ground truth accessed during training");
  }
}

// ---------------------------------------------------------------------------

struct SynthConfig {
  int width = 64, height = 64;
  int frames = 8;           // frames per clip (pairs = frames - 1)
  bool frozen = false;      // hold the first pose for the whole clip
  double sigma_px = 2.0;    // ground-truth heatmap width
  render::Camera camera{70.0, 70.0, 32.0, 32.0, 400.0};
};

// Flow fields use the x_target - x_source convention: flow_fwd[t], defined on
// frame t+1's grid, maps pixel x back to x - o(x) in frame t. flow_bwd[t] is
// the mirror image, defined on frame t's grid and pointing into frame t+1.
class Clip {
 public:
  SynthConfig config;
  std::vector<io::Image> frames;              // RGB [3,H,W]
  std::vector<io::Image> silhouettes;         // [1,H,W], hard 0/1
  std::vector<std::vector<double>> keypoints2d;  // per frame [K,2] px
  std::vector<std::vector<double>> flow_fwd;  // per pair [2,H,W] (du,dv)
  std::vector<std::vector<double>> flow_bwd;  // per pair [2,H,W]

  int num_frames() const { return static_cast<int>(frames.size()); }
  int num_pairs() const { return num_frames() - 1; }

  const std::vector<std::vector<double>>& pose3d_eval_only() const {
    guard_3d_access();
    return pose3d_;
  }
  const std::vector<std::vector<double>>& mesh3d_eval_only() const {
    guard_3d_access();
    return mesh3d_;
  }
  void set_gt_3d(std::vector<std::vector<double>> pose, std::vector<std::vector<double>> mesh) {
    pose3d_ = std::move(pose);
    mesh3d_ = std::move(mesh);
  }

 private:
  std::vector<std::vector<double>> pose3d_;  // per frame [K,3] mm, wrist-relative
  std::vector<std::vector<double>> mesh3d_;  // per frame [C,3] mm
};

// ---------------------------------------------------------------------------
// Plain (non-differentiable) projection helpers.

inline void project_point(const render::Camera& cam, double x, double y, double z,
                          double& u, double& v) {
  const double zc = z + cam.z_root;
  if (zc <= 0.0) throw std::domain_error("point behind camera");
  u = cam.fx * x / zc + cam.cx;
  v = cam.fy * y / zc + cam.cy;
}

// Hard z-buffer rasterization with per-pixel face id and screen-space
// barycentrics (used to identify the surface point for flow derivation).
struct RasterBuffers {
  std::vector<int> face;     // [H*W], -1 for background
  std::vector<double> bary;  // [H*W*3]
  std::vector<double> depth; // [H*W] view-space z
};

inline RasterBuffers raster_hard(const std::vector<double>& px,  // [C,2]
                                 const std::vector<double>& zview,  // [C]
                                 const std::vector<std::array<int, 3>>& faces, int width,
                                 int height) {
  RasterBuffers rb;
  const size_t n = static_cast<size_t>(width) * height;
  rb.face.assign(n, -1);
  rb.bary.assign(n * 3, 0.0);
  rb.depth.assign(n, std::numeric_limits<double>::infinity());
  for (size_t f = 0; f < faces.size(); ++f) {
    const double ax = px[2 * faces[f][0]], ay = px[2 * faces[f][0] + 1];
    const double bx = px[2 * faces[f][1]], by = px[2 * faces[f][1] + 1];
    const double cx = px[2 * faces[f][2]], cy = px[2 * faces[f][2] + 1];
    const double area2 = (bx - ax) * (cy - ay) - (cx - ax) * (by - ay);
    if (std::abs(area2) < 1e-12) continue;
    const int j0 = std::max(0, static_cast<int>(std::ceil(std::min({ax, bx, cx}))));
    const int j1 = std::min(width - 1, static_cast<int>(std::floor(std::max({ax, bx, cx}))));
    const int i0 = std::max(0, static_cast<int>(std::ceil(std::min({ay, by, cy}))));
    const int i1 = std::min(height - 1, static_cast<int>(std::floor(std::max({ay, by, cy}))));
    for (int i = i0; i <= i1; ++i) {
      for (int j = j0; j <= j1; ++j) {
        const double x = j, y = i;
        const double w0 = ((bx - x) * (cy - y) - (cx - x) * (by - y)) / area2;
        const double w1 = ((cx - x) * (ay - y) - (ax - x) * (cy - y)) / area2;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < -1e-12 || w1 < -1e-12 || w2 < -1e-12) continue;
        const double z = w0 * zview[faces[f][0]] + w1 * zview[faces[f][1]] +
                         w2 * zview[faces[f][2]];
        const size_t p = static_cast<size_t>(i) * width + j;
        if (z < rb.depth[p]) {
          rb.depth[p] = z;
          rb.face[p] = static_cast<int>(f);
          rb.bary[3 * p] = w0;
          rb.bary[3 * p + 1] = w1;
          rb.bary[3 * p + 2] = w2;
        }
      }
    }
  }
  return rb;
}

// ---------------------------------------------------------------------------
// Ground-truth heatmaps: one Gaussian per keypoint with peak 1 at the pixel
// nearest the keypoint.
inline std::vector<double> gt_heatmaps(const std::vector<double>& kp2d,  // [K,2]
                                       int width, int height, double sigma) {
  if (sigma <= 0.0) throw std::invalid_argument("gt_heatmaps: sigma must be > 0");
  const int K = static_cast<int>(kp2d.size() / 2);
  std::vector<double> out(static_cast<size_t>(K) * height * width, 0.0);
  for (int k = 0; k < K; ++k) {
    const double u0 = std::round(kp2d[2 * k]);
    const double v0 = std::round(kp2d[2 * k + 1]);
    for (int i = 0; i < height; ++i)
      for (int j = 0; j < width; ++j) {
        const double d2 = (j - u0) * (j - u0) + (i - v0) * (i - v0);
        out[(static_cast<size_t>(k) * height + i) * width + j] =
            std::exp(-d2 / (2.0 * sigma * sigma));
      }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Crop around a center point and resize. The crop covers source pixel
// coordinates [cu-half, cu+half] x [cv-half, cv+half]; out-of-image samples
// are zero. The camera transform commutes exactly with 2D point transforms.

struct Preprocessed {
  io::Image image;
  std::vector<double> keypoints;  // [K,2] in output pixel coords
  render::Camera camera;
};

inline void preprocess_map(double cu, double cv, double half, int out_size, double u, double v,
                           double& uo, double& vo) {
  const double s = (out_size - 1) / (2.0 * half);
  uo = (u - (cu - half)) * s;
  vo = (v - (cv - half)) * s;
}

inline double bilinear(const io::Image& im, int c, double u, double v) {
  const int j0 = static_cast<int>(std::floor(u)), i0 = static_cast<int>(std::floor(v));
  const double fu = u - j0, fv = v - i0;
  auto sample = [&](int i, int j) -> double {
    if (i < 0 || j < 0 || i >= im.h || j >= im.w) return 0.0;
    return im.at(c, i, j);
  };
  return (1 - fv) * ((1 - fu) * sample(i0, j0) + fu * sample(i0, j0 + 1)) +
         fv * ((1 - fu) * sample(i0 + 1, j0) + fu * sample(i0 + 1, j0 + 1));
}

inline Preprocessed preprocess(const io::Image& frame, const std::vector<double>& kp2d,
                               const render::Camera& cam, double cu, double cv, double half,
                               int out_size) {
  if (half <= 0.0 || out_size < 2) throw std::invalid_argument("preprocess: bad crop parameters");
  if (cu + half < 0 || cv + half < 0 || cu - half > frame.w - 1 || cv - half > frame.h - 1)
    throw std::invalid_argument("preprocess: crop does not intersect the image");
  Preprocessed out;
  out.image = io::Image::zeros(frame.channels, out_size, out_size);
  const double s = (out_size - 1) / (2.0 * half);
  for (int c = 0; c < frame.channels; ++c)
    for (int i = 0; i < out_size; ++i)
      for (int j = 0; j < out_size; ++j)
        out.image.at(c, i, j) = bilinear(frame, c, (cu - half) + j / s, (cv - half) + i / s);
  out.keypoints.resize(kp2d.size());
  for (size_t k = 0; 2 * k + 1 < kp2d.size(); ++k)
    preprocess_map(cu, cv, half, out_size, kp2d[2 * k], kp2d[2 * k + 1], out.keypoints[2 * k],
                   out.keypoints[2 * k + 1]);
  out.camera = cam;
  out.camera.fx = cam.fx * s;
  out.camera.fy = cam.fy * s;
  out.camera.cx = (cam.cx - (cu - half)) * s;
  out.camera.cy = (cam.cy - (cv - half)) * s;
  return out;
}

// ---------------------------------------------------------------------------
// Smooth random trajectories: keyframes at the clip's start, middle and end,
// joined by smoothstep interpolation (C1, zero velocity at keyframes).

namespace detail {

inline double smoothstep_lerp(double a, double b, double u) {
  const double s = u * u * (3.0 - 2.0 * u);
  return a + (b - a) * s;
}

inline double eval_track(const std::array<double, 3>& key, double t01) {
  if (t01 <= 0.5) return smoothstep_lerp(key[0], key[1], t01 * 2.0);
  return smoothstep_lerp(key[1], key[2], (t01 - 0.5) * 2.0);
}

struct Trajectory {
  std::array<std::array<double, 3>, 3> wrist;  // [axis][keyframe]
  std::array<std::array<double, 3>, 5> mcp_flex, mcp_abduct, pip_flex, dip_flex;
};

inline Trajectory random_trajectory(std::mt19937_64& rng, const HandPoseLimits& lim) {
  auto sym = [&](double bound) {
    std::uniform_real_distribution<double> d(-bound, bound);
    return std::array<double, 3>{d(rng), d(rng), d(rng)};
  };
  auto pos = [&](double hi) {
    std::uniform_real_distribution<double> d(0.0, hi);
    return std::array<double, 3>{d(rng), d(rng), d(rng)};
  };
  Trajectory tr;
  tr.wrist = {sym(lim.wrist_x), sym(lim.wrist_y), sym(lim.wrist_z)};
  for (int f = 0; f < 5; ++f) {
    tr.mcp_flex[f] = pos(lim.mcp_flex_max);
    tr.mcp_abduct[f] = sym(lim.mcp_abduct);
    tr.pip_flex[f] = pos(lim.pip_flex_max);
    tr.dip_flex[f] = pos(lim.dip_flex_max);
  }
  return tr;
}

inline HandPose pose_at(const Trajectory& tr, double t01) {
  HandPose p;
  for (int a = 0; a < 3; ++a) p.wrist_rot[a] = eval_track(tr.wrist[a], t01);
  for (int f = 0; f < 5; ++f) {
    p.mcp_flex[f] = eval_track(tr.mcp_flex[f], t01);
    p.mcp_abduct[f] = eval_track(tr.mcp_abduct[f], t01);
    p.pip_flex[f] = eval_track(tr.pip_flex[f], t01);
    p.dip_flex[f] = eval_track(tr.dip_flex[f], t01);
  }
  return p;
}

// Coarse random RGB grid, bilinearly upsampled: a static smooth background.
inline io::Image smooth_background(std::mt19937_64& rng, int width, int height) {
  constexpr int G = 8;
  std::uniform_real_distribution<double> d(0.08, 0.72);
  std::vector<double> grid(3 * G * G);
  for (auto& g : grid) g = d(rng);
  io::Image bg = io::Image::zeros(3, height, width);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < height; ++i)
      for (int j = 0; j < width; ++j) {
        const double gu = static_cast<double>(j) / (width - 1) * (G - 1);
        const double gv = static_cast<double>(i) / (height - 1) * (G - 1);
        const int ju = std::min(G - 2, static_cast<int>(gu));
        const int iv = std::min(G - 2, static_cast<int>(gv));
        const double fu = gu - ju, fv = gv - iv;
        auto g = [&](int ii, int jj) { return grid[(c * G + ii) * G + jj]; };
        bg.at(c, i, j) = (1 - fv) * ((1 - fu) * g(iv, ju) + fu * g(iv, ju + 1)) +
                         fv * ((1 - fu) * g(iv + 1, ju) + fu * g(iv + 1, ju + 1));
      }
  return bg;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline Clip generate_clip(const HandTemplate& tmpl, const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.frames < 2) throw std::invalid_argument("generate_clip: need at least 2 frames");
  cfg.camera.validate();
  std::mt19937_64 rng(seed);
  const HandPoseLimits limits;
  const auto traj = detail::random_trajectory(rng, limits);
  const io::Image bg = detail::smooth_background(rng, cfg.width, cfg.height);
  const Eigen::Vector3d light = Eigen::Vector3d(0.3, -0.5, -0.8).normalized();
  const int C = tmpl.num_vertices();
  const int T = cfg.frames;

  Clip clip;
  clip.config = cfg;
  std::vector<std::vector<double>> mesh3d(T), pose3d(T), proj(T);
  std::vector<std::vector<double>> zview(T);
  std::vector<RasterBuffers> rb(T);

  for (int t = 0; t < T; ++t) {
    const double t01 = (cfg.frozen || T < 2) ? 0.0 : static_cast<double>(t) / (T - 1);
    const HandPose pose = detail::pose_at(traj, t01);
    const JointFrames fr = forward_kinematics(tmpl, pose);
    mesh3d[t] = skin_mesh(tmpl, fr);
    pose3d[t].resize(static_cast<size_t>(kNumJoints) * 3);
    for (int k = 0; k < kNumJoints; ++k)
      for (int a = 0; a < 3; ++a) pose3d[t][3 * k + a] = fr.pos[k][a];

    proj[t].resize(static_cast<size_t>(C) * 2);
    zview[t].resize(C);
    for (int i = 0; i < C; ++i) {
      project_point(cfg.camera, mesh3d[t][3 * i], mesh3d[t][3 * i + 1], mesh3d[t][3 * i + 2],
                    proj[t][2 * i], proj[t][2 * i + 1]);
      zview[t][i] = mesh3d[t][3 * i + 2] + cfg.camera.z_root;
      if (proj[t][2 * i] < -cfg.width || proj[t][2 * i] >= 2.0 * cfg.width ||
          proj[t][2 * i + 1] < -cfg.height || proj[t][2 * i + 1] >= 2.0 * cfg.height)
        throw std::runtime_error("generate_clip: vertex projects outside the 2x image bound");
    }
    rb[t] = raster_hard(proj[t], zview[t], tmpl.faces, cfg.width, cfg.height);

    // Flat-shaded frame over the static background.
    std::vector<double> shade(tmpl.faces.size());
    for (size_t f = 0; f < tmpl.faces.size(); ++f) {
      const auto& fc = tmpl.faces[f];
      Eigen::Vector3d a(mesh3d[t][3 * fc[0]], mesh3d[t][3 * fc[0] + 1], mesh3d[t][3 * fc[0] + 2]);
      Eigen::Vector3d b(mesh3d[t][3 * fc[1]], mesh3d[t][3 * fc[1] + 1], mesh3d[t][3 * fc[1] + 2]);
      Eigen::Vector3d c(mesh3d[t][3 * fc[2]], mesh3d[t][3 * fc[2] + 1], mesh3d[t][3 * fc[2] + 2]);
      Eigen::Vector3d n = (b - a).cross(c - a);
      const double nn = n.norm();
      shade[f] = nn > 0 ? 0.55 + 0.35 * std::abs(n.dot(light) / nn) : 0.55;
    }
    const double skin_rgb[3] = {0.85, 0.66, 0.54};
    io::Image frame = bg;
    io::Image sil = io::Image::zeros(1, cfg.height, cfg.width);
    for (int i = 0; i < cfg.height; ++i)
      for (int j = 0; j < cfg.width; ++j) {
        const int f = rb[t].face[static_cast<size_t>(i) * cfg.width + j];
        if (f < 0) continue;
        sil.at(0, i, j) = 1.0;
        for (int c = 0; c < 3; ++c) frame.at(c, i, j) = skin_rgb[c] * shade[f];
      }
    clip.frames.push_back(std::move(frame));
    clip.silhouettes.push_back(std::move(sil));
    std::vector<double> kp(static_cast<size_t>(kNumJoints) * 2);
    for (int k = 0; k < kNumJoints; ++k)
      project_point(cfg.camera, pose3d[t][3 * k], pose3d[t][3 * k + 1], pose3d[t][3 * k + 2],
                    kp[2 * k], kp[2 * k + 1]);
    clip.keypoints2d.push_back(std::move(kp));
  }

  // Exact flow from the rasterized barycentrics: the surface point visible at
  // a target pixel is carried to the source frame through the mesh motion.
  auto make_flow = [&](int target, int source) {
    std::vector<double> flow(static_cast<size_t>(2) * cfg.height * cfg.width, 0.0);
    for (int i = 0; i < cfg.height; ++i)
      for (int j = 0; j < cfg.width; ++j) {
        const size_t p = static_cast<size_t>(i) * cfg.width + j;
        const int f = rb[target].face[p];
        if (f < 0) continue;
        // Perspective-correct barycentrics identify the exact surface point:
        // screen-space weights are divided by view depth and renormalized.
        double b[3], bsum = 0.0;
        for (int k = 0; k < 3; ++k) {
          b[k] = rb[target].bary[3 * p + k] / zview[target][tmpl.faces[f][k]];
          bsum += b[k];
        }
        double x = 0, y = 0, z = 0;
        for (int k = 0; k < 3; ++k) {
          const int vi = tmpl.faces[f][k];
          const double w = b[k] / bsum;
          x += w * mesh3d[source][3 * vi];
          y += w * mesh3d[source][3 * vi + 1];
          z += w * mesh3d[source][3 * vi + 2];
        }
        double u, v;
        project_point(cfg.camera, x, y, z, u, v);
        flow[p] = j - u;
        flow[static_cast<size_t>(cfg.height) * cfg.width + p] = i - v;
      }
    return flow;
  };
  for (int t = 0; t + 1 < T; ++t) {
    clip.flow_fwd.push_back(make_flow(t + 1, t));
    clip.flow_bwd.push_back(make_flow(t, t + 1));
  }

  clip.set_gt_3d(std::move(pose3d), std::move(mesh3d));
  return clip;
}

// ---------------------------------------------------------------------------

struct Dataset {
  std::vector<Clip> train, val;
};

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t idx) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (idx + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Dataset generate_dataset(const HandTemplate& tmpl, const SynthConfig& cfg, int n_train,
                                int n_val, std::uint64_t seed) {
  Dataset ds;
  for (int i = 0; i < n_train; ++i)
    ds.train.push_back(generate_clip(tmpl, cfg, mix_seed(seed, i)));
  for (int i = 0; i < n_val; ++i)
    ds.val.push_back(generate_clip(tmpl, cfg, mix_seed(seed, 1000000 + i)));
  return ds;
}

// On-disk layout: <root>/manifest.txt plus one directory per clip holding
// PPM frames, PGM silhouettes and raw f32 arrays for everything else.
inline void save_clip(const std::string& dir, const Clip& clip) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const int T = clip.num_frames();
  const int H = clip.config.height, W = clip.config.width;
  char name[64];
  for (int t = 0; t < T; ++t) {
    std::snprintf(name, sizeof(name), "/frame_%03d.ppm", t);
    io::write_pnm(dir + name, clip.frames[t]);
    std::snprintf(name, sizeof(name), "/sil_%03d.pgm", t);
    io::write_pnm(dir + name, clip.silhouettes[t]);
  }
  auto flatten = [](const std::vector<std::vector<double>>& v) {
    std::vector<double> out;
    for (const auto& x : v) out.insert(out.end(), x.begin(), x.end());
    return out;
  };
  const auto& pose = clip.pose3d_eval_only();
  const auto& mesh = clip.mesh3d_eval_only();
  const int C = static_cast<int>(mesh[0].size() / 3);
  io::write_array(dir + "/keypoints2d.f32", "keypoints2d", {T, kNumJoints, 2},
                  flatten(clip.keypoints2d));
  io::write_array(dir + "/pose3d.f32", "pose3d", {T, kNumJoints, 3}, flatten(pose));
  io::write_array(dir + "/mesh3d.f32", "mesh3d", {T, C, 3}, flatten(mesh));
  io::write_array(dir + "/flow_fwd.f32", "flow_fwd", {T - 1, 2, H, W}, flatten(clip.flow_fwd));
  io::write_array(dir + "/flow_bwd.f32", "flow_bwd", {T - 1, 2, H, W}, flatten(clip.flow_bwd));
  const auto& cam = clip.config.camera;
  io::write_array(dir + "/camera.f32", "camera", {5}, {cam.fx, cam.fy, cam.cx, cam.cy, cam.z_root});
}

inline Clip load_clip(const std::string& dir) {
  Clip clip;
  const auto cam = io::read_array(dir + "/camera.f32");
  clip.config.camera = {cam.values[0], cam.values[1], cam.values[2], cam.values[3], cam.values[4]};
  const auto kp = io::read_array(dir + "/keypoints2d.f32");
  const int T = kp.dims[0];
  clip.config.frames = T;
  char name[64];
  for (int t = 0; t < T; ++t) {
    std::snprintf(name, sizeof(name), "/frame_%03d.ppm", t);
    clip.frames.push_back(io::read_pnm(dir + name));
    std::snprintf(name, sizeof(name), "/sil_%03d.pgm", t);
    clip.silhouettes.push_back(io::read_pnm(dir + name));
  }
  clip.config.width = clip.frames[0].w;
  clip.config.height = clip.frames[0].h;
  auto split = [](const io::NamedArray& a) {
    std::vector<std::vector<double>> out(a.dims[0]);
    const size_t per = a.values.size() / a.dims[0];
    for (int t = 0; t < a.dims[0]; ++t)
      out[t].assign(a.values.begin() + t * per, a.values.begin() + (t + 1) * per);
    return out;
  };
  clip.keypoints2d = split(kp);
  clip.flow_fwd = split(io::read_array(dir + "/flow_fwd.f32"));
  clip.flow_bwd = split(io::read_array(dir + "/flow_bwd.f32"));
  clip.set_gt_3d(split(io::read_array(dir + "/pose3d.f32")),
                 split(io::read_array(dir + "/mesh3d.f32")));
  return clip;
}

inline void save_dataset(const std::string& root, const Dataset& ds) {
  std::ostringstream manifest;
  manifest << "hand-clips 1\n";
  manifest << "train " << ds.train.size() << "\n";
  manifest << "val " << ds.val.size() << "\n";
  char name[64];
  for (size_t i = 0; i < ds.train.size(); ++i) {
    std::snprintf(name, sizeof(name), "train_%04d", static_cast<int>(i));
    save_clip(root + "/" + name, ds.train[i]);
    manifest << name << "\n";
  }
  for (size_t i = 0; i < ds.val.size(); ++i) {
    std::snprintf(name, sizeof(name), "val_%04d", static_cast<int>(i));
    save_clip(root + "/" + name, ds.val[i]);
    manifest << name << "\n";
  }
  io::write_text(root + "/manifest.txt", manifest.str());
}

inline Dataset load_dataset(const std::string& root) {
  std::istringstream in(io::read_text(root + "/manifest.txt"));
  std::string tag;
  int version = 0, n_train = 0, n_val = 0;
  in >> tag >> version;
  if (tag != "hand-clips" || version != 1)
    throw std::runtime_error("unrecognized dataset manifest in " + root);
  in >> tag >> n_train >> tag >> n_val;
  Dataset ds;
  std::string name;
  for (int i = 0; i < n_train + n_val; ++i) {
    in >> name;
    (i < n_train ? ds.train : ds.val).push_back(load_clip(root + "/" + name));
  }
  return ds;
}

}  // namespace tassn::synth
