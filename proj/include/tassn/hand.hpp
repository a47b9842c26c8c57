#pragma once

// Procedural articulated hand: a 21-joint skeleton (wrist + 5 fingers with
// 4 joints each) skinned to a tube mesh built from vertex rings around each
// bone. Units are millimeters; the wrist is pinned at the origin so joint
// and vertex coordinates are wrist-relative by construction.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace tassn {

constexpr int kNumJoints = 21;
constexpr int kRingVerts = 5;

struct HandTemplate {
  std::vector<int> parent;                        // [K] parent joint, -1 for wrist
  std::vector<Eigen::Vector3d> rest_joints;       // [K]
  std::vector<Eigen::Vector3d> flex_axis;         // [K] per-joint flexion axis
  std::vector<double> rest_vertices;              // [C,3] row-major
  std::vector<std::array<int, 3>> faces;
  Eigen::MatrixXd skin;                           // [C,K], rows sum to 1

  int num_vertices() const { return static_cast<int>(rest_vertices.size() / 3); }
};

namespace detail {

inline Eigen::Matrix3d rodrigues(const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

// Append one ring of kRingVerts vertices around `center`, in the plane
// perpendicular to `dir`, and record its skinning row.
inline int add_ring(HandTemplate& t, const Eigen::Vector3d& center, const Eigen::Vector3d& dir,
                    double radius, int joint_a, int joint_b, double wa) {
  const int base = t.num_vertices();
  Eigen::Vector3d u = dir.cross(Eigen::Vector3d::UnitZ());
  if (u.norm() < 1e-9) u = dir.cross(Eigen::Vector3d::UnitY());
  u.normalize();
  const Eigen::Vector3d w = dir.cross(u).normalized();
  for (int k = 0; k < kRingVerts; ++k) {
    const double phi = 2.0 * M_PI * k / kRingVerts;
    const Eigen::Vector3d v = center + radius * (std::cos(phi) * u + std::sin(phi) * w);
    t.rest_vertices.insert(t.rest_vertices.end(), {v.x(), v.y(), v.z()});
    t.skin.conservativeResize(base + k + 1, kNumJoints);
    t.skin.row(base + k).setZero();
    t.skin(base + k, joint_a) = wa;
    if (joint_b >= 0) t.skin(base + k, joint_b) = 1.0 - wa;
  }
  return base;
}

inline int add_apex(HandTemplate& t, const Eigen::Vector3d& p, int joint) {
  const int idx = t.num_vertices();
  t.rest_vertices.insert(t.rest_vertices.end(), {p.x(), p.y(), p.z()});
  t.skin.conservativeResize(idx + 1, kNumJoints);
  t.skin.row(idx).setZero();
  t.skin(idx, joint) = 1.0;
  return idx;
}

inline void stitch_rings(HandTemplate& t, int ring_a, int ring_b) {
  for (int k = 0; k < kRingVerts; ++k) {
    const int kn = (k + 1) % kRingVerts;
    t.faces.push_back({ring_a + k, ring_b + k, ring_b + kn});
    t.faces.push_back({ring_a + k, ring_b + kn, ring_a + kn});
  }
}

inline void cap_ring(HandTemplate& t, int ring, int apex, bool flip) {
  for (int k = 0; k < kRingVerts; ++k) {
    const int kn = (k + 1) % kRingVerts;
    if (flip)
      t.faces.push_back({ring + k, apex, ring + kn});
    else
      t.faces.push_back({ring + k, ring + kn, apex});
  }
}

}  // namespace detail

// Joint indexing: 0 = wrist, then per finger f in {thumb..pinky}:
// 1+4f = knuckle (MCP), 2+4f = PIP, 3+4f = DIP, 4+4f = tip.
inline HandTemplate make_hand_template() {
  HandTemplate t;
  t.parent.assign(kNumJoints, -1);
  t.rest_joints.assign(kNumJoints, Eigen::Vector3d::Zero());
  t.flex_axis.assign(kNumJoints, Eigen::Vector3d::UnitX());
  t.skin.resize(0, kNumJoints);

  // Finger layout: direction angle from +y in the palm plane, metacarpal
  // length, and the three phalanx lengths (mm).
  const double dir_deg[5] = {-55.0, -18.0, 0.0, 16.0, 33.0};
  const double meta_len[5] = {48.0, 72.0, 75.0, 70.0, 62.0};
  const double prox_len[5] = {34.0, 38.0, 42.0, 38.0, 30.0};
  const double mid_len[5] = {24.0, 24.0, 26.0, 24.0, 19.0};
  const double dist_len[5] = {20.0, 18.0, 19.0, 18.0, 16.0};
  const double finger_radius[5] = {8.0, 7.0, 7.0, 6.5, 5.5};
  const double meta_radius = 13.0;

  for (int f = 0; f < 5; ++f) {
    const double th = dir_deg[f] * M_PI / 180.0;
    const Eigen::Vector3d d(std::sin(th), std::cos(th), 0.0);
    const int mcp = 1 + 4 * f;
    t.parent[mcp] = 0;
    t.parent[mcp + 1] = mcp;
    t.parent[mcp + 2] = mcp + 1;
    t.parent[mcp + 3] = mcp + 2;
    t.rest_joints[mcp] = meta_len[f] * d;
    t.rest_joints[mcp + 1] = t.rest_joints[mcp] + prox_len[f] * d;
    t.rest_joints[mcp + 2] = t.rest_joints[mcp + 1] + mid_len[f] * d;
    t.rest_joints[mcp + 3] = t.rest_joints[mcp + 2] + dist_len[f] * d;
    // Flexion rotates the bone direction out of the palm plane toward -z
    // (toward the camera).
    const Eigen::Vector3d axis = Eigen::Vector3d::UnitZ().cross(d).normalized();
    for (int j = mcp; j <= mcp + 3; ++j) t.flex_axis[j] = axis;
  }

  // Shared wrist ring, one tube per bone with a mid-bone ring, a shared ring
  // at every joint, apex caps at the wrist and fingertips.
  const Eigen::Vector3d up = Eigen::Vector3d::UnitY();
  const int wrist_ring = detail::add_ring(t, Eigen::Vector3d::Zero(), up, 15.0, 0, -1, 1.0);
  const int wrist_apex = detail::add_apex(t, Eigen::Vector3d(0.0, -14.0, 0.0), 0);
  detail::cap_ring(t, wrist_ring, wrist_apex, true);

  for (int f = 0; f < 5; ++f) {
    int prev_ring = wrist_ring;
    const int mcp = 1 + 4 * f;
    for (int j = mcp; j <= mcp + 3; ++j) {
      const int par = t.parent[j];
      const Eigen::Vector3d a = t.rest_joints[par], b = t.rest_joints[j];
      const Eigen::Vector3d dir = (b - a).normalized();
      const double r = (j == mcp) ? meta_radius * 0.75 : finger_radius[f] * (1.0 - 0.1 * (j - mcp - 1));
      // Mid-bone ring moves rigidly with the parent joint's frame; the ring
      // at the joint itself blends the two adjacent frames.
      const int mid = detail::add_ring(t, 0.5 * (a + b), dir, r, par, -1, 1.0);
      const int end = detail::add_ring(t, b, dir, r * (j == mcp ? 0.8 : 0.92), par, j, 0.5);
      detail::stitch_rings(t, prev_ring, mid);
      detail::stitch_rings(t, mid, end);
      prev_ring = end;
    }
    const Eigen::Vector3d tip_dir =
        (t.rest_joints[mcp + 3] - t.rest_joints[mcp + 2]).normalized();
    const int apex =
        detail::add_apex(t, t.rest_joints[mcp + 3] + 6.0 * tip_dir, mcp + 3);
    detail::cap_ring(t, prev_ring, apex, false);
  }

  for (int i = 0; i < t.skin.rows(); ++i)
    if (std::abs(t.skin.row(i).sum() - 1.0) > 1e-12)
      throw std::logic_error("skinning weights must sum to 1");
  return t;
}

// Per-frame articulation parameters, all in radians.
struct HandPose {
  Eigen::Vector3d wrist_rot = Eigen::Vector3d::Zero();  // xyz Euler at the wrist
  std::array<double, 5> mcp_flex{}, mcp_abduct{}, pip_flex{}, dip_flex{};
};

struct HandPoseLimits {
  double wrist_x = 0.30, wrist_y = 0.40, wrist_z = 0.35;  // symmetric bounds
  double mcp_flex_max = 1.10, mcp_abduct = 0.17;
  double pip_flex_max = 1.40, dip_flex_max = 0.90;
};

struct JointFrames {
  std::vector<Eigen::Matrix3d> rot;  // [K] global rotations
  std::vector<Eigen::Vector3d> pos;  // [K] global positions (wrist-relative mm)
};

inline JointFrames forward_kinematics(const HandTemplate& t, const HandPose& pose) {
  JointFrames fr;
  fr.rot.assign(kNumJoints, Eigen::Matrix3d::Identity());
  fr.pos.assign(kNumJoints, Eigen::Vector3d::Zero());
  fr.rot[0] = (Eigen::AngleAxisd(pose.wrist_rot.x(), Eigen::Vector3d::UnitX()) *
               Eigen::AngleAxisd(pose.wrist_rot.y(), Eigen::Vector3d::UnitY()) *
               Eigen::AngleAxisd(pose.wrist_rot.z(), Eigen::Vector3d::UnitZ()))
                  .toRotationMatrix();
  for (int f = 0; f < 5; ++f) {
    const int mcp = 1 + 4 * f;
    const double flex[3] = {pose.mcp_flex[f], pose.pip_flex[f], pose.dip_flex[f]};
    for (int s = 0; s < 3; ++s) {
      const int j = mcp + s;
      Eigen::Matrix3d local = detail::rodrigues(t.flex_axis[j], flex[s]);
      if (s == 0)
        local = detail::rodrigues(Eigen::Vector3d::UnitZ(), pose.mcp_abduct[f]) * local;
      const int par = t.parent[j];
      fr.rot[j] = fr.rot[par] * local;
      fr.pos[j] = fr.pos[par] + fr.rot[par] * (t.rest_joints[j] - t.rest_joints[par]);
    }
    const int tip = mcp + 3;
    fr.rot[tip] = fr.rot[tip - 1];
    fr.pos[tip] = fr.pos[tip - 1] + fr.rot[tip - 1] * (t.rest_joints[tip] - t.rest_joints[tip - 1]);
  }
  return fr;
}

// Linear blend skinning: v' = sum_j w_vj (p_j + R_j (v - rest_j)).
inline std::vector<double> skin_mesh(const HandTemplate& t, const JointFrames& fr) {
  const int C = t.num_vertices();
  std::vector<double> out(static_cast<size_t>(C) * 3, 0.0);
  for (int i = 0; i < C; ++i) {
    const Eigen::Vector3d v(t.rest_vertices[3 * i], t.rest_vertices[3 * i + 1],
                            t.rest_vertices[3 * i + 2]);
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (int j = 0; j < kNumJoints; ++j) {
      const double w = t.skin(i, j);
      if (w == 0.0) continue;
      acc += w * (fr.pos[j] + fr.rot[j] * (v - t.rest_joints[j]));
    }
    out[3 * i] = acc.x();
    out[3 * i + 1] = acc.y();
    out[3 * i + 2] = acc.z();
  }
  return out;
}

}  // namespace tassn
