#pragma once

// Central finite-difference verification battery covering every autodiff
// primitive, the losses, the soft rasterizer, the spectral mesh convolution,
// and an end-to-end clip objective on a small configuration. Shared by the
// grad-check command and the acceptance tests.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "losses.hpp"
#include "nets.hpp"
#include "render.hpp"
#include "train.hpp"

namespace tassn::gradsuite {

struct SuiteEntry {
  std::string name;
  ad::GradCheckReport report;
};

// Central differences are invalid when a ReLU pre-activation happens to fall
// inside the probe step (a measure-zero event, but possible for any fixed
// draw). The default seed is pinned to a draw verified to avoid that for the
// end-to-end check.
inline std::vector<SuiteEntry> run(std::uint64_t seed = 2) {
  std::mt19937_64 rng(seed);
  auto fill = [&](ad::Tensor& t, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    for (auto& v : t.values) v = d(rng);
  };
  auto make = [&](std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
    ad::Tensor t = ad::Tensor::zeros(std::move(shape), /*requires_grad=*/true);
    fill(t, lo, hi);
    return t;
  };

  std::vector<SuiteEntry> out;
  auto add = [&](const std::string& name, const std::function<ad::Var(ad::Tape&)>& builder,
                 std::vector<ad::Tensor*> targets) {
    out.push_back({name, ad::check_gradient(builder, std::move(targets))});
  };

  // --- elementwise / linear primitives -------------------------------------
  ad::Tensor a = make({3, 4}), b = make({3, 4});
  add("axpby", [&](ad::Tape& t) {
    return t.frob_sq(t.axpby(0.7, t.param(a), -1.3, t.param(b)));
  }, {&a, &b});
  add("mul", [&](ad::Tape& t) { return t.sum(t.mul(t.param(a), t.param(b))); }, {&a, &b});
  add("scale", [&](ad::Tape& t) { return t.sum(t.scale(t.param(a), -2.5)); }, {&a});

  ad::Tensor m1 = make({3, 4}), m2 = make({4, 2});
  add("matmul", [&](ad::Tape& t) {
    return t.frob_sq(t.matmul(t.param(m1), t.param(m2)));
  }, {&m1, &m2});
  add("const_matmul", [&](ad::Tape& t) {
    ad::Mat M(2, 3);
    M << 1.0, -0.5, 0.25, 0.0, 2.0, -1.0;
    return t.frob_sq(t.const_matmul(M, t.param(m1)));
  }, {&m1});

  // Keep activations away from kinks and pooling ties.
  ad::Tensor act = make({2, 4, 4}, 0.05, 1.0);
  for (size_t i = 0; i < act.values.size(); ++i)
    act.values[i] += 1e-3 * static_cast<double>(i) * (i % 2 ? 1.0 : -1.0);
  add("relu", [&](ad::Tape& t) { return t.sum(t.relu(t.param(act))); }, {&act});
  add("sigmoid", [&](ad::Tape& t) { return t.sum(t.mul(t.sigmoid(t.param(act)), t.param(act))); },
      {&act});
  add("spatial_softmax", [&](ad::Tape& t) {
    return t.frob_sq(t.spatial_softmax(t.param(act)));
  }, {&act});
  add("maxpool2x2", [&](ad::Tape& t) { return t.frob_sq(t.maxpool2x2(t.param(act))); }, {&act});

  ad::Tensor x = make({2, 5, 5}), w1 = make({3, 2, 3, 3}), wt = make({2, 3, 3, 3});
  add("conv2d_s1", [&](ad::Tape& t) {
    return t.frob_sq(t.conv2d(t.param(x), t.param(w1), 1));
  }, {&x, &w1});
  add("conv2d_s2", [&](ad::Tape& t) {
    ad::Var y = t.conv2d(t.param(x), t.param(w1), 2);
    return t.frob_sq(y);
  }, {&x, &w1});
  ad::Tensor x4 = make({2, 4, 4});
  add("conv_transpose2d", [&](ad::Tape& t) {
    return t.frob_sq(t.conv_transpose2d(t.param(x4), t.param(wt), 2));
  }, {&x4, &wt});

  ad::Tensor c1 = make({1, 3, 3}), c2 = make({2, 3, 3});
  add("concat_channels", [&](ad::Tape& t) {
    return t.frob_sq(t.concat_channels({t.param(c1), t.param(c2)}));
  }, {&c1, &c2});
  add("reshape", [&](ad::Tape& t) {
    return t.frob_sq(t.matmul(t.reshape(t.param(a), {4, 3}), t.param(m1)));
  }, {&a, &m1});
  add("sum_mean", [&](ad::Tape& t) {
    return t.add(t.sum(t.param(a)), t.mean(t.param(b)));
  }, {&a, &b});
  add("mean_spatial", [&](ad::Tape& t) {
    return t.frob_sq(t.mean_spatial(t.param(act)));
  }, {&act});

  ad::Tensor bias_c = make({2}), bias_r = make({4});
  add("bias_add_channels", [&](ad::Tape& t) {
    return t.frob_sq(t.bias_add_channels(t.param(act), t.param(bias_c)));
  }, {&act, &bias_c});
  add("bias_add_rows", [&](ad::Tape& t) {
    return t.frob_sq(t.bias_add_rows(t.param(a), t.param(bias_r)));
  }, {&a, &bias_r});
  add("frob_sq", [&](ad::Tape& t) { return t.frob_sq(t.param(a)); }, {&a});
  add("add_scaled_scalars", [&](ad::Tape& t) {
    return t.add_scaled_scalars({{0.3, t.sum(t.param(a))}, {-1.7, t.mean(t.param(b))}});
  }, {&a, &b});

  // --- losses ---------------------------------------------------------------
  ad::Tensor hm = make({3, 4, 4}, 0.0, 1.0), hm_gt = make({3, 4, 4}, 0.0, 1.0);
  add("heatmap_loss", [&](ad::Tape& t) {
    return losses::heatmap_loss(t, t.param(hm), t.input(hm_gt));
  }, {&hm});
  ad::Tensor sil = make({5, 5}, 0.0, 1.0), sil_gt = make({5, 5}, 0.0, 1.0);
  add("silhouette_loss", [&](ad::Tape& t) {
    return losses::silhouette_loss(t, t.param(sil), t.input(sil_gt));
  }, {&sil});
  ad::Tensor pf = make({4, 3}), pb = make({4, 3}), mf = make({6, 3}), mb = make({6, 3});
  losses::LossWeights lw;
  add("temporal_and_total_loss", [&](ad::Tape& t) {
    ad::Var cp = losses::temporal_pose_loss(t, {t.param(pf)}, {t.param(pb)}, 2);
    ad::Var cm = losses::temporal_mesh_loss(t, {t.param(mf)}, {t.param(mb)}, 2);
    ad::Var ls = losses::silhouette_loss(t, t.param(sil), t.input(sil_gt));
    ad::Var lh = losses::heatmap_loss(t, t.param(hm), t.input(hm_gt));
    return losses::total_loss(t, lw, ls, lh, losses::consistency_loss(t, lw, cp, cm));
  }, {&pf, &pb, &mf, &mb, &sil, &hm});

  // --- soft rasterizer -------------------------------------------------------
  std::vector<std::array<int, 3>> tri_faces{{0, 1, 2}, {1, 2, 3}};
  ad::Tensor pix = ad::Tensor::from({4, 2}, {2.3, 2.1, 8.7, 3.4, 3.9, 8.6, 9.2, 9.1}, true);
  add("rasterize_projected", [&](ad::Tape& t) {
    return t.sum(render::rasterize_projected(t, t.param(pix), tri_faces, 0.7, 12, 12));
  }, {&pix});
  render::Camera cam{17.0, 17.0, 6.0, 6.0, 400.0};
  ad::Tensor mesh3 = ad::Tensor::from(
      {4, 3}, {-80.0, -70.0, 3.0, 90.0, -60.0, -5.0, -60.0, 85.0, 4.0, 80.0, 95.0, -2.0}, true);
  add("rasterize_silhouette", [&](ad::Tape& t) {
    return t.sum(render::rasterize_silhouette(t, cam, t.param(mesh3), tri_faces, 0.7, 12, 12));
  }, {&mesh3});

  // --- spectral mesh convolution --------------------------------------------
  std::vector<std::array<int, 3>> tet{{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
  graph::MeshGraph g = graph::build_graph(tet, 4);
  graph::Laplacian lap = graph::normalized_laplacian(g);
  ad::Tensor xg = make({4, 2});
  nets::ParamStore cheb_ps;
  nets::ChebConvLayer cheb(cheb_ps, "cheb", 3, 2, 2, rng);
  std::vector<ad::Tensor*> cheb_targets{&xg};
  for (auto* p : cheb_ps.group("cheb")) cheb_targets.push_back(p);
  add("chebyshev_conv", [&](ad::Tape& t) {
    return t.frob_sq(cheb.forward(t, lap, t.param(xg)));
  }, cheb_targets);

  // --- end-to-end clip objective ---------------------------------------------
  synth::SynthConfig sc;
  sc.width = sc.height = 16;
  sc.frames = 3;
  sc.sigma_px = 1.5;
  sc.camera = {17.0, 17.0, 8.0, 8.0, 400.0};
  const HandTemplate tmpl = make_hand_template();
  const synth::Clip clip = synth::generate_clip(tmpl, sc, 3);
  train::TrainConfig tc;
  tc.seed = seed;
  tc.net.width = tc.net.height = 16;
  tc.net.base_channels = 2;
  tc.net.feature_channels = 4;
  tc.net.latent_channels = 8;
  tc.flow_mode = nets::FlowEstimator::Mode::learned;
  train::Trainer tr(tc);
  auto& ps = tr.params();
  add("pme_end_to_end", [&](ad::Tape& t) {
    return tr.build_clip_loss(t, clip, 3, tc.weights, /*use_gt_boot=*/true);
  }, {&ps.at("flow.c2.b"), &ps.at("heatmap.maps.b"), &ps.at("pose.fc1.b"),
      &ps.at("mesh.conv2.b")});

  return out;
}

inline bool all_pass(const std::vector<SuiteEntry>& entries) {
  for (const auto& e : entries)
    if (!e.report.pass) return false;
  return true;
}

}  // namespace tassn::gradsuite
