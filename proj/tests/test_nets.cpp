#include <doctest.h>

#include <tassn/gradcheck.hpp>
#include <tassn/losses.hpp>
#include <tassn/nets.hpp>

#include <random>

using namespace tassn;

namespace {

// Closed tube mesh: 8 rings of 5 vertices plus two apex caps (C = 42).
std::vector<std::array<int, 3>> tube_faces(int rings = 8, int ring_size = 5) {
  std::vector<std::array<int, 3>> faces;
  auto v = [&](int r, int k) { return r * ring_size + (k % ring_size); };
  for (int r = 0; r + 1 < rings; ++r)
    for (int k = 0; k < ring_size; ++k) {
      faces.push_back({v(r, k), v(r + 1, k), v(r + 1, k + 1)});
      faces.push_back({v(r, k), v(r + 1, k + 1), v(r, k + 1)});
    }
  const int bottom = rings * ring_size, top = bottom + 1;
  for (int k = 0; k < ring_size; ++k) {
    faces.push_back({v(0, k), bottom, v(0, k + 1)});
    faces.push_back({v(rings - 1, k), v(rings - 1, k + 1), top});
  }
  return faces;
}

struct ToyWorld {
  graph::GraphHierarchy hier;
  nets::NetConfig cfg;
  synth::Clip clip;
  std::vector<double> heat0;  // bootstrap heatmaps for the first pair

  ToyWorld() {
    const auto faces = tube_faces();
    hier = graph::coarsen(graph::build_graph(faces, 42), 2);
    cfg.K = 4;
    cfg.width = cfg.height = 16;
    cfg.base_channels = 2;
    cfg.feature_channels = 4;
    cfg.latent_channels = 8;
    synth::SynthConfig sc;
    sc.width = sc.height = 16;
    sc.frames = 3;
    sc.camera = {17.0, 17.0, 8.0, 8.0, 400.0};
    clip = synth::generate_clip(make_hand_template(), sc, 21);
    const std::vector<double> kp4(clip.keypoints2d[0].begin(), clip.keypoints2d[0].begin() + 8);
    heat0 = synth::gt_heatmaps(kp4, 16, 16, 1.5);
  }

  nets::Pme make_pme(nets::ParamStore& ps, std::uint64_t seed = 5) const {
    std::mt19937_64 rng(seed);
    return nets::Pme(ps, cfg, hier, nets::FlowEstimator::Mode::oracle, rng);
  }
};

}  // namespace

TEST_CASE("parameter store: creation, lookup, grouping, duplicates") {
  std::mt19937_64 rng(1);
  nets::ParamStore ps;
  ps.create("a.w", {2, 3}, 0.5, rng);
  ps.create("a.b", {3}, 0.0, rng);
  ps.create("b.w", {4}, 0.5, rng);
  CHECK(ps.at("a.w").values.size() == 6);
  for (double v : ps.at("a.b").values) CHECK(v == 0.0);
  for (double v : ps.at("a.w").values) CHECK(std::abs(v) < 0.5);
  CHECK(ps.group("a.").size() == 2);
  CHECK(ps.group("").size() == 3);
  CHECK_THROWS_AS(ps.create("a.w", {1}, 0.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(ps.at("missing"), std::out_of_range);
}

TEST_CASE("heatmap net: sigmoid range, shapes, zeroed head gives 0.5") {
  ToyWorld w;
  nets::ParamStore ps;
  std::mt19937_64 rng(2);
  nets::HeatmapNet net(ps, w.cfg, rng);
  ad::Tape tape;
  ad::Tensor xin = ad::Tensor::zeros({3 + 2 + w.cfg.K, 16, 16});
  for (auto& v : xin.values) v = 0.3;
  ad::Var x = tape.input(std::move(xin));
  auto [maps, feat] = net.forward(tape, x);
  CHECK(tape.val(maps).shape == std::vector<int>{w.cfg.K, 16, 16});
  CHECK(tape.val(feat).shape == std::vector<int>{w.cfg.feature_channels, 16, 16});
  for (double v : tape.val(maps).values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  // Zero the final layer: sigmoid(0) = 0.5 everywhere.
  for (auto& v : ps.at("heatmap.maps.w").values) v = 0.0;
  for (auto& v : ps.at("heatmap.maps.b").values) v = 0.0;
  ad::Tape tape2;
  auto [maps2, feat2] = net.forward(tape2, tape2.input(ad::Tensor::zeros({9, 16, 16})));
  (void)feat2;
  for (double v : tape2.val(maps2).values) CHECK(v == 0.5);
}

TEST_CASE("heatmap training loss gradient passes finite differences") {
  ToyWorld w;
  nets::ParamStore ps;
  std::mt19937_64 rng(3);
  nets::HeatmapNet net(ps, w.cfg, rng);
  ad::Tensor gt = ad::Tensor::from({w.cfg.K, 16, 16}, w.heat0);
  std::vector<ad::Tensor*> targets;
  for (auto& [name, t] : ps.all()) targets.push_back(&t);
  auto report = ad::check_gradient(
      [&](ad::Tape& tape) {
        ad::Var o = tape.input(ad::Tensor::from({2, 16, 16},
                                                std::vector<double>(512, 0.25)));
        ad::Var img = nets::image_input(tape, w.clip.frames[1]);
        ad::Var hp = tape.input(gt);
        auto [maps, feat] = net.forward(tape, tape.concat_channels({img, o, hp}));
        (void)feat;
        return losses::heatmap_loss(tape, maps, tape.input(gt));
      },
      targets);
  INFO("worst: ", report.worst, " rel err ", report.max_rel_err);
  CHECK(report.pass);
}

TEST_CASE("mesh decoder: shape, final-layer linearity, feature gradient") {
  ToyWorld w;
  nets::ParamStore ps;
  std::mt19937_64 rng(4);
  nets::MeshDecoder dec(ps, w.cfg, w.hier, rng);

  ad::Tensor F = ad::Tensor::zeros({w.cfg.feature_channels, 16, 16});
  std::mt19937_64 frng(9);
  std::uniform_real_distribution<double> d(0.0, 1.0);
  for (auto& v : F.values) v = d(frng);
  F.requires_grad = true;

  ad::Tape tape;
  ad::Var m = dec.forward(tape, tape.param(F));
  CHECK(tape.val(m).shape == std::vector<int>{42, 3});
  for (double v : tape.val(m).values) CHECK(std::isfinite(v));

  // The output layer is linear: doubling its weights doubles the vertices.
  const auto base = tape.val(m).values;
  for (int k = 0; k <= w.cfg.cheb_order; ++k)
    for (auto& v : ps.at("mesh.out.theta" + std::to_string(k)).values) v *= 2.0;
  ad::Tape tape2;
  const auto doubled = tape2.val(dec.forward(tape2, tape2.param(F))).values;
  for (size_t i = 0; i < base.size(); ++i)
    CHECK(doubled[i] == doctest::Approx(2.0 * base[i]).epsilon(1e-12));
  for (int k = 0; k <= w.cfg.cheb_order; ++k)
    for (auto& v : ps.at("mesh.out.theta" + std::to_string(k)).values) v *= 0.5;

  auto report = ad::check_gradient(
      [&](ad::Tape& t) { return t.mean(dec.forward(t, t.param(F))); }, {&F});
  INFO("worst: ", report.worst, " rel err ", report.max_rel_err);
  CHECK(report.pass);
}

TEST_CASE("pose head: shape, pooling symmetry, mesh gradient") {
  ToyWorld w;
  nets::ParamStore ps;
  std::mt19937_64 rng(6);
  nets::PoseHead head(ps, w.cfg, w.hier, rng);

  ad::Tensor mesh = ad::Tensor::zeros({42, 3});
  std::mt19937_64 mrng(11);
  std::uniform_real_distribution<double> d(-50.0, 50.0);
  for (auto& v : mesh.values) v = d(mrng);
  mesh.requires_grad = true;

  ad::Tape tape;
  ad::Var p = head.forward(tape, tape.param(mesh));
  CHECK(tape.val(p).shape == std::vector<int>{w.cfg.K, 3});
  for (double v : tape.val(p).values) CHECK(std::isfinite(v));

  // Mean pooling inside the head ignores vertex order within a parent.
  {
    const auto& lvl = w.hier.levels[0];
    int a = -1, b = -1;
    for (const auto& kids : lvl.children)
      if (kids.size() == 2) {
        a = kids[0];
        b = kids[1];
        break;
      }
    REQUIRE(a >= 0);
    ad::Tape t1, t2;
    ad::Tensor feat = ad::Tensor::zeros({42, 16});
    for (auto& v : feat.values) v = d(mrng);
    ad::Tensor swapped = feat;
    for (int c = 0; c < 16; ++c)
      std::swap(swapped.values[a * 16 + c], swapped.values[b * 16 + c]);
    const auto pooled1 = t1.val(graph::pool(t1, w.hier, 0, t1.input(feat))).values;
    const auto pooled2 = t2.val(graph::pool(t2, w.hier, 0, t2.input(swapped))).values;
    for (size_t i = 0; i < pooled1.size(); ++i)
      CHECK(pooled1[i] == doctest::Approx(pooled2[i]).epsilon(1e-12));
  }

  // EPE-style loss gradient w.r.t. the mesh input.
  ad::Tensor target = ad::Tensor::zeros({w.cfg.K, 3});
  auto report = ad::check_gradient(
      [&](ad::Tape& t) {
        ad::Var diff = t.sub(head.forward(t, t.param(mesh)), t.input(target));
        return t.scale(t.frob_sq(diff), 1.0 / w.cfg.K);
      },
      {&mesh});
  INFO("worst: ", report.worst, " rel err ", report.max_rel_err);
  CHECK(report.pass);
}

TEST_CASE("flow estimator: oracle replay, adjacency errors, learned shape") {
  ToyWorld w;
  nets::ParamStore ps;
  nets::Pme pme = w.make_pme(ps);
  ad::Tape tape;
  ad::Var fwd = pme.flow.estimate(tape, w.clip, 0, 1);
  CHECK(tape.val(fwd).values == w.clip.flow_fwd[0]);
  ad::Var bwd = pme.flow.estimate(tape, w.clip, 1, 0);
  CHECK(tape.val(bwd).values == w.clip.flow_bwd[0]);
  CHECK_THROWS_AS(pme.flow.estimate(tape, w.clip, 0, 2), std::invalid_argument);
  CHECK_THROWS_AS(pme.flow.estimate(tape, w.clip, 0, 5), std::out_of_range);

  // Frozen clip: the oracle flow of a static scene is zero.
  synth::SynthConfig sc = w.clip.config;
  sc.frozen = true;
  const auto frozen = synth::generate_clip(make_hand_template(), sc, 4);
  ad::Var fz = pme.flow.estimate(tape, frozen, 0, 1);
  for (double v : tape.val(fz).values) CHECK(std::abs(v) < 1e-9);

  std::mt19937_64 rng(8);
  nets::ParamStore ps2;
  nets::FlowEstimator learned(ps2, nets::FlowEstimator::Mode::learned, rng);
  ad::Var lf = learned.estimate(tape, w.clip, 2, 1);  // any pair is valid
  CHECK(tape.val(lf).shape == std::vector<int>{2, 16, 16});
}

TEST_CASE("pme forward: composition, determinism, reversed order") {
  ToyWorld w;
  nets::ParamStore ps;
  nets::Pme pme = w.make_pme(ps);

  auto run = [&](int from, int to) {
    ad::Tape tape;
    ad::Var hp = tape.input(ad::Tensor::from({w.cfg.K, 16, 16}, w.heat0));
    auto out = nets::pme_forward(tape, pme, w.clip, from, to, hp);
    return std::tuple{tape.val(out.flow).values, tape.val(out.heatmaps).values,
                      tape.val(out.mesh).values, tape.val(out.pose).values};
  };
  const auto [f1, h1, m1, p1] = run(0, 1);
  const auto [f2, h2, m2, p2] = run(0, 1);
  CHECK(f1 == f2);
  CHECK(h1 == h2);
  CHECK(m1 == m2);
  CHECK(p1 == p2);
  CHECK(h1.size() == static_cast<size_t>(w.cfg.K) * 16 * 16);
  CHECK(m1.size() == 42 * 3);
  CHECK(p1.size() == static_cast<size_t>(w.cfg.K) * 3);
  for (double v : h1) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  // Reversed argument order consumes the reverse-direction oracle flow.
  const auto [fr, hr, mr, pr] = run(1, 0);
  (void)hr;
  (void)mr;
  (void)pr;
  CHECK(fr == w.clip.flow_bwd[0]);
}

TEST_CASE("end-to-end pme gradient passes finite differences") {
  ToyWorld w;
  nets::ParamStore ps;
  nets::Pme pme = w.make_pme(ps);
  std::vector<ad::Tensor*> targets;
  for (auto& [name, t] : ps.all()) targets.push_back(&t);

  auto report = ad::check_gradient(
      [&](ad::Tape& tape) {
        ad::Var hp = tape.input(ad::Tensor::from({w.cfg.K, 16, 16}, w.heat0));
        auto out = nets::pme_forward(tape, pme, w.clip, 0, 1, hp);
        return tape.add_scaled_scalars({{1.0, tape.mean(out.heatmaps)},
                                        {0.01, tape.mean(out.mesh)},
                                        {0.01, tape.mean(out.pose)}});
      },
      targets);
  INFO("worst: ", report.worst, " rel err ", report.max_rel_err);
  CHECK(report.pass);
}
