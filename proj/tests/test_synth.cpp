#include <doctest.h>

#include <tassn/graph.hpp>
#include <tassn/hand.hpp>
#include <tassn/io.hpp>
#include <tassn/render.hpp>
#include <tassn/synth.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace tassn;

namespace {

std::string temp_dir(const char* tag) {
  auto p = std::filesystem::temp_directory_path() / (std::string("tassn_test_") + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("hand template: shape, skinning and connectivity") {
  const HandTemplate t = make_hand_template();
  CHECK(kNumJoints == 21);
  CHECK(t.num_vertices() >= 150);
  CHECK(t.num_vertices() <= 250);
  for (int i = 0; i < t.skin.rows(); ++i)
    CHECK(t.skin.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
  // build_graph rejects disconnected meshes, so this doubles as a check.
  const graph::MeshGraph g = graph::build_graph(t.faces, t.num_vertices());
  CHECK(g.num_vertices == t.num_vertices());
}

TEST_CASE("identity pose reproduces the rest template") {
  const HandTemplate t = make_hand_template();
  const JointFrames fr = forward_kinematics(t, HandPose{});
  for (int k = 0; k < kNumJoints; ++k)
    CHECK((fr.pos[k] - t.rest_joints[k]).norm() == doctest::Approx(0.0).epsilon(1e-12));
  const auto v = skin_mesh(t, fr);
  for (size_t i = 0; i < v.size(); ++i)
    CHECK(v[i] == doctest::Approx(t.rest_vertices[i]).epsilon(1e-12));
}

TEST_CASE("articulation moves fingertips and respects the kinematic chain") {
  const HandTemplate t = make_hand_template();
  HandPose p;
  p.mcp_flex[2] = 0.8;  // curl the middle finger only
  const JointFrames fr = forward_kinematics(t, p);
  // Untouched fingers stay at rest.
  for (int k : {1, 2, 3, 4, 17, 18, 19, 20})
    CHECK((fr.pos[k] - t.rest_joints[k]).norm() == doctest::Approx(0.0).epsilon(1e-12));
  // The curled finger's tip leaves the palm plane toward the camera (-z),
  // with bone lengths preserved.
  CHECK(fr.pos[12].z() < -20.0);
  for (int k = 9; k <= 12; ++k)
    CHECK((fr.pos[k] - fr.pos[k - 1]).norm() ==
          doctest::Approx((t.rest_joints[k] - t.rest_joints[k - 1]).norm()).epsilon(1e-10));
}

TEST_CASE("frozen trajectory gives identical frames and exactly zero flow") {
  synth::SynthConfig cfg;
  cfg.frozen = true;
  const auto clip = synth::generate_clip(make_hand_template(), cfg, 7);
  REQUIRE(clip.num_frames() == cfg.frames);
  for (int tfr = 1; tfr < clip.num_frames(); ++tfr)
    CHECK(clip.frames[tfr].data == clip.frames[0].data);
  for (const auto& flow : clip.flow_fwd)
    for (double f : flow) CHECK(f == doctest::Approx(0.0).epsilon(1e-9));
  for (const auto& flow : clip.flow_bwd)
    for (double f : flow) CHECK(f == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("clip generation is bitwise deterministic per seed") {
  synth::SynthConfig cfg;
  const HandTemplate t = make_hand_template();
  const auto a = synth::generate_clip(t, cfg, 42);
  const auto b = synth::generate_clip(t, cfg, 42);
  const auto c = synth::generate_clip(t, cfg, 43);
  for (int tfr = 0; tfr < a.num_frames(); ++tfr) {
    CHECK(a.frames[tfr].data == b.frames[tfr].data);
    CHECK(a.keypoints2d[tfr] == b.keypoints2d[tfr]);
  }
  for (int p = 0; p < a.num_pairs(); ++p) CHECK(a.flow_fwd[p] == b.flow_fwd[p]);
  CHECK(a.frames[0].data != c.frames[0].data);
}

TEST_CASE("warping by ground-truth flow reconstructs the next frame") {
  synth::SynthConfig cfg;
  const auto clip = synth::generate_clip(make_hand_template(), cfg, 11);
  const int H = cfg.height, W = cfg.width;
  double err_sum = 0.0;
  int count = 0;
  for (int p = 0; p < clip.num_pairs(); ++p) {
    const auto& src = clip.frames[p];
    const auto& dst = clip.frames[p + 1];
    const auto& flow = clip.flow_fwd[p];
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        if (clip.silhouettes[p + 1].at(0, i, j) < 0.5) continue;
        const double u = j - flow[static_cast<size_t>(i) * W + j];
        const double v = i - flow[static_cast<size_t>(H) * W + i * W + j];
        // Only judge pixels whose source sample is fully inside the
        // source-frame foreground (motion is undefined elsewhere).
        if (synth::bilinear(clip.silhouettes[p], 0, u, v) < 0.999) continue;
        for (int c = 0; c < 3; ++c) {
          err_sum += std::abs(synth::bilinear(src, c, u, v) - dst.at(c, i, j));
          ++count;
        }
      }
  }
  REQUIRE(count > 1000);  // the oracle must actually cover the hand
  CHECK(err_sum / count <= 0.05);
}

TEST_CASE("ground-truth heatmaps: unit peak and Gaussian falloff") {
  const std::vector<double> kp = {10.0, 20.0, 31.7, 40.2};
  const double sigma = 2.0;
  const auto h = synth::gt_heatmaps(kp, 64, 64, sigma);
  auto at = [&](int k, int i, int j) { return h[(static_cast<size_t>(k) * 64 + i) * 64 + j]; };
  CHECK(at(0, 20, 10) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(at(0, 22, 10) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(at(0, 20, 12) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  // Off-grid keypoint: peak value 1 lands on the nearest pixel.
  CHECK(at(1, 40, 32) == doctest::Approx(1.0).epsilon(1e-15));
  double m = 0.0;
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) m = std::max(m, at(1, i, j));
  CHECK(m == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(synth::gt_heatmaps(kp, 64, 64, 0.0), std::invalid_argument);
}

TEST_CASE("preprocess: identity crop, center mapping, camera commutation") {
  synth::SynthConfig cfg;
  const auto clip = synth::generate_clip(make_hand_template(), cfg, 5);
  const auto& frame = clip.frames[0];
  const auto& kp = clip.keypoints2d[0];
  const render::Camera cam = cfg.camera;

  SUBCASE("full-image crop at native size is the identity") {
    const double c = (cfg.width - 1) / 2.0;
    const auto out = synth::preprocess(frame, kp, cam, c, c, c, cfg.width);
    for (size_t i = 0; i < frame.data.size(); ++i)
      CHECK(out.image.data[i] == doctest::Approx(frame.data[i]).epsilon(1e-12));
    for (size_t i = 0; i < kp.size(); ++i)
      CHECK(out.keypoints[i] == doctest::Approx(kp[i]).epsilon(1e-9));
  }

  SUBCASE("crop center maps to the output center") {
    const double cu = kp[0], cv = kp[1];  // wrist pixel
    const auto out = synth::preprocess(frame, kp, cam, cu, cv, 20.0, 32);
    CHECK(out.keypoints[0] == doctest::Approx((32 - 1) / 2.0).epsilon(1e-9));
    CHECK(out.keypoints[1] == doctest::Approx((32 - 1) / 2.0).epsilon(1e-9));
  }

  SUBCASE("projecting with the transformed camera matches transforming projections") {
    const double cu = 40.0, cv = 25.0, half = 18.0;
    const int N = 48;
    const auto out = synth::preprocess(frame, kp, cam, cu, cv, half, N);
    const auto& pose = clip.pose3d_eval_only()[0];
    for (int k = 0; k < kNumJoints; ++k) {
      double u2, v2;
      synth::project_point(out.camera, pose[3 * k], pose[3 * k + 1], pose[3 * k + 2], u2, v2);
      CHECK(std::abs(u2 - out.keypoints[2 * k]) <= 1e-6);
      CHECK(std::abs(v2 - out.keypoints[2 * k + 1]) <= 1e-6);
    }
  }

  SUBCASE("disjoint crop is rejected") {
    CHECK_THROWS_AS(synth::preprocess(frame, kp, cam, -200.0, 32.0, 10.0, 32),
                    std::invalid_argument);
  }
}

TEST_CASE("hard silhouette agrees with thresholded soft coverage") {
  synth::SynthConfig cfg;
  const HandTemplate t = make_hand_template();
  const auto clip = synth::generate_clip(t, cfg, 3);
  const auto& mesh = clip.mesh3d_eval_only()[0];
  ad::Tape tape;
  ad::Var pts = tape.input(ad::Tensor::from({t.num_vertices(), 3}, mesh));
  ad::Var soft = render::rasterize_silhouette(tape, cfg.camera, pts, t.faces, 0.1, cfg.width,
                                              cfg.height);
  const auto& s = tape.val(soft);
  int disagree = 0;
  for (int i = 0; i < cfg.height; ++i)
    for (int j = 0; j < cfg.width; ++j) {
      const bool hard = clip.silhouettes[0].at(0, i, j) > 0.5;
      const bool softb = s.values[static_cast<size_t>(i) * cfg.width + j] > 0.5;
      disagree += hard != softb;
    }
  CHECK(disagree <= cfg.width * cfg.height / 100);
}

TEST_CASE("training guard blocks 3D ground truth") {
  synth::SynthConfig cfg;
  const auto clip = synth::generate_clip(make_hand_template(), cfg, 1);
  synth::TrainingGuard::tampered = false;
  CHECK(clip.pose3d_eval_only().size() == static_cast<size_t>(cfg.frames));  // fine outside
  CHECK_FALSE(synth::TrainingGuard::tampered.load());
  {
    synth::TrainingScope scope;
    CHECK_THROWS_AS(clip.pose3d_eval_only(), std::logic_error);
    CHECK_THROWS_AS(clip.mesh3d_eval_only(), std::logic_error);
    CHECK(synth::TrainingGuard::tampered.load());
  }
  CHECK(clip.mesh3d_eval_only().size() == static_cast<size_t>(cfg.frames));
  synth::TrainingGuard::tampered = false;
}

TEST_CASE("image and array files round-trip") {
  const std::string dir = temp_dir("io");
  io::Image im = io::Image::zeros(3, 5, 7);
  for (size_t i = 0; i < im.data.size(); ++i) im.data[i] = (i % 19) / 18.0;
  io::write_pnm(dir + "/a.ppm", im);
  const io::Image back = io::read_pnm(dir + "/a.ppm");
  REQUIRE(back.channels == 3);
  REQUIRE(back.h == 5);
  REQUIRE(back.w == 7);
  for (size_t i = 0; i < im.data.size(); ++i)
    CHECK(back.data[i] == doctest::Approx(io::quantize8(im.data[i]) / 255.0).epsilon(1e-12));

  io::write_array(dir + "/x.f32", "x", {2, 3}, {1, 2, 3, 4, 5, 6.5});
  const auto a = io::read_array(dir + "/x.f32");
  CHECK(a.name == "x");
  CHECK(a.dims == std::vector<int>{2, 3});
  CHECK(a.values == std::vector<double>{1, 2, 3, 4, 5, 6.5});
  CHECK_THROWS(io::read_array(dir + "/missing.f32"));
}

TEST_CASE("dataset save/load round-trip and byte-identical regeneration") {
  synth::SynthConfig cfg;
  cfg.frames = 3;
  const HandTemplate t = make_hand_template();
  const auto ds = synth::generate_dataset(t, cfg, 2, 1, 99);
  REQUIRE(ds.train.size() == 2);
  REQUIRE(ds.val.size() == 1);

  const std::string d1 = temp_dir("ds1"), d2 = temp_dir("ds2");
  synth::save_dataset(d1, ds);
  synth::save_dataset(d2, synth::generate_dataset(t, cfg, 2, 1, 99));
  for (const auto& e : std::filesystem::recursive_directory_iterator(d1)) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), d1);
    CHECK(slurp(e.path().string()) == slurp((std::filesystem::path(d2) / rel).string()));
  }

  const auto back = synth::load_dataset(d1);
  REQUIRE(back.train.size() == 2);
  REQUIRE(back.val.size() == 1);
  const auto& a = ds.train[1];
  const auto& b = back.train[1];
  CHECK(b.num_frames() == a.num_frames());
  for (int tfr = 0; tfr < a.num_frames(); ++tfr) {
    for (size_t i = 0; i < a.frames[tfr].data.size(); ++i)
      CHECK(b.frames[tfr].data[i] ==
            doctest::Approx(io::quantize8(a.frames[tfr].data[i]) / 255.0).epsilon(1e-12));
    for (size_t i = 0; i < a.keypoints2d[tfr].size(); ++i)
      CHECK(b.keypoints2d[tfr][i] ==
            doctest::Approx(static_cast<float>(a.keypoints2d[tfr][i])).epsilon(1e-12));
  }
  for (int p = 0; p < a.num_pairs(); ++p)
    for (size_t i = 0; i < a.flow_fwd[p].size(); ++i)
      CHECK(b.flow_fwd[p][i] ==
            doctest::Approx(static_cast<float>(a.flow_fwd[p][i])).epsilon(1e-12));
  const auto& pa = a.pose3d_eval_only();
  const auto& pb = b.pose3d_eval_only();
  for (int tfr = 0; tfr < a.num_frames(); ++tfr)
    for (size_t i = 0; i < pa[tfr].size(); ++i)
      CHECK(pb[tfr][i] == doctest::Approx(static_cast<float>(pa[tfr][i])).epsilon(1e-12));
}
