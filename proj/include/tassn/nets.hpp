#pragma once

// The four per-frame estimators: optical flow, 2D keypoint heatmaps
// (stacked hourglass), spectral GCN mesh decoder, and GCN pose head,
// composed into a single differentiable forward pass.

#include <cmath>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "graph.hpp"
#include "synth.hpp"
#include "tensor.hpp"

namespace tassn::nets {

// Named parameter registry. std::map gives stable references and a fixed
// lexicographic order, so optimizer traversal is deterministic.
class ParamStore {
 public:
  ad::Tensor& create(const std::string& name, std::vector<int> shape, double bound,
                     std::mt19937_64& rng) {
    if (store_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    ad::Tensor t = ad::Tensor::zeros(shape);
    if (bound > 0.0) {
      std::uniform_real_distribution<double> d(-bound, bound);
      for (auto& v : t.values) v = d(rng);
    }
    t.requires_grad = true;
    return store_.emplace(name, std::move(t)).first->second;
  }
  ad::Tensor& at(const std::string& name) {
    auto it = store_.find(name);
    if (it == store_.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
  }
  std::map<std::string, ad::Tensor>& all() { return store_; }
  const std::map<std::string, ad::Tensor>& all() const { return store_; }
  std::vector<ad::Tensor*> group(const std::string& prefix) {
    std::vector<ad::Tensor*> out;
    for (auto& [name, t] : store_)
      if (name.rfind(prefix, 0) == 0) out.push_back(&t);
    return out;
  }

 private:
  std::map<std::string, ad::Tensor> store_;
};

inline ad::Var image_input(ad::Tape& tape, const io::Image& im) {
  return tape.input(ad::Tensor::from({im.channels, im.h, im.w}, im.data));
}

// ---------------------------------------------------------------------------
// Layers.

struct ConvLayer {
  ad::Tensor* w = nullptr;
  ad::Tensor* b = nullptr;
  int stride = 1;

  ConvLayer() = default;
  ConvLayer(ParamStore& ps, const std::string& prefix, int cin, int cout, int k, int stride_,
            std::mt19937_64& rng)
      : stride(stride_) {
    const double bound = std::sqrt(1.0 / (cin * k * k));
    w = &ps.create(prefix + ".w", {cout, cin, k, k}, bound, rng);
    b = &ps.create(prefix + ".b", {cout}, bound, rng);
  }
  ad::Var forward(ad::Tape& t, ad::Var x) const {
    return t.bias_add_channels(t.conv2d(x, t.param(*w), stride), t.param(*b));
  }
};

// Transposed conv with stride 2 doubles the spatial size exactly.
struct DeconvLayer {
  ad::Tensor* w = nullptr;
  ad::Tensor* b = nullptr;

  DeconvLayer() = default;
  DeconvLayer(ParamStore& ps, const std::string& prefix, int cin, int cout, int k,
              std::mt19937_64& rng) {
    const double bound = std::sqrt(1.0 / (cin * k * k));
    w = &ps.create(prefix + ".w", {cin, cout, k, k}, bound, rng);
    b = &ps.create(prefix + ".b", {cout}, bound, rng);
  }
  ad::Var forward(ad::Tape& t, ad::Var x) const {
    return t.bias_add_channels(t.conv_transpose2d(x, t.param(*w), 2), t.param(*b));
  }
};

struct DenseLayer {
  ad::Tensor* w = nullptr;
  ad::Tensor* b = nullptr;

  DenseLayer() = default;
  DenseLayer(ParamStore& ps, const std::string& prefix, int fin, int fout,
             std::mt19937_64& rng) {
    const double bound = std::sqrt(1.0 / fin);
    w = &ps.create(prefix + ".w", {fin, fout}, bound, rng);
    b = &ps.create(prefix + ".b", {fout}, bound, rng);
  }
  ad::Var forward(ad::Tape& t, ad::Var x) const {
    return t.bias_add_rows(t.matmul(x, t.param(*w)), t.param(*b));
  }
};

// Spectral graph convolution: y = sum_k T_k(L_scaled) x theta_k + bias.
// Any per-basis scalar coefficient is absorbed into theta_k.
struct ChebConvLayer {
  int S = 3;
  std::vector<ad::Tensor*> theta;
  ad::Tensor* bias = nullptr;  // null for a bias-free (purely linear) layer

  ChebConvLayer() = default;
  ChebConvLayer(ParamStore& ps, const std::string& prefix, int S_, int fin, int fout,
                std::mt19937_64& rng, bool with_bias = true)
      : S(S_) {
    const double bound = std::sqrt(1.0 / (fin * (S + 1)));
    for (int k = 0; k <= S; ++k)
      theta.push_back(&ps.create(prefix + ".theta" + std::to_string(k), {fin, fout}, bound, rng));
    if (with_bias) bias = &ps.create(prefix + ".b", {fout}, bound, rng);
  }
  ad::Var forward(ad::Tape& t, const graph::Laplacian& lap, ad::Var x) const {
    const auto basis = graph::chebyshev_propagate(t, lap, x, S);
    ad::Var y = t.matmul(basis[0], t.param(*theta[0]));
    for (int k = 1; k <= S; ++k) y = t.add(y, t.matmul(basis[k], t.param(*theta[k])));
    return bias ? t.bias_add_rows(y, t.param(*bias)) : y;
  }
};

// ---------------------------------------------------------------------------

struct NetConfig {
  int K = 21;
  int width = 64, height = 64;
  int base_channels = 8;       // hourglass width
  int feature_channels = 32;   // pre-head feature F
  int latent_channels = 64;    // coarsest-level vertex features
  int cheb_order = 3;
  double output_scale_mm = 100.0;  // maps O(1) activations to mm
};

// Two stacked hourglass blocks (2 downsample / 2 upsample stages each, skip
// connections at both resolutions). Input: concat of frame (3), flow (2) and
// previous heatmaps (K). Outputs K sigmoid heatmaps and a feature tensor.
struct HeatmapNet {
  NetConfig cfg;
  ConvLayer stem;
  struct Hourglass {
    ConvLayer down1, down2, mid;
    DeconvLayer up1, up2;
    ConvLayer fuse;
  };
  Hourglass hg[2];
  ConvLayer feat_head, map_head;

  HeatmapNet() = default;
  HeatmapNet(ParamStore& ps, const NetConfig& c, std::mt19937_64& rng) : cfg(c) {
    const int B = c.base_channels;
    stem = ConvLayer(ps, "heatmap.stem", 3 + 2 + c.K, B, 3, 1, rng);
    for (int i = 0; i < 2; ++i) {
      const std::string p = "heatmap.hg" + std::to_string(i);
      hg[i].down1 = ConvLayer(ps, p + ".down1", B, 2 * B, 3, 2, rng);
      hg[i].down2 = ConvLayer(ps, p + ".down2", 2 * B, 2 * B, 3, 2, rng);
      hg[i].mid = ConvLayer(ps, p + ".mid", 2 * B, 2 * B, 3, 1, rng);
      hg[i].up1 = DeconvLayer(ps, p + ".up1", 2 * B, 2 * B, 3, rng);
      hg[i].up2 = DeconvLayer(ps, p + ".up2", 2 * B, B, 3, rng);
      hg[i].fuse = ConvLayer(ps, p + ".fuse", B, B, 3, 1, rng);
    }
    feat_head = ConvLayer(ps, "heatmap.feat", B, c.feature_channels, 1, 1, rng);
    map_head = ConvLayer(ps, "heatmap.maps", B, c.K, 1, 1, rng);
  }

  // x: [3+2+K, H, W] -> (heatmaps [K,H,W] in [0,1], feature [F,H,W])
  std::pair<ad::Var, ad::Var> forward(ad::Tape& t, ad::Var x) const {
    ad::Var h = t.relu(stem.forward(t, x));
    for (int i = 0; i < 2; ++i) {
      ad::Var skip0 = h;
      ad::Var d1 = t.relu(hg[i].down1.forward(t, h));
      ad::Var d2 = t.relu(hg[i].down2.forward(t, d1));
      ad::Var m = t.relu(hg[i].mid.forward(t, d2));
      ad::Var u1 = t.add(t.relu(hg[i].up1.forward(t, m)), d1);
      ad::Var u2 = t.add(t.relu(hg[i].up2.forward(t, u1)), skip0);
      h = t.relu(hg[i].fuse.forward(t, u2));
    }
    ad::Var feature = t.relu(feat_head.forward(t, h));
    ad::Var maps = t.sigmoid(map_head.forward(t, h));
    return {maps, feature};
  }
};

// Global-average-pools the image feature, lifts it to coarsest-level vertex
// features, then alternates spectral convolutions with upsampling back to the
// full mesh. The final layer is purely linear (no bias) in the features.
struct MeshDecoder {
  NetConfig cfg;
  const graph::GraphHierarchy* hier = nullptr;
  DenseLayer latent;
  std::vector<ChebConvLayer> convs;  // one per level, coarsest first
  ChebConvLayer out;

  MeshDecoder() = default;
  MeshDecoder(ParamStore& ps, const NetConfig& c, const graph::GraphHierarchy& h,
              std::mt19937_64& rng)
      : cfg(c), hier(&h) {
    const int L = h.num_levels();
    if (L < 2) throw std::invalid_argument("MeshDecoder: hierarchy needs >= 2 levels");
    latent = DenseLayer(ps, "mesh.latent", c.feature_channels,
                        h.vertices_at(L - 1) * c.latent_channels, rng);
    int fin = c.latent_channels;
    for (int l = L - 1; l >= 1; --l) {
      const int fout = std::max(16, fin / 2);
      convs.emplace_back(ps, "mesh.conv" + std::to_string(l), c.cheb_order, fin, fout, rng);
      fin = fout;
    }
    out = ChebConvLayer(ps, "mesh.out", c.cheb_order, fin, 3, rng, /*with_bias=*/false);
  }

  // F: [feature_channels, H, W] -> vertices [C,3] in mm, wrist-relative.
  ad::Var forward(ad::Tape& t, ad::Var feature) const {
    const int L = hier->num_levels();
    ad::Var g = t.reshape(t.mean_spatial(feature), {1, cfg.feature_channels});
    ad::Var x = t.reshape(latent.forward(t, g),
                          {hier->vertices_at(L - 1), cfg.latent_channels});
    for (int i = 0; i < static_cast<int>(convs.size()); ++i) {
      const int level = L - 1 - i;
      x = t.relu(convs[i].forward(t, hier->levels[level].lap, x));
      x = graph::upsample(t, *hier, level, x);
    }
    return t.scale(out.forward(t, hier->levels[0].lap, x), cfg.output_scale_mm);
  }
};

// Two spectral convolutions, each followed by mean pooling one level down;
// the per-level features are mean-pooled to one vector each, concatenated,
// and regressed to K 3D keypoints by two fully connected layers.
struct PoseHead {
  NetConfig cfg;
  const graph::GraphHierarchy* hier = nullptr;
  ChebConvLayer conv1, conv2;
  DenseLayer fc1, fc2;

  PoseHead() = default;
  PoseHead(ParamStore& ps, const NetConfig& c, const graph::GraphHierarchy& h,
           std::mt19937_64& rng)
      : cfg(c), hier(&h) {
    if (h.num_levels() < 3) throw std::invalid_argument("PoseHead: hierarchy needs >= 3 levels");
    conv1 = ChebConvLayer(ps, "pose.conv1", c.cheb_order, 3, 16, rng);
    conv2 = ChebConvLayer(ps, "pose.conv2", c.cheb_order, 16, 16, rng);
    fc1 = DenseLayer(ps, "pose.fc1", 32, 32, rng);
    fc2 = DenseLayer(ps, "pose.fc2", 32, 3 * c.K, rng);
  }

  static ad::Var mean_rows(ad::Tape& t, ad::Var x, int rows) {
    graph::Mat M = graph::Mat::Constant(1, rows, 1.0 / rows);
    return t.const_matmul(M, x);
  }

  // mesh: [C,3] -> pose [K,3] in mm, wrist-relative.
  ad::Var forward(ad::Tape& t, ad::Var mesh) const {
    ad::Var f0 = t.relu(conv1.forward(t, hier->levels[0].lap, mesh));
    ad::Var p0 = graph::pool(t, *hier, 0, f0);
    ad::Var f1 = t.relu(conv2.forward(t, hier->levels[1].lap, p0));
    ad::Var v0 = t.reshape(mean_rows(t, f0, hier->vertices_at(0)), {16, 1, 1});
    ad::Var v1 = t.reshape(mean_rows(t, f1, hier->vertices_at(1)), {16, 1, 1});
    ad::Var v = t.reshape(t.concat_channels({v0, v1}), {1, 32});
    ad::Var y = fc2.forward(t, t.relu(fc1.forward(t, v)));
    return t.scale(t.reshape(y, {cfg.K, 3}), cfg.output_scale_mm);
  }
};

// Oracle mode replays the generator's exact flow for adjacent frame pairs;
// learned mode is a small conv encoder-decoder over the two frames.
struct FlowEstimator {
  enum class Mode { oracle, learned };
  Mode mode = Mode::oracle;
  ConvLayer c1, c2;
  DeconvLayer up;

  FlowEstimator() = default;
  FlowEstimator(ParamStore& ps, Mode m, std::mt19937_64& rng) : mode(m) {
    if (mode == Mode::learned) {
      c1 = ConvLayer(ps, "flow.c1", 6, 16, 3, 2, rng);
      c2 = ConvLayer(ps, "flow.c2", 16, 16, 3, 1, rng);
      up = DeconvLayer(ps, "flow.up", 16, 2, 3, rng);
    }
  }

  // Flow for the ordered pair (from -> to), defined on frame `to`'s grid,
  // in pixels per frame.
  ad::Var estimate(ad::Tape& t, const synth::Clip& clip, int from, int to) const {
    if (from < 0 || to < 0 || from >= clip.num_frames() || to >= clip.num_frames())
      throw std::out_of_range("flow_estimate: frame index out of range");
    if (mode == Mode::oracle) {
      if (to != from + 1 && to != from - 1)
        throw std::invalid_argument("flow_estimate: oracle flow needs adjacent frames");
      const auto& f = (to == from + 1) ? clip.flow_fwd[from] : clip.flow_bwd[to];
      return t.input(ad::Tensor::from({2, clip.config.height, clip.config.width}, f));
    }
    ad::Var x = t.concat_channels({image_input(t, clip.frames[from]),
                                   image_input(t, clip.frames[to])});
    ad::Var h = t.relu(c1.forward(t, x));
    h = t.relu(c2.forward(t, h));
    return up.forward(t, h);
  }
};

// ---------------------------------------------------------------------------

struct Pme {
  NetConfig cfg;
  FlowEstimator flow;
  HeatmapNet heatmap;
  MeshDecoder mesh;
  PoseHead pose;

  Pme() = default;
  Pme(ParamStore& ps, const NetConfig& c, const graph::GraphHierarchy& h,
      FlowEstimator::Mode flow_mode, std::mt19937_64& rng)
      : cfg(c),
        flow(ps, flow_mode, rng),
        heatmap(ps, c, rng),
        mesh(ps, c, h, rng),
        pose(ps, c, h, rng) {}
};

struct PmeOutput {
  ad::Var flow, heatmaps, feature, mesh, pose;
};

// One estimation step for the ordered frame pair (from -> to), chaining the
// previous frame's heatmaps. All outputs live on `tape`.
inline PmeOutput pme_forward(ad::Tape& tape, const Pme& nets, const synth::Clip& clip, int from,
                             int to, ad::Var heat_prev) {
  PmeOutput out;
  out.flow = nets.flow.estimate(tape, clip, from, to);
  ad::Var x = tape.concat_channels({image_input(tape, clip.frames[to]), out.flow, heat_prev});
  auto [maps, feature] = nets.heatmap.forward(tape, x);
  out.heatmaps = maps;
  out.feature = feature;
  out.mesh = nets.mesh.forward(tape, feature);
  out.pose = nets.pose.forward(tape, out.mesh);
  return out;
}

}  // namespace tassn::nets
