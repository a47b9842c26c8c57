#pragma once

// Dense tensors and a tape-based reverse-mode differentiation engine.
// All arithmetic is double precision; shapes are small (desk scale), so
// everything is dense and single-threaded per tape.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace tassn::ad {

using Mat = Eigen::MatrixXd;

struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;
  bool requires_grad = false;

  Tensor() = default;

  static std::int64_t count(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("Tensor: nonpositive dim");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    Tensor t;
    t.shape = std::move(shape);
    t.values.assign(static_cast<size_t>(count(t.shape)), 0.0);
    t.grad.assign(t.values.size(), 0.0);
    t.requires_grad = requires_grad;
    return t;
  }

  static Tensor from(std::vector<int> shape, std::vector<double> values,
                     bool requires_grad = false) {
    Tensor t;
    t.shape = std::move(shape);
    if (static_cast<std::int64_t>(values.size()) != count(t.shape))
      throw std::invalid_argument("Tensor: shape/value length mismatch");
    t.values = std::move(values);
    t.grad.assign(t.values.size(), 0.0);
    t.requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(double v) { return from({1}, {v}); }

  std::int64_t numel() const { return static_cast<std::int64_t>(values.size()); }

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Node handle into a Tape.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Eager tape: every op computes its output on creation and records a
// closure that scatters the output gradient back to its parents.
// One backward() per tape.
class Tape {
 public:
  const Tensor& val(Var v) const { return node(v.id).t; }
  Tensor& mutable_val(Var v) { return nodes_[check(v.id)].t; }

  // Leaf bound to external parameter storage: values are copied in,
  // gradients are accumulated into param.grad during backward().
  Var param(Tensor& p) {
    Var v = push(p, /*needs_grad=*/true, {}, nullptr, "param");
    nodes_[v.id].external = &p;
    return v;
  }

  // Constant / data input.
  Var input(Tensor t) {
    bool ng = t.requires_grad;
    Var v = push(std::move(t), ng, {}, nullptr, "input");
    if (ng) nodes_[v.id].is_checked_leaf = true;
    return v;
  }

  Var add(Var a, Var b) { return axpby(1.0, a, 1.0, b); }
  Var sub(Var a, Var b) { return axpby(1.0, a, -1.0, b); }

  // alpha*a + beta*b, elementwise, same shape.
  Var axpby(double alpha, Var a, double beta, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require(ta.same_shape(tb), "axpby", "shape mismatch " + shape_str(ta.shape) +
                                            " vs " + shape_str(tb.shape));
    Tensor out = Tensor::zeros(ta.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i)
      out.values[i] = alpha * ta.values[i] + beta * tb.values[i];
    return push(std::move(out), needs(a) || needs(b), {a, b},
                [alpha, beta](Tape& tp, Node& n) {
                  tp.accumulate(n.parents[0], [&](std::int64_t i) { return alpha * n.t.grad[i]; });
                  tp.accumulate(n.parents[1], [&](std::int64_t i) { return beta * n.t.grad[i]; });
                },
                "axpby");
  }

  Var mul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require(ta.same_shape(tb), "mul", "shape mismatch");
    Tensor out = Tensor::zeros(ta.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i)
      out.values[i] = ta.values[i] * tb.values[i];
    return push(std::move(out), needs(a) || needs(b), {a, b},
                [](Tape& tp, Node& n) {
                  const Tensor& ta = tp.node(n.parents[0].id).t;
                  const Tensor& tb = tp.node(n.parents[1].id).t;
                  tp.accumulate(n.parents[0], [&](std::int64_t i) { return n.t.grad[i] * tb.values[i]; });
                  tp.accumulate(n.parents[1], [&](std::int64_t i) { return n.t.grad[i] * ta.values[i]; });
                },
                "mul");
  }

  Var scale(Var a, double c) {
    const Tensor& ta = val(a);
    Tensor out = Tensor::zeros(ta.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) out.values[i] = c * ta.values[i];
    return push(std::move(out), needs(a), {a},
                [c](Tape& tp, Node& n) {
                  tp.accumulate(n.parents[0], [&](std::int64_t i) { return c * n.t.grad[i]; });
                },
                "scale");
  }

  // A[m,k] * B[k,n]
  Var matmul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require(ta.shape.size() == 2 && tb.shape.size() == 2 && ta.shape[1] == tb.shape[0],
            "matmul", "shapes " + shape_str(ta.shape) + " * " + shape_str(tb.shape));
    const int m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
    Tensor out = Tensor::zeros({m, n});
    as_mat(out, m, n).noalias() = as_mat(ta, m, k) * as_mat(tb, k, n);
    return push(std::move(out), needs(a) || needs(b), {a, b},
                [m, k, n](Tape& tp, Node& nd) {
                  auto gy = grad_mat(nd.t, m, n);
                  Tensor& ta = tp.nodes_[nd.parents[0].id].t;
                  Tensor& tb = tp.nodes_[nd.parents[1].id].t;
                  if (tp.needs(nd.parents[0]))
                    grad_mat(ta, m, k).noalias() += gy * as_mat(tb, k, n).transpose();
                  if (tp.needs(nd.parents[1]))
                    grad_mat(tb, k, n).noalias() += as_mat(ta, m, k).transpose() * gy;
                },
                "matmul");
  }

  // Constant matrix times variable features: M[r,c] * X[c,f].
  Var const_matmul(const Mat& M, Var x) {
    const Tensor& tx = val(x);
    require(tx.shape.size() == 2 && tx.shape[0] == M.cols(), "const_matmul",
            "X " + shape_str(tx.shape) + " vs M cols " + std::to_string(M.cols()));
    const int r = static_cast<int>(M.rows()), c = static_cast<int>(M.cols()), f = tx.shape[1];
    Tensor out = Tensor::zeros({r, f});
    as_mat(out, r, f).noalias() = M * as_mat(tx, c, f);
    // M copied into the closure; graph matrices are small.
    Mat Mt = M.transpose();
    return push(std::move(out), needs(x), {x},
                [Mt, r, c, f](Tape& tp, Node& nd) {
                  if (!tp.needs(nd.parents[0])) return;
                  Tensor& tx = tp.nodes_[nd.parents[0].id].t;
                  grad_mat(tx, c, f).noalias() += Mt * grad_mat(nd.t, r, f);
                },
                "const_matmul");
  }

  Var relu(Var a) {
    const Tensor& ta = val(a);
    Tensor out = Tensor::zeros(ta.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i)
      out.values[i] = ta.values[i] > 0.0 ? ta.values[i] : 0.0;
    return push(std::move(out), needs(a), {a},
                [](Tape& tp, Node& n) {
                  const Tensor& ta = tp.node(n.parents[0].id).t;
                  tp.accumulate(n.parents[0], [&](std::int64_t i) {
                    return ta.values[i] > 0.0 ? n.t.grad[i] : 0.0;
                  });
                },
                "relu");
  }

  Var sigmoid(Var a) {
    const Tensor& ta = val(a);
    Tensor out = Tensor::zeros(ta.shape);
    for (std::int64_t i = 0; i < out.numel(); ++i) {
      double x = ta.values[i];
      out.values[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                               : std::exp(x) / (1.0 + std::exp(x));
    }
    return push(std::move(out), needs(a), {a},
                [](Tape& tp, Node& n) {
                  tp.accumulate(n.parents[0], [&](std::int64_t i) {
                    double y = n.t.values[i];
                    return n.t.grad[i] * y * (1.0 - y);
                  });
                },
                "sigmoid");
  }

  // Softmax over the spatial axes of each channel of a [C,H,W] tensor.
  Var spatial_softmax(Var a) {
    const Tensor& ta = val(a);
    require(ta.shape.size() == 3, "spatial_softmax", "expects [C,H,W]");
    const int C = ta.shape[0];
    const std::int64_t hw = static_cast<std::int64_t>(ta.shape[1]) * ta.shape[2];
    Tensor out = Tensor::zeros(ta.shape);
    for (int c = 0; c < C; ++c) {
      const double* x = ta.values.data() + c * hw;
      double* y = out.values.data() + c * hw;
      double mx = x[0];
      for (std::int64_t i = 1; i < hw; ++i) mx = std::max(mx, x[i]);
      double z = 0.0;
      for (std::int64_t i = 0; i < hw; ++i) z += (y[i] = std::exp(x[i] - mx));
      for (std::int64_t i = 0; i < hw; ++i) y[i] /= z;
    }
    return push(std::move(out), needs(a), {a},
                [C, hw](Tape& tp, Node& n) {
                  Tensor& pa = tp.nodes_[n.parents[0].id].t;
                  if (!tp.needs(n.parents[0])) return;
                  for (int c = 0; c < C; ++c) {
                    const double* y = n.t.values.data() + c * hw;
                    const double* gy = n.t.grad.data() + c * hw;
                    double dot = 0.0;
                    for (std::int64_t i = 0; i < hw; ++i) dot += gy[i] * y[i];
                    double* gx = pa.grad.data() + c * hw;
                    for (std::int64_t i = 0; i < hw; ++i) gx[i] += y[i] * (gy[i] - dot);
                  }
                },
                "spatial_softmax");
  }

  // 2D convolution, zero padding k/2, stride 1 or 2.
  // x: [Cin,H,W], w: [Cout,Cin,kh,kw], out: [Cout,H',W'].
  Var conv2d(Var x, Var w, int stride) {
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    require(tx.shape.size() == 3 && tw.shape.size() == 4, "conv2d", "rank");
    require(tx.shape[0] == tw.shape[1], "conv2d",
            "channels " + shape_str(tx.shape) + " vs " + shape_str(tw.shape));
    require(stride == 1 || stride == 2, "conv2d", "stride must be 1 or 2");
    const int Ci = tx.shape[0], H = tx.shape[1], W = tx.shape[2];
    const int Co = tw.shape[0], kh = tw.shape[2], kw = tw.shape[3];
    const int ph = kh / 2, pw = kw / 2;
    const int Ho = (H + 2 * ph - kh) / stride + 1;
    const int Wo = (W + 2 * pw - kw) / stride + 1;

    Mat cols = im2col(tx, Ci, H, W, kh, kw, ph, pw, stride, Ho, Wo);
    Tensor out = Tensor::zeros({Co, Ho, Wo});
    // weights as [Co, Ci*kh*kw] row-major -> Eigen col view trick
    Eigen::Map<const Mat> wm(tw.values.data(), Ci * kh * kw, Co);
    Eigen::Map<Mat> om(out.values.data(), Ho * Wo, Co);
    om.noalias() = cols.transpose() * wm;

    auto dims = std::array<int, 9>{Ci, H, W, Co, kh, kw, stride, Ho, Wo};
    return push(std::move(out), needs(x) || needs(w), {x, w},
                [dims, cols = std::move(cols)](Tape& tp, Node& n) {
                  auto [Ci, H, W, Co, kh, kw, stride, Ho, Wo] = dims;
                  const int ph = kh / 2, pw = kw / 2;
                  Eigen::Map<const Mat> gy(n.t.grad.data(), Ho * Wo, Co);
                  if (tp.needs(n.parents[1])) {
                    Tensor& wt = tp.nodes_[n.parents[1].id].t;
                    Eigen::Map<Mat> gw(wt.grad.data(), Ci * kh * kw, Co);
                    gw.noalias() += cols * gy;
                  }
                  if (tp.needs(n.parents[0])) {
                    const Tensor& wt = tp.node(n.parents[1].id).t;
                    Eigen::Map<const Mat> wm(wt.values.data(), Ci * kh * kw, Co);
                    Mat gcols = wm * gy.transpose();  // [Ci*kh*kw, Ho*Wo]
                    Tensor& xt = tp.nodes_[n.parents[0].id].t;
                    col2im_add(gcols, xt.grad.data(), Ci, H, W, kh, kw, ph, pw, stride, Ho, Wo);
                  }
                },
                "conv2d");
  }

  // Transposed convolution, kernel k odd, padding k/2, stride 1 or 2.
  // Stride-2 output is exactly 2x the input spatial size (output padding 1).
  // x: [Cin,h,w], w: [Cin,Cout,kh,kw], out: [Cout, s*h, s*w].
  Var conv_transpose2d(Var x, Var w, int stride) {
    const Tensor& tx = val(x);
    const Tensor& tw = val(w);
    require(tx.shape.size() == 3 && tw.shape.size() == 4, "conv_transpose2d", "rank");
    require(tx.shape[0] == tw.shape[0], "conv_transpose2d", "channels");
    require(stride == 1 || stride == 2, "conv_transpose2d", "stride must be 1 or 2");
    const int Ci = tx.shape[0], h = tx.shape[1], w_in = tx.shape[2];
    const int Co = tw.shape[1], kh = tw.shape[2], kw = tw.shape[3];
    const int ph = kh / 2, pw = kw / 2;
    const int Ho = stride * h, Wo = stride * w_in;

    // Forward is the adjoint of conv2d(out -> in): scatter x through w.
    // cols[Co*kh*kw, h*w] = W^T x, then col2im into the output grid.
    Eigen::Map<const Mat> wm(tw.values.data(), Co * kh * kw, Ci);
    Eigen::Map<const Mat> xm(tx.values.data(), h * w_in, Ci);
    Mat cols = wm * xm.transpose();  // [Co*kh*kw, h*w]
    Tensor out = Tensor::zeros({Co, Ho, Wo});
    col2im_add(cols, out.values.data(), Co, Ho, Wo, kh, kw, ph, pw, stride, h, w_in);

    auto dims = std::array<int, 8>{Ci, h, w_in, Co, kh, kw, stride, 0};
    return push(std::move(out), needs(x) || needs(w), {x, w},
                [dims](Tape& tp, Node& n) {
                  auto [Ci, h, w_in, Co, kh, kw, stride, _] = dims;
                  const int ph = kh / 2, pw = kw / 2;
                  const int Ho = stride * h, Wo = stride * w_in;
                  // grad wrt x is a plain conv2d of gy with w; build cols of gy.
                  Tensor gy;
                  gy.shape = {Co, Ho, Wo};
                  gy.values = n.t.grad;
                  Mat gycols = im2col(gy, Co, Ho, Wo, kh, kw, ph, pw, stride, h, w_in);
                  if (tp.needs(n.parents[0])) {
                    const Tensor& wt = tp.node(n.parents[1].id).t;
                    Eigen::Map<const Mat> wm(wt.values.data(), Co * kh * kw, Ci);
                    Tensor& xt = tp.nodes_[n.parents[0].id].t;
                    Eigen::Map<Mat> gx(xt.grad.data(), h * w_in, Ci);
                    gx.noalias() += gycols.transpose() * wm;
                  }
                  if (tp.needs(n.parents[1])) {
                    const Tensor& xt = tp.node(n.parents[0].id).t;
                    Eigen::Map<const Mat> xm(xt.values.data(), h * w_in, Ci);
                    Tensor& wt = tp.nodes_[n.parents[1].id].t;
                    Eigen::Map<Mat> gw(wt.grad.data(), Co * kh * kw, Ci);
                    gw.noalias() += gycols * xm;
                  }
                },
                "conv_transpose2d");
  }

  Var maxpool2x2(Var a) {
    const Tensor& ta = val(a);
    require(ta.shape.size() == 3 && ta.shape[1] % 2 == 0 && ta.shape[2] % 2 == 0,
            "maxpool2x2", "expects [C,2h,2w]");
    const int C = ta.shape[0], H = ta.shape[1], W = ta.shape[2];
    const int Ho = H / 2, Wo = W / 2;
    Tensor out = Tensor::zeros({C, Ho, Wo});
    std::vector<std::int64_t> arg(out.values.size());
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < Ho; ++i)
        for (int j = 0; j < Wo; ++j) {
          std::int64_t best = -1;
          double bv = -std::numeric_limits<double>::infinity();
          for (int di = 0; di < 2; ++di)
            for (int dj = 0; dj < 2; ++dj) {
              std::int64_t idx = (static_cast<std::int64_t>(c) * H + 2 * i + di) * W + 2 * j + dj;
              if (ta.values[idx] > bv) { bv = ta.values[idx]; best = idx; }
            }
          std::int64_t o = (static_cast<std::int64_t>(c) * Ho + i) * Wo + j;
          out.values[o] = bv;
          arg[o] = best;
        }
    return push(std::move(out), needs(a), {a},
                [arg = std::move(arg)](Tape& tp, Node& n) {
                  if (!tp.needs(n.parents[0])) return;
                  Tensor& pa = tp.nodes_[n.parents[0].id].t;
                  for (size_t o = 0; o < arg.size(); ++o) pa.grad[arg[o]] += n.t.grad[o];
                },
                "maxpool2x2");
  }

  Var concat_channels(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_channels", "no inputs");
    const Tensor& t0 = val(parts[0]);
    require(t0.shape.size() == 3, "concat_channels", "expects [C,H,W]");
    const int H = t0.shape[1], W = t0.shape[2];
    int Ctot = 0;
    bool ng = false;
    for (Var p : parts) {
      const Tensor& t = val(p);
      require(t.shape.size() == 3 && t.shape[1] == H && t.shape[2] == W,
              "concat_channels", "spatial mismatch");
      Ctot += t.shape[0];
      ng = ng || needs(p);
    }
    Tensor out = Tensor::zeros({Ctot, H, W});
    std::int64_t off = 0;
    for (Var p : parts) {
      const Tensor& t = val(p);
      std::copy(t.values.begin(), t.values.end(), out.values.begin() + off);
      off += t.numel();
    }
    return push(std::move(out), ng, parts,
                [](Tape& tp, Node& n) {
                  std::int64_t off = 0;
                  for (Var p : n.parents) {
                    Tensor& pa = tp.nodes_[p.id].t;
                    if (tp.needs(p))
                      for (std::int64_t i = 0; i < pa.numel(); ++i)
                        pa.grad[i] += n.t.grad[off + i];
                    off += pa.numel();
                  }
                },
                "concat_channels");
  }

  Var reshape(Var a, std::vector<int> shape) {
    const Tensor& ta = val(a);
    require(Tensor::count(shape) == ta.numel(), "reshape", "element count mismatch");
    Tensor out;
    out.shape = std::move(shape);
    out.values = ta.values;
    out.grad.assign(out.values.size(), 0.0);
    return push(std::move(out), needs(a), {a},
                [](Tape& tp, Node& n) {
                  tp.accumulate(n.parents[0], [&](std::int64_t i) { return n.t.grad[i]; });
                },
                "reshape");
  }

  Var sum(Var a) { return reduce(a, /*mean=*/false); }
  Var mean(Var a) { return reduce(a, /*mean=*/true); }

  // Per-channel spatial mean of [C,H,W] -> [C].
  Var mean_spatial(Var a) {
    const Tensor& ta = val(a);
    require(ta.shape.size() == 3, "mean_spatial", "expects [C,H,W]");
    const int C = ta.shape[0];
    const std::int64_t hw = static_cast<std::int64_t>(ta.shape[1]) * ta.shape[2];
    Tensor out = Tensor::zeros({C});
    for (int c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::int64_t i = 0; i < hw; ++i) s += ta.values[c * hw + i];
      out.values[c] = s / static_cast<double>(hw);
    }
    return push(std::move(out), needs(a), {a},
                [C, hw](Tape& tp, Node& n) {
                  if (!tp.needs(n.parents[0])) return;
                  Tensor& pa = tp.nodes_[n.parents[0].id].t;
                  for (int c = 0; c < C; ++c) {
                    double g = n.t.grad[c] / static_cast<double>(hw);
                    for (std::int64_t i = 0; i < hw; ++i) pa.grad[c * hw + i] += g;
                  }
                },
                "mean_spatial");
  }

  // Adds b[C] to every pixel of x[C,H,W].
  Var bias_add_channels(Var x, Var b) {
    const Tensor& tx = val(x);
    const Tensor& tb = val(b);
    require(tx.shape.size() == 3 && tb.shape.size() == 1 && tb.shape[0] == tx.shape[0],
            "bias_add_channels", "shapes");
    const int C = tx.shape[0];
    const std::int64_t hw = static_cast<std::int64_t>(tx.shape[1]) * tx.shape[2];
    Tensor out = tx;
    out.grad.assign(out.values.size(), 0.0);
    for (int c = 0; c < C; ++c)
      for (std::int64_t i = 0; i < hw; ++i) out.values[c * hw + i] += tb.values[c];
    return push(std::move(out), needs(x) || needs(b), {x, b},
                [C, hw](Tape& tp, Node& n) {
                  tp.accumulate(n.parents[0], [&](std::int64_t i) { return n.t.grad[i]; });
                  if (tp.needs(n.parents[1])) {
                    Tensor& pb = tp.nodes_[n.parents[1].id].t;
                    for (int c = 0; c < C; ++c) {
                      double s = 0.0;
                      for (std::int64_t i = 0; i < hw; ++i) s += n.t.grad[c * hw + i];
                      pb.grad[c] += s;
                    }
                  }
                },
                "bias_add_channels");
  }

  // Adds b[n] to every row of x[m,n].
  Var bias_add_rows(Var x, Var b) {
    const Tensor& tx = val(x);
    const Tensor& tb = val(b);
    require(tx.shape.size() == 2 && tb.shape.size() == 1 && tb.shape[0] == tx.shape[1],
            "bias_add_rows", "shapes");
    const int m = tx.shape[0], n = tx.shape[1];
    Tensor out = tx;
    out.grad.assign(out.values.size(), 0.0);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) out.values[i * n + j] += tb.values[j];
    return push(std::move(out), needs(x) || needs(b), {x, b},
                [m, n](Tape& tp, Node& nd) {
                  tp.accumulate(nd.parents[0], [&](std::int64_t i) { return nd.t.grad[i]; });
                  if (tp.needs(nd.parents[1])) {
                    Tensor& pb = tp.nodes_[nd.parents[1].id].t;
                    for (int i = 0; i < m; ++i)
                      for (int j = 0; j < n; ++j) pb.grad[j] += nd.t.grad[i * n + j];
                  }
                },
                "bias_add_rows");
  }

  // Squared Frobenius norm -> scalar.
  Var frob_sq(Var a) {
    const Tensor& ta = val(a);
    double s = 0.0;
    for (double v : ta.values) s += v * v;
    Tensor out = Tensor::scalar(s);
    return push(std::move(out), needs(a), {a},
                [](Tape& tp, Node& n) {
                  if (!tp.needs(n.parents[0])) return;
                  Tensor& pa = tp.nodes_[n.parents[0].id].t;
                  double g = n.t.grad[0];
                  for (std::int64_t i = 0; i < pa.numel(); ++i)
                    pa.grad[i] += 2.0 * g * pa.values[i];
                },
                "frob_sq");
  }

  // Generic hook for custom differentiable ops (renderer, projection).
  // backward(parent_grads_out) receives the output node; it must scatter
  // output grad into the parents via accumulate helpers.
  Var custom(Tensor out, std::vector<Var> parents,
             std::function<void(Tape&, const Tensor& out, std::vector<Tensor*> parent_tensors)> bwd,
             const char* name) {
    bool ng = false;
    for (Var p : parents) ng = ng || needs(p);
    return push(std::move(out), ng, std::move(parents),
                [bwd = std::move(bwd)](Tape& tp, Node& n) {
                  std::vector<Tensor*> pts;
                  pts.reserve(n.parents.size());
                  for (Var p : n.parents) pts.push_back(&tp.nodes_[p.id].t);
                  bwd(tp, n.t, pts);
                },
                name);
  }

  // Scalar helpers for composing losses.
  Var add_scaled_scalars(const std::vector<std::pair<double, Var>>& terms) {
    require(!terms.empty(), "add_scaled_scalars", "no terms");
    double s = 0.0;
    bool ng = false;
    std::vector<Var> parents;
    std::vector<double> coef;
    for (auto& [c, v] : terms) {
      require(val(v).numel() == 1, "add_scaled_scalars", "non-scalar term");
      s += c * val(v).values[0];
      ng = ng || needs(v);
      parents.push_back(v);
      coef.push_back(c);
    }
    Tensor out = Tensor::scalar(s);
    return push(std::move(out), ng, std::move(parents),
                [coef = std::move(coef)](Tape& tp, Node& n) {
                  for (size_t i = 0; i < n.parents.size(); ++i)
                    if (tp.needs(n.parents[i]))
                      tp.nodes_[n.parents[i].id].t.grad[0] += coef[i] * n.t.grad[0];
                },
                "add_scaled_scalars");
  }

  void backward(Var loss) {
    require(loss.valid() && loss.id < static_cast<int>(nodes_.size()), "backward", "bad node");
    require(val(loss).numel() == 1, "backward", "loss node is not scalar");
    require(!backward_done_, "backward", "tape already backpropagated");
    backward_done_ = true;
    nodes_[loss.id].t.grad[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs_grad || !n.backward) continue;
      n.backward(*this, n);
    }
    // Flush leaf gradients to external parameters.
    for (Node& n : nodes_) {
      if (n.external) {
        for (std::int64_t i = 0; i < n.t.numel(); ++i) n.external->grad[i] += n.t.grad[i];
      }
    }
  }

  bool needs(Var v) const { return node(v.id).needs_grad; }
  size_t size() const { return nodes_.size(); }

  // Gradient of a non-parameter input marked requires_grad (after backward).
  const std::vector<double>& input_grad(Var v) const { return node(v.id).t.grad; }

 private:
  struct Node {
    Tensor t;
    std::vector<Var> parents;
    std::function<void(Tape&, Node&)> backward;
    Tensor* external = nullptr;
    bool needs_grad = false;
    bool is_checked_leaf = false;
    const char* name = "";
  };

  std::vector<Node> nodes_;
  bool backward_done_ = false;

  int check(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
      throw std::out_of_range("Tape: bad node id");
    return id;
  }
  const Node& node(int id) const { return nodes_[check(id)]; }

  static void require(bool ok, const char* op, const std::string& what) {
    if (!ok) throw std::invalid_argument(std::string(op) + ": " + what);
  }

  Var push(Tensor t, bool needs_grad, std::vector<Var> parents,
           std::function<void(Tape&, Node&)> bwd, const char* name) {
    for (double v : t.values)
      if (!std::isfinite(v))
        throw std::runtime_error(std::string("non-finite value produced by node '") + name + "'");
    Node n;
    n.t = std::move(t);
    n.parents = std::move(parents);
    n.backward = std::move(bwd);
    n.needs_grad = needs_grad;
    n.name = name;
    nodes_.push_back(std::move(n));
    Var v;
    v.id = static_cast<int>(nodes_.size()) - 1;
    return v;
  }

  template <typename F>
  void accumulate(Var p, F&& per_elem) {
    if (!needs(p)) return;
    Tensor& t = nodes_[p.id].t;
    for (std::int64_t i = 0; i < t.numel(); ++i) t.grad[i] += per_elem(i);
  }

  Var reduce(Var a, bool mean) {
    const Tensor& ta = val(a);
    double s = std::accumulate(ta.values.begin(), ta.values.end(), 0.0);
    double denom = mean ? static_cast<double>(ta.numel()) : 1.0;
    Tensor out = Tensor::scalar(s / denom);
    return push(std::move(out), needs(a), {a},
                [denom](Tape& tp, Node& n) {
                  double g = n.t.grad[0] / denom;
                  tp.accumulate(n.parents[0], [g](std::int64_t) { return g; });
                },
                mean ? "mean" : "sum");
  }

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  static Eigen::Map<RowMat> as_mat(Tensor& t, int r, int c) {
    return Eigen::Map<RowMat>(t.values.data(), r, c);
  }
  static Eigen::Map<const RowMat> as_mat(const Tensor& t, int r, int c) {
    return Eigen::Map<const RowMat>(t.values.data(), r, c);
  }
  static Eigen::Map<RowMat> grad_mat(Tensor& t, int r, int c) {
    return Eigen::Map<RowMat>(t.grad.data(), r, c);
  }
  static Eigen::Map<const RowMat> grad_mat_c(const Tensor& t, int r, int c) {
    return Eigen::Map<const RowMat>(t.grad.data(), r, c);
  }

  // cols: [Ci*kh*kw, Ho*Wo]
  static Mat im2col(const Tensor& x, int Ci, int H, int W, int kh, int kw, int ph,
                    int pw, int stride, int Ho, int Wo) {
    Mat cols = Mat::Zero(static_cast<std::int64_t>(Ci) * kh * kw,
                         static_cast<std::int64_t>(Ho) * Wo);
    for (int c = 0; c < Ci; ++c)
      for (int di = 0; di < kh; ++di)
        for (int dj = 0; dj < kw; ++dj) {
          const std::int64_t row = (static_cast<std::int64_t>(c) * kh + di) * kw + dj;
          for (int oi = 0; oi < Ho; ++oi) {
            const int ii = oi * stride + di - ph;
            if (ii < 0 || ii >= H) continue;
            const double* src = x.values.data() + (static_cast<std::int64_t>(c) * H + ii) * W;
            for (int oj = 0; oj < Wo; ++oj) {
              const int jj = oj * stride + dj - pw;
              if (jj < 0 || jj >= W) continue;
              cols(row, static_cast<std::int64_t>(oi) * Wo + oj) = src[jj];
            }
          }
        }
    return cols;
  }

  static void col2im_add(const Mat& cols, double* x, int Ci, int H, int W, int kh,
                         int kw, int ph, int pw, int stride, int Ho, int Wo) {
    for (int c = 0; c < Ci; ++c)
      for (int di = 0; di < kh; ++di)
        for (int dj = 0; dj < kw; ++dj) {
          const std::int64_t row = (static_cast<std::int64_t>(c) * kh + di) * kw + dj;
          for (int oi = 0; oi < Ho; ++oi) {
            const int ii = oi * stride + di - ph;
            if (ii < 0 || ii >= H) continue;
            double* dst = x + (static_cast<std::int64_t>(c) * H + ii) * W;
            for (int oj = 0; oj < Wo; ++oj) {
              const int jj = oj * stride + dj - pw;
              if (jj < 0 || jj >= W) continue;
              dst[jj] += cols(row, static_cast<std::int64_t>(oi) * Wo + oj);
            }
          }
        }
  }
};

}  // namespace tassn::ad
