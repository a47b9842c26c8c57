#pragma once

// Training objectives: heatmap loss, silhouette loss, bidirectional temporal
// consistency on poses and meshes, and their weighted combinations.

#include "tassn/tensor.hpp"

#include <vector>

namespace tassn::losses {

struct LossWeights {
  double lambda_s = 0.1;  // silhouette term weight in the total objective
  double lambda_h = 1.0;  // heatmap term weight
  double lambda_p = 10.0; // pose consistency weight
  double lambda_m = 10.0; // mesh consistency weight

  void validate() const {
    for (double v : {lambda_s, lambda_h, lambda_p, lambda_m})
      if (!(v >= 0.0) || !std::isfinite(v))
        throw std::invalid_argument("LossWeights: weights must be finite and >= 0");
  }
};

// (1/K) sum_k ||H^k - H_gt^k||_F^2 over [K,W,H] heatmap stacks.
inline ad::Var heatmap_loss(ad::Tape& tape, ad::Var heatmaps, ad::Var heatmaps_gt) {
  const auto& a = tape.val(heatmaps);
  const auto& b = tape.val(heatmaps_gt);
  if (a.shape != b.shape || a.shape.size() != 3)
    throw std::invalid_argument("heatmap_loss: [K,W,H] shape mismatch");
  const double K = static_cast<double>(a.shape[0]);
  return tape.scale(tape.frob_sq(tape.sub(heatmaps, heatmaps_gt)), 1.0 / K);
}

// ||s - s_gt||_F^2.
inline ad::Var silhouette_loss(ad::Tape& tape, ad::Var sil, ad::Var sil_gt) {
  const auto& a = tape.val(sil);
  const auto& b = tape.val(sil_gt);
  if (a.shape != b.shape || a.shape.size() != 2)
    throw std::invalid_argument("silhouette_loss: [W,H] shape mismatch");
  return tape.frob_sq(tape.sub(sil, sil_gt));
}

// (1/n) sum_i ||x_i - x~_i||_F^2 over aligned forward/backward estimates.
// The divisor n is the clip's pair count; the lists may hold n+1 entries
// (frames t..t+n), matching the written form of the consistency losses.
inline ad::Var temporal_consistency_loss(ad::Tape& tape, const std::vector<ad::Var>& fwd,
                                         const std::vector<ad::Var>& bwd, int n) {
  if (fwd.size() != bwd.size())
    throw std::invalid_argument("temporal consistency: list length mismatch");
  if (fwd.empty()) throw std::invalid_argument("temporal consistency: empty lists");
  if (n <= 0) throw std::invalid_argument("temporal consistency: n must be positive");
  std::vector<std::pair<double, ad::Var>> terms;
  terms.reserve(fwd.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  for (size_t i = 0; i < fwd.size(); ++i)
    terms.emplace_back(inv_n, tape.frob_sq(tape.sub(fwd[i], bwd[i])));
  return tape.add_scaled_scalars(terms);
}

inline ad::Var temporal_pose_loss(ad::Tape& tape, const std::vector<ad::Var>& poses_fwd,
                                  const std::vector<ad::Var>& poses_bwd, int n) {
  return temporal_consistency_loss(tape, poses_fwd, poses_bwd, n);
}

inline ad::Var temporal_mesh_loss(ad::Tape& tape, const std::vector<ad::Var>& meshes_fwd,
                                  const std::vector<ad::Var>& meshes_bwd, int n) {
  return temporal_consistency_loss(tape, meshes_fwd, meshes_bwd, n);
}

// L_c = lambda_m * L_c^m + lambda_p * L_c^p
inline ad::Var consistency_loss(ad::Tape& tape, const LossWeights& w, ad::Var pose_term,
                                ad::Var mesh_term) {
  w.validate();
  return tape.add_scaled_scalars({{w.lambda_p, pose_term}, {w.lambda_m, mesh_term}});
}

// Total objective: lambda_s * L_m + lambda_h * L_h + L_c.
inline ad::Var total_loss(ad::Tape& tape, const LossWeights& w, ad::Var sil_term,
                          ad::Var heat_term, ad::Var consistency_term) {
  w.validate();
  return tape.add_scaled_scalars(
      {{w.lambda_s, sil_term}, {w.lambda_h, heat_term}, {1.0, consistency_term}});
}

}  // namespace tassn::losses
