#pragma once

// Three-stage self-supervised training: (1) heatmaps, (2) + silhouette-
// anchored mesh, (3) end-to-end with bidirectional temporal consistency.
// Includes the reversed-sweep clip inference, Adam, checkpointing with
// bitwise-identical resume, and the consistency-loss ablation runner.

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hand.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "nets.hpp"
#include "render.hpp"
#include "synth.hpp"

namespace tassn::train {

struct TrainConfig {
  losses::LossWeights weights;     // lambda_s=0.1, lambda_h=1, lambda_p=10, lambda_m=10
  double learning_rate = 1e-3;     // desk preset; the full-scale reference rate
                                   // pairs with pretrained backbones at 256x256
  int batch_size = 4;              // clips per optimizer step (full-scale: 24)
  int grad_accum = 1;              // optimizer steps use batch_size*grad_accum clips
  int stage1_epochs = 30, stage2_epochs = 20, stage3_epochs = 30;
  int warmup_epochs = 5;           // stage-2 prologue anchoring mesh + pose head
  int warmup_samples = 32;         // articulation samples per warm-up epoch
  int flow_pretrain_epochs = 2;    // learned flow mode only
  std::uint64_t seed = 0;
  nets::NetConfig net;
  int hierarchy_levels = 2;        // mesh graph coarsenings
  double raster_tau = 1.0;         // silhouette softness, px
  nets::FlowEstimator::Mode flow_mode = nets::FlowEstimator::Mode::oracle;

  static constexpr double kReferenceLearningRate = 1e-5;  // full-scale preset
  static constexpr int kReferenceBatchSize = 24;

  int epochs_for(int stage) const {
    return stage == 1 ? stage1_epochs : stage == 2 ? stage2_epochs : stage3_epochs;
  }
  void validate() const {
    weights.validate();
    if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be > 0");
    if (batch_size < 1 || grad_accum < 1) throw std::invalid_argument("batch sizing must be >= 1");
    if (raster_tau <= 0.0) throw std::invalid_argument("raster_tau must be > 0");
    if (hierarchy_levels < 2) throw std::invalid_argument("need >= 2 hierarchy levels");
  }
};

// ---------------------------------------------------------------------------

// Adam with persistent state rounded to f32-representable values after every
// update, so the f32 checkpoint format reloads bitwise-exactly.
struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long long t = 0;
  std::map<std::string, std::vector<double>> m, v;

  static double f32(double x) { return static_cast<double>(static_cast<float>(x)); }

  void init(nets::ParamStore& ps) {
    t = 0;
    m.clear();
    v.clear();
    for (auto& [name, p] : ps.all()) {
      m[name].assign(p.values.size(), 0.0);
      v[name].assign(p.values.size(), 0.0);
    }
  }

  void step(nets::ParamStore& ps, const std::vector<std::string>& active_prefixes, double lr,
            double grad_scale) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (auto& [name, p] : ps.all()) {
      bool active = false;
      for (const auto& pre : active_prefixes)
        if (name.rfind(pre, 0) == 0) active = true;
      if (!active) continue;
      auto& mn = m.at(name);
      auto& vn = v.at(name);
      for (size_t i = 0; i < p.values.size(); ++i) {
        const double g = p.grad[i] * grad_scale;
        mn[i] = f32(beta1 * mn[i] + (1.0 - beta1) * g);
        vn[i] = f32(beta2 * vn[i] + (1.0 - beta2) * g * g);
        const double update = lr * (mn[i] / c1) / (std::sqrt(vn[i] / c2) + eps);
        p.values[i] = f32(p.values[i] - update);
      }
    }
  }
};

// ---------------------------------------------------------------------------

struct RtmResult {
  std::vector<nets::PmeOutput> fwd;  // fwd[i] estimates frame i+1 (pair i -> i+1)
  std::vector<nets::PmeOutput> bwd;  // bwd[i] estimates frame i (pair i+1 -> i)
  // Overlap frames 1..n-1 where both sweeps produced an estimate, aligned.
  std::vector<ad::Var> pose_fwd, pose_bwd, mesh_fwd, mesh_bwd;
};

struct LossBreakdown {
  double h = 0, s = 0, cp = 0, cm = 0, total = 0;
  void accumulate(const LossBreakdown& o) {
    h += o.h;
    s += o.s;
    cp += o.cp;
    cm += o.cm;
    total += o.total;
  }
  void scale(double f) {
    h *= f;
    s *= f;
    cp *= f;
    cm *= f;
    total *= f;
  }
};

struct EvalResult {
  LossBreakdown loss;
  double epe_mm = 0.0, auc_0_50 = 0.0, auc_20_50 = 0.0;
  metrics::PckCurve pck;
};

inline void write_csv_header(std::ostream& os) {
  os << "stage,epoch,split,loss_h,loss_m,loss_cp,loss_cm,total,epe_mm,auc_0_50,auc_20_50\n";
}

// ---------------------------------------------------------------------------

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg)
      : cfg_(std::move(cfg)), tmpl_(make_hand_template()) {
    cfg_.validate();
    if (cfg_.net.K != kNumJoints)
      throw std::invalid_argument("net.K must match the skeleton joint count");
    mesh_graph_ = graph::build_graph(tmpl_.faces, tmpl_.num_vertices());
    hier_ = graph::coarsen(mesh_graph_, cfg_.hierarchy_levels);
    rng_.seed(cfg_.seed);
    pme_ = nets::Pme(ps_, cfg_.net, hier_, cfg_.flow_mode, rng_);
    for (auto& [name, p] : ps_.all())
      for (auto& x : p.values) x = Adam::f32(x);
    adam_.init(ps_);
  }
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const TrainConfig& config() const { return cfg_; }
  const HandTemplate& hand() const { return tmpl_; }
  nets::ParamStore& params() { return ps_; }
  nets::Pme& pme() { return pme_; }
  const graph::GraphHierarchy& hierarchy() const { return hier_; }
  int stage_completed() const { return stage_completed_; }

  // ------------------------------------------------------------------ RTM

  // Heatmap seed for a sweep starting at `frame`: ground-truth Gaussian maps
  // during training, or the estimator's own single-frame output (zero flow,
  // uniform 0.5 prior) during evaluation.
  ad::Var boot_heatmaps(ad::Tape& tape, const synth::Clip& clip, int frame, bool use_gt) const {
    const int W = clip.config.width, H = clip.config.height;
    if (use_gt)
      return tape.input(ad::Tensor::from(
          {cfg_.net.K, H, W},
          synth::gt_heatmaps(clip.keypoints2d[frame], W, H, clip.config.sigma_px)));
    ad::Tensor uniform = ad::Tensor::zeros({cfg_.net.K, H, W});
    for (auto& v : uniform.values) v = 0.5;
    ad::Tensor zero_flow = ad::Tensor::zeros({2, H, W});
    ad::Var x = tape.concat_channels({nets::image_input(tape, clip.frames[frame]),
                                      tape.input(std::move(zero_flow)),
                                      tape.input(std::move(uniform))});
    return pme_.heatmap.forward(tape, x).first;
  }

  // Bidirectional clip inference. Each pair is seeded with its source frame's
  // bootstrap heatmap rather than the previous pair's estimate: seeding by
  // sweep position would make the two sweeps reach the same frame at
  // different chain depths, and the consistency terms would not vanish on
  // frozen input. With per-pair seeds they vanish exactly for any parameters.
  RtmResult rtm_pass(ad::Tape& tape, const synth::Clip& clip, bool use_gt_boot,
                     bool backward_sweep = true) const {
    if (clip.num_frames() < 2) throw std::invalid_argument("rtm_pass: clip needs >= 2 frames");
    const int n = clip.num_pairs();
    RtmResult r;
    std::vector<ad::Var> boot(n + 1);
    for (int f = 0; f <= n; ++f)
      if (f < n || backward_sweep) boot[f] = boot_heatmaps(tape, clip, f, use_gt_boot);
    for (int i = 0; i < n; ++i)
      r.fwd.push_back(nets::pme_forward(tape, pme_, clip, i, i + 1, boot[i]));
    if (backward_sweep) {
      r.bwd.resize(n);
      for (int i = n - 1; i >= 0; --i)
        r.bwd[i] = nets::pme_forward(tape, pme_, clip, i + 1, i, boot[i + 1]);
      for (int f = 1; f <= n - 1; ++f) {
        r.pose_fwd.push_back(r.fwd[f - 1].pose);
        r.pose_bwd.push_back(r.bwd[f].pose);
        r.mesh_fwd.push_back(r.fwd[f - 1].mesh);
        r.mesh_bwd.push_back(r.bwd[f].mesh);
      }
    }
    return r;
  }

  // ---------------------------------------------------------------- losses

  // Builds the stage objective for one clip on `tape` and reports the
  // unweighted term values. Heatmap and silhouette terms are averaged over
  // the forward sweep only, so the stage-3 objective with zero consistency
  // weights equals the stage-2 objective exactly.
  ad::Var build_clip_loss(ad::Tape& tape, const synth::Clip& clip, int stage,
                          const losses::LossWeights& w, bool use_gt_boot,
                          LossBreakdown* out = nullptr, RtmResult* rtm_out = nullptr) const {
    const int n = clip.num_pairs();
    const int W = clip.config.width, H = clip.config.height;
    const bool need_consistency = stage >= 3 && (w.lambda_p > 0.0 || w.lambda_m > 0.0);
    RtmResult r = rtm_pass(tape, clip, use_gt_boot, need_consistency);

    std::vector<std::pair<double, ad::Var>> h_terms, s_terms;
    for (int i = 0; i < n; ++i) {
      ad::Var gt = tape.input(ad::Tensor::from(
          {cfg_.net.K, H, W},
          synth::gt_heatmaps(clip.keypoints2d[i + 1], W, H, clip.config.sigma_px)));
      h_terms.emplace_back(1.0 / n, losses::heatmap_loss(tape, r.fwd[i].heatmaps, gt));
      if (stage >= 2) {
        ad::Var sil = render::rasterize_silhouette(tape, clip.config.camera, r.fwd[i].mesh,
                                                   tmpl_.faces, cfg_.raster_tau, W, H);
        ad::Var sgt = tape.input(
            ad::Tensor::from({H, W}, clip.silhouettes[i + 1].data));
        s_terms.emplace_back(1.0 / n, losses::silhouette_loss(tape, sil, sgt));
      }
    }
    ad::Var loss_h = tape.add_scaled_scalars(h_terms);
    ad::Var zero = tape.input(ad::Tensor::scalar(0.0));
    ad::Var loss_s = s_terms.empty() ? zero : tape.add_scaled_scalars(s_terms);
    ad::Var loss_cp = zero, loss_cm = zero;
    if (need_consistency) {
      loss_cp = losses::temporal_pose_loss(tape, r.pose_fwd, r.pose_bwd, n);
      loss_cm = losses::temporal_mesh_loss(tape, r.mesh_fwd, r.mesh_bwd, n);
    }

    ad::Var total;
    if (stage == 1) {
      total = loss_h;
    } else if (stage == 2) {
      total = tape.add_scaled_scalars({{w.lambda_h, loss_h}, {w.lambda_s, loss_s}});
    } else {
      total = losses::total_loss(tape, w, loss_s, loss_h,
                                 losses::consistency_loss(tape, w, loss_cp, loss_cm));
    }
    if (out) {
      out->h = tape.val(loss_h).values[0];
      out->s = tape.val(loss_s).values[0];
      out->cp = tape.val(loss_cp).values[0];
      out->cm = tape.val(loss_cm).values[0];
      out->total = tape.val(total).values[0];
    }
    if (rtm_out) *rtm_out = std::move(r);
    return total;
  }

  // ------------------------------------------------------------- evaluation

  EvalResult evaluate(const std::vector<synth::Clip>& clips, int stage) {
    EvalResult res;
    std::vector<metrics::Pose3D> preds, gts;
    for (const auto& clip : clips) {
      ad::Tape tape;
      LossBreakdown b;
      RtmResult r;
      build_clip_loss(tape, clip, stage, cfg_.weights, /*use_gt_boot=*/false, &b, &r);
      res.loss.accumulate(b);
      const auto& gt3d = clip.pose3d_eval_only();
      for (int i = 0; i < clip.num_pairs(); ++i) {
        preds.push_back({cfg_.net.K, tape.val(r.fwd[i].pose).values});
        gts.push_back({cfg_.net.K, gt3d[i + 1]});
      }
    }
    if (!clips.empty()) res.loss.scale(1.0 / clips.size());
    double epe_sum = 0.0;
    for (size_t i = 0; i < preds.size(); ++i) epe_sum += metrics::epe(preds[i], gts[i]);
    res.epe_mm = preds.empty() ? 0.0 : epe_sum / preds.size();
    if (!preds.empty()) {
      res.pck = metrics::pck_curve(preds, gts, metrics::default_thresholds());
      res.auc_0_50 = metrics::auc(res.pck, 0.0, 50.0);
      res.auc_20_50 = metrics::auc(res.pck, 20.0, 50.0);
    }
    return res;
  }

  // --------------------------------------------------------------- training

  // One optimizer pass over the training split. Gradients accumulate over
  // batch_size*grad_accum clips per step, in a deterministic order.
  LossBreakdown run_epoch(const std::vector<synth::Clip>& clips, int stage, int epoch) {
    std::vector<int> order(clips.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::shuffle(order.begin(), order.end(), rng_);

    synth::TrainingScope guard;
    LossBreakdown epoch_loss;
    const int step_clips = cfg_.batch_size * cfg_.grad_accum;
    size_t done = 0;
    while (done < order.size()) {
      const size_t batch_end = std::min(order.size(), done + step_clips);
      int in_batch = 0;
      for (size_t k = done; k < batch_end; ++k, ++in_batch) {
        ad::Tape tape;
        LossBreakdown b;
        ad::Var loss;
        try {
          loss = build_clip_loss(tape, clips[order[k]], stage, cfg_.weights,
                                 /*use_gt_boot=*/true, &b);
          tape.backward(loss);
        } catch (const std::runtime_error& e) {
          throw std::runtime_error("non-finite loss at stage " + std::to_string(stage) +
                                   " epoch " + std::to_string(epoch) + " clip " +
                                   std::to_string(order[k]) + ": " + e.what());
        }
        epoch_loss.accumulate(b);
      }
      adam_.step(ps_, stage_prefixes(stage), cfg_.learning_rate, 1.0 / in_batch);
      zero_grads();
      done = batch_end;
    }
    if (!clips.empty()) epoch_loss.scale(1.0 / clips.size());
    return epoch_loss;
  }

  // Stage-2 prologue substituting for pretrained-model initialization: the
  // mesh decoder is regressed to the rest-pose template and the pose head is
  // fit to forward-kinematics samples of the same template. Neither touches
  // clip ground truth.
  void warm_up(const std::vector<synth::Clip>& clips) {
    synth::TrainingScope guard;
    const int C = tmpl_.num_vertices();
    ad::Tensor rest = ad::Tensor::from({C, 3}, tmpl_.rest_vertices);
    const HandPoseLimits limits;
    for (int e = 0; e < cfg_.warmup_epochs; ++e) {
      // Mesh anchor: decoder(F) -> rest template for features from real frames.
      for (int k = 0; k < cfg_.batch_size && k < static_cast<int>(clips.size()); ++k) {
        ad::Tape tape;
        ad::Var heat = boot_heatmaps(tape, clips[k], 0, /*use_gt=*/true);
        auto out = nets::pme_forward(tape, pme_, clips[k], 0, 1, heat);
        ad::Var loss = tape.scale(
            tape.frob_sq(tape.sub(out.mesh, tape.input(rest))), 1.0 / C);
        tape.backward(loss);
      }
      adam_.step(ps_, {"mesh."}, cfg_.learning_rate, 1.0 / cfg_.batch_size);
      zero_grads();

      // Pose anchor: head(skinned mesh + noise) -> forward-kinematics joints.
      std::normal_distribution<double> noise(0.0, 2.0);
      for (int s = 0; s < cfg_.warmup_samples; ++s) {
        const HandPose pose = random_pose(limits);
        const JointFrames fr = forward_kinematics(tmpl_, pose);
        ad::Tensor mesh = ad::Tensor::from({C, 3}, skin_mesh(tmpl_, fr));
        for (auto& v : mesh.values) v += noise(rng_);
        ad::Tensor joints = ad::Tensor::zeros({kNumJoints, 3});
        for (int j = 0; j < kNumJoints; ++j)
          for (int a = 0; a < 3; ++a) joints.values[3 * j + a] = fr.pos[j][a];
        ad::Tape tape;
        ad::Var p = pme_.pose.forward(tape, tape.input(std::move(mesh)));
        ad::Var loss = tape.scale(tape.frob_sq(tape.sub(p, tape.input(std::move(joints)))),
                                  1.0 / kNumJoints);
        tape.backward(loss);
      }
      adam_.step(ps_, {"pose."}, cfg_.learning_rate, 1.0 / cfg_.warmup_samples);
      zero_grads();
    }
  }

  // Learned flow mode: endpoint-error pretraining against generator flow.
  void pretrain_flow(const std::vector<synth::Clip>& clips) {
    if (cfg_.flow_mode != nets::FlowEstimator::Mode::learned) return;
    synth::TrainingScope guard;
    for (int e = 0; e < cfg_.flow_pretrain_epochs; ++e) {
      for (const auto& clip : clips) {
        for (int i = 0; i < clip.num_pairs(); ++i) {
          ad::Tape tape;
          ad::Var pred = pme_.flow.estimate(tape, clip, i, i + 1);
          ad::Var gt = tape.input(ad::Tensor::from(
              {2, clip.config.height, clip.config.width}, clip.flow_fwd[i]));
          ad::Var loss = tape.mean(tape.mul(tape.sub(pred, gt), tape.sub(pred, gt)));
          tape.backward(loss);
          adam_.step(ps_, {"flow."}, cfg_.learning_rate, 1.0);
          zero_grads();
        }
      }
    }
  }

  // Runs one full stage, logging one train row and one val row per epoch.
  // Saves a checkpoint after every epoch when ckpt_path is given, and resumes
  // mid-stage if the loaded state was saved inside the same stage.
  // max_new_epochs < 0 runs the stage to completion; otherwise training stops
  // after that many epochs with the stage left resumable.
  EvalResult train_stage(const synth::Dataset& ds, int stage, std::ostream* csv = nullptr,
                         const std::string& ckpt_path = "", int max_new_epochs = -1) {
    if (stage < 1 || stage > 3) throw std::invalid_argument("stage must be 1, 2 or 3");
    if (stage_completed_ < stage - 1)
      throw std::runtime_error("stage " + std::to_string(stage) + " requires a stage-" +
                               std::to_string(stage - 1) + " checkpoint (completed: " +
                               std::to_string(stage_completed_) + ")");
    const int epochs = cfg_.epochs_for(stage);
    int start_epoch = 0;
    if (stage_active_ == stage) start_epoch = epoch_done_;
    stage_active_ = stage;

    if (start_epoch == 0) {
      if (stage == 1) pretrain_flow(ds.train);
      if (stage == 2 && cfg_.warmup_epochs > 0) warm_up(ds.train);
    }

    EvalResult val;
    for (int e = start_epoch; e < epochs; ++e) {
      const LossBreakdown tr = run_epoch(ds.train, stage, e);
      val = evaluate(ds.val, stage);
      if (csv) {
        *csv << stage << "," << e << ",train," << tr.h << "," << tr.s << "," << tr.cp << ","
             << tr.cm << "," << tr.total << ",nan,nan,nan\n";
        *csv << stage << "," << e << ",val," << val.loss.h << "," << val.loss.s << ","
             << val.loss.cp << "," << val.loss.cm << "," << val.loss.total << "," << val.epe_mm
             << "," << val.auc_0_50 << "," << val.auc_20_50 << "\n";
        csv->flush();
      }
      epoch_done_ = e + 1;
      if (epoch_done_ == epochs) {
        stage_completed_ = std::max(stage_completed_, stage);
        stage_active_ = 0;
        epoch_done_ = 0;
      }
      if (!ckpt_path.empty()) save_checkpoint(ckpt_path);
      if (max_new_epochs >= 0 && e + 1 - start_epoch >= max_new_epochs) return val;
    }
    if (epochs == start_epoch) val = evaluate(ds.val, stage);  // nothing left to train
    if (epochs == 0) {
      stage_completed_ = std::max(stage_completed_, stage);
      stage_active_ = 0;
      if (!ckpt_path.empty()) save_checkpoint(ckpt_path);
    }
    return val;
  }

  // ------------------------------------------------------------ checkpoints

  void save_checkpoint(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path);
    out.write("TASSNCKP", 8);
    write_u32(out, 1);  // format version

    std::ostringstream meta;
    meta << "adam_t " << adam_.t << "\n";
    meta << "stage_completed " << stage_completed_ << "\n";
    meta << "stage_active " << stage_active_ << "\n";
    meta << "epoch_done " << epoch_done_ << "\n";
    meta << "seed " << cfg_.seed << "\n";
    meta << "learning_rate " << std::setprecision(17) << cfg_.learning_rate << "\n";
    meta << "batch_size " << cfg_.batch_size << "\n";
    meta << "K " << cfg_.net.K << " width " << cfg_.net.width << " height " << cfg_.net.height
         << " base " << cfg_.net.base_channels << " feature " << cfg_.net.feature_channels
         << " latent " << cfg_.net.latent_channels << "\n";
    meta << "lambda " << cfg_.weights.lambda_s << " " << cfg_.weights.lambda_h << " "
         << cfg_.weights.lambda_p << " " << cfg_.weights.lambda_m << "\n";
    meta << "rng " << rng_ << "\n";
    const std::string m = meta.str();
    write_u32(out, static_cast<std::uint32_t>(m.size()));
    out.write(m.data(), static_cast<std::streamsize>(m.size()));

    write_u32(out, static_cast<std::uint32_t>(3 * ps_.all().size()));
    for (const auto& [name, p] : ps_.all()) {
      write_tensor(out, "param:" + name, p.shape, p.values);
      write_tensor(out, "adam.m:" + name, {static_cast<int>(p.values.size())}, adam_.m.at(name));
      write_tensor(out, "adam.v:" + name, {static_cast<int>(p.values.size())}, adam_.v.at(name));
    }
  }

  void load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "TASSNCKP", 8) != 0)
      throw std::runtime_error("not a checkpoint file: " + path);
    if (read_u32(in) != 1) throw std::runtime_error("unsupported checkpoint version");
    const std::uint32_t meta_len = read_u32(in);
    std::string meta(meta_len, '\0');
    in.read(meta.data(), meta_len);
    std::istringstream ms(meta);
    std::string key;
    while (ms >> key) {
      if (key == "adam_t") ms >> adam_.t;
      else if (key == "stage_completed") ms >> stage_completed_;
      else if (key == "stage_active") ms >> stage_active_;
      else if (key == "epoch_done") ms >> epoch_done_;
      else if (key == "rng") { ms >> rng_; break; }
      else { std::string rest; std::getline(ms, rest); }
    }

    const std::uint32_t count = read_u32(in);
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name;
      std::vector<int> dims;
      std::vector<double> values;
      read_tensor(in, name, dims, values);
      const auto colon = name.find(':');
      if (colon == std::string::npos) throw std::runtime_error("bad tensor record " + name);
      const std::string kind = name.substr(0, colon), pname = name.substr(colon + 1);
      if (kind == "param") {
        ad::Tensor& p = ps_.at(pname);
        if (p.shape != dims)
          throw std::runtime_error("checkpoint shape mismatch for " + pname);
        p.values = std::move(values);
      } else if (kind == "adam.m") {
        adam_.m.at(pname) = std::move(values);
      } else if (kind == "adam.v") {
        adam_.v.at(pname) = std::move(values);
      } else {
        throw std::runtime_error("unknown tensor record kind " + kind);
      }
    }
    if (!in) throw std::runtime_error("truncated checkpoint " + path);
  }

 private:
  HandPose random_pose(const HandPoseLimits& lim) {
    auto sym = [&](double b) { return std::uniform_real_distribution<double>(-b, b)(rng_); };
    auto pos = [&](double b) { return std::uniform_real_distribution<double>(0.0, b)(rng_); };
    HandPose p;
    const double wx = sym(lim.wrist_x), wy = sym(lim.wrist_y), wz = sym(lim.wrist_z);
    p.wrist_rot = Eigen::Vector3d(wx, wy, wz);
    for (int f = 0; f < 5; ++f) {
      p.mcp_flex[f] = pos(lim.mcp_flex_max);
      p.mcp_abduct[f] = sym(lim.mcp_abduct);
      p.pip_flex[f] = pos(lim.pip_flex_max);
      p.dip_flex[f] = pos(lim.dip_flex_max);
    }
    return p;
  }

  static std::vector<std::string> stage_prefixes(int stage) {
    if (stage == 1) return {"heatmap."};
    if (stage == 2) return {"heatmap.", "mesh."};
    return {""};  // stage 3: everything
  }

  void zero_grads() {
    for (auto& [name, p] : ps_.all()) p.zero_grad();
  }

  static void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
  }
  static std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
  }
  static void write_tensor(std::ostream& os, const std::string& name,
                           const std::vector<int>& dims, const std::vector<double>& values) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(dims.size()));
    for (int d : dims) write_u32(os, static_cast<std::uint32_t>(d));
    std::vector<float> f(values.begin(), values.end());
    os.write(reinterpret_cast<const char*>(f.data()),
             static_cast<std::streamsize>(f.size() * sizeof(float)));
  }
  static void read_tensor(std::istream& is, std::string& name, std::vector<int>& dims,
                          std::vector<double>& values) {
    const std::uint32_t name_len = read_u32(is);
    name.assign(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t rank = read_u32(is);
    dims.resize(rank);
    std::int64_t n = 1;
    for (auto& d : dims) {
      d = static_cast<int>(read_u32(is));
      n *= d;
    }
    std::vector<float> f(static_cast<size_t>(n));
    is.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(n * sizeof(float)));
    values.assign(f.begin(), f.end());
  }

  TrainConfig cfg_;
  HandTemplate tmpl_;
  graph::MeshGraph mesh_graph_;
  graph::GraphHierarchy hier_;
  nets::ParamStore ps_;
  nets::Pme pme_;
  Adam adam_;
  std::mt19937_64 rng_;
  int stage_completed_ = 0;
  int stage_active_ = 0;   // nonzero while a stage is partially trained
  int epoch_done_ = 0;     // epochs finished within the active stage
};

// ---------------------------------------------------------------------------
// Consistency ablation: three stage-3 runs from one shared stage-2 checkpoint.

struct AblationRow {
  std::string label;
  double epe_mm = 0.0, auc_0_50 = 0.0, auc_20_50 = 0.0;
};

inline std::vector<AblationRow> ablate(const TrainConfig& base, const synth::Dataset& ds,
                                       const std::string& stage2_ckpt,
                                       std::ostream* csv = nullptr) {
  struct Variant {
    const char* label;
    double lp, lm;
  };
  const Variant variants[] = {
      {"tassn w/o L_c", 0.0, 0.0},
      {"tassn w/o L_c^m", base.weights.lambda_p, 0.0},
      {"tassn", base.weights.lambda_p, base.weights.lambda_m},
  };
  std::vector<AblationRow> rows;
  for (const auto& v : variants) {
    TrainConfig cfg = base;
    cfg.weights.lambda_p = v.lp;
    cfg.weights.lambda_m = v.lm;
    Trainer tr(cfg);
    tr.load_checkpoint(stage2_ckpt);
    const EvalResult res = tr.train_stage(ds, 3, csv);
    rows.push_back({v.label, res.epe_mm, res.auc_0_50, res.auc_20_50});
  }
  return rows;
}

inline void write_ablation_csv(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "variant,epe_mm,auc_0_50,auc_20_50\n";
  for (const auto& r : rows)
    os << r.label << "," << r.epe_mm << "," << r.auc_0_50 << "," << r.auc_20_50 << "\n";
}

}  // namespace tassn::train
