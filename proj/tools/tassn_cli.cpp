// Command-line front end: data generation, staged training, the consistency
// ablation, evaluation, PCK export, silhouette rendering, and the gradient
// verification suite. Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tassn/gradsuite.hpp"
#include "tassn/train.hpp"

namespace fs = std::filesystem;
using namespace tassn;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key=value configuration; a config file provides values and CLI
// --set overrides win. Unknown keys are rejected.
class Config {
 public:
  Config() {
    kv_ = {
        {"width", "64"},         {"height", "64"},        {"frames", "8"},
        {"sigma_px", "2.0"},     {"fx", "70"},            {"fy", "70"},
        {"z_root", "400"},       {"base_channels", "8"},  {"feature_channels", "32"},
        {"latent_channels", "64"}, {"cheb_order", "3"},   {"hierarchy_levels", "2"},
        {"learning_rate", "1e-3"}, {"batch_size", "4"},   {"grad_accum", "1"},
        {"stage1_epochs", "30"}, {"stage2_epochs", "20"}, {"stage3_epochs", "30"},
        {"warmup_epochs", "5"},  {"warmup_samples", "32"},
        {"lambda_s", "0.1"},     {"lambda_h", "1"},       {"lambda_p", "10"},
        {"lambda_m", "10"},      {"raster_tau", "1.0"},   {"flow_mode", "oracle"},
    };
  }

  void set(const std::string& key, const std::string& value) {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw UsageError("unknown config key: " + key);
    it->second = value;
  }

  void load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config file: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back())))
        line.pop_back();
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
      set(line.substr(0, eq), line.substr(eq + 1));
    }
  }

  void apply_overrides(const std::vector<std::string>& sets) {
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got: " + s);
      set(s.substr(0, eq), s.substr(eq + 1));
    }
  }

  double getd(const std::string& key) const { return std::stod(kv_.at(key)); }
  int geti(const std::string& key) const { return std::stoi(kv_.at(key)); }
  const std::string& gets(const std::string& key) const { return kv_.at(key); }

  synth::SynthConfig synth(std::uint64_t /*seed*/) const {
    synth::SynthConfig s;
    s.width = geti("width");
    s.height = geti("height");
    s.frames = geti("frames");
    s.sigma_px = getd("sigma_px");
    s.camera = {getd("fx"), getd("fy"), s.width / 2.0, s.height / 2.0, getd("z_root")};
    return s;
  }

  train::TrainConfig trainer(std::uint64_t seed) const {
    train::TrainConfig c;
    c.seed = seed;
    c.net.width = geti("width");
    c.net.height = geti("height");
    c.net.base_channels = geti("base_channels");
    c.net.feature_channels = geti("feature_channels");
    c.net.latent_channels = geti("latent_channels");
    c.net.cheb_order = geti("cheb_order");
    c.hierarchy_levels = geti("hierarchy_levels");
    c.learning_rate = getd("learning_rate");
    c.batch_size = geti("batch_size");
    c.grad_accum = geti("grad_accum");
    c.stage1_epochs = geti("stage1_epochs");
    c.stage2_epochs = geti("stage2_epochs");
    c.stage3_epochs = geti("stage3_epochs");
    c.warmup_epochs = geti("warmup_epochs");
    c.warmup_samples = geti("warmup_samples");
    c.weights.lambda_s = getd("lambda_s");
    c.weights.lambda_h = getd("lambda_h");
    c.weights.lambda_p = getd("lambda_p");
    c.weights.lambda_m = getd("lambda_m");
    c.raster_tau = getd("raster_tau");
    const std::string& fm = gets("flow_mode");
    if (fm == "oracle") c.flow_mode = nets::FlowEstimator::Mode::oracle;
    else if (fm == "learned") c.flow_mode = nets::FlowEstimator::Mode::learned;
    else throw UsageError("flow_mode must be oracle or learned");
    c.validate();
    return c;
  }

  // Provenance: full effective configuration next to the outputs.
  void echo(const std::string& out_dir, std::uint64_t seed) const {
    fs::create_directories(out_dir);
    std::ofstream f(out_dir + "/run_config.txt");
    f << "seed=" << seed << "\n";
    for (const auto& [k, v] : kv_) f << k << "=" << v << "\n";
  }

 private:
  std::map<std::string, std::string> kv_;
};

struct Common {
  std::string config_file, out = "out";
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  int workers = 1;

  Config resolve() const {
    Config cfg;
    if (!config_file.empty()) cfg.load_file(config_file);
    cfg.apply_overrides(sets);
    return cfg;
  }
};

void add_common(CLI::App* cmd, Common& c) {
  if (const char* env = std::getenv("TASSN_SEED")) c.seed = std::strtoull(env, nullptr, 10);
  cmd->add_option("--config", c.config_file, "flat key=value config file");
  cmd->add_option("--set", c.sets, "override a config key (key=value, repeatable)");
  cmd->add_option("--seed", c.seed, "RNG seed (default: $TASSN_SEED or 0)");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--workers", c.workers, "worker count (single-core build clamps to 1)");
}

int clamp_workers(int w) {
  if (w < 1) throw UsageError("--workers must be >= 1");
  if (w > 1) std::cerr << "note: --workers clamped to 1 in this build\n";
  return 1;
}

synth::Dataset load_data(const std::string& dir) {
  if (!fs::exists(dir + "/manifest.txt"))
    throw std::runtime_error("no dataset manifest at " + dir + "/manifest.txt");
  return synth::load_dataset(dir);
}

io::Image silhouette_image(const std::vector<double>& values, int h, int w) {
  io::Image im = io::Image::zeros(1, h, w);
  for (size_t i = 0; i < im.data.size(); ++i) im.data[i] = std::clamp(values[i], 0.0, 1.0);
  return im;
}

// ---------------------------------------------------------------- commands

int cmd_gen_data(const Common& c, int clips, int val_clips) {
  if (clips <= 0) throw UsageError("--clips must be > 0");
  if (val_clips < 0) throw UsageError("--val must be >= 0");
  const Config cfg = c.resolve();
  const HandTemplate tmpl = make_hand_template();
  const synth::Dataset ds =
      synth::generate_dataset(tmpl, cfg.synth(c.seed), clips, val_clips, c.seed);
  fs::create_directories(c.out);
  synth::save_dataset(c.out, ds);
  cfg.echo(c.out, c.seed);
  int frames = 0;
  for (const auto& cl : ds.train) frames += cl.num_frames();
  for (const auto& cl : ds.val) frames += cl.num_frames();
  std::cout << "wrote " << ds.train.size() << " train + " << ds.val.size() << " val clips ("
            << frames << " frames) to " << c.out << "\n";
  return 0;
}

int cmd_train(const Common& c, const std::string& data, int stage, const std::string& ckpt_in,
              int epochs_override) {
  if (stage < 1 || stage > 3) throw UsageError("--stage must be 1, 2 or 3");
  Config cfg = c.resolve();
  if (epochs_override >= 0)
    cfg.set("stage" + std::to_string(stage) + "_epochs", std::to_string(epochs_override));
  const synth::Dataset ds = load_data(data);
  train::Trainer tr(cfg.trainer(c.seed));
  if (!ckpt_in.empty()) tr.load_checkpoint(ckpt_in);
  fs::create_directories(c.out);
  cfg.echo(c.out, c.seed);
  const std::string log_path = c.out + "/stage" + std::to_string(stage) + "_log.csv";
  std::ofstream log(log_path);
  train::write_csv_header(log);
  const std::string ckpt = c.out + "/stage" + std::to_string(stage) + ".ckpt";
  const train::EvalResult val = tr.train_stage(ds, stage, &log, ckpt);
  std::cout << "stage " << stage << " done: val epe_mm=" << val.epe_mm
            << " auc_0_50=" << val.auc_0_50 << " auc_20_50=" << val.auc_20_50 << "\n"
            << "checkpoint: " << ckpt << "\nlog: " << log_path << "\n";
  return 0;
}

int cmd_ablate(const Common& c, const std::string& data, const std::string& stage2_ckpt) {
  const Config cfg = c.resolve();
  const synth::Dataset ds = load_data(data);
  fs::create_directories(c.out);
  cfg.echo(c.out, c.seed);
  std::ofstream log(c.out + "/ablation_log.csv");
  train::write_csv_header(log);
  const auto rows = train::ablate(cfg.trainer(c.seed), ds, stage2_ckpt, &log);
  std::ofstream table(c.out + "/ablation.csv");
  train::write_ablation_csv(table, rows);
  train::write_ablation_csv(std::cout, rows);
  return 0;
}

int cmd_eval(const Common& c, const std::string& data, const std::string& ckpt, bool inject_gt) {
  const Config cfg = c.resolve();
  const synth::Dataset ds = load_data(data);
  fs::create_directories(c.out);
  cfg.echo(c.out, c.seed);
  train::EvalResult res;
  if (inject_gt) {
    // Fixture path: score the exact ground-truth poses as predictions.
    std::vector<metrics::Pose3D> preds, gts;
    for (const auto& clip : ds.val.empty() ? ds.train : ds.val) {
      const auto& gt3d = clip.pose3d_eval_only();
      for (int f = 1; f < clip.num_frames(); ++f) {
        preds.push_back({kNumJoints, gt3d[f]});
        gts.push_back({kNumJoints, gt3d[f]});
      }
    }
    double s = 0.0;
    for (size_t i = 0; i < preds.size(); ++i) s += metrics::epe(preds[i], gts[i]);
    res.epe_mm = preds.empty() ? 0.0 : s / preds.size();
    res.pck = metrics::pck_curve(preds, gts, metrics::default_thresholds());
    res.auc_0_50 = metrics::auc(res.pck, 0.0, 50.0);
    res.auc_20_50 = metrics::auc(res.pck, 20.0, 50.0);
  } else {
    train::Trainer tr(cfg.trainer(c.seed));
    tr.load_checkpoint(ckpt);
    res = tr.evaluate(ds.val.empty() ? ds.train : ds.val, std::max(1, tr.stage_completed()));
  }
  std::ofstream f(c.out + "/eval.csv");
  f << "epe_mm,auc_0_50,auc_20_50,loss_h,loss_m,loss_cp,loss_cm,total\n";
  f << res.epe_mm << "," << res.auc_0_50 << "," << res.auc_20_50 << "," << res.loss.h << ","
    << res.loss.s << "," << res.loss.cp << "," << res.loss.cm << "," << res.loss.total << "\n";
  std::cout << "epe_mm=" << res.epe_mm << " auc_0_50=" << res.auc_0_50
            << " auc_20_50=" << res.auc_20_50 << "\n";
  return 0;
}

int cmd_plot_pck(const Common& c, const std::string& data, const std::string& ckpt) {
  const Config cfg = c.resolve();
  const synth::Dataset ds = load_data(data);
  train::Trainer tr(cfg.trainer(c.seed));
  tr.load_checkpoint(ckpt);
  const train::EvalResult res =
      tr.evaluate(ds.val.empty() ? ds.train : ds.val, std::max(1, tr.stage_completed()));
  fs::create_directories(c.out);
  cfg.echo(c.out, c.seed);
  std::ofstream f(c.out + "/pck.csv");
  f << "threshold_mm,pck\n";
  for (size_t i = 0; i < res.pck.thresholds_mm.size(); ++i)
    f << res.pck.thresholds_mm[i] << "," << res.pck.values[i] << "\n";
  std::cout << "wrote " << res.pck.thresholds_mm.size() << " rows to " << c.out << "/pck.csv\n";
  return 0;
}

int cmd_render(const Common& c, const std::string& data, const std::string& ckpt, int clip_idx,
               bool fixture) {
  const Config cfg = c.resolve();
  fs::create_directories(c.out);
  cfg.echo(c.out, c.seed);
  const int W = cfg.geti("width"), H = cfg.geti("height");
  if (fixture) {
    // Two triangles spanning well past the image bounds: a saturation probe.
    const render::Camera cam{cfg.getd("fx"), cfg.getd("fy"), W / 2.0, H / 2.0,
                             cfg.getd("z_root")};
    auto back = [&](double u, double v, int axis) {
      const double p = axis == 0 ? (u - cam.cx) / cam.fx : (v - cam.cy) / cam.fy;
      return p * cam.z_root;
    };
    // Two triangles that each cover the full image on their own, so no pixel
    // sits near any edge and the interior saturates.
    const double lo = -8.0, hix = W + 7.0, hiy = H + 7.0;
    ad::Tensor mesh = ad::Tensor::from(
        {6, 3},
        {back(lo, lo, 0),      back(lo, lo, 1),      0.0,  //
         back(3.0 * W, lo, 0), back(3.0 * W, lo, 1), 0.0,  //
         back(lo, 3.0 * H, 0), back(lo, 3.0 * H, 1), 0.0,  //
         back(hix, hiy, 0),    back(hix, hiy, 1),    0.0,  //
         back(-2.0 * W, hiy, 0), back(-2.0 * W, hiy, 1), 0.0,
         back(hix, -2.0 * H, 0), back(hix, -2.0 * H, 1), 0.0});
    ad::Tape tape;
    ad::Var sil = render::rasterize_silhouette(tape, cam, tape.input(std::move(mesh)),
                                               {{0, 1, 2}, {3, 4, 5}}, 0.25, W, H);
    io::write_pnm(c.out + "/fixture.pgm", silhouette_image(tape.val(sil).values, H, W));
    std::cout << "wrote " << c.out << "/fixture.pgm\n";
    return 0;
  }
  const synth::Dataset ds = load_data(data);
  const auto& split = ds.val.empty() ? ds.train : ds.val;
  if (clip_idx < 0 || clip_idx >= static_cast<int>(split.size()))
    throw UsageError("--clip index out of range");
  const synth::Clip& clip = split[clip_idx];
  train::Trainer tr(cfg.trainer(c.seed));
  tr.load_checkpoint(ckpt);
  ad::Tape tape;
  const train::RtmResult r = tr.rtm_pass(tape, clip, /*use_gt_boot=*/false, false);
  char name[64];
  for (int i = 0; i < clip.num_pairs(); ++i) {
    ad::Var sil = render::rasterize_silhouette(tape, clip.config.camera, r.fwd[i].mesh,
                                               tr.hand().faces, cfg.getd("raster_tau"), W, H);
    std::snprintf(name, sizeof name, "/pred_%03d.pgm", i + 1);
    io::write_pnm(c.out + name, silhouette_image(tape.val(sil).values, H, W));
    std::snprintf(name, sizeof name, "/gt_%03d.pgm", i + 1);
    io::write_pnm(c.out + name, clip.silhouettes[i + 1]);
  }
  std::cout << "wrote " << clip.num_pairs() << " predicted + ground-truth silhouette pairs to "
            << c.out << "\n";
  return 0;
}

int cmd_grad_check(const Common& c) {
  const auto entries = gradsuite::run(c.seed == 0 ? 2 : c.seed);
  for (const auto& e : entries)
    std::cout << (e.report.pass ? "[PASS] " : "[FAIL] ") << e.name
              << " max_rel_err=" << e.report.max_rel_err << " checked=" << e.report.checked
              << (e.report.pass ? "" : " worst=" + e.report.worst) << "\n";
  if (!gradsuite::all_pass(entries)) {
    std::cerr << "gradient suite failed\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"temporal-consistency self-supervised hand pose/mesh pipeline"};
  app.require_subcommand(1);

  Common c_gen, c_train, c_ablate, c_eval, c_pck, c_render, c_grad;
  int clips = 10, val_clips = 2, stage = 1, epochs_override = -1, clip_idx = 0;
  std::string data, ckpt_in, ckpt, stage2_ckpt;
  bool inject_gt = false, fixture = false;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic clip dataset");
  add_common(gen, c_gen);
  gen->add_option("--clips", clips, "training clips");
  gen->add_option("--val", val_clips, "validation clips");

  auto* tra = app.add_subcommand("train", "run one training stage");
  add_common(tra, c_train);
  tra->add_option("--data", data, "dataset directory")->required();
  tra->add_option("--stage", stage, "training stage (1-3)");
  tra->add_option("--ckpt-in", ckpt_in, "checkpoint to start from");
  tra->add_option("--epochs", epochs_override, "override the stage epoch count");

  auto* abl = app.add_subcommand("ablate", "three stage-3 runs from one stage-2 checkpoint");
  add_common(abl, c_ablate);
  abl->add_option("--data", data, "dataset directory")->required();
  abl->add_option("--stage2", stage2_ckpt, "stage-2 checkpoint")->required();

  auto* eva = app.add_subcommand("eval", "validation metrics for a checkpoint");
  add_common(eva, c_eval);
  eva->add_option("--data", data, "dataset directory")->required();
  eva->add_option("--ckpt", ckpt, "checkpoint to evaluate");
  eva->add_flag("--inject-gt", inject_gt, "score ground-truth poses as predictions (fixture)");

  auto* pck = app.add_subcommand("plot-pck", "export the PCK curve as CSV");
  add_common(pck, c_pck);
  pck->add_option("--data", data, "dataset directory")->required();
  pck->add_option("--ckpt", ckpt, "checkpoint to evaluate")->required();

  auto* ren = app.add_subcommand("render", "dump predicted vs ground-truth silhouettes");
  add_common(ren, c_render);
  ren->add_option("--data", data, "dataset directory");
  ren->add_option("--ckpt", ckpt, "checkpoint to render with");
  ren->add_option("--clip", clip_idx, "clip index within the split");
  ren->add_flag("--fixture", fixture, "render the full-coverage saturation fixture");

  auto* grd = app.add_subcommand("grad-check", "run the finite-difference suite");
  add_common(grd, c_grad);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) return cmd_gen_data(c_gen, clips, val_clips);
    if (*tra) {
      clamp_workers(c_train.workers);
      return cmd_train(c_train, data, stage, ckpt_in, epochs_override);
    }
    if (*abl) {
      clamp_workers(c_ablate.workers);
      return cmd_ablate(c_ablate, data, stage2_ckpt);
    }
    if (*eva) return cmd_eval(c_eval, data, ckpt, inject_gt);
    if (*pck) return cmd_plot_pck(c_pck, data, ckpt);
    if (*ren) return cmd_render(c_render, data, ckpt, clip_idx, fixture);
    if (*grd) return cmd_grad_check(c_grad);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
