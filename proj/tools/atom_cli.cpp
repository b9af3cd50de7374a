// Command-line driver: synthetic data generation, offline IoU training,
// tracking, evaluation, ablations, optimizer convergence comparison, and
// gradient checking.

#include <filesystem>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "json.hpp"

#include "atom/bench.hpp"
#include "atom/config.hpp"
#include "atom/dataset.hpp"
#include "atom/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace atom;

namespace {

struct CommonArgs {
  uint64_t seed = 1;
  std::string config_path;
  std::string precision = "f32";
  std::string out;

  Config config() const {
    return config_path.empty() ? Config() : Config::parse_file(config_path);
  }
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--seed", args.seed, "RNG seed");
  cmd->add_option("--config", args.config_path, "key=value config file");
  cmd->add_option("--precision", args.precision, "f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}));
  cmd->add_option("--out", args.out, "output path");
}

TrackerConfig tracker_config_from(const Config& c) {
  TrackerConfig t;
  t.patch_size = c.get_int("patch_size", t.patch_size);
  t.area_factor = c.get_double("area_factor", t.area_factor);
  t.proposals = c.get_int("proposals", t.proposals);
  t.ascent_steps = c.get_int("ascent_steps", t.ascent_steps);
  t.step_length = c.get_double("step_length", t.step_length);
  t.top_k = c.get_int("top_k", t.top_k);
  t.update_interval = c.get_int("update_interval", t.update_interval);
  t.lost_threshold = c.get_double("lost_threshold", t.lost_threshold);
  t.hard_negative_boost =
      c.get_double("hard_negative_boost", t.hard_negative_boost);
  t.memory_capacity = c.get_int("memory_capacity", t.memory_capacity);
  t.memory_eta = c.get_double("memory_eta", t.memory_eta);
  t.lambda = c.get_double("lambda", t.lambda);
  t.gd_lr = c.get_double("gd_lr", t.gd_lr);
  t.gd_momentum = c.get_double("gd_momentum", t.gd_momentum);
  return t;
}

IouTrainConfig train_config_from(const Config& c) {
  IouTrainConfig t;
  t.epochs = c.get_int("epochs", t.epochs);
  t.batch_pairs = c.get_int("batch_pairs", t.batch_pairs);
  t.pairs_per_epoch = c.get_int("pairs_per_epoch", t.pairs_per_epoch);
  t.candidates = c.get_int("candidates", t.candidates);
  t.min_iou = c.get_double("min_iou", t.min_iou);
  t.lr = c.get_double("lr", t.lr);
  t.lr_decay = c.get_double("lr_decay", t.lr_decay);
  t.lr_step_epochs = c.get_int("lr_step_epochs", t.lr_step_epochs);
  t.flip_augment = c.get_bool("flip_augment", t.flip_augment);
  t.color_jitter = c.get_double("color_jitter", t.color_jitter);
  return t;
}

DatasetConfig dataset_config_from(const Config& c) {
  DatasetConfig d;
  d.sequences = c.get_int("dataset_sequences", d.sequences);
  d.frames_per_sequence = c.get_int("dataset_frames", d.frames_per_sequence);
  d.max_frame_gap = c.get_int("max_frame_gap", d.max_frame_gap);
  d.test_center_jitter =
      c.get_double("test_center_jitter", d.test_center_jitter);
  d.test_scale_jitter = c.get_double("test_scale_jitter", d.test_scale_jitter);
  return d;
}

void apply_variant_flags(TrackerConfig& cfg, bool no_classifier,
                         bool multi_scale, bool no_hn,
                         const std::string& optimizer) {
  cfg.use_classifier = !no_classifier;
  cfg.multi_scale = multi_scale;
  cfg.hard_negatives = !no_hn;
  if (optimizer == "gd") {
    cfg.optimizer = TrackerConfig::Optimizer::kGd;
  } else if (optimizer == "gd++") {
    cfg.optimizer = TrackerConfig::Optimizer::kGdpp;
  } else {
    cfg.optimizer = TrackerConfig::Optimizer::kGncg;
  }
}

// ------------------------------------------------------------------
// synth
// ------------------------------------------------------------------

int cmd_synth(const CommonArgs& common, bool suite, int per_category,
              int frames) {
  check(!common.out.empty(), "synth: --out directory required");
  if (suite) {
    auto entries = standard_suite(per_category, frames, common.seed);
    for (const auto& e : entries) {
      Sequence seq = synth_sequence(e.spec, e.seed);
      save_sequence((fs::path(common.out) / seq.name).string(), seq);
    }
    std::cout << "wrote " << entries.size() << " sequences to " << common.out
              << "\n";
    return 0;
  }
  const Config c = common.config();
  SynthSpec spec;
  spec.name = c.get_string("name", "synth");
  spec.n_frames = frames > 0 ? frames : c.get_int("frames", 100);
  const std::string shape = c.get_string("shape", "rectangle");
  spec.shape = shape == "ellipse"
                   ? TargetShape::kEllipse
                   : shape == "triangle" ? TargetShape::kTriangle
                                         : TargetShape::kRectangle;
  spec.target_w = c.get_double("target_w", spec.target_w);
  spec.target_h = c.get_double("target_h", spec.target_h);
  spec.speed = c.get_double("speed", spec.speed);
  spec.scale_factor = c.get_double("scale_factor", spec.scale_factor);
  spec.aspect_factor = c.get_double("aspect_factor", spec.aspect_factor);
  spec.rotation_deg = c.get_double("rotation_deg", spec.rotation_deg);
  spec.distractors = c.get_int("distractors", spec.distractors);
  Sequence seq = synth_sequence(spec, common.seed);
  save_sequence((fs::path(common.out) / spec.name).string(), seq);
  std::cout << "wrote sequence " << spec.name << " (" << seq.size()
            << " frames) to " << common.out << "\n";
  return 0;
}

// ------------------------------------------------------------------
// train-iou
// ------------------------------------------------------------------

template <typename T>
int cmd_train_iou(const CommonArgs& common, const std::string& variant,
                  const std::string& history_path) {
  check(!common.out.empty(), "train-iou: --out model path required");
  const Config c = common.config();
  const IouTrainConfig tcfg = train_config_from(c);
  const DatasetConfig dcfg = dataset_config_from(c);
  const uint64_t backbone_seed = c.get_uint64("backbone_seed", 0x7a3c0ffeeULL);

  TinyBackbone<T> backbone(backbone_seed);
  SynthDataset dataset = SynthDataset::generate(dcfg, common.seed);
  auto val = build_validation_samples(dataset, backbone,
                                      c.get_int("val_pairs", 48),
                                      tcfg.candidates, tcfg.min_iou,
                                      common.seed + 7777);
  IouNet<T> net(iou_variant_from_name(variant), common.seed + 13);
  Rng rng(common.seed + 29);
  auto history = net.train_offline(dataset.sampler(), val, tcfg, backbone, rng);

  save_iou_net(common.out, net, backbone_seed);
  if (!history_path.empty()) {
    std::ofstream f(history_path);
    check(f.good(), "cannot write history: ", history_path);
    f << "epoch,train_mse,val_mse,lr\n";
    for (const auto& h : history) {
      char line[96];
      std::snprintf(line, sizeof(line), "%d,%.6f,%.6f,%.6g\n", h.epoch,
                    h.train_mse, h.val_mse, h.lr);
      f << line;
    }
  }
  std::cout << "trained " << variant << " model: final val MSE "
            << history.back().val_mse << " -> " << common.out << "\n";
  return 0;
}

// ------------------------------------------------------------------
// track / eval
// ------------------------------------------------------------------

template <typename T>
Trajectory run_track(const Sequence& seq, const std::string& model_path,
                     const TrackerConfig& cfg, uint64_t seed) {
  const IouModelInfo info = peek_iou_model(model_path);
  TinyBackbone<T> backbone(info.backbone_seed);
  IouNet<T> net(info.variant, 0);
  load_iou_net(model_path, net);
  Tracker<T> tracker(cfg, backbone, net);
  return track_sequence(tracker, seq, seed);
}

template <typename T>
int cmd_track(const CommonArgs& common, const std::string& seq_dir,
              const std::string& model_path, bool no_classifier,
              bool multi_scale, bool no_hn, const std::string& optimizer) {
  check(!common.out.empty(), "track: --out CSV path required");
  Sequence seq = load_sequence(seq_dir);
  TrackerConfig cfg = tracker_config_from(common.config());
  apply_variant_flags(cfg, no_classifier, multi_scale, no_hn, optimizer);
  Trajectory tr = run_track<T>(seq, model_path, cfg, common.seed);
  write_trajectory_csv(common.out, tr);
  EvalReport rep = evaluate_trajectory(seq.ground_truth, tr.boxes);
  std::cout << seq.name << ": mean IoU " << rep.mean_iou << ", AUC "
            << rep.auc_percent << "%\n";
  return 0;
}

template <typename T>
int cmd_eval(const CommonArgs& common, const std::string& suite_dir,
             const std::string& model_path, bool no_classifier,
             bool multi_scale, bool no_hn, const std::string& optimizer) {
  check(!common.out.empty(), "eval: --out directory required");
  fs::create_directories(common.out);
  TrackerConfig cfg = tracker_config_from(common.config());
  apply_variant_flags(cfg, no_classifier, multi_scale, no_hn, optimizer);

  std::vector<std::string> seq_dirs;
  for (const auto& e : fs::directory_iterator(suite_dir)) {
    if (e.is_directory()) seq_dirs.push_back(e.path().string());
  }
  std::sort(seq_dirs.begin(), seq_dirs.end());
  check(!seq_dirs.empty(), "eval: no sequence directories in ", suite_dir);

  std::ofstream csv(fs::path(common.out) / "report.csv");
  check(csv.good(), "cannot write report.csv");
  csv << "sequence,frames,mean_iou,auc,op50,op75,precision20\n";
  std::vector<double> all_ious, all_errors;
  for (const auto& dir : seq_dirs) {
    Sequence seq = load_sequence(dir);
    Trajectory tr = run_track<T>(seq, model_path, cfg, common.seed);
    EvalReport rep = evaluate_trajectory(seq.ground_truth, tr.boxes);
    char line[256];
    std::snprintf(line, sizeof(line), "%s,%d,%.6f,%.4f,%.4f,%.4f,%.4f\n",
                  seq.name.c_str(), seq.size(), rep.mean_iou, rep.auc_percent,
                  rep.curve.op[50], rep.curve.op[75], rep.precision20);
    csv << line;
    all_ious.insert(all_ious.end(), rep.ious.begin(), rep.ious.end());
    all_errors.insert(all_errors.end(), rep.center_errors.begin(),
                      rep.center_errors.end());
  }
  OpCurve curve = op_curve(all_ious);
  json j;
  j["sequences"] = seq_dirs.size();
  j["frames"] = all_ious.size();
  j["auc"] = auc(curve);
  j["op50"] = curve.op[50];
  j["op75"] = curve.op[75];
  j["precision20"] = precision_at(all_errors);
  j["thresholds"] = curve.thresholds;
  j["op_curve"] = curve.op;
  std::ofstream jf(fs::path(common.out) / "report.json");
  jf << j.dump(2) << "\n";
  std::cout << "AUC " << auc(curve) << "% over " << all_ious.size()
            << " frames\n";
  return 0;
}

// ------------------------------------------------------------------
// ablate
// ------------------------------------------------------------------

template <typename T>
int cmd_ablate(const CommonArgs& common, const std::string& model_path,
               int runs, int per_category, int frames,
               std::vector<std::string> which) {
  check(!common.out.empty(), "ablate: --out CSV path required");
  const IouModelInfo info = peek_iou_model(model_path);
  TinyBackbone<T> backbone(info.backbone_seed);
  IouNet<T> net(info.variant, 0);
  load_iou_net(model_path, net);

  TrackerConfig base = tracker_config_from(common.config());
  std::vector<VariantSpec> variants = ablation_variants(base);
  if (!which.empty()) {
    std::vector<VariantSpec> filtered;
    for (const auto& v : variants) {
      if (std::find(which.begin(), which.end(), v.name) != which.end()) {
        filtered.push_back(v);
      }
    }
    check(!filtered.empty(), "ablate: no matching variants");
    variants = filtered;
  }
  auto suite = standard_suite(per_category, frames, common.seed + 500);
  auto table = run_ablation(variants, suite, backbone, net, runs, common.seed);
  write_ablation_csv(common.out, table);

  std::printf("%-14s %8s %8s %8s\n", "variant", "OP50", "OP75", "AUC");
  for (const auto& [name, cell] : table) {
    std::printf("%-14s %8.2f %8.2f %8.2f\n", name.c_str(), cell.op50,
                cell.op75, cell.auc);
  }
  return 0;
}

// ------------------------------------------------------------------
// convergence-bench
// ------------------------------------------------------------------

template <typename T>
int cmd_convergence(const CommonArgs& common, int problems, bool tune) {
  check(!common.out.empty(), "convergence-bench: --out CSV path required");
  const Config c = common.config();
  TinyBackbone<T> backbone(c.get_uint64("backbone_seed", 0x7a3c0ffeeULL));
  double gd_lr = c.get_double("gd_lr", TrackerConfig().gd_lr);
  double gd_momentum = c.get_double("gd_momentum", TrackerConfig().gd_momentum);
  if (tune) {
    auto [lr, mom] = tune_gd(backbone, std::min(3, problems), common.seed);
    gd_lr = lr;
    gd_momentum = mom;
    std::cout << "tuned gd_lr=" << gd_lr << " gd_momentum=" << gd_momentum
              << "\n";
  }
  std::vector<ConvergenceRun> all;
  for (int i = 0; i < problems; ++i) {
    auto runs =
        convergence_compare(backbone, common.seed + i, gd_lr, gd_momentum);
    all.insert(all.end(), runs.begin(), runs.end());
  }
  write_convergence_csv(common.out, all, gd_lr, gd_momentum);

  std::map<std::string, std::vector<double>> finals;
  for (const auto& r : all) finals[r.method].push_back(final_loss(r.trace));
  for (const auto& [m, v] : finals) {
    std::cout << m << ": median final loss " << median(v) << "\n";
  }
  return 0;
}

// ------------------------------------------------------------------
// gradcheck
// ------------------------------------------------------------------

double fd_entry(const std::function<double(const TensorD&)>& f, TensorD x,
                int64_t i, double step = 1e-6) {
  const double orig = x[i];
  x[i] = orig + step;
  const double fp = f(x);
  x[i] = orig - step;
  const double fm = f(x);
  return (fp - fm) / (2 * step);
}

double grad_rel_err(const TensorD& got,
                    const std::function<double(const TensorD&)>& f,
                    const TensorD& at) {
  double num = 0, den = 0;
  for (int64_t i = 0; i < got.size(); ++i) {
    const double fd = fd_entry(f, at, i);
    num += (got[i] - fd) * (got[i] - fd);
    den += fd * fd;
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

int cmd_gradcheck(const CommonArgs& common) {
  Rng rng(common.seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  auto rand_tensor = [&](std::vector<int> shape) {
    TensorD t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = unif(rng);
    return t;
  };
  int failures = 0;
  auto report = [&](const std::string& name, double err, double tol) {
    const bool ok = err < tol;
    if (!ok) ++failures;
    std::printf("%-28s rel_err %.3e  tol %.0e  %s\n", name.c_str(), err, tol,
                ok ? "PASS" : "FAIL");
  };

  {  // convolution w.r.t. input and kernel
    TensorD x = rand_tensor({6, 6, 3});
    TensorD w = rand_tensor({3, 3, 3, 4});
    TensorD proj = rand_tensor({6, 6, 4});
    auto scalar = [&](const TensorD& xin, const TensorD& win) {
      NoGradGuard ng;
      auto y = conv2d(Var<double>::constant(xin), Var<double>::constant(win),
                      1, Pad::same(3, 3));
      double s = 0;
      for (int64_t i = 0; i < y.size(); ++i) s += y.value()[i] * proj[i];
      return s;
    };
    auto xv = Var<double>::leaf(x, true);
    auto wv = Var<double>::leaf(w, true);
    auto y = conv2d(xv, wv, 1, Pad::same(3, 3));
    auto s = dot(flatten(y), Var<double>::constant(proj.reshaped(
                                 {static_cast<int>(proj.size())})));
    auto grads = backprop(s, {xv, wv});
    report("conv2d/input",
           grad_rel_err(grads[0],
                        [&](const TensorD& t) { return scalar(t, w); }, x),
           1e-5);
    report("conv2d/kernel",
           grad_rel_err(grads[1],
                        [&](const TensorD& t) { return scalar(x, t); }, w),
           1e-5);
  }
  {  // classifier head w.r.t. both layers
    TensorD x = rand_tensor({6, 6, 4});
    TensorD y = rand_tensor({6, 6});
    Rng wrng(9);
    ClassifierWeights<double> cw(wrng, 4);
    auto loss_of = [&](const TensorD& w1, const TensorD& w2) {
      NoGradGuard ng;
      ClassifierWeights<double> c2 = cw;
      c2.w1 = Var<double>::constant(w1);
      c2.w2 = Var<double>::constant(w2);
      TensorD f = classify(x, c2);
      double s = 0;
      for (int64_t i = 0; i < f.size(); ++i) {
        s += (f[i] - y[i]) * (f[i] - y[i]);
      }
      return s;
    };
    auto f = classify(Var<double>::constant(x), cw);
    auto r = sub(f, Var<double>::constant(y));
    auto grads = backprop(sum(mul(r, r)), {cw.w1, cw.w2});
    report("classifier/w1",
           grad_rel_err(
               grads[0],
               [&](const TensorD& t) { return loss_of(t, cw.w2.value()); },
               cw.w1.value()),
           1e-5);
    report("classifier/w2",
           grad_rel_err(
               grads[1],
               [&](const TensorD& t) { return loss_of(cw.w1.value(), t); },
               cw.w2.value()),
           1e-5);
  }
  {  // PrPool w.r.t. box coordinates
    TensorD map = rand_tensor({9, 9, 2});
    TensorD proj = rand_tensor({3, 3, 2});
    TensorD b({4}, {4.1, 3.8, 3.5, 2.7});
    auto scalar = [&](const TensorD& bt) {
      TensorD pooled =
          prpool_forward(map, BoundingBox(bt[0], bt[1], bt[2], bt[3]), 3);
      double s = 0;
      for (int64_t i = 0; i < pooled.size(); ++i) s += pooled[i] * proj[i];
      return s;
    };
    auto bv = Var<double>::leaf(b, true);
    auto pooled = prpool_op(Var<double>::constant(map), bv, 3);
    auto s =
        dot(flatten(pooled), Var<double>::constant(proj.reshaped({18})));
    auto g = backprop(s, {bv})[0];
    report("prpool/box", grad_rel_err(g, scalar, b), 1e-4);
  }
  {  // pelu C1 behaviour at the joint
    auto deriv_at = [](double t) {
      auto x = Var<double>::leaf(TensorD({1}, {t}), true);
      return backprop(sum(pelu(x, 1.0)), {x})[0][0];
    };
    const double gap = std::abs(deriv_at(-1e-6) - deriv_at(1e-6));
    report("pelu/C1-gap", gap, 1e-5);
  }
  {  // J^T J p against an assembled Jacobian on a small net
    TensorD a = rand_tensor({7, 5});
    ResidualProblem<double> p;
    p.weights = {Var<double>::leaf(rand_tensor({5}), true)};
    p.evaluate = [a](const std::vector<Var<double>>& ws) {
      return flatten(
          pelu(matmul(Var<double>::constant(a), reshape(ws[0], {5, 1})), 0.3));
    };
    auto r = p.evaluate(p.weights);
    std::vector<std::vector<double>> jac(7, std::vector<double>(5));
    for (int i = 0; i < 7; ++i) {
      TensorD e({7});
      e[i] = 1.0;
      auto row = backprop(dot(r, Var<double>::constant(e)), p.weights)[0];
      for (int j = 0; j < 5; ++j) jac[i][j] = row[j];
    }
    std::vector<double> dir(5);
    for (auto& v : dir) v = unif(rng);
    std::vector<double> jp(7, 0.0);
    for (int i = 0; i < 7; ++i) {
      for (int j = 0; j < 5; ++j) jp[i] += jac[i][j] * dir[j];
    }
    std::vector<double> want(5, 0.0);
    for (int j = 0; j < 5; ++j) {
      for (int i = 0; i < 7; ++i) want[j] += jac[i][j] * jp[i];
    }
    std::vector<double> got = jtj_apply(p, dir);
    double num = 0, den = 0;
    for (int j = 0; j < 5; ++j) {
      num += (got[j] - want[j]) * (got[j] - want[j]);
      den += want[j] * want[j];
    }
    report("jtj_apply/small-net", std::sqrt(num / std::max(den, 1e-300)),
           1e-6);
  }
  std::printf("gradcheck: %s\n", failures ? "FAIL" : "PASS");
  return failures ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Overlap-maximization tracker: training, tracking, and "
               "evaluation tools"};
  app.require_subcommand(1);

  CommonArgs common;

  auto* synth = app.add_subcommand("synth", "render synthetic sequences");
  bool synth_suite = false;
  int per_category = 4, frames = 0;
  synth->add_flag("--standard-suite", synth_suite,
                  "emit the standard ablation suite");
  synth->add_option("--per-category", per_category);
  synth->add_option("--frames", frames);
  add_common(synth, common);

  auto* train = app.add_subcommand("train-iou", "offline IoU-net training");
  std::string variant = "modulation", history_path;
  train->add_option("--variant", variant,
                    "modulation|concatenation|siamese|baseline|block3|block4");
  train->add_option("--history", history_path, "loss history CSV");
  add_common(train, common);

  auto* track = app.add_subcommand("track", "track one sequence");
  std::string seq_dir, model_path, optimizer = "gncg";
  bool no_classifier = false, multi_scale = false, no_hn = false;
  track->add_option("--seq", seq_dir, "sequence directory")->required();
  track->add_option("--model", model_path, "IoU model file")->required();
  track->add_flag("--no-classifier", no_classifier);
  track->add_flag("--multi-scale", multi_scale);
  track->add_flag("--no-hn", no_hn);
  track->add_option("--optimizer", optimizer)
      ->check(CLI::IsMember({"gncg", "gd", "gd++"}));
  add_common(track, common);

  auto* eval = app.add_subcommand("eval", "evaluate a suite directory");
  std::string suite_dir;
  eval->add_option("--suite", suite_dir, "directory of sequence dirs")
      ->required();
  eval->add_option("--model", model_path, "IoU model file")->required();
  eval->add_flag("--no-classifier", no_classifier);
  eval->add_flag("--multi-scale", multi_scale);
  eval->add_flag("--no-hn", no_hn);
  eval->add_option("--optimizer", optimizer)
      ->check(CLI::IsMember({"gncg", "gd", "gd++"}));
  add_common(eval, common);

  auto* ablate = app.add_subcommand("ablate", "run the ablation table");
  int runs = 5;
  std::vector<std::string> which;
  ablate->add_option("--model", model_path, "IoU model file")->required();
  ablate->add_option("--runs", runs);
  ablate->add_option("--per-category", per_category);
  ablate->add_option("--frames", frames);
  ablate->add_option("--variants", which, "subset of variants");
  add_common(ablate, common);

  auto* conv = app.add_subcommand("convergence-bench",
                                  "optimizer convergence comparison");
  int problems = 10;
  bool tune = false;
  conv->add_option("--problems", problems);
  conv->add_flag("--tune", tune, "grid-search GD lr/momentum first");
  add_common(conv, common);

  auto* gc = app.add_subcommand("gradcheck", "finite-difference oracles");
  add_common(gc, common);

  CLI11_PARSE(app, argc, argv);

  const bool f64 = common.precision == "f64";
  try {
    if (synth->parsed()) {
      return cmd_synth(common, synth_suite, per_category,
                       frames > 0 ? frames : 100);
    }
    if (train->parsed()) {
      return f64 ? cmd_train_iou<double>(common, variant, history_path)
                 : cmd_train_iou<float>(common, variant, history_path);
    }
    if (track->parsed()) {
      return f64 ? cmd_track<double>(common, seq_dir, model_path,
                                     no_classifier, multi_scale, no_hn,
                                     optimizer)
                 : cmd_track<float>(common, seq_dir, model_path, no_classifier,
                                    multi_scale, no_hn, optimizer);
    }
    if (eval->parsed()) {
      return f64 ? cmd_eval<double>(common, suite_dir, model_path,
                                    no_classifier, multi_scale, no_hn,
                                    optimizer)
                 : cmd_eval<float>(common, suite_dir, model_path,
                                   no_classifier, multi_scale, no_hn,
                                   optimizer);
    }
    if (ablate->parsed()) {
      return f64 ? cmd_ablate<double>(common, model_path, runs, per_category,
                                      frames > 0 ? frames : 100, which)
                 : cmd_ablate<float>(common, model_path, runs, per_category,
                                     frames > 0 ? frames : 100, which);
    }
    if (conv->parsed()) {
      return f64 ? cmd_convergence<double>(common, problems, tune)
                 : cmd_convergence<float>(common, problems, tune);
    }
    if (gc->parsed()) return cmd_gradcheck(common);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
