#ifndef ATOM_BENCH_HPP_
#define ATOM_BENCH_HPP_

#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "atom/metrics.hpp"
#include "atom/synth.hpp"
#include "atom/tracker.hpp"

// Evaluation drivers: the synthetic ablation suite, sequence tracking,
// trajectory/report CSV output, ablation tables, and the optimizer
// convergence comparison.

namespace atom {

// ------------------------------------------------------------------
// Synthetic suite
// ------------------------------------------------------------------

struct SuiteEntry {
  std::string category;
  SynthSpec spec;
  uint64_t seed;
};

// Sequence set covering the failure modes the ablations probe:
// {static, translation, scale, aspect-change, rotation, distractors}.
inline std::vector<SuiteEntry> standard_suite(int per_category = 4,
                                              int frames = 100,
                                              uint64_t seed = 9000) {
  std::vector<SuiteEntry> out;
  const TargetShape shapes[] = {TargetShape::kRectangle,
                                TargetShape::kEllipse,
                                TargetShape::kTriangle};
  for (int i = 0; i < per_category; ++i) {
    SynthSpec base;
    base.n_frames = frames;
    base.shape = shapes[i % 3];
    base.target_w = 38 + 6 * (i % 3);
    base.target_h = 42 - 4 * (i % 3);

    SynthSpec s = base;
    s.name = "static" + std::to_string(i);
    s.speed = 0;
    out.push_back({"static", s, seed + 10 * i});

    s = base;
    s.name = "translation" + std::to_string(i);
    s.speed = 2.0 + 0.5 * i;
    out.push_back({"translation", s, seed + 10 * i + 1});

    s = base;
    s.name = "scale" + std::to_string(i);
    s.speed = 1.0;
    s.scale_factor = i % 2 == 0 ? 1.7 : 0.6;
    out.push_back({"scale", s, seed + 10 * i + 2});

    s = base;
    s.name = "aspect" + std::to_string(i);
    s.speed = 1.0;
    s.aspect_factor = i % 2 == 0 ? 2.0 : 0.5;
    out.push_back({"aspect", s, seed + 10 * i + 3});

    s = base;
    s.name = "rotation" + std::to_string(i);
    s.speed = 1.0;
    s.rotation_deg = 60.0 + 15.0 * i;
    out.push_back({"rotation", s, seed + 10 * i + 4});

    s = base;
    s.name = "distractor" + std::to_string(i);
    s.speed = 1.5;
    s.distractors = 2 + i % 2;
    s.distractor_color_shift = 0.22;
    out.push_back({"distractor", s, seed + 10 * i + 5});
  }
  return out;
}

// ------------------------------------------------------------------
// Tracking a sequence
// ------------------------------------------------------------------

struct Trajectory {
  std::vector<BoundingBox> boxes;
  std::vector<double> confidences;
  std::vector<int> lost_flags;
  uint64_t init_backprop_calls = 0;
};

template <typename T>
Trajectory track_sequence(Tracker<T>& tracker, const Sequence& seq,
                          uint64_t seed) {
  check(seq.size() >= 1, "track_sequence: empty sequence");
  Trajectory tr;
  TrackerState<T> state =
      tracker.initialize(seq.frames[0], seq.ground_truth[0], seed);
  tr.init_backprop_calls = state.init_backprop_calls;
  tr.boxes.push_back(seq.ground_truth[0]);
  tr.confidences.push_back(1.0);
  tr.lost_flags.push_back(0);
  for (int f = 1; f < seq.size(); ++f) {
    FrameResult<T> res = tracker.track_frame(state, seq.frames[f]);
    tr.boxes.push_back(res.box);
    tr.confidences.push_back(res.confidence);
    tr.lost_flags.push_back(res.lost ? 1 : 0);
  }
  return tr;
}

inline void write_trajectory_csv(const std::string& path,
                                 const Trajectory& tr) {
  std::ofstream f(path);
  check(f.good(), "cannot write trajectory: ", path);
  f << "frame_index,x,y,w,h,confidence,lost_flag\n";
  for (size_t i = 0; i < tr.boxes.size(); ++i) {
    const BoundingBox& b = tr.boxes[i];
    char line[192];
    std::snprintf(line, sizeof(line), "%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%d\n", i,
                  b.x1(), b.y1(), b.w, b.h, tr.confidences[i],
                  tr.lost_flags[i]);
    f << line;
  }
}

// ------------------------------------------------------------------
// Ablation driver
// ------------------------------------------------------------------

struct VariantSpec {
  std::string name;
  TrackerConfig config;
};

inline std::vector<VariantSpec> ablation_variants(const TrackerConfig& base) {
  std::vector<VariantSpec> out;
  out.push_back({"full", base});

  TrackerConfig ms = base;
  ms.multi_scale = true;
  out.push_back({"multi-scale", ms});

  TrackerConfig nc = base;
  nc.use_classifier = false;
  out.push_back({"no-classifier", nc});

  TrackerConfig gd = base;
  gd.optimizer = TrackerConfig::Optimizer::kGd;
  out.push_back({"gd", gd});

  TrackerConfig gdpp = base;
  gdpp.optimizer = TrackerConfig::Optimizer::kGdpp;
  out.push_back({"gd++", gdpp});

  TrackerConfig nohn = base;
  nohn.hard_negatives = false;
  out.push_back({"no-hn", nohn});
  return out;
}

struct AblationCell {
  double op50 = 0, op75 = 0, auc = 0;
  std::map<std::string, double> category_auc;
};

// Tracks every suite sequence `runs` times per variant with paired seeds
// and pools per-frame IoUs for OP/AUC. Per-category AUCs are pooled the
// same way.
template <typename T>
std::map<std::string, AblationCell> run_ablation(
    const std::vector<VariantSpec>& variants,
    const std::vector<SuiteEntry>& suite, const TinyBackbone<T>& backbone,
    IouNet<T>& iou, int runs = 5, uint64_t seed_base = 1) {
  std::map<std::string, AblationCell> table;
  // Render sequences once.
  std::vector<Sequence> sequences;
  sequences.reserve(suite.size());
  for (const auto& e : suite) sequences.push_back(synth_sequence(e.spec, e.seed));

  for (const auto& variant : variants) {
    Tracker<T> tracker(variant.config, backbone, iou);
    std::vector<double> all_ious;
    std::map<std::string, std::vector<double>> per_category;
    for (size_t si = 0; si < suite.size(); ++si) {
      for (int run = 0; run < runs; ++run) {
        // Paired seeds: identical across variants for a given (seq, run).
        const uint64_t seed = seed_base + 131 * si + run;
        Trajectory tr;
        try {
          tr = track_sequence(tracker, sequences[si], seed);
        } catch (const Error&) {
          // A failed sequence is scored with whatever was produced.
        }
        const size_t n = tr.boxes.size();
        for (size_t f = 0; f < sequences[si].ground_truth.size(); ++f) {
          const double iou_v =
              f < n ? geometric_iou(sequences[si].ground_truth[f],
                                    tr.boxes[f])
                    : 0.0;
          all_ious.push_back(iou_v);
          per_category[suite[si].category].push_back(iou_v);
        }
      }
    }
    AblationCell cell;
    OpCurve curve = op_curve(all_ious);
    cell.auc = auc(curve);
    cell.op50 = curve.op[50];
    cell.op75 = curve.op[75];
    for (auto& [cat, ious] : per_category) {
      cell.category_auc[cat] = auc(op_curve(ious));
    }
    table[variant.name] = cell;
  }
  return table;
}

inline void write_ablation_csv(const std::string& path,
                               const std::map<std::string, AblationCell>& t) {
  std::ofstream f(path);
  check(f.good(), "cannot write ablation table: ", path);
  std::vector<std::string> cats;
  if (!t.empty()) {
    for (const auto& [c, v] : t.begin()->second.category_auc) {
      cats.push_back(c);
    }
  }
  f << "variant,op50,op75,auc";
  for (const auto& c : cats) f << ",auc_" << c;
  f << "\n";
  for (const auto& [name, cell] : t) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s,%.2f,%.2f,%.2f", name.c_str(),
                  cell.op50, cell.op75, cell.auc);
    f << buf;
    for (const auto& c : cats) {
      std::snprintf(buf, sizeof(buf), ",%.2f", cell.category_auc.at(c));
      f << buf;
    }
    f << "\n";
  }
}

// ------------------------------------------------------------------
// Optimizer convergence comparison
// ------------------------------------------------------------------

// A seeded first-frame learning problem: the initial sample memory and
// fresh classifier weights, before any optimization.
template <typename T>
struct FirstFrameProblem {
  SampleMemory<T> memory{50, 0.01};
  ClassifierWeights<T> init;
};

template <typename T>
FirstFrameProblem<T> make_first_frame_problem(const TinyBackbone<T>& backbone,
                                              uint64_t seed) {
  SynthSpec spec;
  spec.name = "conv";
  spec.n_frames = 1;
  spec.distractors = seed % 2 ? 1 : 0;
  spec.target_w = 36 + (seed % 5) * 5;
  spec.target_h = 52 - (seed % 5) * 4;
  spec.speed = 0;
  Sequence seq = synth_sequence(spec, seed);

  FirstFrameProblem<T> out;
  Rng rng(seed * 7 + 1);
  Patch patch = extract_patch(seq.frames[0], seq.ground_truth[0], 5.0, 288);
  const BoundingBox gt_patch = patch.transform.to_patch(seq.ground_truth[0]);
  auto augmented = augment_first_frame(patch.image, 30, rng);
  std::vector<std::pair<Tensor<T>, Tensor<T>>> samples;
  for (const auto& aug : augmented) {
    BackboneFeatures<T> f = backbone.extract(aug.patch);
    const int h = f.block4.shape()[0], w = f.block4.shape()[1];
    const int stride = TinyBackbone<T>::kBlock4Stride;
    const double off = 0.5 * (stride - 1);
    LabelConfig lc;
    lc.sigma = std::max(h, w) / 12.0;
    Tensor<T> label = make_label<T>(
        (gt_patch.cx + aug.shift_x - off) / stride,
        (gt_patch.cy + aug.shift_y - off) / stride, lc, h, w);
    samples.emplace_back(std::move(f.block4), std::move(label));
  }
  out.memory.add_initial(std::move(samples));
  out.init = ClassifierWeights<T>(rng, TinyBackbone<T>::kBlock4Channels);
  return out;
}

struct ConvergenceRun {
  std::string method;
  uint64_t problem_seed;
  LossTrace trace;  // call counts rebased to zero
};

// Runs GN-CG, GD, and GD++ from identical initial weights on one problem.
// GD shares the GN-CG BackProp budget; GD++ gets five times as much.
template <typename T>
std::vector<ConvergenceRun> convergence_compare(
    const TinyBackbone<T>& backbone, uint64_t seed, double gd_lr,
    double gd_momentum) {
  FirstFrameProblem<T> ffp = make_first_frame_problem<T>(backbone, seed);
  const int gncg_budget = 6 * (1 + 2 * 10);

  auto rebased = [](LossTrace t) {
    const uint64_t base = t.empty() ? 0 : t.front().backprop_calls;
    for (auto& p : t) p.backprop_calls -= base;
    return t;
  };

  std::vector<ConvergenceRun> out;
  {
    ClassifierWeights<T> w = ffp.init;
    ResidualProblem<T> problem = make_classifier_problem(ffp.memory, w, true);
    out.push_back({"gncg", seed, rebased(gauss_newton_cg(problem, {6, 10}))});
  }
  {
    ClassifierWeights<T> w = ffp.init;
    ResidualProblem<T> problem = make_classifier_problem(ffp.memory, w, true);
    out.push_back(
        {"gd", seed,
         rebased(gradient_descent(problem, gncg_budget,
                                  static_cast<T>(gd_lr),
                                  static_cast<T>(gd_momentum)))});
  }
  {
    ClassifierWeights<T> w = ffp.init;
    ResidualProblem<T> problem = make_classifier_problem(ffp.memory, w, true);
    out.push_back(
        {"gd++", seed,
         rebased(gradient_descent(problem, 5 * gncg_budget,
                                  static_cast<T>(gd_lr),
                                  static_cast<T>(gd_momentum)))});
  }
  return out;
}

inline void write_convergence_csv(const std::string& path,
                                  const std::vector<ConvergenceRun>& runs,
                                  double gd_lr, double gd_momentum) {
  std::ofstream f(path);
  check(f.good(), "cannot write convergence CSV: ", path);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "# gd_lr=%.6g gd_momentum=%.6g\n", gd_lr,
                gd_momentum);
  f << buf << "method,problem_seed,backprop_calls,loss\n";
  for (const auto& r : runs) {
    for (const auto& p : r.trace) {
      std::snprintf(buf, sizeof(buf), "%s,%llu,%llu,%.9g\n",
                    r.method.c_str(),
                    static_cast<unsigned long long>(r.problem_seed),
                    static_cast<unsigned long long>(p.backprop_calls),
                    p.loss);
      f << buf;
    }
  }
}

inline double final_loss(const LossTrace& t) { return t.back().loss; }

inline double median(std::vector<double> v) {
  check(!v.empty(), "median of empty list");
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Grid search for the gradient-descent step/momentum on a few seeded
// problems, judged by median final loss at the shared budget.
template <typename T>
std::pair<double, double> tune_gd(const TinyBackbone<T>& backbone,
                                  int problems, uint64_t seed_base,
                                  int budget = 126) {
  std::vector<FirstFrameProblem<T>> ffps;
  for (int i = 0; i < problems; ++i) {
    ffps.push_back(make_first_frame_problem<T>(backbone, seed_base + i));
  }
  double best_lr = 1e-4, best_mom = 0.9, best = 1e300;
  for (double lr : {3e-6, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3}) {
    for (double mom : {0.0, 0.5, 0.9, 0.95}) {
      std::vector<double> finals;
      bool ok = true;
      for (auto& ffp : ffps) {
        ClassifierWeights<T> w = ffp.init;
        ResidualProblem<T> problem =
            make_classifier_problem(ffp.memory, w, true);
        try {
          finals.push_back(final_loss(gradient_descent(
              problem, budget, static_cast<T>(lr), static_cast<T>(mom))));
        } catch (const Error&) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      const double m = median(finals);
      if (m < best) {
        best = m;
        best_lr = lr;
        best_mom = mom;
      }
    }
  }
  return {best_lr, best_mom};
}

}  // namespace atom

#endif  // ATOM_BENCH_HPP_
