#include "atom/metrics.hpp"

#include <cmath>

#include "atom/common.hpp"

namespace atom {

OpCurve op_curve(const std::vector<double>& ious) {
  check(!ious.empty(), "op_curve: empty IoU list");
  for (double v : ious) {
    check(v >= 0.0 && v <= 1.0, "op_curve: IoU out of [0, 1]: ", v);
  }
  OpCurve c;
  c.thresholds.resize(101);
  c.op.resize(101);
  for (int t = 0; t <= 100; ++t) {
    const double thr = t / 100.0;
    c.thresholds[static_cast<size_t>(t)] = thr;
    int count = 0;
    for (double v : ious) {
      if (v > thr) ++count;
    }
    c.op[static_cast<size_t>(t)] =
        100.0 * count / static_cast<double>(ious.size());
  }
  return c;
}

double auc(const OpCurve& curve) {
  check(curve.thresholds.size() == curve.op.size() && curve.op.size() >= 2,
        "auc: malformed curve");
  double area = 0;
  for (size_t i = 1; i < curve.op.size(); ++i) {
    const double dt = curve.thresholds[i] - curve.thresholds[i - 1];
    area += 0.5 * (curve.op[i] + curve.op[i - 1]) * dt;
  }
  return area;
}

double precision_at(const std::vector<double>& center_errors,
                    double threshold_px) {
  check(!center_errors.empty(), "precision_at: empty error list");
  int count = 0;
  for (double e : center_errors) {
    check(e >= 0, "precision_at: negative center error ", e);
    if (e <= threshold_px) ++count;
  }
  return 100.0 * count / static_cast<double>(center_errors.size());
}

EvalReport evaluate_trajectory(const std::vector<BoundingBox>& ground_truth,
                               const std::vector<BoundingBox>& predictions) {
  check(ground_truth.size() == predictions.size(),
        "evaluate_trajectory: ", ground_truth.size(), " ground-truth vs ",
        predictions.size(), " predictions");
  EvalReport r;
  for (size_t i = 0; i < ground_truth.size(); ++i) {
    r.ious.push_back(geometric_iou(ground_truth[i], predictions[i]));
    r.center_errors.push_back(std::hypot(
        ground_truth[i].cx - predictions[i].cx,
        ground_truth[i].cy - predictions[i].cy));
  }
  r.curve = op_curve(r.ious);
  r.auc_percent = auc(r.curve);
  r.precision20 = precision_at(r.center_errors);
  double s = 0;
  for (double v : r.ious) s += v;
  r.mean_iou = s / static_cast<double>(r.ious.size());
  return r;
}

}  // namespace atom
