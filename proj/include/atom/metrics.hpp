#ifndef ATOM_METRICS_HPP_
#define ATOM_METRICS_HPP_

#include <vector>

#include "atom/box.hpp"

namespace atom {

// Overlap-precision curve: OP[t] is the percentage of frames whose IoU
// exceeds thresholds[t]. Sampled at 101 thresholds 0, 0.01, ..., 1.
struct OpCurve {
  std::vector<double> thresholds;
  std::vector<double> op;  // percent
};

OpCurve op_curve(const std::vector<double>& ious);

// Area under the OP curve by trapezoidal integration, in percent.
double auc(const OpCurve& curve);

// Fraction of frames (percent) with center error <= threshold pixels.
double precision_at(const std::vector<double>& center_errors,
                    double threshold_px = 20.0);

struct EvalReport {
  std::vector<double> ious;
  std::vector<double> center_errors;
  OpCurve curve;
  double auc_percent = 0;
  double precision20 = 0;
  double mean_iou = 0;
  double seconds = 0;
};

EvalReport evaluate_trajectory(const std::vector<BoundingBox>& ground_truth,
                               const std::vector<BoundingBox>& predictions);

}  // namespace atom

#endif  // ATOM_METRICS_HPP_
