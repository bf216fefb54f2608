#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "moonnet/augment.hpp"

namespace moonnet {

double iou(const BBox& a, const BBox& b);

inline constexpr int kMatchedNone = -1;  // false positive
inline constexpr int kIgnored = -2;      // matched a difficult GT; neither TP nor FP

/// Greedy matching of one image's detections. Predictions are visited in
/// descending score order (stable, so ties keep input order); each takes the
/// unmatched same-class GT with the highest IoU >= iou_thresh (lowest index on
/// equal IoU). A prediction with no such GT but IoU >= iou_thresh with a
/// difficult GT is ignored. Difficult GTs are never TP targets.
struct Matching {
  std::vector<int> gt_for_pred;  // indexed like the input predictions
  std::vector<bool> gt_matched;  // indexed like the input GTs

  int true_positives() const;
  int false_positives() const;
};

Matching match_detections(std::span<const BBox> preds, std::span<const BBox> gts,
                          double iou_thresh);

struct ImageDetections {
  std::vector<BBox> gts;
  std::vector<BBox> preds;
};

struct EvalInput {
  std::vector<ImageDetections> images;
  /// 0 means "infer as 1 + largest class id seen".
  int num_classes = 0;

  int resolved_classes() const;
};

/// One class's precision-recall curve after the monotone precision envelope.
struct PRCurve {
  std::vector<double> recall;
  std::vector<double> precision;
};

struct ApResult {
  std::vector<std::optional<double>> per_class;  // nullopt: class has no GT
  double mean = 0.0;
  int classes_evaluated = 0;
};

PRCurve pr_curve(const EvalInput& input, int class_id, double iou_thresh);
/// All-point interpolated AP per class and its mean over classes with >= 1 GT.
ApResult average_precision(const EvalInput& input, double iou_thresh);

inline constexpr std::array<double, 10> kCocoThresholds = {0.50, 0.55, 0.60, 0.65, 0.70,
                                                           0.75, 0.80, 0.85, 0.90, 0.95};

struct CocoAp {
  double ap = 0.0;
  bool evaluated = false;  // false when no class has a GT
  std::array<double, 10> per_threshold{};
};

CocoAp coco_ap(const EvalInput& input);

struct EvalSummary {
  double ap50 = 0.0;
  double ap75 = 0.0;
  double ap = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
  int num_gt = 0;
  int num_preds = 0;  // predictions at or above the confidence threshold, not ignored
  int classes_evaluated = 0;
};

/// AP50, AP75, AP@[.50:.95] and micro-averaged recall / precision at IoU 0.5
/// over predictions scoring >= conf_threshold.
EvalSummary evaluate(const EvalInput& input, double conf_threshold = 0.5);

std::string format_summary_table(const EvalSummary& s);
/// key=value lines: ap50, ap75, ap, recall, precision, then counts.
std::string format_summary_keyvalue(const EvalSummary& s);

struct BoxAreaStats {
  double mean_px2 = 0.0;
  double side_px = 0.0;
  std::size_t count = 0;
};

/// Mean box area and the side of the square with that area. Throws
/// std::invalid_argument for an empty input.
BoxAreaStats mean_box_area(std::span<const BBox> boxes);

}  // namespace moonnet
