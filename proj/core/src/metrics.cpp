#include "moonnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace moonnet {

namespace {

double score_of(const BBox& b) { return b.score.value_or(1.0); }

std::vector<std::size_t> score_order(std::span<const BBox> preds) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return score_of(preds[a]) > score_of(preds[b]);
  });
  return order;
}

struct Scored {
  double score;
  int outcome;  // 1 TP, 0 FP
};

}  // namespace

double iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

int Matching::true_positives() const {
  return static_cast<int>(std::count_if(gt_for_pred.begin(), gt_for_pred.end(),
                                        [](int g) { return g >= 0; }));
}

int Matching::false_positives() const {
  return static_cast<int>(std::count(gt_for_pred.begin(), gt_for_pred.end(), kMatchedNone));
}

Matching match_detections(std::span<const BBox> preds, std::span<const BBox> gts,
                          double iou_thresh) {
  Matching m{std::vector<int>(preds.size(), kMatchedNone), std::vector<bool>(gts.size(), false)};
  for (std::size_t p : score_order(preds)) {
    int best = -1;
    double best_iou = -1.0;
    bool hits_difficult = false;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gts[g].class_id != preds[p].class_id) continue;
      const double o = iou(preds[p], gts[g]);
      if (o < iou_thresh) continue;
      if (gts[g].difficult) {
        hits_difficult = true;
        continue;
      }
      if (!m.gt_matched[g] && o > best_iou) {
        best = static_cast<int>(g);
        best_iou = o;
      }
    }
    if (best >= 0) {
      m.gt_for_pred[p] = best;
      m.gt_matched[best] = true;
    } else if (hits_difficult) {
      m.gt_for_pred[p] = kIgnored;
    }
  }
  return m;
}

int EvalInput::resolved_classes() const {
  if (num_classes > 0) return num_classes;
  int top = -1;
  for (const auto& img : images) {
    for (const auto& b : img.gts) top = std::max(top, b.class_id);
    for (const auto& b : img.preds) top = std::max(top, b.class_id);
  }
  return top + 1;
}

namespace {

// Scored outcomes for one class over all images (image order, then descending
// score within an image), plus the number of non-difficult GTs.
std::pair<std::vector<Scored>, int> class_outcomes(const EvalInput& input, int class_id,
                                                   double iou_thresh) {
  std::vector<Scored> records;
  int npos = 0;
  for (const auto& img : input.images) {
    std::vector<BBox> gts;
    std::vector<BBox> preds;
    for (const auto& b : img.gts) {
      if (b.class_id == class_id) {
        gts.push_back(b);
        if (!b.difficult) ++npos;
      }
    }
    for (const auto& b : img.preds) {
      if (b.class_id == class_id) preds.push_back(b);
    }
    const Matching m = match_detections(preds, gts, iou_thresh);
    for (std::size_t p : score_order(preds)) {
      if (m.gt_for_pred[p] == kIgnored) continue;
      records.push_back({score_of(preds[p]), m.gt_for_pred[p] >= 0 ? 1 : 0});
    }
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const Scored& a, const Scored& b) { return a.score > b.score; });
  return {records, npos};
}

}  // namespace

namespace {

PRCurve curve_from(const std::vector<Scored>& records, int npos) {
  PRCurve c;
  if (npos == 0) return c;
  int tp = 0;
  int fp = 0;
  for (const Scored& r : records) {
    tp += r.outcome;
    fp += 1 - r.outcome;
    c.recall.push_back(static_cast<double>(tp) / npos);
    c.precision.push_back(static_cast<double>(tp) / (tp + fp));
  }
  for (std::size_t i = c.precision.size(); i-- > 1;) {
    c.precision[i - 1] = std::max(c.precision[i - 1], c.precision[i]);
  }
  return c;
}

}  // namespace

PRCurve pr_curve(const EvalInput& input, int class_id, double iou_thresh) {
  auto [records, npos] = class_outcomes(input, class_id, iou_thresh);
  return curve_from(records, npos);
}

ApResult average_precision(const EvalInput& input, double iou_thresh) {
  const int classes = input.resolved_classes();
  ApResult r;
  r.per_class.resize(std::max(classes, 0));
  double sum = 0.0;
  for (int k = 0; k < classes; ++k) {
    auto [records, npos] = class_outcomes(input, k, iou_thresh);
    if (npos == 0) continue;
    const PRCurve c = curve_from(records, npos);
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t i = 0; i < c.recall.size(); ++i) {
      ap += (c.recall[i] - prev_recall) * c.precision[i];
      prev_recall = c.recall[i];
    }
    r.per_class[k] = ap;
    sum += ap;
    ++r.classes_evaluated;
  }
  r.mean = r.classes_evaluated > 0 ? sum / r.classes_evaluated : 0.0;
  return r;
}

CocoAp coco_ap(const EvalInput& input) {
  CocoAp out;
  double sum = 0.0;
  for (std::size_t i = 0; i < kCocoThresholds.size(); ++i) {
    const ApResult r = average_precision(input, kCocoThresholds[i]);
    out.per_threshold[i] = r.mean;
    out.evaluated = out.evaluated || r.classes_evaluated > 0;
    sum += r.mean;
  }
  out.ap = out.evaluated ? sum / static_cast<double>(kCocoThresholds.size()) : 0.0;
  return out;
}

EvalSummary evaluate(const EvalInput& input, double conf_threshold) {
  EvalSummary s;
  const ApResult ap50 = average_precision(input, 0.5);
  s.ap50 = ap50.mean;
  s.classes_evaluated = ap50.classes_evaluated;
  s.ap75 = average_precision(input, 0.75).mean;
  s.ap = coco_ap(input).ap;

  for (const auto& img : input.images) {
    std::vector<BBox> kept;
    for (const auto& p : img.preds) {
      if (score_of(p) >= conf_threshold) kept.push_back(p);
    }
    const Matching m = match_detections(kept, img.gts, 0.5);
    s.true_positives += m.true_positives();
    s.false_positives += m.false_positives();
    for (const auto& g : img.gts) s.num_gt += g.difficult ? 0 : 1;
  }
  s.num_preds = s.true_positives + s.false_positives;
  s.false_negatives = s.num_gt - s.true_positives;
  s.recall = s.num_gt > 0 ? static_cast<double>(s.true_positives) / s.num_gt : 0.0;
  s.precision = s.num_preds > 0 ? static_cast<double>(s.true_positives) / s.num_preds : 0.0;
  return s;
}

std::string format_summary_table(const EvalSummary& s) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << std::left << std::setw(12) << "AP50" << std::setw(12) << "AP75" << std::setw(12) << "AP"
     << std::setw(12) << "Recall" << "Precision\n";
  os << std::setw(12) << s.ap50 << std::setw(12) << s.ap75 << std::setw(12) << s.ap
     << std::setw(12) << s.recall << s.precision << '\n';
  os << "TP " << s.true_positives << "  FP " << s.false_positives << "  FN " << s.false_negatives
     << "  classes evaluated " << s.classes_evaluated << '\n';
  return os.str();
}

std::string format_summary_keyvalue(const EvalSummary& s) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "ap50=" << s.ap50 << '\n'
     << "ap75=" << s.ap75 << '\n'
     << "ap=" << s.ap << '\n'
     << "recall=" << s.recall << '\n'
     << "precision=" << s.precision << '\n'
     << "true_positives=" << s.true_positives << '\n'
     << "false_positives=" << s.false_positives << '\n'
     << "false_negatives=" << s.false_negatives << '\n'
     << "classes_evaluated=" << s.classes_evaluated << '\n';
  return os.str();
}

BoxAreaStats mean_box_area(std::span<const BBox> boxes) {
  if (boxes.empty()) throw std::invalid_argument("mean_box_area: no boxes");
  double sum = 0.0;
  for (const auto& b : boxes) sum += b.area();
  const double mean = sum / static_cast<double>(boxes.size());
  return {mean, std::sqrt(mean), boxes.size()};
}

}  // namespace moonnet
