#pragma once

// Brute-force detection metrics for tiny fixtures. Every prefix of the ranked
// prediction list is re-matched from scratch, and interpolated precision at a
// recall level is the maximum precision over all prefixes reaching it.

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "moonnet/metrics.hpp"

namespace reference {

using moonnet::BBox;

inline double box_iou(const BBox& a, const BBox& b) {
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  if (inter == 0.0) return 0.0;
  const double area_a = (a.x2 - a.x1) * (a.y2 - a.y1);
  const double area_b = (b.x2 - b.x1) * (b.y2 - b.y1);
  return inter / (area_a + area_b - inter);
}

struct Ranked {
  std::size_t image;
  BBox box;
};

// Outcome of the k-th ranked prediction given all earlier ones: +1 TP, 0 FP,
// -1 ignored.
inline std::vector<int> outcomes(const std::vector<Ranked>& ranked,
                                 const std::vector<std::vector<BBox>>& gts, double thr) {
  std::vector<int> out;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    std::vector<std::vector<bool>> taken(gts.size());
    for (std::size_t i = 0; i < gts.size(); ++i) taken[i].assign(gts[i].size(), false);
    int last = 0;
    for (std::size_t j = 0; j <= k; ++j) {
      const auto& p = ranked[j];
      const auto& g = gts[p.image];
      int best = -1;
      bool difficult_hit = false;
      for (std::size_t t = 0; t < g.size(); ++t) {
        if (g[t].class_id != p.box.class_id) continue;
        const double o = box_iou(p.box, g[t]);
        if (o < thr) continue;
        if (g[t].difficult) {
          difficult_hit = true;
        } else if (!taken[p.image][t] && (best < 0 || o > box_iou(p.box, g[best]))) {
          best = static_cast<int>(t);
        }
      }
      if (best >= 0) {
        taken[p.image][best] = true;
        last = 1;
      } else {
        last = difficult_hit ? -1 : 0;
      }
    }
    out.push_back(last);
  }
  return out;
}

struct ClassAp {
  bool has_gt = false;
  double ap = 0.0;
};

inline ClassAp class_ap(const moonnet::EvalInput& in, int cls, double thr) {
  std::vector<std::vector<BBox>> gts;
  int npos = 0;
  for (const auto& img : in.images) {
    gts.push_back(img.gts);
    for (const auto& g : img.gts) npos += (g.class_id == cls && !g.difficult) ? 1 : 0;
  }
  if (npos == 0) return {};

  // Ranking: score descending; equal scores keep (image, position) order.
  std::vector<Ranked> ranked;
  for (std::size_t i = 0; i < in.images.size(); ++i) {
    std::vector<BBox> preds;
    for (const auto& p : in.images[i].preds) {
      if (p.class_id == cls) preds.push_back(p);
    }
    std::stable_sort(preds.begin(), preds.end(), [](const BBox& a, const BBox& b) {
      return a.score.value_or(1.0) > b.score.value_or(1.0);
    });
    for (const auto& p : preds) ranked.push_back({i, p});
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    return a.box.score.value_or(1.0) > b.box.score.value_or(1.0);
  });

  const auto res = outcomes(ranked, gts, thr);
  std::vector<double> recall, precision;
  int tp = 0, fp = 0;
  for (int r : res) {
    if (r < 0) continue;
    tp += r;
    fp += 1 - r;
    recall.push_back(static_cast<double>(tp) / npos);
    precision.push_back(static_cast<double>(tp) / (tp + fp));
  }
  double ap = 0.0, prev = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    if (recall[i] == prev) continue;
    double best = 0.0;
    for (std::size_t j = 0; j < recall.size(); ++j) {
      if (recall[j] >= recall[i]) best = std::max(best, precision[j]);
    }
    ap += (recall[i] - prev) * best;
    prev = recall[i];
  }
  return {true, ap};
}

inline double mean_ap(const moonnet::EvalInput& in, double thr) {
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < in.resolved_classes(); ++c) {
    const auto r = class_ap(in, c, thr);
    if (!r.has_gt) continue;
    sum += r.ap;
    ++n;
  }
  return n > 0 ? sum / n : 0.0;
}

inline double coco_ap(const moonnet::EvalInput& in) {
  double sum = 0.0;
  for (int i = 0; i < 10; ++i) sum += mean_ap(in, (50 + 5 * i) / 100.0);
  return sum / 10;
}

/// Random fixture: a few images, <= 5 predictions and <= 4 GTs in total,
/// small integer boxes so IoU ties and threshold edge cases occur.
inline moonnet::EvalInput random_fixture(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> coord(0, 8), extent(1, 5), cls(0, 1), count_p(0, 5),
      count_g(0, 4), images(1, 3), score_idx(0, 3), coin(0, 9);
  const double scores[] = {0.2, 0.5, 0.7, 0.9};
  auto box = [&] {
    BBox b;
    b.x1 = coord(rng);
    b.y1 = coord(rng);
    b.x2 = b.x1 + extent(rng);
    b.y2 = b.y1 + extent(rng);
    b.class_id = cls(rng);
    return b;
  };
  moonnet::EvalInput in;
  in.num_classes = 2;
  in.images.resize(images(rng));
  const int np = count_p(rng), ng = count_g(rng);
  std::uniform_int_distribution<std::size_t> pick(0, in.images.size() - 1);
  for (int i = 0; i < ng; ++i) {
    BBox b = box();
    b.difficult = coin(rng) == 0;
    in.images[pick(rng)].gts.push_back(b);
  }
  for (int i = 0; i < np; ++i) {
    BBox b = box();
    // Half the predictions are jittered copies of a GT so matches happen.
    auto& img = in.images[pick(rng)];
    if (!img.gts.empty() && coin(rng) < 5) {
      b = img.gts[std::uniform_int_distribution<std::size_t>(0, img.gts.size() - 1)(rng)];
      b.difficult = false;
      b.x2 += coin(rng) % 2;
    }
    b.score = scores[score_idx(rng)];
    img.preds.push_back(b);
  }
  return in;
}

}  // namespace reference
