#include "spnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "spnet/errors.hpp"
#include "spnet/geometry.hpp"

namespace spnet {

namespace {

struct Ranked {
  double confidence;
  std::size_t frame;
  std::size_t index;
};

bool ranks_before(const Ranked& l, const Ranked& r) {
  if (l.confidence != r.confidence) return l.confidence > r.confidence;
  if (l.frame != r.frame) return l.frame < r.frame;
  return l.index < r.index;
}

std::vector<int> confidence_order(std::span<const Detection> dets) {
  std::vector<int> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int l, int r) {
    return dets[l].confidence > dets[r].confidence;
  });
  return order;
}

std::size_t count_truths(const std::vector<std::vector<Annotation>>& truths) {
  std::size_t n = 0;
  for (const auto& t : truths) n += t.size();
  return n;
}

void check_frames(const std::vector<std::vector<Detection>>& dets,
                  const std::vector<std::vector<Annotation>>& truths) {
  if (dets.size() != truths.size()) {
    throw ShapeError("detections cover " + std::to_string(dets.size()) + " frames, truths " +
                     std::to_string(truths.size()));
  }
}

}  // namespace

std::vector<std::vector<double>> iou_matrix(std::span<const Detection> dets,
                                            std::span<const Annotation> truths) {
  std::vector<std::vector<double>> m(dets.size(), std::vector<double>(truths.size(), 0.0));
  for (std::size_t i = 0; i < dets.size(); ++i) {
    for (std::size_t j = 0; j < truths.size(); ++j) {
      m[i][j] = ellipse_iou(dets[i].ellipse, truths[j].ellipse);
    }
  }
  return m;
}

MatchResult match(std::span<const Detection> dets, const std::vector<std::vector<double>>& ious,
                  std::size_t n_truths, double iou_threshold) {
  MatchResult out;
  std::vector<bool> taken(n_truths, false);
  for (int d : confidence_order(dets)) {
    int best = -1;
    double best_iou = -1.0;
    for (std::size_t t = 0; t < n_truths; ++t) {
      if (taken[t]) continue;
      const double iou = ious[static_cast<std::size_t>(d)][t];
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(t);
      }
    }
    if (best >= 0 && best_iou >= iou_threshold) {
      taken[static_cast<std::size_t>(best)] = true;
      out.pairs.push_back({d, best, best_iou});
    } else {
      out.unmatched_detections.push_back(d);
    }
  }
  for (std::size_t t = 0; t < n_truths; ++t) {
    if (!taken[t]) out.unmatched_truths.push_back(static_cast<int>(t));
  }
  std::sort(out.unmatched_detections.begin(), out.unmatched_detections.end());
  return out;
}

MatchResult match(std::span<const Detection> dets, std::span<const Annotation> truths,
                  double iou_threshold) {
  return match(dets, iou_matrix(dets, truths), truths.size(), iou_threshold);
}

double ring_accuracy(std::span<const RingPair> matched, std::size_t n_truths, double window) {
  if (n_truths == 0) throw Undefined("ring accuracy needs at least one ground-truth object");
  std::size_t correct = 0;
  for (const RingPair& p : matched) {
    if (std::abs(p.predicted - p.truth) <= window) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n_truths);
}

std::vector<double> coco_thresholds() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) t.push_back(0.5 + 0.05 * k);
  return t;
}

namespace {

// AP from precomputed per-frame IoU matrices.
double average_precision_cached(const std::vector<std::vector<Detection>>& dets,
                                const std::vector<std::vector<std::vector<double>>>& ious,
                                const std::vector<std::vector<Annotation>>& truths,
                                std::size_t n_truths, double iou_threshold) {
  std::vector<Ranked> ranked;
  std::vector<std::vector<bool>> is_tp(dets.size());
  for (std::size_t f = 0; f < dets.size(); ++f) {
    const MatchResult m = match(dets[f], ious[f], truths[f].size(), iou_threshold);
    is_tp[f].assign(dets[f].size(), false);
    for (const MatchPair& p : m.pairs) is_tp[f][static_cast<std::size_t>(p.detection)] = true;
    for (std::size_t i = 0; i < dets[f].size(); ++i) ranked.push_back({dets[f][i].confidence, f, i});
  }
  std::sort(ranked.begin(), ranked.end(), ranks_before);

  std::vector<double> precision;
  std::vector<double> recall;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    if (is_tp[ranked[k].frame][ranked[k].index]) ++tp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_truths));
  }
  for (std::size_t k = precision.size(); k-- > 1;) {
    precision[k - 1] = std::max(precision[k - 1], precision[k]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < precision.size(); ++k) {
    ap += (recall[k] - prev_recall) * precision[k];
    prev_recall = recall[k];
  }
  return ap;
}

std::vector<std::vector<std::vector<double>>> all_ious(
    const std::vector<std::vector<Detection>>& dets,
    const std::vector<std::vector<Annotation>>& truths) {
  std::vector<std::vector<std::vector<double>>> out;
  out.reserve(dets.size());
  for (std::size_t f = 0; f < dets.size(); ++f) out.push_back(iou_matrix(dets[f], truths[f]));
  return out;
}

}  // namespace

double average_precision(const std::vector<std::vector<Detection>>& dets,
                         const std::vector<std::vector<Annotation>>& truths,
                         double iou_threshold) {
  check_frames(dets, truths);
  const std::size_t n = count_truths(truths);
  if (n == 0) throw Undefined("average precision needs at least one ground-truth object");
  return average_precision_cached(dets, all_ious(dets, truths), truths, n, iou_threshold);
}

double mean_average_precision(const std::vector<std::vector<Detection>>& dets,
                              const std::vector<std::vector<Annotation>>& truths,
                              std::span<const double> thresholds) {
  check_frames(dets, truths);
  const std::size_t n = count_truths(truths);
  if (n == 0) throw Undefined("mAP needs at least one ground-truth object");
  if (thresholds.empty()) throw Undefined("mAP needs at least one IoU threshold");
  const auto ious = all_ious(dets, truths);
  double sum = 0.0;
  for (double t : thresholds) sum += average_precision_cached(dets, ious, truths, n, t);
  return sum / static_cast<double>(thresholds.size());
}

double mean_average_precision(const std::vector<std::vector<Detection>>& dets,
                              const std::vector<std::vector<Annotation>>& truths) {
  const auto t = coco_thresholds();
  return mean_average_precision(dets, truths, t);
}

double volunteer_baseline(double sigma) {
  if (sigma < 0.0) throw ConfigError("sigma must be >= 0");
  if (sigma == 0.0) return 1.0;
  return std::erf(0.5 / (sigma * std::sqrt(2.0)));
}

EvalReport evaluate(const std::vector<std::vector<Detection>>& dets,
                    const std::vector<std::vector<Annotation>>& truths, double volunteer_sigma) {
  check_frames(dets, truths);
  EvalReport r;
  r.frames = dets.size();
  r.truths = count_truths(truths);
  if (r.truths == 0) throw Undefined("evaluation needs at least one ground-truth object");
  const auto ious = all_ious(dets, truths);
  std::vector<RingPair> rings;
  double iou_sum = 0.0;
  for (std::size_t f = 0; f < dets.size(); ++f) {
    r.detections += dets[f].size();
    const MatchResult m = match(dets[f], ious[f], truths[f].size(), 0.5);
    for (const MatchPair& p : m.pairs) {
      rings.push_back({dets[f][static_cast<std::size_t>(p.detection)].rings,
                       truths[f][static_cast<std::size_t>(p.truth)].rings});
      iou_sum += p.iou;
    }
  }
  r.true_positives = rings.size();
  r.precision = r.detections ? static_cast<double>(r.true_positives) / r.detections : 0.0;
  r.recall = static_cast<double>(r.true_positives) / r.truths;
  r.mean_iou = rings.empty() ? 0.0 : iou_sum / static_cast<double>(rings.size());
  r.ring_accuracy = ring_accuracy(rings, r.truths);
  const auto thresholds = coco_thresholds();
  double sum = 0.0;
  for (double t : thresholds) sum += average_precision_cached(dets, ious, truths, r.truths, t);
  r.map = sum / static_cast<double>(thresholds.size());
  r.volunteer_sigma = volunteer_sigma;
  r.volunteer_baseline = volunteer_baseline(volunteer_sigma);
  return r;
}

std::string report_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "metric,value\n"
      << "frames," << r.frames << '\n'
      << "truths," << r.truths << '\n'
      << "detections," << r.detections << '\n'
      << "true_positives," << r.true_positives << '\n'
      << "precision," << format_fixed6(r.precision) << '\n'
      << "recall," << format_fixed6(r.recall) << '\n'
      << "mean_iou," << format_fixed6(r.mean_iou) << '\n'
      << "ring_accuracy," << format_fixed6(r.ring_accuracy) << '\n'
      << "map," << format_fixed6(r.map) << '\n'
      << "volunteer_sigma," << format_fixed6(r.volunteer_sigma) << '\n'
      << "volunteer_baseline," << format_fixed6(r.volunteer_baseline) << '\n';
  return out.str();
}

std::string report_summary(const EvalReport& r) {
  char buf[1024];
  std::snprintf(buf, sizeof buf,
                "frames              %zu\n"
                "ground truth        %zu\n"
                "detections          %zu\n"
                "ring accuracy       %.4f  (|dr| <= 0.5, IoU >= 0.5)\n"
                "precision @0.5      %.4f\n"
                "recall @0.5         %.4f\n"
                "mean matched IoU    %.4f\n"
                "mAP @[.50:.95]      %.4f\n"
                "volunteer baseline  %.4f  (sigma = %.2f rings)\n",
                r.frames, r.truths, r.detections, r.ring_accuracy, r.precision, r.recall,
                r.mean_iou, r.map, r.volunteer_baseline, r.volunteer_sigma);
  return buf;
}

}  // namespace spnet
