#pragma once

#include <span>
#include <string>
#include <vector>

#include "spnet/annotations.hpp"

namespace spnet {

struct MatchPair {
  int detection;
  int truth;
  double iou;
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  std::vector<int> unmatched_detections;
  std::vector<int> unmatched_truths;
};

/// IoU of every detection (rows) against every truth (columns).
std::vector<std::vector<double>> iou_matrix(std::span<const Detection> dets,
                                            std::span<const Annotation> truths);

/// Greedy one-to-one matching: detections in descending confidence (ties by
/// index) each take the still-unmatched truth of highest IoU, if that IoU ≥ threshold.
MatchResult match(std::span<const Detection> dets, std::span<const Annotation> truths,
                  double iou_threshold);
MatchResult match(std::span<const Detection> dets, const std::vector<std::vector<double>>& ious,
                  std::size_t n_truths, double iou_threshold);

struct RingPair {
  double predicted;
  double truth;
};

/// Fraction of ground-truth objects whose matched prediction has |r̂ − r| ≤ window.
/// Throws Undefined when n_truths == 0.
double ring_accuracy(std::span<const RingPair> matched, std::size_t n_truths,
                     double window = 0.5);

/// IoU thresholds 0.50, 0.55, …, 0.95.
std::vector<double> coco_thresholds();

/// All-point interpolated AP at one IoU threshold over every frame, with
/// detections ranked by confidence (ties by frame, then detection index).
/// Throws Undefined when there are no ground-truth objects.
double average_precision(const std::vector<std::vector<Detection>>& dets,
                         const std::vector<std::vector<Annotation>>& truths, double iou_threshold);

/// AP averaged over the IoU thresholds.
double mean_average_precision(const std::vector<std::vector<Detection>>& dets,
                              const std::vector<std::vector<Annotation>>& truths,
                              std::span<const double> thresholds);
double mean_average_precision(const std::vector<std::vector<Detection>>& dets,
                              const std::vector<std::vector<Annotation>>& truths);

/// Expected ring-count accuracy of an annotator whose counts scatter normally
/// with standard deviation sigma: the mass within ±0.5 of the mean.
double volunteer_baseline(double sigma);

inline constexpr double kVolunteerSigma = 1.7;

struct EvalReport {
  std::size_t frames = 0;
  std::size_t truths = 0;
  std::size_t detections = 0;
  std::size_t true_positives = 0;  // at IoU 0.5
  double precision = 0.0;
  double recall = 0.0;
  double mean_iou = 0.0;  // over matched pairs
  double ring_accuracy = 0.0;
  double map = 0.0;
  double volunteer_sigma = kVolunteerSigma;
  double volunteer_baseline = 0.0;
};

/// Full metric set; ring accuracy uses pairs matched at IoU ≥ 0.5.
/// Throws Undefined when there are no ground-truth objects.
EvalReport evaluate(const std::vector<std::vector<Detection>>& dets,
                    const std::vector<std::vector<Annotation>>& truths,
                    double volunteer_sigma = kVolunteerSigma);

/// `metric,value` CSV.
std::string report_csv(const EvalReport& r);
/// Human-readable summary block.
std::string report_summary(const EvalReport& r);

}  // namespace spnet
