#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carguard/claim.hpp"
#include "carguard/geometry.hpp"

namespace carguard {

/// One detector output line: `image_id class confidence cx cy w h`.
struct Detection {
  std::string image_id;
  NormalizedBBox bbox;
  DamageClass damage_class = DamageClass::scratch;
  double confidence = 0.0;

  bool operator==(const Detection&) const = default;
};

/// One annotation line: `image_id class cx cy w h`.
struct GroundTruth {
  std::string image_id;
  NormalizedBBox bbox;
  DamageClass damage_class = DamageClass::scratch;

  bool operator==(const GroundTruth&) const = default;
};

struct MatchOptions {
  double iou_threshold = 0.5;
  /// Off by default: all damage classes are pooled into one.
  bool class_aware = false;
};

struct DetectionMatch {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  /// Per prediction, in input order: the ground-truth index it matched.
  std::vector<std::optional<std::size_t>> assignment;
};

/// Greedy matching on one image: predictions in descending confidence (ties in
/// input order) each take the unmatched ground truth of highest IoU at or
/// above the threshold. Throws Error(validation) on mixed image ids.
DetectionMatch match_detections(std::span<const Detection> preds,
                                std::span<const GroundTruth> gts, const MatchOptions& options);

struct PrPoint {
  double confidence_threshold = 0.0;
  /// tp / (tp + fp), or 1.0 when nothing was predicted.
  double precision = 1.0;
  /// tp / (tp + fn), or 1.0 when there is no ground truth.
  double recall = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  bool operator==(const PrPoint&) const = default;
};

/// Keeps predictions with confidence >= threshold, matches per image and sums
/// the counts over images before dividing.
PrPoint precision_recall_at(std::span<const Detection> preds, std::span<const GroundTruth> gts,
                            double confidence_threshold, const MatchOptions& options);

struct PrCurve {
  double iou_threshold = 0.5;
  std::vector<PrPoint> points;
};

/// One point per threshold; thresholds must be ascending.
PrCurve pr_curve(std::span<const Detection> preds, std::span<const GroundTruth> gts,
                 std::span<const double> thresholds, const MatchOptions& options);

std::vector<GroundTruth> parse_annotations(std::istream& in, const std::string& source);
std::vector<Detection> parse_detections(std::istream& in, const std::string& source);
std::vector<GroundTruth> load_annotations(const std::filesystem::path& path);
std::vector<Detection> load_detections(const std::filesystem::path& path);

void write_annotations(std::ostream& out, std::span<const GroundTruth> gts);
void write_detections(std::ostream& out, std::span<const Detection> dets);

/// `confidence_threshold,precision,recall,tp,fp,fn` with 6 decimals.
void write_pr_table_csv(std::ostream& out, const PrCurve& curve);
/// Two columns `recall,precision` for plotting.
void write_pr_curve_csv(std::ostream& out, const PrCurve& curve);

}  // namespace carguard
