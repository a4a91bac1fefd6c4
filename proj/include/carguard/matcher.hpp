#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "carguard/claim.hpp"
#include "carguard/error.hpp"
#include "carguard/features.hpp"

namespace carguard {

struct StoreState;

/// dot(a,b) / (|a||b|) clamped to [-1, 1]; 0 when either norm is 0.
template <class T>
double cosine_similarity(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::layout_mismatch, "cosine_similarity: dimension mismatch " +
                                                std::to_string(a.size()) + " vs " +
                                                std::to_string(b.size()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  return cosine_similarity<double>(a, b);
}
inline double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b) {
  return cosine_similarity<float>(a, b);
}

struct MatchResult {
  std::string claim_id;
  std::string vehicle_id;
  std::string image_id;
  double similarity = 0.0;
  std::size_t rank = 0;
  std::uint64_t enrollment_seq = 0;

  bool operator==(const MatchResult&) const = default;
};

/// Resolves a claim id to its current status; required only by status_in filters.
using StatusResolver = std::function<std::optional<ClaimStatus>(std::string_view)>;

/// Exhaustive scan: scores every accepted entry, sorts by (similarity desc,
/// enrollment_seq asc) and keeps the first k. This is the reference path.
std::vector<MatchResult> search(const FusedDescriptor& probe,
                                std::span<const EnrolledFeature> gallery, std::size_t k,
                                const GalleryFilter& filter = {},
                                const StatusResolver& status = {});

struct SearchOptions {
  /// 0 picks std::thread::hardware_concurrency().
  unsigned threads = 0;
  /// Galleries smaller than this are scanned on the calling thread.
  std::size_t parallel_min_rows = 8192;
  std::size_t block_rows = 256;
};

/// Same contract as search(): blocked scan with a bounded top-k heap per
/// partition, partitions merged under the same ordering.
std::vector<MatchResult> search_fast(const FusedDescriptor& probe,
                                     std::span<const EnrolledFeature> gallery, std::size_t k,
                                     const GalleryFilter& filter = {},
                                     const StatusResolver& status = {},
                                     const SearchOptions& options = {});

enum class FraudMode { cross_vehicle, same_vehicle };
std::string_view to_string(FraudMode m);
FraudMode parse_fraud_mode(std::string_view s);

/// Calibrated on the seed-1001 synthetic fixture (toy embedder, 64/64 dims,
/// 8-bin full-body histogram, unit weights): midpoint of the gap between the
/// best non-duplicate score and the worst duplicate score.
inline constexpr double kDefaultFraudThreshold = 0.95732;

struct FraudPolicy {
  FraudMode mode = FraudMode::cross_vehicle;
  double threshold = kDefaultFraudThreshold;
  std::size_t top_k = 10;

  bool operator==(const FraudPolicy&) const = default;
};

void validate(const FraudPolicy& policy);

struct FraudAssessment {
  bool flagged = false;
  std::optional<MatchResult> best;
  std::vector<MatchResult> matches;
  FraudPolicy policy;

  bool operator==(const FraudAssessment&) const = default;
};

/// Searches every probe descriptor against the gallery minus the probe's own
/// claim (restricted to its vehicle in same_vehicle mode). Each gallery entry
/// scores its best similarity over the probes; the top-k of those are
/// reported and the claim is flagged when the best one reaches the threshold.
FraudAssessment fraud_check(const ClaimRecord& probe_claim,
                            std::span<const FusedDescriptor> probe_descriptors,
                            const StoreState& store, const FraudPolicy& policy);

struct ThresholdCalibration {
  double threshold = kDefaultFraudThreshold;
  bool separable = false;
  double max_negative = -1.0;
  double min_positive = 1.0;
};

/// Midpoint between the highest negative and lowest positive score when they
/// separate; otherwise the cut that minimizes total errors (ties -> lowest).
ThresholdCalibration calibrate_threshold(std::span<const double> positives,
                                         std::span<const double> negatives);

void to_json(nlohmann::json& j, const MatchResult& m);
void from_json(const nlohmann::json& j, MatchResult& m);
void to_json(nlohmann::json& j, const FraudPolicy& p);
void from_json(const nlohmann::json& j, FraudPolicy& p);
void to_json(nlohmann::json& j, const FraudAssessment& a);
void from_json(const nlohmann::json& j, FraudAssessment& a);

}  // namespace carguard
