#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "carguard/claimstore.hpp"
#include "carguard/config.hpp"
#include "carguard/detection_metrics.hpp"
#include "carguard/matcher.hpp"

namespace carguard {

/// An Error raised inside the submission pipeline, tagged with the stage
/// ("decode", "roi", "embed", "check", "enroll") that failed.
class StageError : public Error {
 public:
  StageError(const Error& inner, std::string stage)
      : Error(inner.code(), inner.what(), inner.field()), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct EvidenceInput {
  std::string image_id;
  EvidenceKind kind = EvidenceKind::close_up;
  /// Exactly one of the two is set.
  std::optional<std::string> image_base64;
  std::optional<std::string> content_ref;
  /// Absent or empty on a close-up: regions come from the detector sidecar.
  std::vector<DamageRegion> regions;
};

struct SubmissionRequest {
  std::string vehicle_id;
  std::vector<EvidenceInput> evidence;
  bool auto_check = true;
};

struct SubmissionResult {
  std::string claim_id;
  ClaimStatus status = ClaimStatus::pending;
  std::optional<FraudAssessment> assessment;
};

struct ReviewItem {
  ClaimRecord claim;
  FraudAssessment assessment;
  /// Evidence of the probe claim and of every matched gallery claim, by claim id.
  std::map<std::string, std::vector<ImageEvidence>> evidence_refs;
};

struct ReviewPage {
  std::size_t page = 1;
  std::size_t page_size = 20;
  std::size_t total = 0;
  std::vector<ReviewItem> items;
};

struct PolicyOverrides {
  std::optional<FraudMode> mode;
  std::optional<double> threshold;
  std::optional<std::size_t> top_k;
};

struct ServiceOptions {
  std::function<Timestamp()> clock;
  /// Where inline uploads are kept; content_ref of the stored evidence points
  /// here. Empty keeps only the descriptors ("inline:" refs).
  std::filesystem::path evidence_dir;
};

/// Claim intake, fraud checks and the review workflow on top of one store.
/// All handlers are safe to call concurrently.
class ClaimService {
 public:
  ClaimService(ClaimStore& store, const EmbeddingProvider& provider, Config config,
               ServiceOptions options = {});

  /// decode -> ROIs -> describe -> fraud_check -> enroll. Claims that reach
  /// the threshold are enrolled as flagged. Nothing is enrolled on failure.
  /// The check always runs; auto_check only controls whether the assessment
  /// is returned.
  SubmissionResult handle_submit(const SubmissionRequest& request);
  ClaimRecord handle_get(std::string_view claim_id) const;
  /// Read-only re-check of an enrolled claim against the current gallery.
  FraudAssessment handle_check(std::string_view claim_id, const PolicyOverrides& overrides = {}) const;
  /// Flagged claims by best similarity (descending, then claim id); page is 1-based.
  ReviewPage handle_review_queue(std::size_t page = 1, std::size_t page_size = 20) const;
  ClaimRecord handle_adjudicate(std::string_view claim_id, Decision decision,
                                const std::string& reviewer_id, const std::string& note);

  const Config& config() const noexcept { return config_; }
  const ClaimStore& store() const noexcept { return store_; }

 private:
  struct PreparedImage;
  std::vector<std::uint8_t> image_bytes(const EvidenceInput& e) const;
  std::vector<DamageRegion> detector_regions(const std::string& image_id) const;
  FraudPolicy effective_policy(const PolicyOverrides& o) const;
  Timestamp now() const;

  ClaimStore& store_;
  const EmbeddingProvider& provider_;
  Config config_;
  ServiceOptions options_;
  std::map<std::string, std::vector<Detection>, std::less<>> detections_;
  std::mutex submit_mutex_;
};

/// Decodes standard base64 with padding; ASCII whitespace is skipped.
std::vector<std::uint8_t> decode_base64(std::string_view text);
std::string encode_base64(std::span<const std::uint8_t> bytes);

SubmissionRequest submission_from_json(const nlohmann::json& j);
nlohmann::json submission_to_json(const SubmissionRequest& r);
nlohmann::json result_to_json(const SubmissionResult& r);
nlohmann::json review_item_to_json(const ReviewItem& item);
nlohmann::json review_page_to_json(const ReviewPage& page);
PolicyOverrides policy_overrides_from_json(const nlohmann::json& j);

}  // namespace carguard
