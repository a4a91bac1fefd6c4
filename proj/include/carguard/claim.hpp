#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "carguard/features.hpp"
#include "carguard/geometry.hpp"

namespace carguard {

/// UTC wall time at millisecond resolution; serialized as integer milliseconds.
using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

inline Timestamp from_millis(std::int64_t ms) { return Timestamp{std::chrono::milliseconds{ms}}; }
inline std::int64_t to_millis(Timestamp t) { return t.time_since_epoch().count(); }

enum class ClaimStatus { pending, settled, flagged, fraud_confirmed, cleared };
enum class EvidenceKind { full_body, close_up };
enum class DamageClass { scratch, dent, crack };
enum class RegionSource { annotation, detector };
enum class Decision { fraud, legitimate };

std::string_view to_string(ClaimStatus s);
std::string_view to_string(EvidenceKind k);
std::string_view to_string(DamageClass c);
std::string_view to_string(RegionSource s);
std::string_view to_string(Decision d);

ClaimStatus parse_claim_status(std::string_view s);
EvidenceKind parse_evidence_kind(std::string_view s);
DamageClass parse_damage_class(std::string_view s);
Decision parse_decision(std::string_view s);

/// pending->{settled,flagged}, flagged->{fraud_confirmed,cleared}, cleared->settled.
bool transition_allowed(ClaimStatus from, ClaimStatus to) noexcept;

struct DamageRegion {
  NormalizedBBox bbox;
  DamageClass damage_class = DamageClass::scratch;
  std::optional<double> confidence;
  RegionSource source = RegionSource::annotation;

  bool operator==(const DamageRegion&) const = default;
};

struct ImageEvidence {
  std::string image_id;
  EvidenceKind kind = EvidenceKind::close_up;
  std::string content_ref;
  std::vector<DamageRegion> regions;

  bool operator==(const ImageEvidence&) const = default;
};

struct Adjudication {
  std::string reviewer_id;
  Decision decision = Decision::legitimate;
  std::string note;
  Timestamp decided_at{};

  bool operator==(const Adjudication&) const = default;
};

struct ClaimRecord {
  std::string claim_id;
  std::string vehicle_id;
  Timestamp submitted_at{};
  ClaimStatus status = ClaimStatus::pending;
  std::vector<ImageEvidence> evidence;
  std::optional<Adjudication> adjudication;

  bool operator==(const ClaimRecord&) const = default;

  const ImageEvidence* find_image(std::string_view image_id) const;
};

/// Checks the region invariants (bbox bounds, confidence iff detector).
void validate(const DamageRegion& region);

/// Checks every ClaimRecord/ImageEvidence invariant: non-empty ids, unique
/// image ids, at least one full_body and one close_up, regions on close-ups.
void validate(const ClaimRecord& record);

struct EnrolledFeature {
  std::string claim_id;
  std::string vehicle_id;
  std::string image_id;
  FusedDescriptor descriptor;
  Timestamp enrolled_at{};
  std::uint64_t enrollment_seq = 0;

  bool operator==(const EnrolledFeature&) const = default;
};

/// Conjunction of optional predicates over gallery entries.
struct GalleryFilter {
  std::optional<std::string> exclude_claim;
  std::optional<std::string> only_vehicle;
  std::optional<std::string> exclude_vehicle;
  std::optional<std::vector<ClaimStatus>> status_in;
};

/// `status` is the owning claim's current status; entries are rejected by a
/// status_in filter when it is unknown.
bool accepts(const GalleryFilter& filter, const EnrolledFeature& feature,
             std::optional<ClaimStatus> status);

void to_json(nlohmann::json& j, const NormalizedBBox& b);
void from_json(const nlohmann::json& j, NormalizedBBox& b);
void to_json(nlohmann::json& j, const DamageRegion& r);
void from_json(const nlohmann::json& j, DamageRegion& r);
void to_json(nlohmann::json& j, const ImageEvidence& e);
void from_json(const nlohmann::json& j, ImageEvidence& e);
void to_json(nlohmann::json& j, const Adjudication& a);
void from_json(const nlohmann::json& j, Adjudication& a);
void to_json(nlohmann::json& j, const ClaimRecord& c);
void from_json(const nlohmann::json& j, ClaimRecord& c);

}  // namespace carguard
