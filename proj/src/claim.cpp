#include "carguard/claim.hpp"

#include <cmath>
#include <set>

#include "carguard/error.hpp"

namespace carguard {

std::string_view to_string(ClaimStatus s) {
  switch (s) {
    case ClaimStatus::pending: return "pending";
    case ClaimStatus::settled: return "settled";
    case ClaimStatus::flagged: return "flagged";
    case ClaimStatus::fraud_confirmed: return "fraud_confirmed";
    case ClaimStatus::cleared: return "cleared";
  }
  return "unknown";
}

std::string_view to_string(EvidenceKind k) {
  return k == EvidenceKind::full_body ? "full_body" : "close_up";
}

std::string_view to_string(DamageClass c) {
  switch (c) {
    case DamageClass::scratch: return "scratch";
    case DamageClass::dent: return "dent";
    case DamageClass::crack: return "crack";
  }
  return "unknown";
}

std::string_view to_string(RegionSource s) {
  return s == RegionSource::annotation ? "annotation" : "detector";
}

std::string_view to_string(Decision d) { return d == Decision::fraud ? "fraud" : "legitimate"; }

ClaimStatus parse_claim_status(std::string_view s) {
  for (auto v : {ClaimStatus::pending, ClaimStatus::settled, ClaimStatus::flagged,
                 ClaimStatus::fraud_confirmed, ClaimStatus::cleared}) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorCode::validation, "unknown claim status '" + std::string(s) + "'", "status");
}

EvidenceKind parse_evidence_kind(std::string_view s) {
  if (s == "full_body") return EvidenceKind::full_body;
  if (s == "close_up") return EvidenceKind::close_up;
  throw Error(ErrorCode::validation, "unknown evidence kind '" + std::string(s) + "'", "kind");
}

DamageClass parse_damage_class(std::string_view s) {
  for (auto v : {DamageClass::scratch, DamageClass::dent, DamageClass::crack}) {
    if (to_string(v) == s) return v;
  }
  throw Error(ErrorCode::validation, "unknown damage class '" + std::string(s) + "'", "class");
}

Decision parse_decision(std::string_view s) {
  if (s == "fraud") return Decision::fraud;
  if (s == "legitimate") return Decision::legitimate;
  throw Error(ErrorCode::validation, "decision must be fraud or legitimate", "decision");
}

bool transition_allowed(ClaimStatus from, ClaimStatus to) noexcept {
  using S = ClaimStatus;
  switch (from) {
    case S::pending: return to == S::settled || to == S::flagged;
    case S::flagged: return to == S::fraud_confirmed || to == S::cleared;
    case S::cleared: return to == S::settled;
    case S::settled:
    case S::fraud_confirmed: return false;
  }
  return false;
}

const ImageEvidence* ClaimRecord::find_image(std::string_view image_id) const {
  for (const auto& e : evidence) {
    if (e.image_id == image_id) return &e;
  }
  return nullptr;
}

void validate(const DamageRegion& region) {
  validate(region.bbox);
  if (region.confidence.has_value() != (region.source == RegionSource::detector)) {
    throw Error(ErrorCode::validation, "confidence must be present exactly for detector regions",
                "confidence");
  }
  if (region.confidence && !(*region.confidence >= 0.0 && *region.confidence <= 1.0)) {
    throw Error(ErrorCode::validation, "confidence must lie in [0,1]", "confidence");
  }
}

void validate(const ClaimRecord& record) {
  if (record.claim_id.empty()) throw Error(ErrorCode::validation, "claim_id is empty", "claim_id");
  if (record.vehicle_id.empty()) {
    throw Error(ErrorCode::validation, "vehicle_id is empty", "vehicle_id");
  }
  bool has_body = false, has_close = false;
  std::set<std::string_view> ids;
  for (const auto& e : record.evidence) {
    if (e.image_id.empty()) throw Error(ErrorCode::validation, "image_id is empty", "image_id");
    if (!ids.insert(e.image_id).second) {
      throw Error(ErrorCode::validation, "duplicate image_id " + e.image_id, "image_id");
    }
    has_body |= e.kind == EvidenceKind::full_body;
    has_close |= e.kind == EvidenceKind::close_up;
    if (e.kind == EvidenceKind::close_up && e.regions.empty()) {
      throw Error(ErrorCode::validation, "close_up " + e.image_id + " has no damage region",
                  "regions");
    }
    for (const auto& r : e.regions) validate(r);
  }
  if (!has_body) {
    throw Error(ErrorCode::validation, "claim needs at least one full_body image", "evidence");
  }
  if (!has_close) {
    throw Error(ErrorCode::validation, "claim needs at least one close_up image", "evidence");
  }
}

bool accepts(const GalleryFilter& filter, const EnrolledFeature& feature,
             std::optional<ClaimStatus> status) {
  if (filter.exclude_claim && feature.claim_id == *filter.exclude_claim) return false;
  if (filter.only_vehicle && feature.vehicle_id != *filter.only_vehicle) return false;
  if (filter.exclude_vehicle && feature.vehicle_id == *filter.exclude_vehicle) return false;
  if (filter.status_in) {
    if (!status) return false;
    bool hit = false;
    for (auto s : *filter.status_in) hit |= s == *status;
    if (!hit) return false;
  }
  return true;
}

void to_json(nlohmann::json& j, const NormalizedBBox& b) {
  j = {{"cx", b.cx}, {"cy", b.cy}, {"w", b.w}, {"h", b.h}};
}

void from_json(const nlohmann::json& j, NormalizedBBox& b) {
  b.cx = j.at("cx").get<double>();
  b.cy = j.at("cy").get<double>();
  b.w = j.at("w").get<double>();
  b.h = j.at("h").get<double>();
}

void to_json(nlohmann::json& j, const DamageRegion& r) {
  j = {{"bbox", r.bbox}, {"class", to_string(r.damage_class)}, {"source", to_string(r.source)}};
  if (r.confidence) j["confidence"] = *r.confidence;
}

void from_json(const nlohmann::json& j, DamageRegion& r) {
  r.bbox = j.at("bbox").get<NormalizedBBox>();
  r.damage_class = parse_damage_class(j.at("class").get<std::string>());
  auto source = j.value("source", std::string("annotation"));
  if (source == "annotation") {
    r.source = RegionSource::annotation;
  } else if (source == "detector") {
    r.source = RegionSource::detector;
  } else {
    throw Error(ErrorCode::validation, "source must be annotation or detector", "source");
  }
  if (auto it = j.find("confidence"); it != j.end() && !it->is_null()) {
    r.confidence = it->get<double>();
  } else {
    r.confidence.reset();
  }
}

void to_json(nlohmann::json& j, const ImageEvidence& e) {
  j = {{"image_id", e.image_id},
       {"kind", to_string(e.kind)},
       {"content_ref", e.content_ref},
       {"regions", e.regions}};
}

void from_json(const nlohmann::json& j, ImageEvidence& e) {
  e.image_id = j.at("image_id").get<std::string>();
  e.kind = parse_evidence_kind(j.at("kind").get<std::string>());
  e.content_ref = j.value("content_ref", std::string());
  e.regions = j.value("regions", std::vector<DamageRegion>{});
}

void to_json(nlohmann::json& j, const Adjudication& a) {
  j = {{"reviewer_id", a.reviewer_id},
       {"decision", to_string(a.decision)},
       {"note", a.note},
       {"decided_at", to_millis(a.decided_at)}};
}

void from_json(const nlohmann::json& j, Adjudication& a) {
  a.reviewer_id = j.at("reviewer_id").get<std::string>();
  a.decision = parse_decision(j.at("decision").get<std::string>());
  a.note = j.value("note", std::string());
  a.decided_at = from_millis(j.at("decided_at").get<std::int64_t>());
}

void to_json(nlohmann::json& j, const ClaimRecord& c) {
  j = {{"claim_id", c.claim_id},
       {"vehicle_id", c.vehicle_id},
       {"submitted_at", to_millis(c.submitted_at)},
       {"status", to_string(c.status)},
       {"evidence", c.evidence}};
  j["adjudication"] = c.adjudication ? nlohmann::json(*c.adjudication) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, ClaimRecord& c) {
  c.claim_id = j.at("claim_id").get<std::string>();
  c.vehicle_id = j.at("vehicle_id").get<std::string>();
  c.submitted_at = from_millis(j.at("submitted_at").get<std::int64_t>());
  c.status = parse_claim_status(j.at("status").get<std::string>());
  c.evidence = j.at("evidence").get<std::vector<ImageEvidence>>();
  if (auto it = j.find("adjudication"); it != j.end() && !it->is_null()) {
    c.adjudication = it->get<Adjudication>();
  } else {
    c.adjudication.reset();
  }
}

}  // namespace carguard
