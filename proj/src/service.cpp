#include "carguard/service.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>

#include "carguard/error.hpp"
#include "carguard/imaging.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace carguard {

std::vector<std::uint8_t> decode_base64(std::string_view text) {
  std::string clean;
  clean.reserve(text.size());
  for (char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) clean.push_back(c);
  }
  if (clean.size() % 4 != 0) {
    throw Error(ErrorCode::validation, "base64 length is not a multiple of 4", "image_base64");
  }
  std::vector<std::uint8_t> out(clean.size() / 4 * 3);
  if (clean.empty()) return out;
  int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(clean.data()),
                          static_cast<int>(clean.size()));
  if (n < 0) throw Error(ErrorCode::validation, "invalid base64", "image_base64");
  // EVP_DecodeBlock counts padding as zero bytes.
  std::size_t pad = 0;
  if (clean.back() == '=') ++pad;
  if (clean.size() >= 2 && clean[clean.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

std::string encode_base64(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
  int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                          static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

namespace {

template <class F>
auto in_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::validation || e.code() == ErrorCode::payload_too_large) throw;
    throw StageError(e, stage);
  }
}

bool safe_file_component(std::string_view s) {
  if (s.empty() || s == "." || s == "..") return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string(), path.string());
}

}  // namespace

struct ClaimService::PreparedImage {
  const EvidenceInput* input;
  std::vector<std::uint8_t> bytes;
  ImageBuffer image;
};

ClaimService::ClaimService(ClaimStore& store, const EmbeddingProvider& provider, Config config,
                           ServiceOptions options)
    : store_(store), provider_(provider), config_(std::move(config)), options_(std::move(options)) {
  validate(config_);
  if (!same_layout(store_.layout(), config_.fusion)) {
    throw Error(ErrorCode::layout_mismatch, "store layout differs from the configured fusion",
                "fusion");
  }
  if (!config_.detections_path.empty()) {
    for (auto& d : load_detections(config_.detections_path)) {
      if (d.confidence < config_.detector_min_confidence) continue;
      detections_[d.image_id].push_back(std::move(d));
    }
  }
}

Timestamp ClaimService::now() const {
  if (options_.clock) return options_.clock();
  return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

std::vector<std::uint8_t> ClaimService::image_bytes(const EvidenceInput& e) const {
  const auto cap = config_.max_image_bytes;
  auto too_large = [&](std::size_t n) {
    return Error(ErrorCode::payload_too_large,
                 "image " + e.image_id + " is " + std::to_string(n) + " bytes; limit is " +
                     std::to_string(cap),
                 e.image_id);
  };
  if (e.image_base64) {
    if (e.image_base64->size() / 4 * 3 > cap + 3) throw too_large(e.image_base64->size() / 4 * 3);
    auto bytes = decode_base64(*e.image_base64);
    if (bytes.size() > cap) throw too_large(bytes.size());
    return bytes;
  }
  std::error_code ec;
  auto size = fs::file_size(*e.content_ref, ec);
  if (!ec && size > cap) throw too_large(size);
  return read_file_bytes(*e.content_ref);
}

std::vector<DamageRegion> ClaimService::detector_regions(const std::string& image_id) const {
  std::vector<DamageRegion> out;
  auto it = detections_.find(image_id);
  if (it == detections_.end()) return out;
  for (const auto& d : it->second) {
    out.push_back({d.bbox, d.damage_class, d.confidence, RegionSource::detector});
  }
  return out;
}

FraudPolicy ClaimService::effective_policy(const PolicyOverrides& o) const {
  FraudPolicy p = config_.policy;
  if (o.mode) p.mode = *o.mode;
  if (o.threshold) p.threshold = *o.threshold;
  if (o.top_k) p.top_k = *o.top_k;
  validate(p);
  return p;
}

SubmissionResult ClaimService::handle_submit(const SubmissionRequest& request) {
  if (request.evidence.empty()) {
    throw Error(ErrorCode::validation, "evidence is empty", "evidence");
  }
  ClaimRecord record;
  record.claim_id = "unassigned";
  record.vehicle_id = request.vehicle_id;
  record.submitted_at = now();

  std::vector<PreparedImage> images;
  images.reserve(request.evidence.size());
  for (const auto& e : request.evidence) {
    if (e.image_base64.has_value() == e.content_ref.has_value()) {
      throw Error(ErrorCode::validation,
                  "evidence " + e.image_id + " needs exactly one of image_base64 or content_ref",
                  "evidence");
    }
    if (e.image_base64 && !options_.evidence_dir.empty() && !safe_file_component(e.image_id)) {
      throw Error(ErrorCode::validation, "image_id '" + e.image_id + "' is not a safe file name",
                  "image_id");
    }
    ImageEvidence ev{e.image_id, e.kind, e.content_ref.value_or("inline:" + e.image_id), e.regions};
    if (ev.kind == EvidenceKind::close_up && ev.regions.empty()) {
      ev.regions = detector_regions(e.image_id);
      if (ev.regions.empty()) {
        throw Error(ErrorCode::validation,
                    "close_up " + e.image_id + " has no regions and no detector output",
                    "regions");
      }
    }
    record.evidence.push_back(std::move(ev));
  }
  validate(record);

  for (const auto& e : request.evidence) {
    PreparedImage p{&e, {}, {}};
    p.bytes = in_stage("decode", [&] { return image_bytes(e); });
    p.image = in_stage("decode", [&] { return decode_image(p.bytes); });
    images.push_back(std::move(p));
  }

  std::vector<ImageBuffer> bodies;
  std::vector<std::string> body_ids;
  for (const auto& p : images) {
    if (p.input->kind == EvidenceKind::full_body) {
      bodies.push_back(p.image);
      body_ids.push_back(p.input->image_id);
    }
  }
  std::vector<ClaimDescriptor> descriptors;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].input->kind != EvidenceKind::close_up) continue;
    for (const auto& region : record.evidence[i].regions) {
      auto d = in_stage("embed", [&] {
        try {
          return describe_roi(provider_, config_.fusion, config_.hist_source, images[i].image,
                              images[i].input->image_id, region.bbox, bodies, body_ids);
        } catch (const Error& e) {
          if (e.code() == ErrorCode::empty_roi) throw StageError(e, "roi");
          throw;
        }
      });
      descriptors.push_back({images[i].input->image_id, std::move(d)});
    }
  }
  std::vector<FusedDescriptor> probe;
  for (const auto& d : descriptors) probe.push_back(d.descriptor);

  std::lock_guard lock(submit_mutex_);
  auto snap = store_.snapshot();
  std::size_t n = snap->claims.size() + 1;
  char id[32];
  do {
    std::snprintf(id, sizeof id, "C%06zu", n++);
  } while (snap->claims.contains(std::string_view(id)));
  record.claim_id = id;

  auto assessment = in_stage("check", [&] { return fraud_check(record, probe, *snap, config_.policy); });

  std::vector<fs::path> written;
  auto cleanup = [&] {
    std::error_code ec;
    for (const auto& p : written) fs::remove(p, ec);
    if (!written.empty()) fs::remove(written.front().parent_path(), ec);
  };
  try {
    if (!options_.evidence_dir.empty()) {
      const auto dir = options_.evidence_dir / record.claim_id;
      for (std::size_t i = 0; i < images.size(); ++i) {
        if (!images[i].input->image_base64) continue;
        fs::create_directories(dir);
        const bool png = images[i].bytes.size() >= 4 && images[i].bytes[0] == 0x89;
        auto path = dir / (images[i].input->image_id + (png ? ".png" : ".jpg"));
        write_bytes(path, images[i].bytes);
        written.push_back(path);
        record.evidence[i].content_ref = path.string();
      }
    }
    in_stage("enroll", [&] { return store_.enroll_claim(record, descriptors, assessment.flagged); });
  } catch (const fs::filesystem_error& e) {
    cleanup();
    throw StageError(Error(ErrorCode::io, e.what()), "enroll");
  } catch (...) {
    cleanup();
    throw;
  }

  SubmissionResult result;
  result.claim_id = record.claim_id;
  result.status = assessment.flagged ? ClaimStatus::flagged : ClaimStatus::pending;
  if (request.auto_check) result.assessment = std::move(assessment);
  return result;
}

ClaimRecord ClaimService::handle_get(std::string_view claim_id) const {
  return store_.get_claim(claim_id);
}

FraudAssessment ClaimService::handle_check(std::string_view claim_id,
                                           const PolicyOverrides& overrides) const {
  const auto policy = effective_policy(overrides);
  auto snap = store_.snapshot();
  auto it = snap->claims.find(claim_id);
  if (it == snap->claims.end()) {
    throw Error(ErrorCode::not_found, "claim " + std::string(claim_id) + " not found",
                std::string(claim_id));
  }
  std::vector<FusedDescriptor> probe;
  for (const auto& f : snap->features) {
    if (f.claim_id == claim_id) probe.push_back(f.descriptor);
  }
  if (probe.empty()) {
    throw Error(ErrorCode::validation, "claim " + std::string(claim_id) + " has no descriptors",
                std::string(claim_id));
  }
  return fraud_check(it->second, probe, *snap, policy);
}

ReviewPage ClaimService::handle_review_queue(std::size_t page, std::size_t page_size) const {
  if (page < 1) throw Error(ErrorCode::validation, "page starts at 1", "page");
  if (page_size < 1 || page_size > 1000) {
    throw Error(ErrorCode::validation, "page_size must lie in [1, 1000]", "page_size");
  }
  auto snap = store_.snapshot();
  std::map<std::string, std::vector<FusedDescriptor>, std::less<>> probes;
  for (const auto& f : snap->features) {
    auto c = snap->claims.find(f.claim_id);
    if (c != snap->claims.end() && c->second.status == ClaimStatus::flagged) {
      probes[f.claim_id].push_back(f.descriptor);
    }
  }
  std::vector<ReviewItem> all;
  for (const auto& [id, claim] : snap->claims) {
    if (claim.status != ClaimStatus::flagged) continue;
    ReviewItem item;
    item.claim = claim;
    if (auto p = probes.find(id); p != probes.end()) {
      item.assessment = fraud_check(claim, p->second, *snap, config_.policy);
    } else {
      item.assessment.policy = config_.policy;
    }
    item.evidence_refs[id] = claim.evidence;
    for (const auto& m : item.assessment.matches) {
      if (auto c = snap->claims.find(m.claim_id); c != snap->claims.end()) {
        item.evidence_refs[m.claim_id] = c->second.evidence;
      }
    }
    all.push_back(std::move(item));
  }
  auto best = [](const ReviewItem& i) { return i.assessment.best ? i.assessment.best->similarity : -2.0; };
  std::stable_sort(all.begin(), all.end(), [&](const ReviewItem& a, const ReviewItem& b) {
    if (best(a) != best(b)) return best(a) > best(b);
    return a.claim.claim_id < b.claim.claim_id;
  });
  ReviewPage out;
  out.page = page;
  out.page_size = page_size;
  out.total = all.size();
  const auto begin = (page - 1) * page_size;
  for (std::size_t i = begin; i < all.size() && i < begin + page_size; ++i) {
    out.items.push_back(std::move(all[i]));
  }
  return out;
}

ClaimRecord ClaimService::handle_adjudicate(std::string_view claim_id, Decision decision,
                                            const std::string& reviewer_id,
                                            const std::string& note) {
  if (reviewer_id.empty()) {
    throw Error(ErrorCode::validation, "reviewer_id is empty", "reviewer_id");
  }
  auto current = store_.get_claim(claim_id);
  if (current.status != ClaimStatus::flagged) {
    throw Error(ErrorCode::conflict,
                "claim " + std::string(claim_id) + " is " +
                    std::string(to_string(current.status)) + ", not flagged",
                std::string(claim_id));
  }
  Adjudication a{reviewer_id, decision, note, now()};
  auto target = decision == Decision::fraud ? ClaimStatus::fraud_confirmed : ClaimStatus::cleared;
  return store_.set_status(claim_id, target, a);
}

// ---- JSON ----

SubmissionRequest submission_from_json(const json& j) {
  SubmissionRequest r;
  std::string field = "body";
  try {
    if (!j.is_object()) throw Error(ErrorCode::validation, "request body must be an object", "body");
    field = "vehicle_id";
    r.vehicle_id = j.at("vehicle_id").get<std::string>();
    field = "auto_check";
    r.auto_check = j.value("auto_check", true);
    field = "evidence";
    for (const auto& je : j.at("evidence")) {
      EvidenceInput e;
      field = "evidence.image_id";
      e.image_id = je.at("image_id").get<std::string>();
      field = "evidence.kind";
      e.kind = parse_evidence_kind(je.at("kind").get<std::string>());
      field = "evidence.image_base64";
      if (je.contains("image_base64")) e.image_base64 = je.at("image_base64").get<std::string>();
      field = "evidence.content_ref";
      if (je.contains("content_ref")) e.content_ref = je.at("content_ref").get<std::string>();
      field = "evidence.regions";
      if (auto it = je.find("regions"); it != je.end() && !it->is_null()) {
        e.regions = it->get<std::vector<DamageRegion>>();
      }
      r.evidence.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::validation, field + ": " + e.what(), field);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::validation) throw;
    throw Error(ErrorCode::validation, e.what(), e.field().empty() ? field : e.field());
  }
  return r;
}

json submission_to_json(const SubmissionRequest& r) {
  json evidence = json::array();
  for (const auto& e : r.evidence) {
    json je = {{"image_id", e.image_id}, {"kind", to_string(e.kind)}, {"regions", e.regions}};
    if (e.image_base64) je["image_base64"] = *e.image_base64;
    if (e.content_ref) je["content_ref"] = *e.content_ref;
    evidence.push_back(std::move(je));
  }
  return {{"vehicle_id", r.vehicle_id}, {"auto_check", r.auto_check}, {"evidence", std::move(evidence)}};
}

json result_to_json(const SubmissionResult& r) {
  json j = {{"claim_id", r.claim_id}, {"status", to_string(r.status)}};
  if (r.assessment) j["assessment"] = *r.assessment;
  return j;
}

json review_item_to_json(const ReviewItem& item) {
  json refs = json::object();
  for (const auto& [id, ev] : item.evidence_refs) refs[id] = ev;
  return {{"claim", item.claim}, {"assessment", item.assessment}, {"evidence_refs", std::move(refs)}};
}

json review_page_to_json(const ReviewPage& page) {
  json items = json::array();
  for (const auto& i : page.items) items.push_back(review_item_to_json(i));
  return {{"page", page.page},
          {"page_size", page.page_size},
          {"total", page.total},
          {"items", std::move(items)}};
}

PolicyOverrides policy_overrides_from_json(const json& body) {
  PolicyOverrides o;
  if (body.is_null()) return o;
  const json& j = body.contains("policy") ? body.at("policy") : body;
  std::string field = "policy";
  try {
    if (!j.is_object()) throw Error(ErrorCode::validation, "policy must be an object", "policy");
    field = "mode";
    if (j.contains(field)) o.mode = parse_fraud_mode(j.at(field).get<std::string>());
    field = "threshold";
    if (j.contains(field)) o.threshold = j.at(field).get<double>();
    field = "top_k";
    if (j.contains(field)) o.top_k = j.at(field).get<std::size_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::validation, field + ": " + e.what(), field);
  }
  return o;
}

}  // namespace carguard
