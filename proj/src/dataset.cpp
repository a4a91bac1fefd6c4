#include "carguard/dataset.hpp"

#include <fstream>

#include "carguard/error.hpp"

namespace carguard {
namespace {

nlohmann::json vehicle_to_json(const ManifestVehicle& v) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& img : v.images) {
    images.push_back({{"image_id", img.image_id},
                      {"kind", to_string(img.kind)},
                      {"path", img.path},
                      {"shot", img.shot},
                      {"regions", img.regions}});
  }
  return {{"vehicle_id", v.vehicle_id}, {"images", std::move(images)}};
}

ManifestVehicle vehicle_from_json(const nlohmann::json& j) {
  ManifestVehicle v;
  v.vehicle_id = j.at("vehicle_id").get<std::string>();
  for (const auto& ji : j.at("images")) {
    ManifestImage img;
    img.image_id = ji.at("image_id").get<std::string>();
    img.kind = parse_evidence_kind(ji.at("kind").get<std::string>());
    img.path = ji.at("path").get<std::string>();
    img.shot = ji.value("shot", 0);
    img.regions = ji.value("regions", std::vector<DamageRegion>{});
    for (const auto& r : img.regions) validate(r);
    v.images.push_back(std::move(img));
  }
  return v;
}

}  // namespace

std::vector<ImageRef> Dataset::close_ups() const {
  std::vector<ImageRef> out;
  for (const auto& v : vehicles) {
    for (const auto& img : v.images) {
      if (img.kind == EvidenceKind::close_up) out.push_back({img.image_id, v.vehicle_id});
    }
  }
  return out;
}

std::vector<ImageRef> Dataset::all_images() const {
  std::vector<ImageRef> out;
  for (const auto& v : vehicles) {
    for (const auto& img : v.images) out.push_back({img.image_id, v.vehicle_id});
  }
  return out;
}

const ManifestVehicle* Dataset::find_vehicle(std::string_view vehicle_id) const {
  for (const auto* list : {&vehicles, &novel}) {
    for (const auto& v : *list) {
      if (v.vehicle_id == vehicle_id) return &v;
    }
  }
  return nullptr;
}

std::pair<const ManifestVehicle*, const ManifestImage*> Dataset::find_image(
    std::string_view id) const {
  for (const auto* list : {&vehicles, &novel}) {
    for (const auto& v : *list) {
      for (const auto& img : v.images) {
        if (img.image_id == id) return {&v, &img};
      }
    }
  }
  return {nullptr, nullptr};
}

ClaimRecord Dataset::claim_for_shot(const ManifestVehicle& vehicle, int shot,
                                    std::string claim_id) const {
  ClaimRecord c;
  c.claim_id = std::move(claim_id);
  c.vehicle_id = vehicle.vehicle_id;
  for (const auto& img : vehicle.images) {
    if (img.shot != shot) continue;
    c.evidence.push_back({img.image_id, img.kind, resolve(img).string(), img.regions});
  }
  return c;
}

std::vector<GroundTruth> Dataset::ground_truth() const {
  std::vector<GroundTruth> out;
  for (const auto* list : {&vehicles, &novel}) {
    for (const auto& v : *list) {
      for (const auto& img : v.images) {
        for (const auto& r : img.regions) out.push_back({img.image_id, r.bbox, r.damage_class});
      }
    }
  }
  return out;
}

Dataset load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) {
    throw Error(ErrorCode::io, "cannot open manifest " + manifest_path.string(),
                manifest_path.string());
  }
  Dataset d;
  d.root = manifest_path.parent_path();
  try {
    auto j = nlohmann::json::parse(in);
    d.spec = j.value("spec", nlohmann::json::object());
    for (const auto& v : j.at("vehicles")) d.vehicles.push_back(vehicle_from_json(v));
    for (const auto& v : j.value("novel", nlohmann::json::array())) {
      d.novel.push_back(vehicle_from_json(v));
    }
    for (const auto& p : j.value("duplicate_pairs", nlohmann::json::array())) {
      d.duplicate_pairs.push_back(
          {p.at("original").get<std::string>(), p.at("duplicate").get<std::string>()});
    }
    d.self_check = j.value("self_check", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::validation, manifest_path.string() + ": " + e.what(),
                manifest_path.string());
  }
  return d;
}

nlohmann::json manifest_to_json(const Dataset& d) {
  nlohmann::json vehicles = nlohmann::json::array();
  for (const auto& v : d.vehicles) vehicles.push_back(vehicle_to_json(v));
  nlohmann::json novel = nlohmann::json::array();
  for (const auto& v : d.novel) novel.push_back(vehicle_to_json(v));
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : d.duplicate_pairs) {
    pairs.push_back({{"original", p.original}, {"duplicate", p.duplicate}});
  }
  return {{"format", "carguard-fixture-1"},
          {"spec", d.spec},
          {"vehicles", std::move(vehicles)},
          {"novel", std::move(novel)},
          {"duplicate_pairs", std::move(pairs)},
          {"self_check", d.self_check}};
}

std::string_view to_string(RoiSource s) {
  return s == RoiSource::annotation ? "annotation" : "detector";
}

RoiSource parse_roi_source(std::string_view s) {
  if (s == "annotation") return RoiSource::annotation;
  if (s == "detector") return RoiSource::detector;
  throw Error(ErrorCode::validation, "roi_source must be annotation or detector", "roi_source");
}

DatasetDescriber::DatasetDescriber(const Dataset& dataset, const EmbeddingProvider& provider)
    : dataset_(dataset), provider_(provider) {}

void DatasetDescriber::set_detections(std::vector<Detection> detections) {
  best_detection_.clear();
  for (const auto& d : detections) {
    auto it = best_detection_.find(d.image_id);
    if (it == best_detection_.end()) {
      best_detection_.emplace(d.image_id, d);
    } else if (d.confidence > it->second.confidence) {
      it->second = d;
    }
  }
  detections_ = std::move(detections);
}

NormalizedBBox DatasetDescriber::roi_for(std::string_view close_up_id, RoiSource source) const {
  auto [vehicle, img] = dataset_.find_image(close_up_id);
  if (!img) {
    throw Error(ErrorCode::not_found, "image " + std::string(close_up_id) + " not in manifest",
                std::string(close_up_id));
  }
  if (source == RoiSource::annotation) {
    if (img->regions.empty()) {
      throw Error(ErrorCode::validation, "close-up " + img->image_id + " has no annotation",
                  img->image_id);
    }
    return img->regions.front().bbox;
  }
  if (detections_.empty()) {
    throw Error(ErrorCode::config, "detector ROIs requested but no detector output loaded",
                "detections");
  }
  auto it = best_detection_.find(close_up_id);
  if (it == best_detection_.end()) return NormalizedBBox{0.5, 0.5, 1.0, 1.0};
  return it->second.bbox;
}

const ImageBuffer& DatasetDescriber::image(std::string_view image_id) const {
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = cache_.find(image_id); it != cache_.end()) return *it->second;
  }
  auto [vehicle, img] = dataset_.find_image(image_id);
  if (!img) {
    throw Error(ErrorCode::not_found, "image " + std::string(image_id) + " not in manifest",
                std::string(image_id));
  }
  auto decoded = std::make_shared<const ImageBuffer>(read_image(dataset_.resolve(*img)));
  std::lock_guard lock(cache_mutex_);
  auto [it, inserted] = cache_.emplace(std::string(image_id), std::move(decoded));
  return *it->second;
}

FusedDescriptor DatasetDescriber::describe(std::string_view close_up_id,
                                           const FusionConfig& config, HistSource hist_source,
                                           RoiSource roi_source) const {
  auto [vehicle, img] = dataset_.find_image(close_up_id);
  if (!img || img->kind != EvidenceKind::close_up) {
    throw Error(ErrorCode::validation, std::string(close_up_id) + " is not a close-up",
                std::string(close_up_id));
  }
  std::vector<ImageBuffer> bodies;
  std::vector<std::string> body_ids;
  for (const auto& other : vehicle->images) {
    if (other.kind == EvidenceKind::full_body && other.shot == img->shot) {
      bodies.push_back(image(other.image_id));
      body_ids.push_back(other.image_id);
    }
  }
  return describe_roi(provider_, config, hist_source, image(close_up_id), close_up_id,
                      roi_for(close_up_id, roi_source), bodies, body_ids);
}

}  // namespace carguard
