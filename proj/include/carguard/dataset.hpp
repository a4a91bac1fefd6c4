#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "carguard/claim.hpp"
#include "carguard/detection_metrics.hpp"
#include "carguard/features.hpp"
#include "carguard/retrieval_metrics.hpp"

namespace carguard {

struct ManifestImage {
  std::string image_id;
  EvidenceKind kind = EvidenceKind::close_up;
  /// Relative to the manifest's directory.
  std::string path;
  /// Capture session; a body shot and close-up with the same shot form one claim.
  int shot = 0;
  std::vector<DamageRegion> regions;
};

struct ManifestVehicle {
  std::string vehicle_id;
  std::vector<ManifestImage> images;
};

struct DuplicatePair {
  std::string original;
  std::string duplicate;
};

/// Dataset manifest (manifest.json): vehicles -> images -> {kind, path,
/// regions}, the duplicate-pair list, and vehicles held out of enrollment
/// ("novel") for false-positive checks.
struct Dataset {
  std::filesystem::path root;
  nlohmann::json spec;
  std::vector<ManifestVehicle> vehicles;
  std::vector<ManifestVehicle> novel;
  std::vector<DuplicatePair> duplicate_pairs;
  nlohmann::json self_check;

  std::filesystem::path resolve(const ManifestImage& image) const { return root / image.path; }

  /// Close-ups of the enrolled vehicles, manifest order.
  std::vector<ImageRef> close_ups() const;
  /// Every image of enrolled vehicles (both kinds), manifest order.
  std::vector<ImageRef> all_images() const;

  const ManifestVehicle* find_vehicle(std::string_view vehicle_id) const;
  /// Image lookup across enrolled and novel vehicles.
  std::pair<const ManifestVehicle*, const ManifestImage*> find_image(std::string_view id) const;

  /// The claim (evidence list) formed by one shot of one vehicle.
  ClaimRecord claim_for_shot(const ManifestVehicle& vehicle, int shot,
                             std::string claim_id) const;
  /// Annotated regions of every image, novel vehicles included.
  std::vector<GroundTruth> ground_truth() const;
};

Dataset load_manifest(const std::filesystem::path& manifest_path);
nlohmann::json manifest_to_json(const Dataset& dataset);

enum class RoiSource { annotation, detector };
std::string_view to_string(RoiSource s);
RoiSource parse_roi_source(std::string_view s);

/// Builds fused descriptors for dataset close-ups. Decoded images are cached;
/// safe for concurrent use.
class DatasetDescriber {
 public:
  DatasetDescriber(const Dataset& dataset, const EmbeddingProvider& provider);

  /// Detector boxes by image id; the highest-confidence box is used as ROI,
  /// and an image without detections falls back to the whole frame.
  void set_detections(std::vector<Detection> detections);
  bool has_detections() const { return !detections_.empty(); }

  NormalizedBBox roi_for(std::string_view close_up_id, RoiSource source) const;
  FusedDescriptor describe(std::string_view close_up_id, const FusionConfig& config,
                           HistSource hist_source, RoiSource roi_source) const;
  const ImageBuffer& image(std::string_view image_id) const;

 private:
  const Dataset& dataset_;
  const EmbeddingProvider& provider_;
  std::map<std::string, Detection, std::less<>> best_detection_;
  std::vector<Detection> detections_;
  mutable std::mutex cache_mutex_;
  mutable std::map<std::string, std::shared_ptr<const ImageBuffer>, std::less<>> cache_;
};

}  // namespace carguard
