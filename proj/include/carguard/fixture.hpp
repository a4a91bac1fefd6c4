#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>

#include <json.hpp>

#include "carguard/dataset.hpp"

namespace carguard {

struct Perturbation {
  /// Added to every channel of a duplicate close-up.
  double brightness_delta = 10.0;
  /// Each crop edge moves inward by up to this fraction before resizing back.
  double crop_jitter_frac = 0.02;
};

struct FixtureSpec {
  std::size_t vehicles = 50;
  /// Close-ups per vehicle; each comes with its own full-body shot (one claim).
  std::size_t images_per_vehicle = 2;
  /// Vehicles whose later close-ups are perturbed copies of the first one.
  /// The rest get a second, unrelated damage. Defaults to every vehicle.
  std::optional<std::size_t> duplicate_pairs;
  /// Extra single-claim vehicles that are never enrolled. Defaults to `vehicles`.
  std::optional<std::size_t> novel_claims;
  Perturbation perturbation;
  std::uint64_t seed = 7;
  int body_width = 128;
  int body_height = 96;
  int close_width = 96;
  int close_height = 96;
};

/// Synthetic stand-in for a claim photo collection. Writes into `out`:
///   manifest.json      vehicles, images, regions, duplicate pairs, self-check
///   annotations.txt    ground-truth damage boxes
///   detections.txt     simulated detector output (IoU >= 0.7 to ground truth,
///                      plus low-confidence false positives)
///   images/*.png
/// Output is byte-identical for identical specs.
Dataset generate_fixture(const FixtureSpec& spec, const std::filesystem::path& out);

nlohmann::json fixture_spec_to_json(const FixtureSpec& spec);

}  // namespace carguard
