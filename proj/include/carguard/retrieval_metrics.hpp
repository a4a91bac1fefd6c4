#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "carguard/features.hpp"

namespace carguard {

/// An image together with the vehicle it shows.
struct ImageRef {
  std::string image_id;
  std::string vehicle_id;

  bool operator==(const ImageRef&) const = default;
};

struct ProbeGallery {
  std::vector<ImageRef> probes;
  std::vector<ImageRef> gallery;
};

/// Picks one close-up per vehicle as probe (uniformly, under `seed`); the
/// remaining close-ups form the gallery. Output follows input order. Throws
/// Error(validation) listing every vehicle with fewer than two close-ups.
ProbeGallery make_probe_gallery(std::span<const ImageRef> close_ups, std::uint64_t seed);

struct CmcCurve {
  /// rates[k-1] = fraction of probes whose first correct match has rank <= k.
  std::vector<double> rates;
  std::size_t probe_count = 0;
  std::vector<std::string> warnings;

  double rank(std::size_t k) const { return rates.at(k - 1); }
};

using DescriptorFn = std::function<FusedDescriptor(const ImageRef&)>;

/// A correct match is any gallery entry with the probe's vehicle id. Gallery
/// order stands in for enrollment order when breaking ties. Probes whose
/// vehicle is missing from the gallery never match and add a warning.
CmcCurve cmc(std::span<const ImageRef> probes, std::span<const ImageRef> gallery,
             std::size_t max_rank, const DescriptorFn& descriptor_fn);

/// CMC from 1-based first-correct ranks (0 = never matched).
CmcCurve cmc_from_ranks(std::span<const std::size_t> first_correct_ranks, std::size_t max_rank);

/// Two columns `rank,rate`.
void write_cmc_csv(std::ostream& out, const CmcCurve& curve);

}  // namespace carguard
