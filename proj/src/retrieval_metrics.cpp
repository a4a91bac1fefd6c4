#include "carguard/retrieval_metrics.hpp"

#include <cstdio>
#include <map>
#include <ostream>
#include <set>

#include "carguard/error.hpp"
#include "carguard/matcher.hpp"
#include "carguard/rng.hpp"

namespace carguard {

ProbeGallery make_probe_gallery(std::span<const ImageRef> close_ups, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_vehicle;
  for (std::size_t i = 0; i < close_ups.size(); ++i) {
    by_vehicle[close_ups[i].vehicle_id].push_back(i);
  }
  std::string offenders;
  for (const auto& [vehicle, idx] : by_vehicle) {
    if (idx.size() < 2) offenders += (offenders.empty() ? "" : ", ") + vehicle;
  }
  if (!offenders.empty()) {
    throw Error(ErrorCode::validation, "vehicles with fewer than 2 close-ups: " + offenders,
                "close_ups");
  }

  Rng rng(seed);
  std::set<std::size_t> probe_idx;
  for (const auto& [vehicle, idx] : by_vehicle) probe_idx.insert(idx[rng.below(idx.size())]);

  ProbeGallery out;
  for (std::size_t i = 0; i < close_ups.size(); ++i) {
    (probe_idx.contains(i) ? out.probes : out.gallery).push_back(close_ups[i]);
  }
  return out;
}

CmcCurve cmc_from_ranks(std::span<const std::size_t> first_correct_ranks, std::size_t max_rank) {
  if (max_rank == 0) throw Error(ErrorCode::validation, "max_rank must be >= 1", "max_rank");
  std::vector<std::size_t> hits(max_rank, 0);
  for (auto r : first_correct_ranks) {
    if (r >= 1 && r <= max_rank) ++hits[r - 1];
  }
  CmcCurve c;
  c.probe_count = first_correct_ranks.size();
  c.rates.resize(max_rank, 0.0);
  std::size_t cumulative = 0;
  for (std::size_t k = 0; k < max_rank; ++k) {
    cumulative += hits[k];
    c.rates[k] = c.probe_count == 0 ? 0.0 : static_cast<double>(cumulative) / c.probe_count;
  }
  return c;
}

CmcCurve cmc(std::span<const ImageRef> probes, std::span<const ImageRef> gallery,
             std::size_t max_rank, const DescriptorFn& descriptor_fn) {
  std::vector<EnrolledFeature> entries;
  entries.reserve(gallery.size());
  std::set<std::string> gallery_vehicles;
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    EnrolledFeature f;
    f.claim_id = gallery[i].image_id;
    f.vehicle_id = gallery[i].vehicle_id;
    f.image_id = gallery[i].image_id;
    f.descriptor = descriptor_fn(gallery[i]);
    f.enrollment_seq = i + 1;
    entries.push_back(std::move(f));
    gallery_vehicles.insert(gallery[i].vehicle_id);
  }

  std::vector<std::size_t> ranks;
  std::vector<std::string> warnings;
  ranks.reserve(probes.size());
  for (const auto& probe : probes) {
    if (!gallery_vehicles.contains(probe.vehicle_id)) {
      warnings.push_back("probe " + probe.image_id + ": vehicle " + probe.vehicle_id +
                         " has no gallery entry; counted as never matched");
      ranks.push_back(0);
      continue;
    }
    auto results = search(descriptor_fn(probe), entries, entries.size());
    std::size_t first = 0;
    for (const auto& r : results) {
      if (r.vehicle_id == probe.vehicle_id) {
        first = r.rank;
        break;
      }
    }
    ranks.push_back(first);
  }
  auto curve = cmc_from_ranks(ranks, max_rank);
  curve.warnings = std::move(warnings);
  return curve;
}

void write_cmc_csv(std::ostream& out, const CmcCurve& curve) {
  out << "rank,rate\n";
  char buf[64];
  for (std::size_t k = 0; k < curve.rates.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f\n", k + 1, curve.rates[k]);
    out << buf;
  }
}

}  // namespace carguard
