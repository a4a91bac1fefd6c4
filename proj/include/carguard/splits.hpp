#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "carguard/retrieval_metrics.hpp"

namespace carguard {

enum class SplitMode { subject_overlapped, subject_disjoint };
std::string_view to_string(SplitMode m);
SplitMode parse_split_mode(std::string_view s);

struct SplitSpec {
  SplitMode mode = SplitMode::subject_disjoint;
  std::uint64_t seed = 0;
  /// Sorted image ids.
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;

  bool operator==(const SplitSpec&) const = default;
};

/// Number of items sent to training out of n: floor(fraction * n + 0.5)
/// clamped to [1, n - 1] when n >= 2 (n itself when n < 2).
std::size_t train_count(std::size_t n, double train_fraction);

/// subject_disjoint shuffles vehicles and sends train_count(vehicles) of them
/// to training; subject_overlapped shuffles each vehicle's images and splits
/// them per vehicle. Deterministic in (dataset, mode, seed).
SplitSpec make_split(std::span<const ImageRef> dataset, SplitMode mode, std::uint64_t seed,
                     double train_fraction = 0.7);

}  // namespace carguard
