#include "carguard/splits.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "carguard/error.hpp"
#include "carguard/rng.hpp"

namespace carguard {

std::string_view to_string(SplitMode m) {
  return m == SplitMode::subject_overlapped ? "subject_overlapped" : "subject_disjoint";
}

SplitMode parse_split_mode(std::string_view s) {
  if (s == "subject_overlapped" || s == "overlapped") return SplitMode::subject_overlapped;
  if (s == "subject_disjoint" || s == "disjoint") return SplitMode::subject_disjoint;
  throw Error(ErrorCode::validation, "split mode must be subject_overlapped or subject_disjoint",
              "mode");
}

std::size_t train_count(std::size_t n, double train_fraction) {
  if (n < 2) return n;
  auto t = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 0.5));
  return std::clamp<std::size_t>(t, 1, n - 1);
}

SplitSpec make_split(std::span<const ImageRef> dataset, SplitMode mode, std::uint64_t seed,
                     double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorCode::validation, "train fraction must lie in (0, 1)", "train_fraction");
  }
  std::set<std::string> seen;
  std::map<std::string, std::vector<std::string>> by_vehicle;
  for (const auto& img : dataset) {
    if (!seen.insert(img.image_id).second) {
      throw Error(ErrorCode::validation, "duplicate image id " + img.image_id, "image_id");
    }
    by_vehicle[img.vehicle_id].push_back(img.image_id);
  }

  SplitSpec out;
  out.mode = mode;
  out.seed = seed;
  Rng rng(seed);
  if (mode == SplitMode::subject_disjoint) {
    if (by_vehicle.size() < 2) {
      throw Error(ErrorCode::validation, "subject_disjoint split needs at least 2 vehicles",
                  "dataset");
    }
    std::vector<std::string> vehicles;
    for (const auto& [v, imgs] : by_vehicle) vehicles.push_back(v);
    rng.shuffle(std::span(vehicles));
    const auto n_train = train_count(vehicles.size(), train_fraction);
    for (std::size_t i = 0; i < vehicles.size(); ++i) {
      auto& side = i < n_train ? out.train_ids : out.test_ids;
      const auto& imgs = by_vehicle[vehicles[i]];
      side.insert(side.end(), imgs.begin(), imgs.end());
    }
  } else {
    for (auto& [v, imgs] : by_vehicle) {
      rng.shuffle(std::span(imgs));
      const auto n_train = train_count(imgs.size(), train_fraction);
      out.train_ids.insert(out.train_ids.end(), imgs.begin(), imgs.begin() + n_train);
      out.test_ids.insert(out.test_ids.end(), imgs.begin() + n_train, imgs.end());
    }
  }
  std::sort(out.train_ids.begin(), out.train_ids.end());
  std::sort(out.test_ids.begin(), out.test_ids.end());
  return out;
}

}  // namespace carguard
