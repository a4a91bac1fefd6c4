#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "carguard/dataset.hpp"
#include "carguard/detection_metrics.hpp"
#include "carguard/features.hpp"
#include "carguard/matcher.hpp"

namespace carguard {

struct AblationConfig {
  std::string label;
  FusionConfig fusion;
  RoiSource roi_source = RoiSource::annotation;
  HistSource hist_source = HistSource::full_body;
};

struct AblationRow {
  std::string label;
  double rank1 = 0.0;
  double rank10 = 0.0;
  std::size_t probes = 0;
};

/// The block and bin-count ablations plus their detector-ROI twins.
/// Blocks are switched off by weight so every row keeps one layout per bin count.
std::vector<AblationConfig> default_ablation_configs(std::size_t local_dim = 64,
                                                     std::size_t global_dim = 64);

/// One probe/gallery draw under `seed`, then one CMC evaluation per config.
/// Throws Error(config) when a detector row is requested and `detections` is empty.
std::vector<AblationRow> ablation_run(const Dataset& dataset,
                                      std::span<const AblationConfig> configs,
                                      std::uint64_t seed, const EmbeddingProvider& provider,
                                      std::span<const Detection> detections = {});

/// `label,roi_source,hist_source,hist_bins,w_local,w_global,w_hist,rank1,rank10,probes`
void write_ablation_csv(std::ostream& out, std::span<const AblationConfig> configs,
                        std::span<const AblationRow> rows);

/// Array of {label, roi_source?, hist_source?, fusion: {local_dim?, global_dim?,
/// hist_bins?, weights?: {local, global, hist}}}.
std::vector<AblationConfig> parse_ablation_configs(const nlohmann::json& j);

/// Fixture fraud experiment: every enrolled vehicle's shot-0 claim goes into
/// an in-memory store; the later shots of duplicate vehicles are the
/// positives and the novel vehicles' claims the negatives. Scores are the
/// best fraud_check similarity under cross-vehicle search.
struct FraudExperiment {
  std::vector<double> positives;
  std::vector<double> negatives;
  std::vector<std::string> positive_ids;
  std::vector<std::string> negative_ids;
};
FraudExperiment run_fraud_experiment(const Dataset& dataset, const EmbeddingProvider& provider,
                                     const FusionConfig& fusion,
                                     HistSource hist_source = HistSource::full_body);

void to_json(nlohmann::json& j, const FusionConfig& c);
void from_json(const nlohmann::json& j, FusionConfig& c);

}  // namespace carguard
