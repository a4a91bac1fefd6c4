#include "carguard/ablation.hpp"

#include <cstdio>
#include <ostream>

#include "carguard/claimstore.hpp"
#include "carguard/error.hpp"
#include "carguard/retrieval_metrics.hpp"

namespace carguard {

std::vector<AblationConfig> default_ablation_configs(std::size_t local_dim,
                                                     std::size_t global_dim) {
  auto make = [&](std::string label, int bins, BlockWeights w, RoiSource roi) {
    AblationConfig c;
    c.label = std::move(label);
    c.fusion.local_dim = local_dim;
    c.fusion.global_dim = global_dim;
    c.fusion.hist_bins = bins;
    c.fusion.weights = w;
    c.roi_source = roi;
    return c;
  };
  std::vector<AblationConfig> out;
  for (auto roi : {RoiSource::annotation, RoiSource::detector}) {
    const std::string suffix = roi == RoiSource::annotation ? "" : "@detector";
    out.push_back(make("global_only" + suffix, 8, {0, 1, 0}, roi));
    out.push_back(make("global_local" + suffix, 8, {1, 1, 0}, roi));
    for (int bins : {8, 16, 32}) {
      out.push_back(make("fused_" + std::to_string(bins) + suffix, bins, {1, 1, 1}, roi));
    }
  }
  return out;
}

std::vector<AblationRow> ablation_run(const Dataset& dataset,
                                      std::span<const AblationConfig> configs,
                                      std::uint64_t seed, const EmbeddingProvider& provider,
                                      std::span<const Detection> detections) {
  for (const auto& c : configs) {
    validate(c.fusion);
    if (c.roi_source == RoiSource::detector && detections.empty()) {
      throw Error(ErrorCode::config,
                  "config " + c.label + " uses detector ROIs but no detections were supplied",
                  "detections");
    }
  }
  const auto close_ups = dataset.close_ups();
  const auto split = make_probe_gallery(close_ups, seed);
  DatasetDescriber describer(dataset, provider);
  if (!detections.empty()) {
    describer.set_detections(std::vector<Detection>(detections.begin(), detections.end()));
  }
  std::vector<AblationRow> rows;
  for (const auto& c : configs) {
    auto curve = cmc(split.probes, split.gallery, 10, [&](const ImageRef& ref) {
      return describer.describe(ref.image_id, c.fusion, c.hist_source, c.roi_source);
    });
    rows.push_back({c.label, curve.rank(1), curve.rank(10), curve.probe_count});
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, std::span<const AblationConfig> configs,
                        std::span<const AblationRow> rows) {
  if (configs.size() != rows.size()) {
    throw Error(ErrorCode::internal, "ablation rows do not match configs");
  }
  out << "label,roi_source,hist_source,hist_bins,w_local,w_global,w_hist,rank1,rank10,probes\n";
  char buf[160];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& c = configs[i];
    const auto& w = c.fusion.weights;
    std::snprintf(buf, sizeof buf, ",%s,%s,%d,%.6f,%.6f,%.6f,%.6f,%.6f,%zu\n",
                  std::string(to_string(c.roi_source)).c_str(),
                  std::string(to_string(c.hist_source)).c_str(), c.fusion.hist_bins, w.local,
                  w.global, w.hist, rows[i].rank1, rows[i].rank10, rows[i].probes);
    out << rows[i].label << buf;
  }
}

FraudExperiment run_fraud_experiment(const Dataset& dataset, const EmbeddingProvider& provider,
                                     const FusionConfig& fusion, HistSource hist_source) {
  DatasetDescriber describer(dataset, provider);
  auto describe_claim = [&](const ClaimRecord& claim) {
    std::vector<ClaimDescriptor> out;
    for (const auto& e : claim.evidence) {
      if (e.kind != EvidenceKind::close_up) continue;
      out.push_back({e.image_id,
                     describer.describe(e.image_id, fusion, hist_source, RoiSource::annotation)});
    }
    return out;
  };
  auto store = ClaimStore::in_memory(fusion, {[] { return from_millis(0); }, false});
  for (const auto& v : dataset.vehicles) {
    auto claim = dataset.claim_for_shot(v, 0, v.vehicle_id + "-0");
    auto descriptors = describe_claim(claim);
    store.enroll_claim(std::move(claim), descriptors);
  }
  const auto snap = store.snapshot();
  FraudPolicy policy;
  auto best = [&](const ClaimRecord& claim) {
    std::vector<FusedDescriptor> probe;
    for (auto& d : describe_claim(claim)) probe.push_back(std::move(d.descriptor));
    auto a = fraud_check(claim, probe, *snap, policy);
    return a.best ? a.best->similarity : 0.0;
  };
  FraudExperiment out;
  for (const auto& pair : dataset.duplicate_pairs) {
    auto [vehicle, img] = dataset.find_image(pair.duplicate);
    if (!vehicle || !img) {
      throw Error(ErrorCode::validation, "duplicate " + pair.duplicate + " not in manifest",
                  pair.duplicate);
    }
    auto id = vehicle->vehicle_id + "-" + std::to_string(img->shot);
    out.positives.push_back(best(dataset.claim_for_shot(*vehicle, img->shot, id)));
    out.positive_ids.push_back(pair.duplicate);
  }
  for (const auto& v : dataset.novel) {
    out.negatives.push_back(best(dataset.claim_for_shot(v, 0, v.vehicle_id + "-0")));
    out.negative_ids.push_back(v.vehicle_id);
  }
  return out;
}

void to_json(nlohmann::json& j, const FusionConfig& c) {
  j = {{"local_dim", c.local_dim},
       {"global_dim", c.global_dim},
       {"hist_bins", c.hist_bins},
       {"weights", {{"local", c.weights.local}, {"global", c.weights.global}, {"hist", c.weights.hist}}}};
}

void from_json(const nlohmann::json& j, FusionConfig& c) {
  c.local_dim = j.value("local_dim", c.local_dim);
  c.global_dim = j.value("global_dim", c.global_dim);
  c.hist_bins = j.value("hist_bins", c.hist_bins);
  if (auto it = j.find("weights"); it != j.end()) {
    c.weights.local = it->value("local", c.weights.local);
    c.weights.global = it->value("global", c.weights.global);
    c.weights.hist = it->value("hist", c.weights.hist);
  }
}

std::vector<AblationConfig> parse_ablation_configs(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(ErrorCode::config, "ablation configs must be a JSON array", "configs");
  std::vector<AblationConfig> out;
  try {
    for (const auto& jc : j) {
      AblationConfig c;
      c.label = jc.at("label").get<std::string>();
      c.roi_source = parse_roi_source(jc.value("roi_source", std::string("annotation")));
      c.hist_source = parse_hist_source(jc.value("hist_source", std::string("full_body")));
      if (jc.contains("fusion")) c.fusion = jc.at("fusion").get<FusionConfig>();
      validate(c.fusion);
      out.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::config, std::string("ablation config: ") + e.what(), "configs");
  }
  return out;
}

}  // namespace carguard
