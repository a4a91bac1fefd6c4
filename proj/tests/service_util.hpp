#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "carguard/claimstore.hpp"
#include "carguard/imaging.hpp"
#include "carguard/service.hpp"

namespace testutil {

/// Local embeddings looked up by close-up id, so tests choose similarities
/// exactly. Global embeddings are constant.
class TableProvider final : public carguard::EmbeddingProvider {
 public:
  explicit TableProvider(std::map<std::string, std::vector<double>> local)
      : local_(std::move(local)) {}
  std::size_t dim(carguard::EmbedKind) const override { return 4; }
  carguard::EmbeddingVector embed(const carguard::ImageBuffer&, std::string_view image_id,
                                  carguard::EmbedKind kind) const override {
    if (kind == carguard::EmbedKind::global_body) return {{1, 0, 0, 0}};
    auto it = local_.find(std::string(image_id));
    if (it == local_.end()) {
      throw carguard::Error(carguard::ErrorCode::missing_embedding, "no vector", std::string(image_id));
    }
    return {it->second};
  }

 private:
  std::map<std::string, std::vector<double>> local_;
};

/// Unit vectors at cosine 1, .99, .9, .8 to "a", pairwise below .9.
inline std::map<std::string, std::vector<double>> queue_vectors() {
  return {{"a", {1, 0, 0, 0}},
          {"b", {0.99, std::sqrt(1 - 0.99 * 0.99), 0, 0}},
          {"c", {0.9, 0, std::sqrt(1 - 0.81), 0}},
          {"d", {0.8, 0, 0, 0.6}}};
}

inline carguard::Config table_config() {
  carguard::Config c;
  c.fusion = carguard::FusionConfig{4, 4, 0, {1, 0, 0}};
  c.policy.threshold = 0.75;
  return c;
}

inline std::string tiny_png_base64(std::uint8_t shade = 128) {
  auto png = carguard::encode_png(carguard::ImageBuffer(8, 8, {shade, shade, shade}));
  return carguard::encode_base64(png);
}

/// Body shot plus one close-up whose id picks the local vector.
inline carguard::SubmissionRequest table_request(const std::string& vehicle,
                                                 const std::string& close_id) {
  carguard::SubmissionRequest r;
  r.vehicle_id = vehicle;
  carguard::EvidenceInput body{"body", carguard::EvidenceKind::full_body, tiny_png_base64(), {}, {}};
  carguard::EvidenceInput close{close_id, carguard::EvidenceKind::close_up, tiny_png_base64(90), {},
                                {{{0.5, 0.5, 0.5, 0.5}, carguard::DamageClass::dent, std::nullopt,
                                  carguard::RegionSource::annotation}}};
  r.evidence = {body, close};
  return r;
}

inline carguard::StoreOptions quiet_store_options() {
  carguard::StoreOptions o;
  o.durable = false;
  o.clock = [] { return carguard::from_millis(1'700'000'000'000); };
  return o;
}

}  // namespace testutil
