#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "carguard/features.hpp"
#include "carguard/matcher.hpp"

namespace carguard {

inline constexpr std::size_t kDefaultMaxImageBytes = 10u * 1024u * 1024u;

struct EmbeddingSettings {
  /// "toy" or "precomputed".
  std::string provider = "toy";
  std::filesystem::path sidecar;
};

/// Shared by the service and the CLI. Loaded from one JSON file, then
/// CARGUARD_* environment variables override individual keys.
struct Config {
  std::string bind_address = "127.0.0.1";
  int port = 8080;
  std::filesystem::path store_path = "store";
  FraudPolicy policy;
  EmbeddingSettings embedding;
  FusionConfig fusion;
  HistSource hist_source = HistSource::full_body;
  std::size_t max_image_bytes = kDefaultMaxImageBytes;
  /// Detector sidecar used when a submitted close-up carries no regions.
  std::filesystem::path detections_path;
  double detector_min_confidence = 0.5;
  /// Server worker threads; 0 = library default.
  unsigned threads = 0;
};

using EnvLookup = std::function<std::optional<std::string>(std::string_view)>;

/// Reads the process environment.
std::optional<std::string> process_env(std::string_view name);

/// Defaults, then `path` (if given), then env overrides:
///   CARGUARD_BIND, CARGUARD_PORT, CARGUARD_STORE, CARGUARD_THRESHOLD,
///   CARGUARD_MODE, CARGUARD_TOP_K, CARGUARD_EMBEDDING_PROVIDER,
///   CARGUARD_EMBEDDING_SIDECAR, CARGUARD_MAX_IMAGE_BYTES, CARGUARD_DETECTIONS.
/// Relative paths in the file resolve against the file's directory.
/// Throws Error(config) naming the offending key.
Config load_config(const std::optional<std::filesystem::path>& path,
                   const EnvLookup& env = process_env);

Config config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json config_to_json(const Config& c);
void validate(const Config& c);

/// Builds the configured provider. For "precomputed" the sidecar dimension
/// must match fusion.local_dim and fusion.global_dim.
std::unique_ptr<EmbeddingProvider> make_embedding_provider(const Config& c);

}  // namespace carguard
