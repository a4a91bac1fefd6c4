#include "carguard/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>

#include "carguard/ablation.hpp"
#include "carguard/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace carguard {
namespace {

fs::path resolve_against(const fs::path& base, const fs::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

template <class T>
T parse_number(const std::string& text, const char* key) {
  T value{};
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw Error(ErrorCode::config, std::string(key) + ": not a number: '" + text + "'", key);
  }
  return value;
}

double parse_double(const std::string& text, const char* key) {
  char* end = nullptr;
  double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size()) {
    throw Error(ErrorCode::config, std::string(key) + ": not a number: '" + text + "'", key);
  }
  return v;
}

}  // namespace

std::optional<std::string> process_env(std::string_view name) {
  if (const char* v = std::getenv(std::string(name).c_str())) return std::string(v);
  return std::nullopt;
}

Config config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::config, "config must be a JSON object", "config");
  Config c;
  std::string key;
  try {
    key = "bind_address";
    c.bind_address = j.value(key, c.bind_address);
    key = "port";
    c.port = j.value(key, c.port);
    key = "store_path";
    c.store_path = resolve_against(base_dir, j.value(key, c.store_path.string()));
    key = "policy";
    if (j.contains(key)) from_json(j.at(key), c.policy);
    key = "embedding";
    if (auto it = j.find(key); it != j.end()) {
      c.embedding.provider = it->value("provider", c.embedding.provider);
      c.embedding.sidecar = resolve_against(base_dir, it->value("sidecar", std::string()));
    }
    key = "fusion";
    if (auto it = j.find(key); it != j.end()) {
      from_json(*it, c.fusion);
      if (it->contains("hist_source")) {
        c.hist_source = parse_hist_source(it->at("hist_source").get<std::string>());
      }
    }
    key = "max_image_bytes";
    c.max_image_bytes = j.value(key, c.max_image_bytes);
    key = "detections_path";
    c.detections_path = resolve_against(base_dir, j.value(key, std::string()));
    key = "detector_min_confidence";
    c.detector_min_confidence = j.value(key, c.detector_min_confidence);
    key = "threads";
    c.threads = j.value(key, c.threads);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::config, key + ": " + e.what(), key);
  } catch (const Error& e) {
    throw Error(ErrorCode::config, key + ": " + e.what(), key);
  }
  return c;
}

json config_to_json(const Config& c) {
  json fusion = c.fusion;
  fusion["hist_source"] = to_string(c.hist_source);
  return {{"bind_address", c.bind_address},
          {"port", c.port},
          {"store_path", c.store_path.string()},
          {"policy", c.policy},
          {"embedding", {{"provider", c.embedding.provider}, {"sidecar", c.embedding.sidecar.string()}}},
          {"fusion", fusion},
          {"max_image_bytes", c.max_image_bytes},
          {"detections_path", c.detections_path.string()},
          {"detector_min_confidence", c.detector_min_confidence},
          {"threads", c.threads}};
}

void validate(const Config& c) {
  if (c.port < 0 || c.port > 65535) throw Error(ErrorCode::config, "port out of range", "port");
  if (c.max_image_bytes == 0) {
    throw Error(ErrorCode::config, "max_image_bytes must be positive", "max_image_bytes");
  }
  if (c.embedding.provider != "toy" && c.embedding.provider != "precomputed") {
    throw Error(ErrorCode::config, "embedding.provider must be toy or precomputed",
                "embedding.provider");
  }
  if (c.embedding.provider == "precomputed" && c.embedding.sidecar.empty()) {
    throw Error(ErrorCode::config, "embedding.sidecar is required for precomputed embeddings",
                "embedding.sidecar");
  }
  if (!(c.detector_min_confidence >= 0.0 && c.detector_min_confidence <= 1.0)) {
    throw Error(ErrorCode::config, "detector_min_confidence must lie in [0, 1]",
                "detector_min_confidence");
  }
  try {
    validate(c.policy);
    validate(c.fusion);
  } catch (const Error& e) {
    throw Error(ErrorCode::config, e.what(), e.field());
  }
}

Config load_config(const std::optional<fs::path>& path, const EnvLookup& env) {
  Config c;
  if (path) {
    std::ifstream in(*path);
    if (!in) throw Error(ErrorCode::config, "cannot open config " + path->string(), path->string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::config, path->string() + ": " + e.what(), path->string());
    }
    c = config_from_json(j, path->parent_path());
  }
  auto get = [&](const char* name) { return env ? env(name) : std::nullopt; };
  if (auto v = get("CARGUARD_BIND")) c.bind_address = *v;
  if (auto v = get("CARGUARD_PORT")) c.port = parse_number<int>(*v, "CARGUARD_PORT");
  if (auto v = get("CARGUARD_STORE")) c.store_path = *v;
  if (auto v = get("CARGUARD_THRESHOLD")) c.policy.threshold = parse_double(*v, "CARGUARD_THRESHOLD");
  if (auto v = get("CARGUARD_MODE")) {
    try {
      c.policy.mode = parse_fraud_mode(*v);
    } catch (const Error& e) {
      throw Error(ErrorCode::config, std::string("CARGUARD_MODE: ") + e.what(), "CARGUARD_MODE");
    }
  }
  if (auto v = get("CARGUARD_TOP_K")) c.policy.top_k = parse_number<std::size_t>(*v, "CARGUARD_TOP_K");
  if (auto v = get("CARGUARD_EMBEDDING_PROVIDER")) c.embedding.provider = *v;
  if (auto v = get("CARGUARD_EMBEDDING_SIDECAR")) c.embedding.sidecar = *v;
  if (auto v = get("CARGUARD_MAX_IMAGE_BYTES")) {
    c.max_image_bytes = parse_number<std::size_t>(*v, "CARGUARD_MAX_IMAGE_BYTES");
  }
  if (auto v = get("CARGUARD_DETECTIONS")) c.detections_path = *v;
  validate(c);
  return c;
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const Config& c) {
  if (c.embedding.provider == "toy") {
    return std::make_unique<ToyEmbeddingProvider>(c.fusion.local_dim, c.fusion.global_dim);
  }
  auto p = std::make_unique<PrecomputedEmbeddingProvider>(
      PrecomputedEmbeddingProvider::load(c.embedding.sidecar));
  const auto dim = p->dim(EmbedKind::local_roi);
  if (dim != c.fusion.local_dim || dim != c.fusion.global_dim) {
    throw Error(ErrorCode::config,
                "sidecar dimension " + std::to_string(dim) +
                    " does not match fusion.local_dim/global_dim",
                "fusion");
  }
  return p;
}

}  // namespace carguard
