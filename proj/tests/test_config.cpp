#include <gtest/gtest.h>

#include <fstream>

#include "carguard/config.hpp"
#include "carguard/error.hpp"
#include "test_util.hpp"

using namespace carguard;

namespace {

EnvLookup env_of(std::map<std::string, std::string> vars) {
  return [vars = std::move(vars)](std::string_view name) -> std::optional<std::string> {
    auto it = vars.find(std::string(name));
    if (it == vars.end()) return std::nullopt;
    return it->second;
  };
}

std::string field_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
    return e.field();
  }
  return "<none>";
}

}  // namespace

TEST(Config, Defaults) {
  auto c = load_config(std::nullopt, env_of({}));
  EXPECT_EQ(c.bind_address, "127.0.0.1");
  EXPECT_EQ(c.port, 8080);
  EXPECT_EQ(c.policy.threshold, kDefaultFraudThreshold);
  EXPECT_EQ(c.policy.mode, FraudMode::cross_vehicle);
  EXPECT_EQ(c.policy.top_k, 10u);
  EXPECT_EQ(c.fusion.total_dim(), 152u);
  EXPECT_EQ(c.hist_source, HistSource::full_body);
  EXPECT_EQ(c.max_image_bytes, kDefaultMaxImageBytes);
}

TEST(Config, FileThenEnv) {
  testutil::TempDir dir;
  {
    std::ofstream f(dir / "c.json");
    f << R"({"port": 9001, "store_path": "data/store", "policy": {"threshold": 0.9, "top_k": 3},
            "fusion": {"hist_bins": 16, "hist_source": "roi", "weights": {"local": 2, "global": 1, "hist": 0.5}},
            "detections_path": "det.txt"})";
  }
  auto c = load_config(dir / "c.json", env_of({}));
  EXPECT_EQ(c.port, 9001);
  EXPECT_EQ(c.store_path, dir / "data/store");
  EXPECT_EQ(c.detections_path, dir / "det.txt");
  EXPECT_EQ(c.policy.threshold, 0.9);
  EXPECT_EQ(c.policy.top_k, 3u);
  EXPECT_EQ(c.fusion.hist_bins, 16);
  EXPECT_EQ(c.fusion.weights.local, 2.0);
  EXPECT_EQ(c.hist_source, HistSource::roi);

  auto e = load_config(dir / "c.json", env_of({{"CARGUARD_PORT", "7000"},
                                               {"CARGUARD_THRESHOLD", "0.5"},
                                               {"CARGUARD_MODE", "same_vehicle"},
                                               {"CARGUARD_TOP_K", "7"},
                                               {"CARGUARD_STORE", "/tmp/s"},
                                               {"CARGUARD_BIND", "0.0.0.0"},
                                               {"CARGUARD_MAX_IMAGE_BYTES", "1000"}}));
  EXPECT_EQ(e.port, 7000);
  EXPECT_EQ(e.policy.threshold, 0.5);
  EXPECT_EQ(e.policy.mode, FraudMode::same_vehicle);
  EXPECT_EQ(e.policy.top_k, 7u);
  EXPECT_EQ(e.store_path, "/tmp/s");
  EXPECT_EQ(e.bind_address, "0.0.0.0");
  EXPECT_EQ(e.max_image_bytes, 1000u);
  EXPECT_EQ(e.fusion.hist_bins, 16);  // untouched by env

  auto round = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(round), config_to_json(c));
}

TEST(Config, ErrorsNameTheKey) {
  testutil::TempDir dir;
  EXPECT_EQ(field_of([&] { load_config(dir / "missing.json", env_of({})); }),
            (dir / "missing.json").string());
  EXPECT_EQ(field_of([] { load_config(std::nullopt, env_of({{"CARGUARD_PORT", "80x"}})); }),
            "CARGUARD_PORT");
  EXPECT_EQ(field_of([] { load_config(std::nullopt, env_of({{"CARGUARD_THRESHOLD", "2"}})); }),
            "threshold");
  EXPECT_EQ(field_of([] { load_config(std::nullopt, env_of({{"CARGUARD_MODE", "all"}})); }),
            "CARGUARD_MODE");
  EXPECT_EQ(field_of([] { load_config(std::nullopt, env_of({{"CARGUARD_EMBEDDING_PROVIDER", "vgg"}})); }),
            "embedding.provider");
  EXPECT_EQ(field_of([] { load_config(std::nullopt, env_of({{"CARGUARD_EMBEDDING_PROVIDER", "precomputed"}})); }),
            "embedding.sidecar");
  EXPECT_EQ(field_of([] { config_from_json(nlohmann::json::parse(R"({"port": "x"})")); }), "port");
  EXPECT_EQ(field_of([] { config_from_json(nlohmann::json::parse(R"({"fusion": {"hist_source": "x"}})")); }),
            "fusion");
  {
    std::ofstream f(dir / "bad.json");
    f << "{not json";
  }
  EXPECT_NE(field_of([&] { load_config(dir / "bad.json", env_of({})); }), "<none>");
}

TEST(Config, ProviderFactory) {
  Config c;
  auto toy = make_embedding_provider(c);
  EXPECT_EQ(toy->dim(EmbedKind::local_roi), 64u);

  testutil::TempDir dir;
  write_embedding_sidecar(dir / "e.cge", 8, {{"x", std::vector<float>(8, 1.0f)}});
  c.embedding = {"precomputed", dir / "e.cge"};
  EXPECT_EQ(field_of([&] { make_embedding_provider(c); }), "fusion");
  c.fusion.local_dim = 8;
  c.fusion.global_dim = 8;
  auto pre = make_embedding_provider(c);
  EXPECT_EQ(pre->dim(EmbedKind::global_body), 8u);
}
