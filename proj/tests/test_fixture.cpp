#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "carguard/ablation.hpp"
#include "carguard/dataset.hpp"
#include "carguard/error.hpp"
#include "carguard/fixture.hpp"
#include "carguard/imaging.hpp"
#include "det_oracle.hpp"
#include "test_util.hpp"

using namespace carguard;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::vector<std::uint8_t>> tree_bytes(const fs::path& root) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file_bytes(e.path());
  }
  return out;
}

FixtureSpec small_spec(std::uint64_t seed) {
  FixtureSpec s;
  s.seed = seed;
  s.vehicles = 6;
  s.novel_claims = 3;
  return s;
}

}  // namespace

TEST(Fixture, ByteIdenticalAcrossRuns) {
  testutil::TempDir a, b, c;
  generate_fixture(small_spec(3), a.path());
  generate_fixture(small_spec(3), b.path());
  generate_fixture(small_spec(4), c.path());
  auto ta = tree_bytes(a.path());
  EXPECT_EQ(ta, tree_bytes(b.path()));
  EXPECT_NE(ta.at("manifest.json"), tree_bytes(c.path()).at("manifest.json"));
}

TEST(Fixture, ManifestShapeAndImages) {
  testutil::TempDir dir;
  auto spec = small_spec(5);
  spec.duplicate_pairs = 4;
  auto d = generate_fixture(spec, dir.path());
  auto loaded = load_manifest(dir / "manifest.json");
  EXPECT_EQ(manifest_to_json(loaded), manifest_to_json(d));
  ASSERT_EQ(d.vehicles.size(), 6u);
  ASSERT_EQ(d.novel.size(), 3u);
  EXPECT_EQ(d.duplicate_pairs.size(), 4u);
  EXPECT_EQ(d.close_ups().size(), 12u);
  EXPECT_EQ(d.all_images().size(), 24u);
  for (const auto& v : d.vehicles) {
    ASSERT_EQ(v.images.size(), 4u);
    for (const auto& img : v.images) {
      auto px = read_image(d.resolve(img));
      if (img.kind == EvidenceKind::close_up) {
        EXPECT_EQ(px.width, spec.close_width);
        ASSERT_EQ(img.regions.size(), 1u);
        EXPECT_NO_THROW(validate(img.regions[0]));
      } else {
        EXPECT_EQ(px.width, spec.body_width);
        EXPECT_TRUE(img.regions.empty());
      }
    }
    auto claim = d.claim_for_shot(v, 1, "X");
    EXPECT_NO_THROW(validate(claim));
  }
  // Ground truth covers novel vehicles too.
  EXPECT_EQ(d.ground_truth().size(), 15u);
  EXPECT_EQ(load_annotations(dir / "annotations.txt"), d.ground_truth());
}

TEST(Fixture, DetectionsOverlapGroundTruth) {
  testutil::TempDir dir;
  auto d = generate_fixture(small_spec(6), dir.path());
  auto gts = d.ground_truth();
  auto dets = load_detections(dir / "detections.txt");
  std::map<std::string, NormalizedBBox> gt_by_image;
  for (auto& g : gts) gt_by_image[g.image_id] = g.bbox;
  std::size_t strong = 0;
  for (auto& det : dets) {
    ASSERT_TRUE(gt_by_image.contains(det.image_id));
    double v = testutil::corner_iou(det.bbox, gt_by_image[det.image_id]);
    if (det.confidence >= 0.5) {
      EXPECT_GE(v, 0.7) << det.image_id;
      ++strong;
    } else {
      EXPECT_LT(det.confidence, 0.5);
    }
  }
  EXPECT_EQ(strong, gts.size());  // one confident hit per damage
}

TEST(Fixture, SelfCheckPassesAtDefaultScale) {
  const auto& root = testutil::shared_fixture(7);
  auto d = load_manifest(root / "manifest.json");
  EXPECT_TRUE(d.self_check.at("passed").get<bool>());
  EXPECT_GT(d.self_check.at("pair_min").get<double>(), d.self_check.at("non_pair_p95").get<double>());
}

TEST(Fixture, ValidatesSpec) {
  testutil::TempDir dir;
  FixtureSpec s;
  s.vehicles = 1;
  EXPECT_THROW(generate_fixture(s, dir.path()), Error);
  s = {};
  s.perturbation.crop_jitter_frac = 0.3;
  EXPECT_THROW(generate_fixture(s, dir.path()), Error);
}

// The shipped default threshold is the calibration midpoint on seed 1001.
TEST(Calibration, ReproducesDefaultThreshold) {
  const auto& root = testutil::shared_fixture(1001);
  auto d = load_manifest(root / "manifest.json");
  ToyEmbeddingProvider toy;
  auto exp = run_fraud_experiment(d, toy, FusionConfig{});
  ASSERT_EQ(exp.positives.size(), 50u);
  ASSERT_EQ(exp.negatives.size(), 50u);
  auto c = calibrate_threshold(exp.positives, exp.negatives);
  EXPECT_TRUE(c.separable);
  EXPECT_NEAR(c.threshold, kDefaultFraudThreshold, 1e-5);
}

TEST(Dataset, DescriberRoiSources) {
  testutil::TempDir dir;
  auto d = generate_fixture(small_spec(8), dir.path());
  ToyEmbeddingProvider toy;
  DatasetDescriber desc(d, toy);
  auto id = d.vehicles[0].images[1].image_id;
  EXPECT_EQ(desc.roi_for(id, RoiSource::annotation), d.vehicles[0].images[1].regions[0].bbox);
  EXPECT_THROW(desc.roi_for(id, RoiSource::detector), Error);
  desc.set_detections(load_detections(dir / "detections.txt"));
  EXPECT_GE(iou(desc.roi_for(id, RoiSource::detector), desc.roi_for(id, RoiSource::annotation)), 0.7);
  auto fd = desc.describe(id, FusionConfig{}, HistSource::full_body, RoiSource::annotation);
  EXPECT_EQ(fd.values.size(), 152u);
  EXPECT_THROW(desc.describe(d.vehicles[0].images[0].image_id, FusionConfig{},
                             HistSource::full_body, RoiSource::annotation),
               Error);
  EXPECT_THROW(desc.roi_for("nope", RoiSource::annotation), Error);
}

TEST(Ablation, ConfigsParseAndCsvHeader) {
  auto defaults = default_ablation_configs();
  EXPECT_EQ(defaults.size(), 10u);
  auto j = nlohmann::json::parse(R"([
    {"label": "g", "fusion": {"hist_bins": 0, "weights": {"local": 0, "global": 1, "hist": 0}}},
    {"label": "d", "roi_source": "detector", "hist_source": "roi"}
  ])");
  auto cfgs = parse_ablation_configs(j);
  ASSERT_EQ(cfgs.size(), 2u);
  EXPECT_EQ(cfgs[0].fusion.hist_bins, 0);
  EXPECT_EQ(cfgs[0].fusion.weights.local, 0.0);
  EXPECT_EQ(cfgs[1].roi_source, RoiSource::detector);
  EXPECT_EQ(cfgs[1].hist_source, HistSource::roi);
  EXPECT_THROW(parse_ablation_configs(nlohmann::json::parse(R"([{"roi_source": "x"}])")), Error);

  std::vector<AblationRow> rows = {{"g", 0.5, 1.0, 2}, {"d", 0.25, 0.75, 2}};
  std::stringstream out;
  write_ablation_csv(out, cfgs, rows);
  std::string header;
  std::getline(out, header);
  EXPECT_EQ(header, "label,roi_source,hist_source,hist_bins,w_local,w_global,w_hist,rank1,rank10,probes");
}

TEST(Ablation, DetectorRowsNeedDetections) {
  testutil::TempDir dir;
  auto d = generate_fixture(small_spec(9), dir.path());
  ToyEmbeddingProvider toy;
  auto cfgs = default_ablation_configs();
  EXPECT_THROW(ablation_run(d, cfgs, 1, toy), Error);
  auto dets = load_detections(dir / "detections.txt");
  auto rows = ablation_run(d, cfgs, 1, toy, dets);
  ASSERT_EQ(rows.size(), cfgs.size());
  for (auto& r : rows) {
    EXPECT_EQ(r.probes, 6u);
    EXPECT_LE(r.rank1, r.rank10);
  }
}
