#include <gtest/gtest.h>

#include "carguard/claim.hpp"
#include "carguard/error.hpp"
#include "test_util.hpp"

using namespace carguard;

TEST(Lifecycle, AllowedTransitions) {
  using S = ClaimStatus;
  const S all[] = {S::pending, S::settled, S::flagged, S::fraud_confirmed, S::cleared};
  auto expected = [](S from, S to) {
    return (from == S::pending && (to == S::settled || to == S::flagged)) ||
           (from == S::flagged && (to == S::fraud_confirmed || to == S::cleared)) ||
           (from == S::cleared && to == S::settled);
  };
  for (S a : all) {
    for (S b : all) {
      EXPECT_EQ(transition_allowed(a, b), expected(a, b))
          << to_string(a) << " -> " << to_string(b);
    }
  }
}

TEST(Lifecycle, TerminalStatesHaveNoExit) {
  for (auto s : {ClaimStatus::pending, ClaimStatus::settled, ClaimStatus::flagged,
                 ClaimStatus::fraud_confirmed, ClaimStatus::cleared}) {
    EXPECT_FALSE(transition_allowed(ClaimStatus::settled, s));
    EXPECT_FALSE(transition_allowed(ClaimStatus::fraud_confirmed, s));
  }
}

TEST(Enums, RoundTrip) {
  for (auto s : {ClaimStatus::pending, ClaimStatus::settled, ClaimStatus::flagged,
                 ClaimStatus::fraud_confirmed, ClaimStatus::cleared}) {
    EXPECT_EQ(parse_claim_status(to_string(s)), s);
  }
  for (auto c : {DamageClass::scratch, DamageClass::dent, DamageClass::crack}) {
    EXPECT_EQ(parse_damage_class(to_string(c)), c);
  }
  EXPECT_EQ(parse_evidence_kind("full_body"), EvidenceKind::full_body);
  EXPECT_EQ(parse_decision("fraud"), Decision::fraud);
  EXPECT_THROW(parse_claim_status("open"), Error);
  EXPECT_THROW(parse_damage_class("rust"), Error);
}

TEST(ClaimRecord, ValidRecordPasses) {
  EXPECT_NO_THROW(validate(testutil::claim_record("C1", "V1")));
}

namespace {
std::string field_of(const ClaimRecord& c) {
  try {
    validate(c);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::validation);
    return e.field();
  }
  return "<none>";
}
}  // namespace

TEST(ClaimRecord, InvariantViolations) {
  auto base = testutil::claim_record("C1", "V1");

  auto c = base;
  c.claim_id.clear();
  EXPECT_EQ(field_of(c), "claim_id");

  c = base;
  c.vehicle_id.clear();
  EXPECT_EQ(field_of(c), "vehicle_id");

  c = base;
  c.evidence[1].image_id = c.evidence[0].image_id;
  EXPECT_EQ(field_of(c), "image_id");

  c = base;
  c.evidence.erase(c.evidence.begin());
  EXPECT_EQ(field_of(c), "evidence");

  c = base;
  c.evidence.pop_back();
  EXPECT_EQ(field_of(c), "evidence");

  c = base;
  c.evidence[1].regions.clear();
  EXPECT_NE(field_of(c), "<none>");
}

TEST(DamageRegion, ConfidenceOnlyForDetector) {
  DamageRegion r{{0.5, 0.5, 0.2, 0.2}, DamageClass::crack, std::nullopt,
                 RegionSource::annotation};
  EXPECT_NO_THROW(validate(r));
  r.confidence = 0.9;
  EXPECT_THROW(validate(r), Error);
  r.source = RegionSource::detector;
  EXPECT_NO_THROW(validate(r));
  r.confidence.reset();
  EXPECT_THROW(validate(r), Error);
  r.confidence = 1.5;
  EXPECT_THROW(validate(r), Error);
}

TEST(ClaimRecord, JsonRoundTrip) {
  auto c = testutil::claim_record("C9", "V3");
  c.status = ClaimStatus::cleared;
  c.evidence[1].regions.push_back(
      {{0.2, 0.3, 0.1, 0.1}, DamageClass::scratch, 0.75, RegionSource::detector});
  c.adjudication = Adjudication{"rev-1", Decision::legitimate, "ok", from_millis(123456)};
  nlohmann::json j = c;
  EXPECT_EQ(j.get<ClaimRecord>(), c);
  EXPECT_EQ(c.find_image("C9_close"), &c.evidence[1]);
  EXPECT_EQ(c.find_image("nope"), nullptr);
}

TEST(GalleryFilter, Conjunction) {
  auto f = testutil::feature("C1", "V1", "i1", testutil::raw_descriptor({1.0f}), 1);
  EXPECT_TRUE(accepts({}, f, std::nullopt));
  GalleryFilter g;
  g.exclude_claim = "C1";
  EXPECT_FALSE(accepts(g, f, ClaimStatus::pending));
  g = {};
  g.only_vehicle = "V2";
  EXPECT_FALSE(accepts(g, f, ClaimStatus::pending));
  g = {};
  g.exclude_vehicle = "V1";
  EXPECT_FALSE(accepts(g, f, ClaimStatus::pending));
  g = {};
  g.status_in = std::vector{ClaimStatus::flagged};
  EXPECT_FALSE(accepts(g, f, ClaimStatus::pending));
  EXPECT_TRUE(accepts(g, f, ClaimStatus::flagged));
  EXPECT_FALSE(accepts(g, f, std::nullopt));
}
