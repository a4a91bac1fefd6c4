#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <random>
#include <thread>

#include "carguard/claimstore.hpp"
#include "carguard/error.hpp"
#include "carguard/imaging.hpp"
#include "test_util.hpp"

using namespace carguard;
namespace fs = std::filesystem;

namespace {

FusionConfig small_layout() { return FusionConfig{4, 3, 1, {1.0, 0.5, 0.25}}; }

StoreOptions fixed_clock(bool durable = false) {
  StoreOptions o;
  o.durable = durable;
  auto t = std::make_shared<std::int64_t>(1'000);
  o.clock = [t] { return from_millis((*t)++); };
  return o;
}

std::vector<ClaimDescriptor> descriptors_for(const ClaimRecord& c, std::mt19937_64& rng,
                                             const FusionConfig& layout) {
  std::vector<ClaimDescriptor> out;
  for (const auto& e : c.evidence) {
    if (e.kind != EvidenceKind::close_up) continue;
    std::vector<float> v;
    for (double x : testutil::random_vector(rng, layout.total_dim())) v.push_back(float(x));
    out.push_back({e.image_id, {layout, v}});
  }
  return out;
}

// Claims C0..C(n-1); a few move through the lifecycle.
void populate(ClaimStore& s, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (int i = 0; i < n; ++i) {
    auto c = testutil::claim_record("C" + std::to_string(i), "V" + std::to_string(i % 5));
    s.enroll_claim(c, descriptors_for(c, rng, s.layout()), i % 4 == 3);
  }
  s.set_status("C0", ClaimStatus::settled);
  if (n > 3) {
    s.set_status("C3", ClaimStatus::cleared,
                 Adjudication{"r1", Decision::legitimate, "fine", from_millis(77)});
  }
}

std::vector<std::uint8_t> bytes_of(const fs::path& p) { return read_file_bytes(p); }

}  // namespace

TEST(ClaimStore, EnrollAndGet) {
  auto s = ClaimStore::in_memory(small_layout(), fixed_clock());
  std::mt19937_64 rng(1);
  auto c = testutil::claim_record("C1", "V1");
  EXPECT_EQ(s.enroll_claim(c, descriptors_for(c, rng, s.layout())), "C1");
  auto got = s.get_claim("C1");
  EXPECT_EQ(got.status, ClaimStatus::pending);
  EXPECT_EQ(got.evidence, c.evidence);
  auto g = s.list_gallery();
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g[0].image_id, "C1_close");
  EXPECT_EQ(g[0].enrollment_seq, 1u);
  EXPECT_EQ(g[0].enrolled_at, from_millis(1000));
  EXPECT_TRUE(s.contains("C1"));
  EXPECT_FALSE(s.contains("C2"));
}

TEST(ClaimStore, Errors) {
  auto s = ClaimStore::in_memory(small_layout(), fixed_clock());
  std::mt19937_64 rng(1);
  auto c = testutil::claim_record("C1", "V1");
  s.enroll_claim(c, descriptors_for(c, rng, s.layout()));

  auto code = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::internal;
  };
  EXPECT_EQ(code([&] { s.enroll_claim(c, descriptors_for(c, rng, s.layout())); }),
            ErrorCode::duplicate);
  EXPECT_EQ(code([&] { s.get_claim("nope"); }), ErrorCode::not_found);
  EXPECT_EQ(code([&] { s.set_status("C1", ClaimStatus::cleared); }), ErrorCode::conflict);
  EXPECT_EQ(code([&] { s.set_status("nope", ClaimStatus::settled); }), ErrorCode::not_found);

  auto c2 = testutil::claim_record("C2", "V1");
  std::vector<ClaimDescriptor> bad = {{"C2_close", {FusionConfig{}, std::vector<float>(152)}}};
  EXPECT_EQ(code([&] { s.enroll_claim(c2, bad); }), ErrorCode::layout_mismatch);
  auto wrong_image = descriptors_for(c2, rng, s.layout());
  wrong_image[0].image_id = "C2_body";
  EXPECT_EQ(code([&] { s.enroll_claim(c2, wrong_image); }), ErrorCode::validation);
  // Failed enrollments leave no trace.
  EXPECT_FALSE(s.contains("C2"));
  EXPECT_EQ(s.list_gallery().size(), 1u);
  EXPECT_EQ(s.snapshot()->next_seq, 2u);
}

TEST(ClaimStore, FlaggedEnrollmentIsAudited) {
  auto s = ClaimStore::in_memory(small_layout(), fixed_clock());
  std::mt19937_64 rng(1);
  auto c = testutil::claim_record("C1", "V1");
  s.enroll_claim(c, descriptors_for(c, rng, s.layout()), true);
  auto snap = s.snapshot();
  EXPECT_EQ(snap->claims.at("C1").status, ClaimStatus::flagged);
  ASSERT_EQ(snap->audit.size(), 1u);
  EXPECT_EQ(snap->audit[0].from, ClaimStatus::pending);
  EXPECT_EQ(snap->audit[0].to, ClaimStatus::flagged);
  EXPECT_EQ(snap->event_count, 1u);
}

TEST(ClaimStore, LifecycleAndAdjudication) {
  auto s = ClaimStore::in_memory(small_layout(), fixed_clock());
  populate(s, 4, 2);
  auto c3 = s.get_claim("C3");
  EXPECT_EQ(c3.status, ClaimStatus::cleared);
  ASSERT_TRUE(c3.adjudication);
  EXPECT_EQ(c3.adjudication->reviewer_id, "r1");
  s.set_status("C3", ClaimStatus::settled);
  EXPECT_EQ(s.get_claim("C3").status, ClaimStatus::settled);
  EXPECT_THROW(s.set_status("C3", ClaimStatus::pending), Error);
}

TEST(ClaimStore, SnapshotsAreImmutable) {
  auto s = ClaimStore::in_memory(small_layout(), fixed_clock());
  populate(s, 2, 3);
  auto before = s.snapshot();
  auto copy = *before;
  std::mt19937_64 rng(9);
  auto c = testutil::claim_record("C9", "V9");
  s.enroll_claim(c, descriptors_for(c, rng, s.layout()));
  EXPECT_EQ(*before, copy);
  EXPECT_NE(*s.snapshot(), copy);
}

TEST(ClaimStore, GalleryFilters) {
  auto s = ClaimStore::in_memory(small_layout(), fixed_clock());
  populate(s, 10, 4);
  GalleryFilter f;
  f.only_vehicle = "V2";
  for (auto& g : s.list_gallery(f)) EXPECT_EQ(g.vehicle_id, "V2");
  EXPECT_EQ(s.list_gallery(f).size(), 2u);
  f = {};
  f.status_in = std::vector{ClaimStatus::flagged};
  EXPECT_EQ(s.list_gallery(f).size(), 1u);  // C7 (C3 was cleared)
  auto all = s.list_gallery();
  for (std::size_t i = 1; i < all.size(); ++i) {
    EXPECT_LT(all[i - 1].enrollment_seq, all[i].enrollment_seq);
  }
}

TEST(ClaimStore, ReopenEqualsInMemory) {
  testutil::TempDir dir;
  auto mem = ClaimStore::in_memory(small_layout(), fixed_clock());
  populate(mem, 12, 5);
  {
    auto disk = ClaimStore::open(dir / "s", small_layout(), fixed_clock(true));
    populate(disk, 12, 5);
    EXPECT_EQ(*disk.snapshot(), *mem.snapshot());
  }
  auto again = ClaimStore::open(dir / "s", std::nullopt, fixed_clock());
  EXPECT_EQ(*again.snapshot(), *mem.snapshot());
  EXPECT_EQ(ClaimStore::rebuild_from_log(dir / "s"), *mem.snapshot());
}

TEST(ClaimStore, CompactThenReopen) {
  testutil::TempDir dir;
  StoreState expected;
  {
    auto s = ClaimStore::open(dir / "s", small_layout(), fixed_clock());
    populate(s, 6, 6);
    s.compact();
    std::mt19937_64 rng(1);
    auto c = testutil::claim_record("C50", "V50");
    s.enroll_claim(c, descriptors_for(c, rng, s.layout()));
    expected = *s.snapshot();
  }
  EXPECT_TRUE(fs::exists(dir / "s" / "snapshot.bin"));
  auto s = ClaimStore::open(dir / "s");
  EXPECT_EQ(*s.snapshot(), expected);
  // A stale or damaged snapshot falls back to the log.
  {
    std::ofstream f(dir / "s" / "snapshot.bin", std::ios::binary | std::ios::trunc);
    f << "garbage";
  }
  EXPECT_EQ(*ClaimStore::open(dir / "s").snapshot(), expected);
}

TEST(ClaimStore, TornTailIsDropped) {
  testutil::TempDir dir;
  StoreState after_two;
  {
    auto s = ClaimStore::open(dir / "s", small_layout(), fixed_clock());
    std::mt19937_64 rng(1);
    for (int i = 0; i < 3; ++i) {
      auto c = testutil::claim_record("C" + std::to_string(i), "V");
      s.enroll_claim(c, descriptors_for(c, rng, s.layout()));
      if (i == 1) after_two = *s.snapshot();
    }
  }
  auto log = dir / "s" / "log.bin";
  auto size = fs::file_size(log);
  fs::resize_file(log, size - 5);  // crash mid-append of the third event
  auto s = ClaimStore::open(dir / "s");
  EXPECT_EQ(*s.snapshot(), after_two);
  EXPECT_EQ(read_feature_matrix(dir / "s" / "features.f32").rows.size(), 2u);
  // The store keeps working after recovery.
  std::mt19937_64 rng(2);
  auto c = testutil::claim_record("C2", "V");
  s.enroll_claim(c, descriptors_for(c, rng, s.layout()));
  EXPECT_EQ(ClaimStore::open(dir / "s").snapshot()->claims.size(), 3u);
}

TEST(ClaimStore, MidLogCorruptionIsReported) {
  testutil::TempDir dir;
  {
    auto s = ClaimStore::open(dir / "s", small_layout(), fixed_clock());
    populate(s, 3, 7);
  }
  auto log = dir / "s" / "log.bin";
  auto bytes = bytes_of(log);
  bytes[bytes.size() / 2] ^= 0x5a;
  {
    std::ofstream f(log, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    ClaimStore::open(dir / "s");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::corrupt);
  }
}

TEST(ClaimStore, LayoutChecks) {
  testutil::TempDir dir;
  EXPECT_THROW(ClaimStore::open(dir / "new"), Error);
  { ClaimStore::open(dir / "s", small_layout()); }
  try {
    ClaimStore::open(dir / "s", FusionConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::layout_mismatch);
  }
}

// Byte layout written independently: magic, u32 block count, (u32 dim, f32
// weight) per block, then rows of f32, all little-endian.
TEST(FeatureFile, ExactBytes) {
  testutil::TempDir dir;
  auto layout = small_layout();
  auto s = ClaimStore::open(dir / "s", layout, fixed_clock());
  std::mt19937_64 rng(8);
  std::vector<std::vector<float>> rows;
  for (int i = 0; i < 3; ++i) {
    auto c = testutil::claim_record("C" + std::to_string(i), "V");
    auto d = descriptors_for(c, rng, layout);
    rows.push_back(d[0].descriptor.values);
    s.enroll_claim(c, d);
  }
  std::vector<std::uint8_t> expect = {'C', 'G', 'F', '1', 3, 0, 0, 0};
  auto put = [&](const void* p, std::size_t n) {
    auto b = static_cast<const std::uint8_t*>(p);
    expect.insert(expect.end(), b, b + n);
  };
  const std::uint32_t dims[3] = {4, 3, 3};
  const float w[3] = {1.0f, 0.5f, 0.25f};
  for (int b = 0; b < 3; ++b) {
    put(&dims[b], 4);
    put(&w[b], 4);
  }
  for (auto& r : rows) put(r.data(), r.size() * 4);
  EXPECT_EQ(bytes_of(dir / "s" / "features.f32"), expect);

  auto m = read_feature_matrix(dir / "s" / "features.f32");
  EXPECT_TRUE(same_layout(m.layout, layout));
  EXPECT_EQ(m.rows, rows);
}

TEST(FeatureFile, RebuiltWhenMissing) {
  testutil::TempDir dir;
  {
    auto s = ClaimStore::open(dir / "s", small_layout(), fixed_clock());
    populate(s, 4, 9);
  }
  auto before = bytes_of(dir / "s" / "features.f32");
  fs::remove(dir / "s" / "features.f32");
  ClaimStore::open(dir / "s");
  EXPECT_EQ(bytes_of(dir / "s" / "features.f32"), before);
}

TEST(ClaimStore, ConcurrentReadersDuringWrites) {
  auto s = ClaimStore::in_memory(small_layout(), fixed_clock());
  std::atomic<bool> done{false};
  std::atomic<int> bad{0};
  std::thread reader([&] {
    while (!done) {
      auto snap = s.snapshot();
      std::size_t close_ups = 0;
      for (auto& [id, c] : snap->claims) close_ups += c.evidence.size() - 1;
      if (close_ups != snap->features.size()) ++bad;
    }
  });
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    auto c = testutil::claim_record("C" + std::to_string(i), "V");
    s.enroll_claim(c, descriptors_for(c, rng, s.layout()));
  }
  done = true;
  reader.join();
  EXPECT_EQ(bad.load(), 0);
}
