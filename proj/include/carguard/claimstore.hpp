#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "carguard/claim.hpp"
#include "carguard/features.hpp"

namespace carguard {

struct AuditEntry {
  std::uint64_t event_index = 0;
  std::string claim_id;
  ClaimStatus from = ClaimStatus::pending;
  ClaimStatus to = ClaimStatus::pending;
  Timestamp at{};
  std::optional<Adjudication> adjudication;

  bool operator==(const AuditEntry&) const = default;
};

/// Immutable view of the whole store. Readers hold one of these while the
/// single writer prepares the next.
struct StoreState {
  FusionConfig layout;
  std::map<std::string, ClaimRecord, std::less<>> claims;
  std::vector<EnrolledFeature> features;
  std::vector<AuditEntry> audit;
  std::uint64_t next_seq = 1;
  /// Log events applied so far (the layout header record is not counted).
  std::uint64_t event_count = 0;

  bool operator==(const StoreState&) const = default;

  std::optional<ClaimStatus> status_of(std::string_view claim_id) const;
  std::vector<EnrolledFeature> list_gallery(const GalleryFilter& filter) const;
};

struct ClaimDescriptor {
  std::string image_id;
  FusedDescriptor descriptor;
};

struct StoreOptions {
  std::function<Timestamp()> clock;
  /// fsync the log and feature file on every write.
  bool durable = true;
};

/// Claim history: append-only event log (store/log.bin), a compact snapshot
/// (store/snapshot.bin) and the descriptor matrix (store/features.f32).
///
/// Mutations are serialized through one writer; reads work on immutable
/// snapshots and may run concurrently with each other and with the writer.
class ClaimStore {
 public:
  /// Opens or creates a store directory. `layout` is required when creating
  /// and must match the persisted layout otherwise.
  static ClaimStore open(const std::filesystem::path& dir,
                         std::optional<FusionConfig> layout = std::nullopt,
                         StoreOptions options = {});
  static ClaimStore in_memory(const FusionConfig& layout, StoreOptions options = {});

  ClaimStore(ClaimStore&&) noexcept;
  ClaimStore& operator=(ClaimStore&&) noexcept;
  ~ClaimStore();

  const FusionConfig& layout() const;
  std::optional<std::filesystem::path> directory() const;

  /// Persists the record plus one EnrolledFeature per descriptor, as pending
  /// or (one event, with an audit entry) already flagged. Durable before returning.
  std::string enroll_claim(ClaimRecord record, std::span<const ClaimDescriptor> descriptors,
                           bool flagged = false);

  ClaimRecord get_claim(std::string_view claim_id) const;
  bool contains(std::string_view claim_id) const;

  /// Matching features in enrollment_seq order.
  std::vector<EnrolledFeature> list_gallery(const GalleryFilter& filter = {}) const;

  ClaimRecord set_status(std::string_view claim_id, ClaimStatus status,
                         std::optional<Adjudication> adjudication = std::nullopt);

  std::shared_ptr<const StoreState> snapshot() const;

  /// Writes snapshot.bin covering every event logged so far.
  void compact();

  /// Replays log.bin from the beginning, ignoring snapshot.bin.
  static StoreState rebuild_from_log(const std::filesystem::path& dir);

 private:
  struct Impl;
  explicit ClaimStore(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

/// Reads a CGF1 descriptor matrix: the layout from its header and one row per
/// enrolled feature.
struct FeatureMatrix {
  FusionConfig layout;
  std::vector<std::vector<float>> rows;
};
FeatureMatrix read_feature_matrix(const std::filesystem::path& path);
void write_feature_matrix(const std::filesystem::path& path, const FusionConfig& layout,
                          std::span<const EnrolledFeature> features);

}  // namespace carguard
