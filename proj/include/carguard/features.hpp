#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "carguard/imaging.hpp"

namespace carguard {

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dim() const noexcept { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

/// Returns v / ||v||; the zero vector is returned unchanged. Throws on NaN/inf.
std::vector<double> l2_normalize(std::span<const double> v);

enum class Block : std::size_t { local = 0, global = 1, hist = 2 };
inline constexpr std::size_t kBlockCount = 3;
std::string_view to_string(Block b);

struct BlockWeights {
  double local = 1.0;
  double global = 1.0;
  double hist = 1.0;

  double operator[](Block b) const noexcept {
    switch (b) {
      case Block::local: return local;
      case Block::global: return global;
      case Block::hist: return hist;
    }
    return 0.0;
  }
  bool operator==(const BlockWeights&) const = default;
};

/// Layout of a fused descriptor: [local | global | hist(3B)]. A hist_bins of 0
/// drops the histogram block.
struct FusionConfig {
  std::size_t local_dim = 64;
  std::size_t global_dim = 64;
  int hist_bins = 8;
  BlockWeights weights;

  std::size_t hist_dim() const noexcept { return static_cast<std::size_t>(hist_bins) * 3; }
  std::size_t total_dim() const noexcept { return local_dim + global_dim + hist_dim(); }
  std::size_t block_dim(Block b) const noexcept;
  std::size_t block_offset(Block b) const noexcept;

  bool operator==(const FusionConfig&) const = default;
};

void validate(const FusionConfig& config);

/// Layouts compare equal when dims match and weights agree at f32 precision,
/// the precision at which the store persists them.
bool same_layout(const FusionConfig& a, const FusionConfig& b) noexcept;

struct FusedDescriptor {
  FusionConfig layout;
  std::vector<float> values;

  std::span<const float> block(Block b) const {
    return std::span<const float>(values).subspan(layout.block_offset(b), layout.block_dim(b));
  }
  bool operator==(const FusedDescriptor&) const = default;
};

/// Concatenates [w_local*L^, w_global*G^, w_hist*H^] where X^ is the
/// L2-normalized block. `hist` must be present iff config.hist_bins > 0.
FusedDescriptor fuse(const EmbeddingVector& local, const EmbeddingVector& global,
                     const std::optional<HistogramFeature>& hist, const FusionConfig& config);

enum class EmbedKind { local_roi, global_body };

/// Produces fixed-dimension embeddings per kind. Implementations must be safe
/// for concurrent const use.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dim(EmbedKind kind) const = 0;
  virtual EmbeddingVector embed(const ImageBuffer& image, std::string_view image_id,
                                EmbedKind kind) const = 0;
};

/// Calls the provider and checks the result has the provider's declared dim.
EmbeddingVector embed(const EmbeddingProvider& provider, const ImageBuffer& image,
                      std::string_view image_id, EmbedKind kind);

class ToyEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit ToyEmbeddingProvider(std::size_t local_dim = 64, std::size_t global_dim = 64);
  std::size_t dim(EmbedKind kind) const override;
  EmbeddingVector embed(const ImageBuffer& image, std::string_view image_id,
                        EmbedKind kind) const override;

 private:
  std::size_t local_dim_;
  std::size_t global_dim_;
};

/// Precomputed vectors keyed by image id, loaded from a CGE1 sidecar. Local
/// lookups try "<image_id>#<region index>" style keys first when the caller
/// passes one, then fall back to the bare image id.
class PrecomputedEmbeddingProvider final : public EmbeddingProvider {
 public:
  /// Dimension of the VGG-16 fully-connected output.
  static constexpr std::size_t kBackboneDim = 4096;

  PrecomputedEmbeddingProvider(std::size_t dim, std::map<std::string, std::vector<float>> table);
  static PrecomputedEmbeddingProvider load(const std::filesystem::path& path);

  std::size_t dim(EmbedKind) const override { return dim_; }
  EmbeddingVector embed(const ImageBuffer& image, std::string_view image_id,
                        EmbedKind kind) const override;
  std::size_t size() const noexcept { return table_.size(); }

 private:
  std::size_t dim_;
  std::map<std::string, std::vector<float>, std::less<>> table_;
};

void write_embedding_sidecar(const std::filesystem::path& path, std::size_t dim,
                             const std::map<std::string, std::vector<float>>& table);

/// Which image the color histogram is computed on.
enum class HistSource { full_body, roi };
std::string_view to_string(HistSource s);
HistSource parse_hist_source(std::string_view s);

/// Builds the fused descriptor for one damage ROI of a close-up, using the
/// claim's full-body shots as the global context. Multiple body shots are
/// averaged block-wise (each embedding normalized first).
FusedDescriptor describe_roi(const EmbeddingProvider& provider, const FusionConfig& config,
                             HistSource hist_source, const ImageBuffer& close_up,
                             std::string_view close_up_id, const NormalizedBBox& roi,
                             std::span<const ImageBuffer> bodies,
                             std::span<const std::string> body_ids);

}  // namespace carguard
