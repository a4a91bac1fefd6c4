#include "carguard/features.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "carguard/binary_io.hpp"
#include "carguard/error.hpp"

namespace carguard {

std::vector<double> l2_normalize(std::span<const double> v) {
  double sq = 0.0;
  for (double x : v) {
    if (!std::isfinite(x)) throw Error(ErrorCode::validation, "non-finite vector component");
    sq += x * x;
  }
  std::vector<double> out(v.begin(), v.end());
  if (sq == 0.0) return out;
  const double norm = std::sqrt(sq);
  for (double& x : out) x /= norm;
  return out;
}

std::string_view to_string(Block b) {
  switch (b) {
    case Block::local: return "local";
    case Block::global: return "global";
    case Block::hist: return "hist";
  }
  return "unknown";
}

std::size_t FusionConfig::block_dim(Block b) const noexcept {
  switch (b) {
    case Block::local: return local_dim;
    case Block::global: return global_dim;
    case Block::hist: return hist_dim();
  }
  return 0;
}

std::size_t FusionConfig::block_offset(Block b) const noexcept {
  switch (b) {
    case Block::local: return 0;
    case Block::global: return local_dim;
    case Block::hist: return local_dim + global_dim;
  }
  return 0;
}

void validate(const FusionConfig& config) {
  if (config.local_dim == 0 || config.global_dim == 0) {
    throw Error(ErrorCode::config, "local_dim and global_dim must be positive", "fusion");
  }
  if (config.hist_bins < 0) throw Error(ErrorCode::config, "hist_bins must be >= 0", "hist_bins");
  const auto& w = config.weights;
  for (double x : {w.local, w.global, w.hist}) {
    if (!std::isfinite(x) || x < 0.0) {
      throw Error(ErrorCode::config, "block weights must be finite and nonnegative", "weights");
    }
  }
  if (w.local == 0.0 && w.global == 0.0 && (w.hist == 0.0 || config.hist_bins == 0)) {
    throw Error(ErrorCode::config, "at least one active block weight must be positive", "weights");
  }
}

bool same_layout(const FusionConfig& a, const FusionConfig& b) noexcept {
  auto f = [](double x) { return static_cast<float>(x); };
  return a.local_dim == b.local_dim && a.global_dim == b.global_dim &&
         a.hist_bins == b.hist_bins && f(a.weights.local) == f(b.weights.local) &&
         f(a.weights.global) == f(b.weights.global) && f(a.weights.hist) == f(b.weights.hist);
}

FusedDescriptor fuse(const EmbeddingVector& local, const EmbeddingVector& global,
                     const std::optional<HistogramFeature>& hist, const FusionConfig& config) {
  validate(config);
  if (local.dim() != config.local_dim) {
    throw Error(ErrorCode::layout_mismatch,
                "local block has dim " + std::to_string(local.dim()) + ", layout expects " +
                    std::to_string(config.local_dim),
                "local");
  }
  if (global.dim() != config.global_dim) {
    throw Error(ErrorCode::layout_mismatch,
                "global block has dim " + std::to_string(global.dim()) + ", layout expects " +
                    std::to_string(config.global_dim),
                "global");
  }
  if (hist.has_value() != (config.hist_bins > 0)) {
    throw Error(ErrorCode::layout_mismatch,
                "histogram must be supplied exactly when hist_bins > 0", "hist");
  }
  if (hist && (hist->bins_per_channel != config.hist_bins ||
               hist->values.size() != config.hist_dim())) {
    throw Error(ErrorCode::layout_mismatch,
                "histogram has " + std::to_string(hist->bins_per_channel) +
                    " bins per channel, layout expects " + std::to_string(config.hist_bins),
                "hist");
  }

  FusedDescriptor out{config, std::vector<float>(config.total_dim(), 0.0f)};
  auto place = [&](Block b, std::span<const double> raw) {
    const double w = config.weights[b];
    if (w == 0.0) return;
    auto unit = l2_normalize(raw);
    auto offset = config.block_offset(b);
    for (std::size_t i = 0; i < unit.size(); ++i) {
      out.values[offset + i] = static_cast<float>(w * unit[i]);
    }
  };
  place(Block::local, local.values);
  place(Block::global, global.values);
  if (hist) place(Block::hist, hist->values);
  return out;
}

EmbeddingVector embed(const EmbeddingProvider& provider, const ImageBuffer& image,
                      std::string_view image_id, EmbedKind kind) {
  auto v = provider.embed(image, image_id, kind);
  if (v.dim() != provider.dim(kind)) {
    throw Error(ErrorCode::config,
                "provider returned dim " + std::to_string(v.dim()) + " but declares " +
                    std::to_string(provider.dim(kind)),
                std::string(image_id));
  }
  return v;
}

ToyEmbeddingProvider::ToyEmbeddingProvider(std::size_t local_dim, std::size_t global_dim)
    : local_dim_(local_dim), global_dim_(global_dim) {
  for (auto d : {local_dim, global_dim}) {
    auto g = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(d))));
    if (d == 0 || g * g != d) {
      throw Error(ErrorCode::config, "toy embedding dims must be perfect squares", "dim");
    }
  }
}

std::size_t ToyEmbeddingProvider::dim(EmbedKind kind) const {
  return kind == EmbedKind::local_roi ? local_dim_ : global_dim_;
}

EmbeddingVector ToyEmbeddingProvider::embed(const ImageBuffer& image, std::string_view,
                                            EmbedKind kind) const {
  return {toy_embed(image, dim(kind))};
}

PrecomputedEmbeddingProvider::PrecomputedEmbeddingProvider(
    std::size_t dim, std::map<std::string, std::vector<float>> table)
    : dim_(dim) {
  if (dim == 0) throw Error(ErrorCode::config, "embedding dim must be positive", "dim");
  for (auto& [id, v] : table) {
    if (v.size() != dim) {
      throw Error(ErrorCode::config, "embedding for " + id + " has wrong dim", id);
    }
    table_.emplace(id, std::move(v));
  }
}

EmbeddingVector PrecomputedEmbeddingProvider::embed(const ImageBuffer&, std::string_view image_id,
                                                    EmbedKind kind) const {
  auto it = table_.find(image_id);
  if (it == table_.end() && kind == EmbedKind::local_roi) {
    if (auto hash = image_id.find('#'); hash != std::string_view::npos) {
      it = table_.find(image_id.substr(0, hash));
    }
  }
  if (it == table_.end()) {
    throw Error(ErrorCode::missing_embedding,
                "no precomputed embedding for image " + std::string(image_id),
                std::string(image_id));
  }
  return {std::vector<double>(it->second.begin(), it->second.end())};
}

namespace {
constexpr char kSidecarMagic[4] = {'C', 'G', 'E', '1'};
}

PrecomputedEmbeddingProvider PrecomputedEmbeddingProvider::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open embedding sidecar " + path.string(), path.string());
  BinaryReader r(in, path.string());
  char magic[4];
  r.read_bytes(magic, 4);
  if (std::memcmp(magic, kSidecarMagic, 4) != 0) {
    throw Error(ErrorCode::corrupt, path.string() + ": bad magic, expected CGE1", path.string());
  }
  auto dim = r.read_u32();
  auto count = r.read_u32();
  std::map<std::string, std::vector<float>> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto len = r.read_u16();
    std::string id(len, '\0');
    r.read_bytes(id.data(), len);
    std::vector<float> v(dim);
    for (auto& x : v) x = r.read_f32();
    table.emplace(std::move(id), std::move(v));
  }
  return PrecomputedEmbeddingProvider(dim, std::move(table));
}

void write_embedding_sidecar(const std::filesystem::path& path, std::size_t dim,
                             const std::map<std::string, std::vector<float>>& table) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string(), path.string());
  BinaryWriter w(out);
  w.write_bytes(kSidecarMagic, 4);
  w.write_u32(static_cast<std::uint32_t>(dim));
  w.write_u32(static_cast<std::uint32_t>(table.size()));
  for (const auto& [id, v] : table) {
    if (v.size() != dim) throw Error(ErrorCode::config, "embedding for " + id + " has wrong dim", id);
    if (id.size() > 0xFFFF) throw Error(ErrorCode::validation, "image id too long", id);
    w.write_u16(static_cast<std::uint16_t>(id.size()));
    w.write_bytes(id.data(), id.size());
    for (float x : v) w.write_f32(x);
  }
  if (!out) throw Error(ErrorCode::io, "short write to " + path.string(), path.string());
}

std::string_view to_string(HistSource s) {
  return s == HistSource::full_body ? "full_body" : "roi";
}

HistSource parse_hist_source(std::string_view s) {
  if (s == "full_body") return HistSource::full_body;
  if (s == "roi") return HistSource::roi;
  throw Error(ErrorCode::config, "hist_source must be full_body or roi", "hist_source");
}

FusedDescriptor describe_roi(const EmbeddingProvider& provider, const FusionConfig& config,
                             HistSource hist_source, const ImageBuffer& close_up,
                             std::string_view close_up_id, const NormalizedBBox& roi,
                             std::span<const ImageBuffer> bodies,
                             std::span<const std::string> body_ids) {
  if (bodies.empty() || bodies.size() != body_ids.size()) {
    throw Error(ErrorCode::validation, "at least one full_body image is required", "evidence");
  }
  auto crop = crop_roi(close_up, roi);
  auto local = embed(provider, crop, close_up_id, EmbedKind::local_roi);

  EmbeddingVector global{std::vector<double>(provider.dim(EmbedKind::global_body), 0.0)};
  std::optional<HistogramFeature> hist;
  if (config.hist_bins > 0 && hist_source == HistSource::roi) {
    hist = color_histogram(crop, config.hist_bins);
  } else if (config.hist_bins > 0) {
    hist = HistogramFeature{config.hist_bins, std::vector<double>(config.hist_dim(), 0.0)};
  }
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    auto g = l2_normalize(embed(provider, bodies[i], body_ids[i], EmbedKind::global_body).values);
    for (std::size_t k = 0; k < g.size(); ++k) global.values[k] += g[k];
    if (config.hist_bins > 0 && hist_source == HistSource::full_body) {
      auto h = color_histogram(bodies[i], config.hist_bins);
      for (std::size_t k = 0; k < h.values.size(); ++k) {
        hist->values[k] += h.values[k] / static_cast<double>(bodies.size());
      }
    }
  }
  return fuse(local, global, hist, config);
}

}  // namespace carguard
