#include "carguard/claimstore.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <mutex>

#include <zlib.h>

#include "carguard/binary_io.hpp"
#include "carguard/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace carguard {
namespace {

constexpr char kLogMagic[4] = {'C', 'G', 'L', '1'};
constexpr char kSnapshotMagic[4] = {'C', 'G', 'S', '1'};
constexpr char kFeatureMagic[4] = {'C', 'G', 'F', '1'};
constexpr std::uint32_t kFormatVersion = 1;
constexpr std::size_t kLogHeaderBytes = 8;
constexpr std::uint32_t kMaxRecordBytes = 1u << 30;

Timestamp system_now() {
  return std::chrono::floor<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(0L, data, static_cast<uInt>(n)));
}

json layout_to_json(const FusionConfig& c) {
  return {{"local_dim", c.local_dim},
          {"global_dim", c.global_dim},
          {"hist_bins", c.hist_bins},
          {"weights", {c.weights.local, c.weights.global, c.weights.hist}}};
}

FusionConfig layout_from_json(const json& j) {
  FusionConfig c;
  c.local_dim = j.at("local_dim").get<std::size_t>();
  c.global_dim = j.at("global_dim").get<std::size_t>();
  c.hist_bins = j.at("hist_bins").get<int>();
  const auto& w = j.at("weights");
  c.weights = {w.at(0).get<double>(), w.at(1).get<double>(), w.at(2).get<double>()};
  return c;
}

json feature_meta(const EnrolledFeature& f) {
  return {{"claim_id", f.claim_id},
          {"vehicle_id", f.vehicle_id},
          {"image_id", f.image_id},
          {"enrolled_at", to_millis(f.enrolled_at)},
          {"seq", f.enrollment_seq}};
}

json audit_to_json(const AuditEntry& a) {
  json j = {{"event_index", a.event_index},
            {"claim_id", a.claim_id},
            {"from", to_string(a.from)},
            {"to", to_string(a.to)},
            {"at", to_millis(a.at)}};
  j["adjudication"] = a.adjudication ? json(*a.adjudication) : json(nullptr);
  return j;
}

AuditEntry audit_from_json(const json& j) {
  AuditEntry a;
  a.event_index = j.at("event_index").get<std::uint64_t>();
  a.claim_id = j.at("claim_id").get<std::string>();
  a.from = parse_claim_status(j.at("from").get<std::string>());
  a.to = parse_claim_status(j.at("to").get<std::string>());
  a.at = from_millis(j.at("at").get<std::int64_t>());
  if (auto it = j.find("adjudication"); it != j.end() && !it->is_null()) {
    a.adjudication = it->get<Adjudication>();
  }
  return a;
}

// ---- event application (shared by live writes and replay) ----

void apply_enroll(StoreState& s, const json& ev) {
  auto record = ev.at("record").get<ClaimRecord>();
  validate(record);
  if (s.claims.contains(record.claim_id)) {
    throw Error(ErrorCode::duplicate, "claim " + record.claim_id + " already exists",
                record.claim_id);
  }
  if (record.status != ClaimStatus::pending && record.status != ClaimStatus::flagged) {
    throw Error(ErrorCode::corrupt, "enroll event with status " +
                                        std::string(to_string(record.status)) + " for " +
                                        record.claim_id);
  }
  for (const auto& f : ev.at("features")) {
    EnrolledFeature feat;
    feat.claim_id = record.claim_id;
    feat.vehicle_id = record.vehicle_id;
    feat.image_id = f.at("image_id").get<std::string>();
    feat.enrolled_at = from_millis(f.at("enrolled_at").get<std::int64_t>());
    feat.enrollment_seq = f.at("seq").get<std::uint64_t>();
    if (feat.enrollment_seq != s.next_seq) {
      throw Error(ErrorCode::corrupt, "enrollment sequence gap at " +
                                          std::to_string(feat.enrollment_seq));
    }
    feat.descriptor.layout = s.layout;
    const auto& values = f.at("values");
    feat.descriptor.values.reserve(values.size());
    for (const auto& v : values) feat.descriptor.values.push_back(v.get<float>());
    if (feat.descriptor.values.size() != s.layout.total_dim()) {
      throw Error(ErrorCode::corrupt, "logged descriptor has wrong dimension");
    }
    s.features.push_back(std::move(feat));
    ++s.next_seq;
  }
  if (record.status == ClaimStatus::flagged) {
    AuditEntry a;
    a.event_index = s.event_count;
    a.claim_id = record.claim_id;
    a.from = ClaimStatus::pending;
    a.to = ClaimStatus::flagged;
    a.at = from_millis(ev.at("at").get<std::int64_t>());
    s.audit.push_back(std::move(a));
  }
  auto id = record.claim_id;
  s.claims.emplace(std::move(id), std::move(record));
}

void apply_status(StoreState& s, const json& ev) {
  auto id = ev.at("claim_id").get<std::string>();
  auto it = s.claims.find(id);
  if (it == s.claims.end()) throw Error(ErrorCode::not_found, "unknown claim " + id, id);
  AuditEntry a;
  a.event_index = s.event_count;
  a.claim_id = id;
  a.from = parse_claim_status(ev.at("from").get<std::string>());
  a.to = parse_claim_status(ev.at("to").get<std::string>());
  a.at = from_millis(ev.at("at").get<std::int64_t>());
  if (auto adj = ev.find("adjudication"); adj != ev.end() && !adj->is_null()) {
    a.adjudication = adj->get<Adjudication>();
  }
  if (it->second.status != a.from || !transition_allowed(a.from, a.to)) {
    throw Error(ErrorCode::conflict,
                "illegal transition " + std::string(to_string(it->second.status)) + " -> " +
                    std::string(to_string(a.to)),
                id);
  }
  it->second.status = a.to;
  if (a.adjudication) it->second.adjudication = a.adjudication;
  s.audit.push_back(std::move(a));
}

void apply_event(StoreState& s, const json& ev) {
  const auto type = ev.at("type").get<std::string>();
  if (type == "enroll") {
    apply_enroll(s, ev);
  } else if (type == "status") {
    apply_status(s, ev);
  } else {
    throw Error(ErrorCode::corrupt, "unknown log event type '" + type + "'");
  }
  ++s.event_count;
}

// ---- log file ----

struct LogRecord {
  std::uint64_t end_offset;
  json payload;
};

struct ParsedLog {
  FusionConfig layout;
  std::vector<LogRecord> events;
  std::uint64_t good_bytes = 0;
  bool torn_tail = false;
};

std::vector<std::uint8_t> encode_record(const json& payload) {
  auto text = payload.dump();
  std::vector<std::uint8_t> buf;
  buf.reserve(text.size() + 8);
  append_u32(buf, static_cast<std::uint32_t>(text.size()));
  append_u32(buf, crc_of(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  buf.insert(buf.end(), text.begin(), text.end());
  return buf;
}

ParsedLog parse_log(const fs::path& path) {
  auto bytes = read_file_bytes(path);
  const auto src = path.string();
  if (bytes.size() < kLogHeaderBytes || std::memcmp(bytes.data(), kLogMagic, 4) != 0) {
    throw Error(ErrorCode::corrupt, src + ": bad log header", src);
  }
  if (load_u32(bytes.data() + 4) != kFormatVersion) {
    throw Error(ErrorCode::corrupt, src + ": unsupported log version", src);
  }
  ParsedLog out;
  std::size_t pos = kLogHeaderBytes;
  bool have_layout = false;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < 8) {
      out.torn_tail = true;
      break;
    }
    const auto len = load_u32(bytes.data() + pos);
    const auto crc = load_u32(bytes.data() + pos + 4);
    if (len > kMaxRecordBytes || bytes.size() - pos - 8 < len) {
      out.torn_tail = true;
      break;
    }
    const auto* body = bytes.data() + pos + 8;
    if (crc_of(body, len) != crc) {
      if (pos + 8 + len == bytes.size()) {
        out.torn_tail = true;
        break;
      }
      throw Error(ErrorCode::corrupt,
                  src + ": checksum mismatch at offset " + std::to_string(pos), src);
    }
    json payload;
    try {
      payload = json::parse(body, body + len);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::corrupt, src + ": unreadable record: " + e.what(), src);
    }
    pos += 8 + len;
    if (!have_layout) {
      if (payload.value("type", "") != "init") {
        throw Error(ErrorCode::corrupt, src + ": first record must carry the layout", src);
      }
      out.layout = layout_from_json(payload.at("layout"));
      have_layout = true;
    } else {
      out.events.push_back({pos, std::move(payload)});
    }
    out.good_bytes = pos;
  }
  if (!have_layout) throw Error(ErrorCode::corrupt, src + ": log has no layout record", src);
  return out;
}

class PosixFile {
 public:
  PosixFile(const fs::path& path, int flags) : path_(path.string()) {
    fd_ = ::open(path_.c_str(), flags | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error(ErrorCode::io, "cannot open " + path_, path_);
  }
  PosixFile(const PosixFile&) = delete;
  PosixFile& operator=(const PosixFile&) = delete;
  ~PosixFile() {
    if (fd_ >= 0) ::close(fd_);
  }

  void write_all(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    while (n > 0) {
      auto w = ::write(fd_, p, n);
      if (w < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorCode::io, "write failed on " + path_, path_);
      }
      p += w;
      n -= static_cast<std::size_t>(w);
    }
  }
  void sync() {
    if (::fsync(fd_) != 0) throw Error(ErrorCode::io, "fsync failed on " + path_, path_);
  }

 private:
  std::string path_;
  int fd_ = -1;
};

void sync_directory(const fs::path& dir) {
  int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

// ---- feature matrix ----

std::vector<std::uint8_t> feature_header(const FusionConfig& layout) {
  std::vector<std::uint8_t> buf(kFeatureMagic, kFeatureMagic + 4);
  append_u32(buf, static_cast<std::uint32_t>(kBlockCount));
  for (auto b : {Block::local, Block::global, Block::hist}) {
    append_u32(buf, static_cast<std::uint32_t>(layout.block_dim(b)));
    float w = static_cast<float>(layout.weights[b]);
    std::uint32_t bits;
    std::memcpy(&bits, &w, 4);
    append_u32(buf, bits);
  }
  return buf;
}

void append_feature_rows(std::vector<std::uint8_t>& buf, std::span<const EnrolledFeature> rows) {
  for (const auto& f : rows) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(f.descriptor.values.data());
    buf.insert(buf.end(), p, p + f.descriptor.values.size() * sizeof(float));
  }
}

void write_file_atomically(const fs::path& path, std::span<const std::uint8_t> bytes,
                           bool durable) {
  auto tmp = path;
  tmp += ".tmp";
  {
    PosixFile f(tmp, O_WRONLY | O_CREAT | O_TRUNC);
    f.write_all(bytes.data(), bytes.size());
    if (durable) f.sync();
  }
  fs::rename(tmp, path);
  if (durable) sync_directory(path.parent_path());
}

// ---- snapshot ----

json state_meta_to_json(const StoreState& s) {
  json claims = json::array();
  for (const auto& [id, c] : s.claims) claims.push_back(c);
  json features = json::array();
  for (const auto& f : s.features) features.push_back(feature_meta(f));
  json audit = json::array();
  for (const auto& a : s.audit) audit.push_back(audit_to_json(a));
  return {{"layout", layout_to_json(s.layout)},
          {"claims", std::move(claims)},
          {"features", std::move(features)},
          {"audit", std::move(audit)},
          {"next_seq", s.next_seq},
          {"event_count", s.event_count}};
}

struct SnapshotFile {
  std::uint64_t log_bytes = 0;
  StoreState state;
};

std::optional<SnapshotFile> load_snapshot(const fs::path& dir) {
  const auto path = dir / "snapshot.bin";
  if (!fs::exists(path)) return std::nullopt;
  auto bytes = read_file_bytes(path);
  const std::size_t head = 4 + 4 + 8 + 8 + 8 + 4 + 4;
  if (bytes.size() < head || std::memcmp(bytes.data(), kSnapshotMagic, 4) != 0 ||
      load_u32(bytes.data() + 4) != kFormatVersion) {
    return std::nullopt;
  }
  std::uint64_t log_bytes, event_count, rows;
  std::memcpy(&log_bytes, bytes.data() + 8, 8);
  std::memcpy(&event_count, bytes.data() + 16, 8);
  std::memcpy(&rows, bytes.data() + 24, 8);
  const auto len = load_u32(bytes.data() + 32);
  const auto crc = load_u32(bytes.data() + 36);
  if (bytes.size() != head + len || crc_of(bytes.data() + head, len) != crc) return std::nullopt;

  SnapshotFile snap;
  snap.log_bytes = log_bytes;
  auto j = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(head), bytes.end());
  auto& s = snap.state;
  s.layout = layout_from_json(j.at("layout"));
  for (const auto& c : j.at("claims")) {
    auto rec = c.get<ClaimRecord>();
    auto id = rec.claim_id;
    s.claims.emplace(std::move(id), std::move(rec));
  }
  for (const auto& a : j.at("audit")) s.audit.push_back(audit_from_json(a));
  s.next_seq = j.at("next_seq").get<std::uint64_t>();
  s.event_count = j.at("event_count").get<std::uint64_t>();
  if (s.event_count != event_count) return std::nullopt;

  const auto& metas = j.at("features");
  if (metas.size() != rows) return std::nullopt;
  FeatureMatrix matrix;
  try {
    matrix = read_feature_matrix(dir / "features.f32");
  } catch (const Error&) {
    return std::nullopt;
  }
  if (!same_layout(matrix.layout, s.layout) || matrix.rows.size() < rows) return std::nullopt;
  for (std::size_t i = 0; i < rows; ++i) {
    const auto& m = metas[i];
    EnrolledFeature f;
    f.claim_id = m.at("claim_id").get<std::string>();
    f.vehicle_id = m.at("vehicle_id").get<std::string>();
    f.image_id = m.at("image_id").get<std::string>();
    f.enrolled_at = from_millis(m.at("enrolled_at").get<std::int64_t>());
    f.enrollment_seq = m.at("seq").get<std::uint64_t>();
    f.descriptor = {s.layout, std::move(matrix.rows[i])};
    s.features.push_back(std::move(f));
  }
  return snap;
}

}  // namespace

// ---- StoreState ----

std::optional<ClaimStatus> StoreState::status_of(std::string_view claim_id) const {
  auto it = claims.find(claim_id);
  if (it == claims.end()) return std::nullopt;
  return it->second.status;
}

std::vector<EnrolledFeature> StoreState::list_gallery(const GalleryFilter& filter) const {
  std::vector<EnrolledFeature> out;
  for (const auto& f : features) {
    if (accepts(filter, f, filter.status_in ? status_of(f.claim_id) : std::nullopt)) {
      out.push_back(f);
    }
  }
  return out;
}

// ---- feature matrix IO ----

FeatureMatrix read_feature_matrix(const fs::path& path) {
  auto bytes = read_file_bytes(path);
  const auto src = path.string();
  const std::size_t head = 4 + 4 + kBlockCount * 8;
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) {
    throw Error(ErrorCode::corrupt, src + ": bad magic, expected CGF1", src);
  }
  if (load_u32(bytes.data() + 4) != kBlockCount || bytes.size() < head) {
    throw Error(ErrorCode::corrupt, src + ": expected 3 descriptor blocks", src);
  }
  FeatureMatrix m;
  std::uint32_t dims[kBlockCount];
  float weights[kBlockCount];
  for (std::size_t b = 0; b < kBlockCount; ++b) {
    dims[b] = load_u32(bytes.data() + 8 + b * 8);
    std::memcpy(&weights[b], bytes.data() + 12 + b * 8, 4);
  }
  if (dims[2] % 3 != 0) throw Error(ErrorCode::corrupt, src + ": hist block not 3*B", src);
  m.layout.local_dim = dims[0];
  m.layout.global_dim = dims[1];
  m.layout.hist_bins = static_cast<int>(dims[2] / 3);
  m.layout.weights = {weights[0], weights[1], weights[2]};
  const std::size_t row_bytes = m.layout.total_dim() * sizeof(float);
  const std::size_t body = bytes.size() - head;
  if (row_bytes == 0 || body % row_bytes != 0) {
    throw Error(ErrorCode::corrupt, src + ": trailing partial row", src);
  }
  m.rows.resize(body / row_bytes);
  for (std::size_t r = 0; r < m.rows.size(); ++r) {
    m.rows[r].resize(m.layout.total_dim());
    std::memcpy(m.rows[r].data(), bytes.data() + head + r * row_bytes, row_bytes);
  }
  return m;
}

void write_feature_matrix(const fs::path& path, const FusionConfig& layout,
                          std::span<const EnrolledFeature> features) {
  auto buf = feature_header(layout);
  append_feature_rows(buf, features);
  write_file_atomically(path, buf, false);
}

// ---- ClaimStore ----

struct ClaimStore::Impl {
  std::optional<fs::path> dir;
  StoreOptions options;
  std::mutex writer;
  mutable std::mutex publish_mutex;
  std::shared_ptr<const StoreState> current;
  std::uint64_t log_bytes = 0;

  Timestamp now() const { return options.clock ? options.clock() : system_now(); }

  std::shared_ptr<const StoreState> load() const {
    std::lock_guard lock(publish_mutex);
    return current;
  }

  void publish(std::shared_ptr<const StoreState> next) {
    std::lock_guard lock(publish_mutex);
    current = std::move(next);
  }

  void append_log(const json& event) {
    if (!dir) return;
    auto buf = encode_record(event);
    const auto path = *dir / "log.bin";
    try {
      PosixFile f(path, O_WRONLY | O_APPEND);
      f.write_all(buf.data(), buf.size());
      if (options.durable) f.sync();
    } catch (...) {
      // Drop any partial record so later appends stay aligned.
      std::error_code ec;
      fs::resize_file(path, log_bytes, ec);
      throw;
    }
    log_bytes += buf.size();
  }

  void append_features(std::span<const EnrolledFeature> rows) {
    if (!dir || rows.empty()) return;
    std::vector<std::uint8_t> buf;
    append_feature_rows(buf, rows);
    PosixFile f(*dir / "features.f32", O_WRONLY | O_APPEND);
    f.write_all(buf.data(), buf.size());
    if (options.durable) f.sync();
  }
};

ClaimStore::ClaimStore(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
ClaimStore::ClaimStore(ClaimStore&&) noexcept = default;
ClaimStore& ClaimStore::operator=(ClaimStore&&) noexcept = default;
ClaimStore::~ClaimStore() = default;

ClaimStore ClaimStore::in_memory(const FusionConfig& layout, StoreOptions options) {
  validate(layout);
  auto impl = std::make_unique<Impl>();
  impl->options = std::move(options);
  auto state = std::make_shared<StoreState>();
  state->layout = layout;
  impl->current = std::move(state);
  return ClaimStore(std::move(impl));
}

ClaimStore ClaimStore::open(const fs::path& dir, std::optional<FusionConfig> layout,
                            StoreOptions options) {
  auto impl = std::make_unique<Impl>();
  impl->dir = dir;
  impl->options = std::move(options);
  const auto log_path = dir / "log.bin";
  const auto features_path = dir / "features.f32";

  if (!fs::exists(log_path)) {
    if (!layout) {
      throw Error(ErrorCode::config, "new store at " + dir.string() + " needs a layout",
                  dir.string());
    }
    validate(*layout);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::io, "cannot create " + dir.string(), dir.string());
    std::vector<std::uint8_t> buf(kLogMagic, kLogMagic + 4);
    append_u32(buf, kFormatVersion);
    auto init = encode_record({{"type", "init"}, {"layout", layout_to_json(*layout)}});
    buf.insert(buf.end(), init.begin(), init.end());
    write_file_atomically(log_path, buf, impl->options.durable);
    write_file_atomically(features_path, feature_header(*layout), impl->options.durable);
    fs::remove(dir / "snapshot.bin", ec);
    impl->log_bytes = buf.size();
    auto state = std::make_shared<StoreState>();
    state->layout = *layout;
    impl->current = std::move(state);
    return ClaimStore(std::move(impl));
  }

  auto log = parse_log(log_path);
  if (layout && !same_layout(*layout, log.layout)) {
    throw Error(ErrorCode::layout_mismatch,
                "store at " + dir.string() + " was created with a different layout",
                dir.string());
  }
  if (log.torn_tail) fs::resize_file(log_path, log.good_bytes);
  impl->log_bytes = log.good_bytes;

  StoreState state;
  std::uint64_t replay_from = kLogHeaderBytes;
  if (auto snap = load_snapshot(dir);
      snap && snap->log_bytes <= log.good_bytes && same_layout(snap->state.layout, log.layout)) {
    state = std::move(snap->state);
    replay_from = snap->log_bytes;
  } else {
    state.layout = log.layout;
  }
  for (const auto& rec : log.events) {
    if (rec.end_offset > replay_from) apply_event(state, rec.payload);
  }

  bool features_ok = false;
  try {
    auto matrix = read_feature_matrix(features_path);
    features_ok = same_layout(matrix.layout, state.layout) &&
                  matrix.rows.size() == state.features.size();
    for (std::size_t i = 0; features_ok && i < matrix.rows.size(); ++i) {
      features_ok = matrix.rows[i] == state.features[i].descriptor.values;
    }
  } catch (const Error&) {
    features_ok = false;
  }
  if (!features_ok) {
    auto buf = feature_header(state.layout);
    append_feature_rows(buf, state.features);
    write_file_atomically(features_path, buf, impl->options.durable);
  }

  impl->current = std::make_shared<StoreState>(std::move(state));
  return ClaimStore(std::move(impl));
}

const FusionConfig& ClaimStore::layout() const { return impl_->load()->layout; }

std::optional<fs::path> ClaimStore::directory() const { return impl_->dir; }

std::string ClaimStore::enroll_claim(ClaimRecord record,
                                     std::span<const ClaimDescriptor> descriptors, bool flagged) {
  std::lock_guard lock(impl_->writer);
  auto base = impl_->load();
  record.status = flagged ? ClaimStatus::flagged : ClaimStatus::pending;
  record.adjudication.reset();
  validate(record);
  if (base->claims.contains(record.claim_id)) {
    throw Error(ErrorCode::duplicate, "claim " + record.claim_id + " already exists",
                record.claim_id);
  }
  const auto now = impl_->now();
  json features = json::array();
  std::uint64_t seq = base->next_seq;
  for (const auto& d : descriptors) {
    if (!same_layout(d.descriptor.layout, base->layout) ||
        d.descriptor.values.size() != base->layout.total_dim()) {
      throw Error(ErrorCode::layout_mismatch,
                  "descriptor for " + d.image_id + " does not match the store layout",
                  d.image_id);
    }
    const auto* img = record.find_image(d.image_id);
    if (!img || img->kind != EvidenceKind::close_up) {
      throw Error(ErrorCode::validation,
                  "descriptor image " + d.image_id + " is not a close_up of this claim",
                  d.image_id);
    }
    json values = json::array();
    for (float v : d.descriptor.values) values.push_back(v);
    features.push_back({{"seq", seq++},
                        {"image_id", d.image_id},
                        {"enrolled_at", to_millis(now)},
                        {"values", std::move(values)}});
  }
  json event = {{"type", "enroll"},
                {"at", to_millis(now)},
                {"record", record},
                {"features", std::move(features)}};

  auto next = std::make_shared<StoreState>(*base);
  apply_event(*next, event);
  impl_->append_log(event);
  impl_->append_features(std::span(next->features).subspan(base->features.size()));
  impl_->publish(std::move(next));
  return record.claim_id;
}

ClaimRecord ClaimStore::get_claim(std::string_view claim_id) const {
  auto s = impl_->load();
  auto it = s->claims.find(claim_id);
  if (it == s->claims.end()) {
    throw Error(ErrorCode::not_found, "claim " + std::string(claim_id) + " not found",
                std::string(claim_id));
  }
  return it->second;
}

bool ClaimStore::contains(std::string_view claim_id) const {
  return impl_->load()->claims.contains(claim_id);
}

std::vector<EnrolledFeature> ClaimStore::list_gallery(const GalleryFilter& filter) const {
  return impl_->load()->list_gallery(filter);
}

ClaimRecord ClaimStore::set_status(std::string_view claim_id, ClaimStatus status,
                                   std::optional<Adjudication> adjudication) {
  std::lock_guard lock(impl_->writer);
  auto base = impl_->load();
  auto it = base->claims.find(claim_id);
  if (it == base->claims.end()) {
    throw Error(ErrorCode::not_found, "claim " + std::string(claim_id) + " not found",
                std::string(claim_id));
  }
  const auto from = it->second.status;
  if (!transition_allowed(from, status)) {
    throw Error(ErrorCode::conflict,
                "illegal transition " + std::string(to_string(from)) + " -> " +
                    std::string(to_string(status)),
                std::string(claim_id));
  }
  json event = {{"type", "status"},
                {"claim_id", std::string(claim_id)},
                {"from", to_string(from)},
                {"to", to_string(status)},
                {"at", to_millis(impl_->now())}};
  event["adjudication"] = adjudication ? json(*adjudication) : json(nullptr);

  auto next = std::make_shared<StoreState>(*base);
  apply_event(*next, event);
  impl_->append_log(event);
  auto updated = next->claims.find(claim_id)->second;
  impl_->publish(std::move(next));
  return updated;
}

std::shared_ptr<const StoreState> ClaimStore::snapshot() const { return impl_->load(); }

void ClaimStore::compact() {
  if (!impl_->dir) return;
  std::lock_guard lock(impl_->writer);
  auto s = impl_->load();
  auto text = state_meta_to_json(*s).dump();
  std::vector<std::uint8_t> buf(kSnapshotMagic, kSnapshotMagic + 4);
  append_u32(buf, kFormatVersion);
  auto put_u64 = [&buf](std::uint64_t v) {
    std::uint8_t b[8];
    std::memcpy(b, &v, 8);
    buf.insert(buf.end(), b, b + 8);
  };
  put_u64(impl_->log_bytes);
  put_u64(s->event_count);
  put_u64(s->features.size());
  append_u32(buf, static_cast<std::uint32_t>(text.size()));
  append_u32(buf, crc_of(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  buf.insert(buf.end(), text.begin(), text.end());
  write_file_atomically(*impl_->dir / "snapshot.bin", buf, impl_->options.durable);
}

StoreState ClaimStore::rebuild_from_log(const fs::path& dir) {
  auto log = parse_log(dir / "log.bin");
  StoreState state;
  state.layout = log.layout;
  for (const auto& rec : log.events) apply_event(state, rec.payload);
  return state;
}

}  // namespace carguard
