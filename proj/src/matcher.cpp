#include "carguard/matcher.hpp"

#include <map>
#include <queue>
#include <thread>

#include "carguard/claimstore.hpp"

namespace carguard {
namespace {

struct Candidate {
  double similarity;
  std::uint64_t seq;
  std::size_t index;
};

bool ranks_before(const Candidate& a, const Candidate& b) noexcept {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.seq < b.seq;
}

void check_layouts(const FusedDescriptor& probe, std::span<const EnrolledFeature> gallery) {
  if (probe.values.size() != probe.layout.total_dim()) {
    throw Error(ErrorCode::layout_mismatch, "probe values do not match its layout", "probe");
  }
  for (const auto& g : gallery) {
    if (!same_layout(g.descriptor.layout, probe.layout) ||
        g.descriptor.values.size() != probe.values.size()) {
      throw Error(ErrorCode::layout_mismatch,
                  "gallery entry seq " + std::to_string(g.enrollment_seq) + " (claim " +
                      g.claim_id + ", image " + g.image_id + ") has a different layout",
                  g.claim_id);
    }
  }
}

bool passes(const GalleryFilter& filter, const StatusResolver& status,
            const EnrolledFeature& g) {
  if (filter.status_in && !status) {
    throw Error(ErrorCode::config, "status_in filter needs a status resolver", "status_in");
  }
  return accepts(filter, g, filter.status_in ? status(g.claim_id) : std::nullopt);
}

std::vector<MatchResult> to_results(std::span<const EnrolledFeature> gallery,
                                    std::span<const Candidate> ranked) {
  std::vector<MatchResult> out;
  out.reserve(ranked.size());
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& g = gallery[ranked[i].index];
    out.push_back({g.claim_id, g.vehicle_id, g.image_id, ranked[i].similarity, i + 1,
                   g.enrollment_seq});
  }
  return out;
}

// Worst kept candidate on top.
struct WorseOnTop {
  bool operator()(const Candidate& a, const Candidate& b) const noexcept {
    return ranks_before(a, b);
  }
};

class BoundedTopK {
 public:
  explicit BoundedTopK(std::size_t k) : k_(k) {}

  void offer(const Candidate& c) {
    if (heap_.size() < k_) {
      heap_.push(c);
    } else if (ranks_before(c, heap_.top())) {
      heap_.pop();
      heap_.push(c);
    }
  }

  std::vector<Candidate> drain() {
    std::vector<Candidate> out;
    out.reserve(heap_.size());
    while (!heap_.empty()) {
      out.push_back(heap_.top());
      heap_.pop();
    }
    return out;
  }

 private:
  std::size_t k_;
  std::priority_queue<Candidate, std::vector<Candidate>, WorseOnTop> heap_;
};

struct DotNorm {
  double dot;
  double norm_sq;
};

DotNorm dot_and_norm(const float* probe, const float* row, std::size_t n) {
  double d0 = 0, d1 = 0, d2 = 0, d3 = 0, n0 = 0, n1 = 0, n2 = 0, n3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const double r0 = row[i], r1 = row[i + 1], r2 = row[i + 2], r3 = row[i + 3];
    d0 += probe[i] * r0;
    d1 += probe[i + 1] * r1;
    d2 += probe[i + 2] * r2;
    d3 += probe[i + 3] * r3;
    n0 += r0 * r0;
    n1 += r1 * r1;
    n2 += r2 * r2;
    n3 += r3 * r3;
  }
  for (; i < n; ++i) {
    const double r = row[i];
    d0 += probe[i] * r;
    n0 += r * r;
  }
  return {(d0 + d1) + (d2 + d3), (n0 + n1) + (n2 + n3)};
}

}  // namespace

std::vector<MatchResult> search(const FusedDescriptor& probe,
                                std::span<const EnrolledFeature> gallery, std::size_t k,
                                const GalleryFilter& filter, const StatusResolver& status) {
  check_layouts(probe, gallery);
  std::vector<Candidate> scored;
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    if (!passes(filter, status, gallery[i])) continue;
    scored.push_back({cosine_similarity<float>(probe.values, gallery[i].descriptor.values),
                      gallery[i].enrollment_seq, i});
  }
  std::sort(scored.begin(), scored.end(), ranks_before);
  scored.resize(std::min(k, scored.size()));
  return to_results(gallery, scored);
}

std::vector<MatchResult> search_fast(const FusedDescriptor& probe,
                                     std::span<const EnrolledFeature> gallery, std::size_t k,
                                     const GalleryFilter& filter, const StatusResolver& status,
                                     const SearchOptions& options) {
  check_layouts(probe, gallery);
  if (k == 0 || gallery.empty()) return {};

  const std::size_t dim = probe.values.size();
  double probe_sq = 0.0;
  for (float x : probe.values) probe_sq += static_cast<double>(x) * x;
  const double probe_norm = std::sqrt(probe_sq);
  const float* p = probe.values.data();

  auto scan = [&](std::size_t begin, std::size_t end) {
    BoundedTopK top(k);
    const std::size_t block = std::max<std::size_t>(1, options.block_rows);
    for (std::size_t b = begin; b < end; b += block) {
      const std::size_t stop = std::min(end, b + block);
      for (std::size_t i = b; i < stop; ++i) {
        const auto& g = gallery[i];
        if (!passes(filter, status, g)) continue;
        double sim = 0.0;
        if (probe_norm > 0.0) {
          auto dn = dot_and_norm(p, g.descriptor.values.data(), dim);
          if (dn.norm_sq > 0.0) {
            sim = std::clamp(dn.dot / (probe_norm * std::sqrt(dn.norm_sq)), -1.0, 1.0);
          }
        }
        top.offer({sim, g.enrollment_seq, i});
      }
    }
    return top.drain();
  };

  unsigned threads = options.threads ? options.threads : std::thread::hardware_concurrency();
  threads = std::max(1u, threads);
  std::vector<Candidate> merged;
  if (threads == 1 || gallery.size() < options.parallel_min_rows) {
    merged = scan(0, gallery.size());
  } else {
    const std::size_t parts = std::min<std::size_t>(threads, gallery.size());
    std::vector<std::vector<Candidate>> partial(parts);
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(parts);
    const std::size_t chunk = (gallery.size() + parts - 1) / parts;
    for (std::size_t t = 0; t < parts; ++t) {
      workers.emplace_back([&, t] {
        try {
          const std::size_t lo = t * chunk;
          partial[t] = scan(lo, std::min(gallery.size(), lo + chunk));
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    for (auto& part : partial) merged.insert(merged.end(), part.begin(), part.end());
  }
  std::sort(merged.begin(), merged.end(), ranks_before);
  merged.resize(std::min(k, merged.size()));
  return to_results(gallery, merged);
}

std::string_view to_string(FraudMode m) {
  return m == FraudMode::cross_vehicle ? "cross_vehicle" : "same_vehicle";
}

FraudMode parse_fraud_mode(std::string_view s) {
  if (s == "cross_vehicle") return FraudMode::cross_vehicle;
  if (s == "same_vehicle") return FraudMode::same_vehicle;
  throw Error(ErrorCode::validation, "mode must be cross_vehicle or same_vehicle", "mode");
}

void validate(const FraudPolicy& policy) {
  if (!(policy.threshold >= -1.0 && policy.threshold <= 1.0)) {
    throw Error(ErrorCode::validation, "threshold must lie in [-1, 1]", "threshold");
  }
  if (policy.top_k < 1) throw Error(ErrorCode::validation, "top_k must be >= 1", "top_k");
}

FraudAssessment fraud_check(const ClaimRecord& probe_claim,
                            std::span<const FusedDescriptor> probe_descriptors,
                            const StoreState& store, const FraudPolicy& policy) {
  validate(policy);
  GalleryFilter filter;
  filter.exclude_claim = probe_claim.claim_id;
  if (policy.mode == FraudMode::same_vehicle) filter.only_vehicle = probe_claim.vehicle_id;

  // Per gallery entry, keep its best score across all probe descriptors.
  std::map<std::uint64_t, MatchResult> best_by_seq;
  for (const auto& probe : probe_descriptors) {
    if (!same_layout(probe.layout, store.layout)) {
      throw Error(ErrorCode::layout_mismatch, "probe descriptor layout differs from the store",
                  probe_claim.claim_id);
    }
    for (auto& m : search_fast(probe, store.features, policy.top_k, filter)) {
      auto [it, inserted] = best_by_seq.try_emplace(m.enrollment_seq, m);
      if (!inserted && m.similarity > it->second.similarity) it->second = m;
    }
  }
  std::vector<MatchResult> matches;
  matches.reserve(best_by_seq.size());
  for (auto& [seq, m] : best_by_seq) matches.push_back(std::move(m));
  std::sort(matches.begin(), matches.end(), [](const MatchResult& a, const MatchResult& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.enrollment_seq < b.enrollment_seq;
  });
  if (matches.size() > policy.top_k) matches.resize(policy.top_k);
  for (std::size_t i = 0; i < matches.size(); ++i) matches[i].rank = i + 1;

  FraudAssessment out;
  out.policy = policy;
  if (!matches.empty()) {
    out.best = matches.front();
    out.flagged = out.best->similarity >= policy.threshold;
  }
  out.matches = std::move(matches);
  return out;
}

ThresholdCalibration calibrate_threshold(std::span<const double> positives,
                                         std::span<const double> negatives) {
  if (positives.empty() || negatives.empty()) {
    throw Error(ErrorCode::validation, "calibration needs positive and negative scores");
  }
  ThresholdCalibration c;
  c.max_negative = *std::max_element(negatives.begin(), negatives.end());
  c.min_positive = *std::min_element(positives.begin(), positives.end());
  if (c.min_positive > c.max_negative) {
    c.separable = true;
    c.threshold = (c.min_positive + c.max_negative) / 2.0;
    return c;
  }
  // Flag iff score >= t: errors(t) = negatives >= t plus positives < t.
  std::vector<double> cuts(positives.begin(), positives.end());
  cuts.insert(cuts.end(), negatives.begin(), negatives.end());
  std::sort(cuts.begin(), cuts.end());
  std::size_t best_errors = std::numeric_limits<std::size_t>::max();
  for (double t : cuts) {
    std::size_t errors = 0;
    for (double n : negatives) errors += n >= t;
    for (double p : positives) errors += p < t;
    if (errors < best_errors) {
      best_errors = errors;
      c.threshold = t;
    }
  }
  return c;
}

void to_json(nlohmann::json& j, const MatchResult& m) {
  j = {{"claim_id", m.claim_id},   {"vehicle_id", m.vehicle_id},
       {"image_id", m.image_id},   {"similarity", m.similarity},
       {"rank", m.rank},           {"enrollment_seq", m.enrollment_seq}};
}

void from_json(const nlohmann::json& j, MatchResult& m) {
  m.claim_id = j.at("claim_id").get<std::string>();
  m.vehicle_id = j.at("vehicle_id").get<std::string>();
  m.image_id = j.at("image_id").get<std::string>();
  m.similarity = j.at("similarity").get<double>();
  m.rank = j.at("rank").get<std::size_t>();
  m.enrollment_seq = j.value("enrollment_seq", std::uint64_t{0});
}

void to_json(nlohmann::json& j, const FraudPolicy& p) {
  j = {{"mode", to_string(p.mode)}, {"threshold", p.threshold}, {"top_k", p.top_k}};
}

void from_json(const nlohmann::json& j, FraudPolicy& p) {
  if (j.contains("mode")) p.mode = parse_fraud_mode(j.at("mode").get<std::string>());
  if (j.contains("threshold")) p.threshold = j.at("threshold").get<double>();
  if (j.contains("top_k")) p.top_k = j.at("top_k").get<std::size_t>();
}

void to_json(nlohmann::json& j, const FraudAssessment& a) {
  j = {{"flagged", a.flagged},
       {"best", a.best ? nlohmann::json(*a.best) : nlohmann::json(nullptr)},
       {"matches", a.matches},
       {"policy", a.policy}};
}

void from_json(const nlohmann::json& j, FraudAssessment& a) {
  a.flagged = j.at("flagged").get<bool>();
  if (auto it = j.find("best"); it != j.end() && !it->is_null()) {
    a.best = it->get<MatchResult>();
  } else {
    a.best.reset();
  }
  a.matches = j.at("matches").get<std::vector<MatchResult>>();
  a.policy = j.at("policy").get<FraudPolicy>();
}

}  // namespace carguard
