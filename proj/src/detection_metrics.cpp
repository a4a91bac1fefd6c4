#include "carguard/detection_metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "carguard/error.hpp"

namespace carguard {

DetectionMatch match_detections(std::span<const Detection> preds,
                                std::span<const GroundTruth> gts, const MatchOptions& options) {
  const std::string* image = nullptr;
  auto check_image = [&image](const std::string& id) {
    if (!image) {
      image = &id;
    } else if (*image != id) {
      throw Error(ErrorCode::validation,
                  "match_detections expects one image, got " + *image + " and " + id, "image_id");
    }
  };
  for (const auto& p : preds) check_image(p.image_id);
  for (const auto& g : gts) check_image(g.image_id);

  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].confidence > preds[b].confidence;
  });

  DetectionMatch out;
  out.assignment.assign(preds.size(), std::nullopt);
  std::vector<bool> taken(gts.size(), false);
  for (auto pi : order) {
    const auto& p = preds[pi];
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (taken[gi]) continue;
      if (options.class_aware && gts[gi].damage_class != p.damage_class) continue;
      double v = iou(p.bbox, gts[gi].bbox);
      if (v >= options.iou_threshold && v > best_iou) {
        best_iou = v;
        best = gi;
      }
    }
    if (best) {
      taken[*best] = true;
      out.assignment[pi] = best;
      ++out.tp;
    } else {
      ++out.fp;
    }
  }
  out.fn = gts.size() - out.tp;
  return out;
}

PrPoint precision_recall_at(std::span<const Detection> preds, std::span<const GroundTruth> gts,
                            double confidence_threshold, const MatchOptions& options) {
  std::map<std::string, std::pair<std::vector<Detection>, std::vector<GroundTruth>>> by_image;
  for (const auto& p : preds) {
    if (p.confidence >= confidence_threshold) by_image[p.image_id].first.push_back(p);
  }
  for (const auto& g : gts) by_image[g.image_id].second.push_back(g);

  PrPoint pt;
  pt.confidence_threshold = confidence_threshold;
  for (const auto& [id, group] : by_image) {
    auto m = match_detections(group.first, group.second, options);
    pt.tp += m.tp;
    pt.fp += m.fp;
    pt.fn += m.fn;
  }
  pt.precision = pt.tp + pt.fp == 0 ? 1.0 : static_cast<double>(pt.tp) / (pt.tp + pt.fp);
  pt.recall = pt.tp + pt.fn == 0 ? 1.0 : static_cast<double>(pt.tp) / (pt.tp + pt.fn);
  return pt;
}

PrCurve pr_curve(std::span<const Detection> preds, std::span<const GroundTruth> gts,
                 std::span<const double> thresholds, const MatchOptions& options) {
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw Error(ErrorCode::validation, "thresholds must be sorted ascending", "thresholds");
  }
  PrCurve curve{options.iou_threshold, {}};
  for (double t : thresholds) curve.points.push_back(precision_recall_at(preds, gts, t, options));
  return curve;
}

namespace {

// Reads non-empty, non-comment lines as whitespace-separated fields.
template <class F>
void for_each_record(std::istream& in, const std::string& source, std::size_t fields, F&& f) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    std::vector<std::string> parts;
    for (std::string p; ss >> p;) parts.push_back(p);
    auto where = source + ":" + std::to_string(lineno);
    if (parts.size() != fields) {
      throw Error(ErrorCode::validation,
                  where + ": expected " + std::to_string(fields) + " fields", source);
    }
    try {
      f(parts, where);
    } catch (const std::invalid_argument&) {
      throw Error(ErrorCode::validation, where + ": malformed number", source);
    } catch (const std::out_of_range&) {
      throw Error(ErrorCode::validation, where + ": number out of range", source);
    } catch (const Error& e) {
      throw Error(e.code(), where + ": " + e.what(), source);
    }
  }
}

NormalizedBBox parse_box(const std::vector<std::string>& p, std::size_t at) {
  NormalizedBBox b{std::stod(p[at]), std::stod(p[at + 1]), std::stod(p[at + 2]),
                   std::stod(p[at + 3])};
  validate(b);
  return b;
}

template <class T>
std::vector<T> load_with(const std::filesystem::path& path,
                         std::vector<T> (*parse)(std::istream&, const std::string&)) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string(), path.string());
  return parse(in, path.string());
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::vector<GroundTruth> parse_annotations(std::istream& in, const std::string& source) {
  std::vector<GroundTruth> out;
  for_each_record(in, source, 6, [&](const std::vector<std::string>& p, const std::string&) {
    out.push_back({p[0], parse_box(p, 2), parse_damage_class(p[1])});
  });
  return out;
}

std::vector<Detection> parse_detections(std::istream& in, const std::string& source) {
  std::vector<Detection> out;
  for_each_record(in, source, 7, [&](const std::vector<std::string>& p, const std::string&) {
    double conf = std::stod(p[2]);
    if (!(conf >= 0.0 && conf <= 1.0)) {
      throw Error(ErrorCode::validation, "confidence must lie in [0,1]", "confidence");
    }
    out.push_back({p[0], parse_box(p, 3), parse_damage_class(p[1]), conf});
  });
  return out;
}

std::vector<GroundTruth> load_annotations(const std::filesystem::path& path) {
  return load_with<GroundTruth>(path, parse_annotations);
}

std::vector<Detection> load_detections(const std::filesystem::path& path) {
  return load_with<Detection>(path, parse_detections);
}

void write_annotations(std::ostream& out, std::span<const GroundTruth> gts) {
  for (const auto& g : gts) {
    out << g.image_id << ' ' << to_string(g.damage_class) << ' ' << fixed6(g.bbox.cx) << ' '
        << fixed6(g.bbox.cy) << ' ' << fixed6(g.bbox.w) << ' ' << fixed6(g.bbox.h) << '\n';
  }
}

void write_detections(std::ostream& out, std::span<const Detection> dets) {
  for (const auto& d : dets) {
    out << d.image_id << ' ' << to_string(d.damage_class) << ' ' << fixed6(d.confidence) << ' '
        << fixed6(d.bbox.cx) << ' ' << fixed6(d.bbox.cy) << ' ' << fixed6(d.bbox.w) << ' '
        << fixed6(d.bbox.h) << '\n';
  }
}

void write_pr_table_csv(std::ostream& out, const PrCurve& curve) {
  out << "confidence_threshold,precision,recall,tp,fp,fn\n";
  for (const auto& p : curve.points) {
    out << fixed6(p.confidence_threshold) << ',' << fixed6(p.precision) << ','
        << fixed6(p.recall) << ',' << p.tp << ',' << p.fp << ',' << p.fn << '\n';
  }
}

void write_pr_curve_csv(std::ostream& out, const PrCurve& curve) {
  out << "recall,precision\n";
  for (const auto& p : curve.points) out << fixed6(p.recall) << ',' << fixed6(p.precision) << '\n';
}

}  // namespace carguard
