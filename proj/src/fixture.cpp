#include "carguard/fixture.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "carguard/error.hpp"
#include "carguard/matcher.hpp"
#include "carguard/rng.hpp"

namespace fs = std::filesystem;

namespace carguard {
namespace {

constexpr std::array<Rgb, 6> kPalette = {{
    {235, 235, 232},  // white
    {176, 178, 182},  // silver
    {38, 38, 42},     // black
    {168, 32, 30},    // red
    {34, 62, 148},    // blue
    {108, 110, 114},  // gray
}};

// Re-shot body photos: viewpoint shift and zoom, nearly constant exposure.
constexpr double kReshootShift = 0.05;
constexpr double kReshootZoom = 0.05;
// Exposure stays fixed: flat paint regions would hop whole histogram bins.
constexpr double kReshootBrightness = 0.0;

// Damage pattern resolution; one bit per cell.
constexpr int kPatternGrid = 8;
constexpr std::size_t kPatternCells = kPatternGrid * kPatternGrid;

// Dark primer exposed inside a damaged area, same for every paint colour.
constexpr Rgb kPrimer = {14, 15, 17};

constexpr std::uint64_t kNovelStreamBase = 1'000'000;

std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

Rgb shade(Rgb c, double factor, double offset = 0.0) {
  return {clamp_u8(c[0] * factor + offset), clamp_u8(c[1] * factor + offset),
          clamp_u8(c[2] * factor + offset)};
}

double round6(double v) { return std::round(v * 1e6) / 1e6; }

NormalizedBBox round6(const NormalizedBBox& b) {
  return {round6(b.cx), round6(b.cy), round6(b.w), round6(b.h)};
}

struct VehicleLook {
  Rgb base;
  double body_x0, body_x1, body_y0, body_y1;
  double cabin_x0, cabin_x1, cabin_y0;
  double wheel_r;
  std::array<bool, 12> plate;
};

VehicleLook make_vehicle(Rng& rng) {
  VehicleLook v;
  auto c = kPalette[rng.below(kPalette.size())];
  for (auto& ch : c) ch = clamp_u8(ch + rng.uniform(-8.0, 8.0));
  v.base = c;
  v.body_x0 = 0.08 + rng.uniform(-0.03, 0.03);
  v.body_x1 = 0.92 + rng.uniform(-0.03, 0.03);
  v.body_y0 = 0.44 + rng.uniform(-0.03, 0.03);
  v.body_y1 = 0.78 + rng.uniform(-0.02, 0.02);
  v.cabin_x0 = 0.26 + rng.uniform(-0.04, 0.04);
  v.cabin_x1 = 0.70 + rng.uniform(-0.04, 0.04);
  v.cabin_y0 = 0.22 + rng.uniform(-0.03, 0.03);
  v.wheel_r = 0.10 + rng.uniform(-0.01, 0.01);
  for (auto& cell : v.plate) cell = rng.below(2) == 1;
  return v;
}

Rgb body_scene(const VehicleLook& v, double u, double y) {
  // Wheels are drawn over the body.
  const double aspect = 128.0 / 96.0;
  for (double wx : {v.body_x0 + 0.16, v.body_x1 - 0.16}) {
    double dx = (u - wx) * aspect, dy = y - v.body_y1;
    if (dx * dx + dy * dy <= v.wheel_r * v.wheel_r) return {22, 22, 24};
  }
  // Plate-like glyph block.
  const double px0 = 0.42, px1 = 0.58, py0 = 0.66, py1 = 0.74;
  if (u >= px0 && u < px1 && y >= py0 && y < py1) {
    int col = static_cast<int>((u - px0) / (px1 - px0) * 6);
    int row = static_cast<int>((y - py0) / (py1 - py0) * 2);
    col = std::clamp(col, 0, 5);
    row = std::clamp(row, 0, 1);
    return v.plate[static_cast<std::size_t>(row * 6 + col)] ? Rgb{30, 30, 30}
                                                             : Rgb{240, 240, 236};
  }
  if (u >= v.body_x0 && u < v.body_x1 && y >= v.body_y0 && y < v.body_y1) {
    return shade(v.base, 1.0 - 0.25 * (y - v.body_y0));
  }
  if (u >= v.cabin_x0 && u < v.cabin_x1 && y >= v.cabin_y0 && y < v.body_y0) {
    double inset = 0.03;
    bool window = u >= v.cabin_x0 + inset && u < v.cabin_x1 - inset && y >= v.cabin_y0 + inset;
    bool pillar = std::abs(u - (v.cabin_x0 + v.cabin_x1) / 2) < 0.015;
    if (window && !pillar) return {92, 108, 124};
    return shade(v.base, 0.92);
  }
  if (y >= 0.86) return {84, 84, 80};
  return shade(Rgb{196, 204, 214}, 1.0 - 0.2 * y);
}

struct DamageLook {
  NormalizedBBox box;
  DamageClass damage_class;
  std::array<bool, kPatternCells> cells;
  Rgb surface;
  Rgb mark;
  double panel_line;
};

DamageLook make_damage(Rng& rng, Rgb surface) {
  DamageLook d;
  d.damage_class = static_cast<DamageClass>(rng.below(3));
  double w = rng.uniform(0.32, 0.46), h = rng.uniform(0.32, 0.46);
  d.box = round6(NormalizedBBox{rng.uniform(0.08 + w / 2, 0.92 - w / 2),
                                rng.uniform(0.08 + h / 2, 0.92 - h / 2), w, h});
  std::size_t on = 0;
  do {
    on = 0;
    for (auto& c : d.cells) {
      c = rng.below(2) == 1;
      on += c;
    }
  } while (on * 10 < kPatternCells * 3 || on * 10 > kPatternCells * 7);
  d.surface = surface;
  d.mark = {226, 224, 218};  // bare metal
  d.panel_line = rng.uniform(0.1, 0.9);
  return d;
}

Rgb close_scene(const DamageLook& d, double u, double v) {
  const auto& b = d.box;
  double x0 = b.cx - b.w / 2, y0 = b.cy - b.h / 2;
  if (u >= x0 && u < x0 + b.w && v >= y0 && v < y0 + b.h) {
    const int g = kPatternGrid;
    double fu = (u - x0) / b.w * g, fv = (v - y0) / b.h * g;
    int col = std::clamp(static_cast<int>(fu), 0, g - 1);
    int row = std::clamp(static_cast<int>(fv), 0, g - 1);
    if (d.cells[static_cast<std::size_t>(row * g + col)]) {
      // Class texture is a thin overlay; the cell stays mostly mark-coloured.
      double iu = fu - col, iv = fv - row;
      switch (d.damage_class) {
        case DamageClass::scratch:
          if (std::abs(iv - 0.5) < 0.08) return shade(d.mark, 0.6);
          break;
        case DamageClass::dent: break;
        case DamageClass::crack:
          if (std::abs(iu - iv) < 0.08) return shade(d.mark, 0.6);
          break;
      }
      return d.mark;
    }
    return kPrimer;
  }
  if (std::abs(u - d.panel_line) < 0.012) return shade(d.surface, 0.55);
  return shade(d.surface, 1.08 - 0.16 * v);
}

struct ShotTransform {
  double zoom = 1.0;
  double dx = 0.0;
  double dy = 0.0;
  double brightness = 0.0;
};

template <class Scene>
ImageBuffer render(int width, int height, const ShotTransform& t, Scene&& scene) {
  ImageBuffer img(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double u = (x + 0.5) / width, v = (y + 0.5) / height;
      double su = (u - 0.5 - t.dx) / t.zoom + 0.5;
      double sv = (v - 0.5 - t.dy) / t.zoom + 0.5;
      img.set(x, y, shade(scene(su, sv), 1.0, t.brightness));
    }
  }
  return img;
}

struct CropWindow {
  double x0, y0, x1, y1;
};

// Bilinear resample of a source window back to full size, then brightness.
ImageBuffer perturbed_copy(const ImageBuffer& src, const CropWindow& win, double brightness) {
  ImageBuffer out(src.width, src.height);
  const double sx = (win.x1 - win.x0) / src.width, sy = (win.y1 - win.y0) / src.height;
  for (int y = 0; y < out.height; ++y) {
    double fy = std::clamp(win.y0 + (y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, src.height - 1);
    double ty = fy - y0;
    for (int x = 0; x < out.width; ++x) {
      double fx = std::clamp(win.x0 + (x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, src.width - 1);
      double tx = fx - x0;
      auto a = src.at(x0, y0), b = src.at(x1, y0), c = src.at(x0, y1), d = src.at(x1, y1);
      Rgb px;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        double top = a[ch] * (1 - tx) + b[ch] * tx;
        double bottom = c[ch] * (1 - tx) + d[ch] * tx;
        px[ch] = clamp_u8(top * (1 - ty) + bottom * ty + brightness);
      }
      out.set(x, y, px);
    }
  }
  return out;
}

NormalizedBBox box_in_window(const NormalizedBBox& b, const CropWindow& win, int w, int h) {
  double l = (b.cx - b.w / 2) * w, r = (b.cx + b.w / 2) * w;
  double t = (b.cy - b.h / 2) * h, bt = (b.cy + b.h / 2) * h;
  auto mx = [&](double x) { return std::clamp((x - win.x0) / (win.x1 - win.x0), 0.0, 1.0); };
  auto my = [&](double y) { return std::clamp((y - win.y0) / (win.y1 - win.y0), 0.0, 1.0); };
  double nl = mx(l), nr = mx(r), nt = my(t), nb = my(bt);
  return round6(NormalizedBBox{(nl + nr) / 2, (nt + nb) / 2, nr - nl, nb - nt});
}

NormalizedBBox jitter_box(Rng& rng, const NormalizedBBox& gt) {
  for (;;) {
    NormalizedBBox b{gt.cx + rng.uniform(-0.07, 0.07) * gt.w,
                     gt.cy + rng.uniform(-0.07, 0.07) * gt.h, gt.w * rng.uniform(0.9, 1.1),
                     gt.h * rng.uniform(0.9, 1.1)};
    b.w = std::min(b.w, 1.0);
    b.h = std::min(b.h, 1.0);
    b.cx = std::clamp(b.cx, 0.0, 1.0);
    b.cy = std::clamp(b.cy, 0.0, 1.0);
    b = round6(b);
    if (is_valid(b) && iou(b, gt) >= 0.7) return b;
  }
}

std::string padded(const char* prefix, std::size_t i, std::size_t total) {
  int width = std::max(3, static_cast<int>(std::to_string(total > 0 ? total - 1 : 0).size()));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
  return buf;
}

struct Builder {
  const FixtureSpec& spec;
  fs::path out;
  std::vector<GroundTruth> annotations;
  std::vector<Detection> detections;
  std::map<std::string, ImageBuffer> close_ups;

  ManifestImage save(const std::string& id, EvidenceKind kind, int shot, const ImageBuffer& img,
                     std::vector<DamageRegion> regions) {
    auto rel = "images/" + id + ".png";
    write_png(out / rel, img);
    if (kind == EvidenceKind::close_up) close_ups.emplace(id, img);
    return {id, kind, rel, shot, std::move(regions)};
  }

  void record_damage(Rng& rng, const std::string& id, const DamageRegion& region) {
    annotations.push_back({id, region.bbox, region.damage_class});
    detections.push_back({id, jitter_box(rng, region.bbox), region.damage_class,
                          round6(rng.uniform(0.55, 0.98))});
    if (rng.uniform() < 0.4) {
      double w = rng.uniform(0.1, 0.3), h = rng.uniform(0.1, 0.3);
      NormalizedBBox fp{rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2), w, h};
      detections.push_back({id, round6(fp), static_cast<DamageClass>(rng.below(3)),
                            round6(rng.uniform(0.05, 0.45))});
    }
  }

  ManifestVehicle vehicle(const std::string& vehicle_id, Rng rng, std::size_t shots,
                          bool duplicates, std::vector<DuplicatePair>* pairs) {
    ManifestVehicle mv{vehicle_id, {}};
    const auto look = make_vehicle(rng);
    auto surface = shade(look.base, 1.0);
    DamageLook first_damage = make_damage(rng, surface);
    ImageBuffer first_close;
    for (std::size_t s = 0; s < shots; ++s) {
      const int shot = static_cast<int>(s);
      ShotTransform body_t;
      if (s > 0) {
        body_t = {1.0 + rng.uniform(-kReshootZoom, kReshootZoom),
                  rng.uniform(-kReshootShift, kReshootShift),
                  rng.uniform(-kReshootShift, kReshootShift) / 2,
                  rng.uniform(-kReshootBrightness, kReshootBrightness)};
      }
      auto body = render(spec.body_width, spec.body_height, body_t,
                         [&](double u, double v) { return body_scene(look, u, v); });
      auto body_id = vehicle_id + "_body_" + std::to_string(s);
      mv.images.push_back(save(body_id, EvidenceKind::full_body, shot, body, {}));

      auto close_id = vehicle_id + "_close_" + std::to_string(s);
      ImageBuffer close;
      DamageRegion region;
      region.source = RegionSource::annotation;
      if (s == 0 || !duplicates) {
        auto damage = s == 0 ? first_damage : make_damage(rng, surface);
        close = render(spec.close_width, spec.close_height, {},
                       [&](double u, double v) { return close_scene(damage, u, v); });
        region.bbox = damage.box;
        region.damage_class = damage.damage_class;
        if (s == 0) first_close = close;
      } else {
        const double j = spec.perturbation.crop_jitter_frac;
        const double W = spec.close_width, H = spec.close_height;
        CropWindow win{rng.uniform(0, j) * W, rng.uniform(0, j) * H, W - rng.uniform(0, j) * W,
                       H - rng.uniform(0, j) * H};
        close = perturbed_copy(first_close, win, spec.perturbation.brightness_delta);
        region.bbox = box_in_window(first_damage.box, win, spec.close_width, spec.close_height);
        region.damage_class = first_damage.damage_class;
        if (pairs) pairs->push_back({vehicle_id + "_close_0", close_id});
      }
      mv.images.push_back(save(close_id, EvidenceKind::close_up, shot, close, {region}));
      record_damage(rng, close_id, region);
    }
    return mv;
  }
};

nlohmann::json self_check(const Dataset& d, const std::map<std::string, ImageBuffer>& close_ups) {
  std::vector<std::string> ids;
  std::map<std::string, std::vector<double>> emb;
  for (const auto& ref : d.close_ups()) {
    auto [vehicle, img] = d.find_image(ref.image_id);
    ids.push_back(ref.image_id);
    emb[ref.image_id] = toy_embed(crop_roi(close_ups.at(ref.image_id), img->regions[0].bbox), 64);
  }
  std::set<std::pair<std::string, std::string>> paired;
  std::vector<double> pair_sims;
  for (const auto& p : d.duplicate_pairs) {
    paired.insert({std::min(p.original, p.duplicate), std::max(p.original, p.duplicate)});
    pair_sims.push_back(cosine_similarity(emb[p.original], emb[p.duplicate]));
  }
  std::vector<double> other;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t k = i + 1; k < ids.size(); ++k) {
      auto key = std::pair{std::min(ids[i], ids[k]), std::max(ids[i], ids[k])};
      if (!paired.contains(key)) other.push_back(cosine_similarity(emb[ids[i]], emb[ids[k]]));
    }
  }
  nlohmann::json j = {{"embedding", "toy-64 on annotated ROI"},
                      {"pairs", pair_sims.size()},
                      {"non_pairs", other.size()}};
  if (pair_sims.empty() || other.empty()) {
    j["passed"] = true;
    return j;
  }
  std::sort(other.begin(), other.end());
  // Nearest-rank 95th percentile.
  auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(other.size())));
  double p95 = other[std::max<std::size_t>(rank, 1) - 1];
  double pair_min = *std::min_element(pair_sims.begin(), pair_sims.end());
  j["pair_min"] = round6(pair_min);
  j["non_pair_p95"] = round6(p95);
  j["non_pair_max"] = round6(other.back());
  j["passed"] = pair_min > p95;
  return j;
}

}  // namespace

nlohmann::json fixture_spec_to_json(const FixtureSpec& spec) {
  return {{"vehicles", spec.vehicles},
          {"images_per_vehicle", spec.images_per_vehicle},
          {"duplicate_pairs", spec.duplicate_pairs.value_or(spec.vehicles)},
          {"novel_claims", spec.novel_claims.value_or(spec.vehicles)},
          {"perturbation",
           {{"brightness_delta", spec.perturbation.brightness_delta},
            {"crop_jitter_frac", spec.perturbation.crop_jitter_frac}}},
          {"seed", spec.seed},
          {"body_size", {spec.body_width, spec.body_height}},
          {"close_size", {spec.close_width, spec.close_height}}};
}

Dataset generate_fixture(const FixtureSpec& spec, const fs::path& out) {
  if (spec.vehicles < 2) throw Error(ErrorCode::validation, "fixture needs >= 2 vehicles", "vehicles");
  if (spec.images_per_vehicle < 1) {
    throw Error(ErrorCode::validation, "images_per_vehicle must be >= 1", "images_per_vehicle");
  }
  if (spec.perturbation.crop_jitter_frac < 0 || spec.perturbation.crop_jitter_frac >= 0.25) {
    throw Error(ErrorCode::validation, "crop_jitter_frac must lie in [0, 0.25)", "crop_jitter_frac");
  }
  std::error_code ec;
  fs::create_directories(out / "images", ec);
  if (ec) throw Error(ErrorCode::io, "cannot create " + out.string(), out.string());

  Builder b{spec, out, {}, {}, {}};
  Dataset d;
  d.root = out;
  d.spec = fixture_spec_to_json(spec);
  const auto dup_count = std::min(spec.duplicate_pairs.value_or(spec.vehicles), spec.vehicles);
  for (std::size_t i = 0; i < spec.vehicles; ++i) {
    d.vehicles.push_back(b.vehicle(padded("V", i, spec.vehicles), Rng::derive(spec.seed, i),
                                   spec.images_per_vehicle, i < dup_count, &d.duplicate_pairs));
  }
  const auto novel = spec.novel_claims.value_or(spec.vehicles);
  for (std::size_t i = 0; i < novel; ++i) {
    d.novel.push_back(b.vehicle(padded("N", i, novel), Rng::derive(spec.seed, kNovelStreamBase + i),
                                1, false, nullptr));
  }
  d.self_check = self_check(d, b.close_ups);

  std::ofstream manifest(out / "manifest.json", std::ios::trunc);
  manifest << manifest_to_json(d).dump(2) << '\n';
  std::ofstream ann(out / "annotations.txt", std::ios::trunc);
  write_annotations(ann, b.annotations);
  std::ofstream det(out / "detections.txt", std::ios::trunc);
  write_detections(det, b.detections);
  if (!manifest || !ann || !det) throw Error(ErrorCode::io, "cannot write fixture files", out.string());
  return d;
}

}  // namespace carguard
