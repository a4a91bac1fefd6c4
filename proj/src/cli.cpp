#include "carguard/cli.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "carguard/ablation.hpp"
#include "carguard/claimstore.hpp"
#include "carguard/config.hpp"
#include "carguard/dataset.hpp"
#include "carguard/detection_metrics.hpp"
#include "carguard/error.hpp"
#include "carguard/fixture.hpp"
#include "carguard/http_server.hpp"
#include "carguard/retrieval_metrics.hpp"
#include "carguard/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace carguard {
namespace {

struct Common {
  std::string config_path;
  std::uint64_t seed = 7;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON config file (shared with serve)");
  cmd->add_option("--seed", c.seed, "Seed for every random choice")->capture_default_str();
}

Config load(const Common& c) {
  return load_config(c.config_path.empty() ? std::nullopt : std::optional<fs::path>(c.config_path));
}

template <class T>
std::vector<T> ascending(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  return v;
}

/// "cx,cy,w,h" or "cx,cy,w,h,class".
DamageRegion parse_region(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ',');) parts.push_back(p);
  if (parts.size() != 4 && parts.size() != 5) {
    throw Error(ErrorCode::validation, "region must be cx,cy,w,h[,class]: '" + text + "'",
                "region");
  }
  DamageRegion r;
  double* fields[] = {&r.bbox.cx, &r.bbox.cy, &r.bbox.w, &r.bbox.h};
  for (std::size_t i = 0; i < 4; ++i) {
    std::size_t used = 0;
    try {
      *fields[i] = std::stod(parts[i], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != parts[i].size() || parts[i].empty()) {
      throw Error(ErrorCode::validation, "region value '" + parts[i] + "' is not a number",
                  "region");
    }
  }
  if (parts.size() == 5) r.damage_class = parse_damage_class(parts[4]);
  validate(r);
  return r;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::io, "cannot write " + path, path);
  return f;
}

void write_to(const std::string& path, std::ostream& fallback, const std::function<void(std::ostream&)>& fn) {
  if (path.empty() || path == "-") {
    fn(fallback);
    return;
  }
  auto f = open_out(path);
  fn(f);
  if (!f) throw Error(ErrorCode::io, "cannot write " + path, path);
}

std::vector<Detection> detections_or_default(const std::string& flag, const Dataset& d,
                                             const Config& cfg, bool required) {
  fs::path p = flag;
  if (p.empty()) p = cfg.detections_path;
  if (p.empty() && fs::exists(d.root / "detections.txt")) p = d.root / "detections.txt";
  if (p.empty()) {
    if (required) {
      throw Error(ErrorCode::config, "detector ROIs need --detections (no detections.txt found)",
                  "detections");
    }
    return {};
  }
  return load_detections(p);
}

HttpServer* g_server = nullptr;
extern "C" void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"carguard: repeated-claim detection for photo-based car insurance claims",
               "carguard"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");
  std::function<void()> action;

  // ---- gen-fixtures ----
  Common gen_c;
  FixtureSpec spec;
  std::string gen_out;
  std::size_t dup_pairs = 0, novel = 0;
  auto* gen = app.add_subcommand("gen-fixtures", "Write a synthetic claim dataset");
  add_common(gen, gen_c);
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--vehicles", spec.vehicles, "Enrolled vehicles (>= 2)")->capture_default_str();
  gen->add_option("--images-per-vehicle", spec.images_per_vehicle, "Claims (shots) per vehicle")
      ->capture_default_str();
  auto* dup_opt = gen->add_option("--duplicate-pairs", dup_pairs,
                                  "Vehicles whose later close-ups are perturbed copies (default: all)");
  auto* novel_opt =
      gen->add_option("--novel", novel, "Never-enrolled single-claim vehicles (default: --vehicles)");
  gen->add_option("--brightness-delta", spec.perturbation.brightness_delta,
                  "Brightness added to duplicate close-ups")
      ->capture_default_str();
  gen->add_option("--crop-jitter", spec.perturbation.crop_jitter_frac,
                  "Max inward crop per edge of duplicate close-ups (fraction)")
      ->capture_default_str();
  gen->callback([&] {
    action = [&] {
      spec.seed = gen_c.seed;
      if (dup_opt->count()) spec.duplicate_pairs = dup_pairs;
      if (novel_opt->count()) spec.novel_claims = novel;
      auto d = generate_fixture(spec, gen_out);
      out << json({{"out", gen_out}, {"spec", d.spec}, {"self_check", d.self_check}}).dump(2) << '\n';
      err << "wrote " << d.vehicles.size() << " vehicles, " << d.novel.size() << " novel, "
          << d.duplicate_pairs.size() << " duplicate pairs to " << gen_out << '\n';
    };
  });

  // ---- enroll ----
  Common enr_c;
  std::string enr_manifest, enr_store, enr_roi = "annotation", enr_det;
  int enr_shot = 0;
  std::optional<std::int64_t> enr_now;
  auto* enr = app.add_subcommand("enroll", "Enroll one shot of every manifest vehicle into a store");
  add_common(enr, enr_c);
  enr->add_option("--manifest", enr_manifest, "Dataset manifest.json")->required();
  enr->add_option("--store", enr_store, "Store directory (default: config store_path)");
  enr->add_option("--shot", enr_shot, "Which shot forms each vehicle's claim")->capture_default_str();
  enr->add_option("--roi", enr_roi, "annotation or detector")->capture_default_str();
  enr->add_option("--detections", enr_det, "Detector output (default: config or manifest dir)");
  enr->add_option("--now-ms", enr_now, "Pin timestamps to this epoch-ms value");
  enr->callback([&] {
    action = [&] {
      auto cfg = load(enr_c);
      auto provider = make_embedding_provider(cfg);
      auto d = load_manifest(enr_manifest);
      const auto roi = parse_roi_source(enr_roi);
      DatasetDescriber describer(d, *provider);
      if (roi == RoiSource::detector) describer.set_detections(detections_or_default(enr_det, d, cfg, true));
      StoreOptions opts;
      if (enr_now) opts.clock = [t = *enr_now] { return from_millis(t); };
      auto store = ClaimStore::open(enr_store.empty() ? cfg.store_path : fs::path(enr_store),
                                    cfg.fusion, opts);
      std::size_t claims = 0, features = 0;
      for (const auto& v : d.vehicles) {
        auto claim = d.claim_for_shot(v, enr_shot, v.vehicle_id + "-" + std::to_string(enr_shot));
        if (claim.evidence.empty()) continue;
        if (enr_now) claim.submitted_at = from_millis(*enr_now);
        std::vector<ClaimDescriptor> descriptors;
        for (const auto& e : claim.evidence) {
          if (e.kind != EvidenceKind::close_up) continue;
          descriptors.push_back({e.image_id, describer.describe(e.image_id, cfg.fusion, cfg.hist_source, roi)});
        }
        features += descriptors.size();
        store.enroll_claim(std::move(claim), descriptors);
        ++claims;
      }
      out << json({{"claims", claims}, {"features", features}}).dump() << '\n';
      err << "enrolled " << claims << " claims (" << features << " descriptors)\n";
    };
  });

  // ---- check ----
  Common chk_c;
  std::string chk_store, chk_manifest, chk_image, chk_vehicle = "unknown", chk_det, chk_mode;
  std::vector<std::string> chk_bodies, chk_closes, chk_regions;
  std::optional<double> chk_threshold;
  std::optional<std::size_t> chk_top_k;
  auto* chk = app.add_subcommand("check", "Fraud-check a claim's images against a store (read-only)");
  add_common(chk, chk_c);
  chk->add_option("--store", chk_store, "Store directory (default: config store_path)");
  chk->add_option("--manifest", chk_manifest, "Take the claim from this manifest ...");
  chk->add_option("--image", chk_image, "... as the shot containing this close-up id");
  chk->add_option("--body", chk_bodies, "Full-body image file (repeatable)");
  chk->add_option("--close", chk_closes, "Close-up image file (repeatable)");
  chk->add_option("--region", chk_regions,
                  "Damage box cx,cy,w,h[,class] for the close-up at the same position");
  chk->add_option("--detections", chk_det, "Detector output used for close-ups without --region");
  chk->add_option("--vehicle-id", chk_vehicle, "Vehicle id of the probe claim")->capture_default_str();
  chk->add_option("--threshold", chk_threshold, "Override the policy threshold");
  chk->add_option("--mode", chk_mode, "cross_vehicle or same_vehicle");
  chk->add_option("--top-k", chk_top_k, "Override top_k");
  chk->callback([&] {
    action = [&] {
      auto cfg = load(chk_c);
      if (chk_threshold) cfg.policy.threshold = *chk_threshold;
      if (!chk_mode.empty()) cfg.policy.mode = parse_fraud_mode(chk_mode);
      if (chk_top_k) cfg.policy.top_k = *chk_top_k;
      validate(cfg.policy);
      auto provider = make_embedding_provider(cfg);
      const fs::path store_dir = chk_store.empty() ? cfg.store_path : fs::path(chk_store);
      if (!fs::exists(store_dir / "log.bin")) {
        throw Error(ErrorCode::not_found, "no store at " + store_dir.string(), store_dir.string());
      }
      auto store = ClaimStore::open(store_dir);
      ClaimRecord claim;
      std::vector<FusedDescriptor> probe;
      if (!chk_manifest.empty()) {
        if (chk_image.empty()) throw Error(ErrorCode::validation, "--manifest needs --image", "image");
        auto d = load_manifest(chk_manifest);
        auto [vehicle, img] = d.find_image(chk_image);
        if (!img) throw Error(ErrorCode::not_found, "image " + chk_image + " not in manifest", chk_image);
        claim = d.claim_for_shot(*vehicle, img->shot, "probe");
        DatasetDescriber describer(d, *provider);
        for (const auto& e : claim.evidence) {
          if (e.kind == EvidenceKind::close_up) {
            probe.push_back(describer.describe(e.image_id, cfg.fusion, cfg.hist_source, RoiSource::annotation));
          }
        }
      } else {
        if (chk_bodies.empty() || chk_closes.empty()) {
          throw Error(ErrorCode::validation, "check needs --body and --close images (or --manifest)",
                      "evidence");
        }
        if (chk_regions.size() > chk_closes.size()) {
          throw Error(ErrorCode::validation, "more --region values than --close images", "region");
        }
        std::map<std::string, std::vector<Detection>> dets;
        if (!chk_det.empty()) {
          for (auto& det : load_detections(chk_det)) {
            if (det.confidence >= cfg.detector_min_confidence) dets[det.image_id].push_back(det);
          }
        }
        claim.claim_id = "probe";
        claim.vehicle_id = chk_vehicle;
        std::vector<ImageBuffer> bodies;
        std::vector<std::string> body_ids;
        for (const auto& b : chk_bodies) {
          bodies.push_back(read_image(b));
          body_ids.push_back(fs::path(b).stem().string());
          claim.evidence.push_back({body_ids.back(), EvidenceKind::full_body, b, {}});
        }
        for (std::size_t i = 0; i < chk_closes.size(); ++i) {
          const auto id = fs::path(chk_closes[i]).stem().string();
          std::vector<DamageRegion> regions;
          if (i < chk_regions.size()) {
            regions.push_back(parse_region(chk_regions[i]));
          } else if (auto it = dets.find(id); it != dets.end()) {
            for (const auto& det : it->second) {
              regions.push_back({det.bbox, det.damage_class, det.confidence, RegionSource::detector});
            }
          }
          if (regions.empty()) {
            throw Error(ErrorCode::validation, "close-up " + chk_closes[i] + " has no region", "region");
          }
          auto image = read_image(chk_closes[i]);
          for (const auto& r : regions) {
            probe.push_back(describe_roi(*provider, cfg.fusion, cfg.hist_source, image, id, r.bbox,
                                         bodies, body_ids));
          }
          claim.evidence.push_back({id, EvidenceKind::close_up, chk_closes[i], std::move(regions)});
        }
        validate(claim);
      }
      auto snap = store.snapshot();
      auto assessment = fraud_check(claim, probe, *snap, cfg.policy);
      out << json(assessment).dump(2) << '\n';
      err << (assessment.flagged ? "FLAGGED" : "not flagged");
      if (assessment.best) err << " (best " << assessment.best->claim_id << " at " << assessment.best->similarity << ")";
      err << '\n';
    };
  });

  // ---- eval-det ----
  Common det_c;
  std::string det_ann, det_det, det_out, det_curve;
  double det_iou = 0.5;
  std::vector<double> det_thresholds{0.1, 0.3, 0.5};
  bool det_class_aware = false;
  auto* det = app.add_subcommand("eval-det", "Detection precision/recall at confidence thresholds");
  add_common(det, det_c);
  det->add_option("--annotations", det_ann, "Ground truth: image_id class cx cy w h")->required();
  det->add_option("--detections", det_det, "Detector output: image_id class confidence cx cy w h")->required();
  det->add_option("--iou", det_iou, "IoU needed for a true positive")->capture_default_str();
  det->add_option("--thresholds", det_thresholds, "Confidence thresholds, comma separated")
      ->delimiter(',')
      ->capture_default_str();
  det->add_flag("--class-aware", det_class_aware, "Only match boxes of the same class");
  det->add_option("--out", det_out, "Table CSV path (default: stdout)");
  det->add_option("--curve", det_curve, "Also write the recall,precision curve CSV here");
  det->callback([&] {
    action = [&] {
      (void)load(det_c);
      auto gts = load_annotations(det_ann);
      auto preds = load_detections(det_det);
      auto curve = pr_curve(preds, gts, ascending(det_thresholds), {det_iou, det_class_aware});
      write_to(det_out, out, [&](std::ostream& o) { write_pr_table_csv(o, curve); });
      if (!det_curve.empty()) write_to(det_curve, out, [&](std::ostream& o) { write_pr_curve_csv(o, curve); });
      err << "evaluated " << preds.size() << " detections against " << gts.size() << " boxes\n";
    };
  });

  // ---- eval-cmc ----
  Common cmc_c;
  std::string cmc_manifest, cmc_roi = "annotation", cmc_det, cmc_out;
  std::size_t cmc_rank = 10;
  std::vector<double> cmc_weights;
  std::optional<int> cmc_bins;
  auto* cmcs = app.add_subcommand("eval-cmc", "CMC curve of close-up retrieval on a manifest");
  add_common(cmcs, cmc_c);
  cmcs->add_option("--manifest", cmc_manifest, "Dataset manifest.json")->required();
  cmcs->add_option("--max-rank", cmc_rank, "Largest rank reported")->capture_default_str();
  cmcs->add_option("--roi", cmc_roi, "annotation or detector")->capture_default_str();
  cmcs->add_option("--detections", cmc_det, "Detector output for --roi detector");
  cmcs->add_option("--weights", cmc_weights, "Block weights local,global,hist")->delimiter(',')->expected(3);
  cmcs->add_option("--hist-bins", cmc_bins, "Histogram bins per channel");
  cmcs->add_option("--out", cmc_out, "CSV path (default: stdout)");
  cmcs->callback([&] {
    action = [&] {
      auto cfg = load(cmc_c);
      if (!cmc_weights.empty()) cfg.fusion.weights = {cmc_weights[0], cmc_weights[1], cmc_weights[2]};
      if (cmc_bins) cfg.fusion.hist_bins = *cmc_bins;
      validate(cfg.fusion);
      if (cmc_rank < 1) throw Error(ErrorCode::validation, "--max-rank must be >= 1", "max-rank");
      auto provider = make_embedding_provider(cfg);
      auto d = load_manifest(cmc_manifest);
      const auto roi = parse_roi_source(cmc_roi);
      DatasetDescriber describer(d, *provider);
      if (roi == RoiSource::detector) describer.set_detections(detections_or_default(cmc_det, d, cfg, true));
      const auto close_ups = d.close_ups();
      auto split = make_probe_gallery(close_ups, cmc_c.seed);
      auto curve = cmc(split.probes, split.gallery, cmc_rank, [&](const ImageRef& r) {
        return describer.describe(r.image_id, cfg.fusion, cfg.hist_source, roi);
      });
      write_to(cmc_out, out, [&](std::ostream& o) { write_cmc_csv(o, curve); });
      for (const auto& w : curve.warnings) err << "warning: " << w << '\n';
      err << "rank-1 " << curve.rank(1) << " over " << curve.probe_count << " probes\n";
    };
  });

  // ---- ablate ----
  Common abl_c;
  std::string abl_manifest, abl_configs, abl_det, abl_out;
  auto* abl = app.add_subcommand("ablate", "Rank-1/rank-10 for a list of fusion configurations");
  add_common(abl, abl_c);
  abl->add_option("--manifest", abl_manifest, "Dataset manifest.json")->required();
  abl->add_option("--configs", abl_configs, "JSON array of configs (default: block and bin ablations)");
  abl->add_option("--detections", abl_det, "Detector output for detector rows");
  abl->add_option("--out", abl_out, "CSV path (default: stdout)");
  abl->callback([&] {
    action = [&] {
      auto cfg = load(abl_c);
      auto provider = make_embedding_provider(cfg);
      auto d = load_manifest(abl_manifest);
      std::vector<AblationConfig> configs;
      if (abl_configs.empty()) {
        configs = default_ablation_configs(cfg.fusion.local_dim, cfg.fusion.global_dim);
      } else {
        std::ifstream in(abl_configs);
        if (!in) throw Error(ErrorCode::io, "cannot open " + abl_configs, abl_configs);
        try {
          configs = parse_ablation_configs(json::parse(in));
        } catch (const json::exception& e) {
          throw Error(ErrorCode::config, abl_configs + ": " + e.what(), abl_configs);
        }
      }
      bool needs_det = std::any_of(configs.begin(), configs.end(),
                                   [](const auto& c) { return c.roi_source == RoiSource::detector; });
      auto dets = detections_or_default(abl_det, d, cfg, needs_det);
      auto rows = ablation_run(d, configs, abl_c.seed, *provider, dets);
      write_to(abl_out, out, [&](std::ostream& o) { write_ablation_csv(o, configs, rows); });
      err << "ran " << rows.size() << " configurations\n";
    };
  });

  // ---- calibrate ----
  Common cal_c;
  std::string cal_manifest;
  auto* cal = app.add_subcommand("calibrate", "Derive the fraud threshold from a fixture's score distributions");
  add_common(cal, cal_c);
  cal->add_option("--manifest", cal_manifest, "Fixture manifest.json")->required();
  cal->callback([&] {
    action = [&] {
      auto cfg = load(cal_c);
      auto provider = make_embedding_provider(cfg);
      auto d = load_manifest(cal_manifest);
      auto exp = run_fraud_experiment(d, *provider, cfg.fusion, cfg.hist_source);
      auto c = calibrate_threshold(exp.positives, exp.negatives);
      out << json({{"threshold", c.threshold},
                   {"separable", c.separable},
                   {"min_positive", c.min_positive},
                   {"max_negative", c.max_negative},
                   {"positives", exp.positives.size()},
                   {"negatives", exp.negatives.size()}})
                 .dump(2)
          << '\n';
    };
  });

  // ---- serve ----
  Common srv_c;
  std::optional<int> srv_port;
  std::string srv_bind, srv_store;
  auto* srv = app.add_subcommand("serve", "Run the HTTP claim service");
  add_common(srv, srv_c);
  srv->add_option("--port", srv_port, "Port (0 picks a free one)");
  srv->add_option("--bind", srv_bind, "Bind address");
  srv->add_option("--store", srv_store, "Store directory");
  srv->callback([&] {
    action = [&] {
      auto cfg = load(srv_c);
      if (srv_port) cfg.port = *srv_port;
      if (!srv_bind.empty()) cfg.bind_address = srv_bind;
      if (!srv_store.empty()) cfg.store_path = srv_store;
      auto provider = make_embedding_provider(cfg);
      auto store = ClaimStore::open(cfg.store_path, cfg.fusion);
      ClaimService service(store, *provider, cfg, {{}, cfg.store_path / "evidence"});
      HttpServer server(service);
      const int port = server.bind(cfg.bind_address, cfg.port);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      err << "listening on " << cfg.bind_address << ':' << port << std::endl;
      server.listen();
      g_server = nullptr;
      store.compact();
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    const CLI::App* target = &app;
    for (const auto* sub : app.get_subcommands()) target = sub;
    err << target->help();
    return 2;
  }
  try {
    action();
    return 0;
  } catch (const Error& e) {
    err << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace carguard
