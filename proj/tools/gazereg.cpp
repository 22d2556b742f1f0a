// gazereg: synthesize data, build gaze targets, train, evaluate, ablate, render.
//
// Exit codes: 0 success, 2 input or IO error, 3 training diverged, 4 model/targets config mismatch.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gazereg/config.hpp"
#include "gazereg/dataset_io.hpp"
#include "gazereg/eval.hpp"
#include "gazereg/model.hpp"
#include "gazereg/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gazereg;

namespace {

constexpr int kOk = 0, kInput = 2, kDiverged = 3, kMismatch = 4;

struct ConfigMismatch : Error {
  using Error::Error;
};

RunConfig load_run_config(const std::string &path) {
  if (path.empty()) return RunConfig{};
  return parse_run_config(read_text(path));
}

// --- synth -----------------------------------------------------------------------

struct SynthArgs {
  std::string spec, out;
  int count = 0;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthArgs &a) {
  RunConfig rc = load_run_config(a.spec);
  rc.scene.seed = a.seed;
  rc.scene.validate();
  const std::string hash = config_hash(rc);
  fs::create_directories(a.out);
  json ids = json::array();
  for (int i = 0; i < a.count; ++i) {
    const SyntheticSample s = generate_sample(rc.scene, sample_seed(a.seed, "sample", i));
    write_sample(fs::path(a.out) / sample_id(i), s);
    ids.push_back(sample_id(i));
  }
  write_json(fs::path(a.out) / "manifest.json",
             json{{"config_hash", hash}, {"seed", a.seed}, {"count", a.count}, {"scene", rc.scene}, {"samples", ids}});
  std::cout << "wrote " << a.count << " samples to " << a.out << "\n";
  return kOk;
}

// --- preprocess ------------------------------------------------------------------

struct PreprocessArgs {
  std::string data, out, mode = "aggregated";
  double sigma = 20.0, eps = 20.0, eta = 0.60;
  std::int64_t window_ms = 200;
  int max_points = 6, patch = 8;
};

int cmd_preprocess(const PreprocessArgs &a) {
  SupervisionConfig cfg;
  cfg.smoothing.sigma = a.sigma;
  cfg.aggregation.window_ms = a.window_ms;
  cfg.aggregation.max_points = a.max_points;
  cfg.occlusion.eps = a.eps;
  cfg.occlusion.eta = a.eta;
  cfg.patch_px = a.patch;
  cfg.mode = mode_from_string(a.mode);
  cfg.validate();

  const json manifest = read_json(fs::path(a.data) / "manifest.json");
  const auto ids = manifest_samples(manifest);
  std::string warnings;
  std::size_t n_frames = 0, n_substituted = 0;
  for (const auto &id : ids) {
    const StoredSample s = read_sample(fs::path(a.data) / id);
    const FlowLookup flows = directory_flow_lookup(fs::path(a.data) / id / "flow");
    std::vector<FrameSupervision> frames;
    for (std::size_t i = 0; i < s.frames.size(); ++i) {
      frames.push_back(supervise_frame(s.gaze, s.frame_ms[i], s.dims, cfg, flows));
      for (const auto &w : frames.back().warnings) warnings += id + " frame " + std::to_string(i) + ": " + w + "\n";
      n_substituted += frames.back().substituted;
    }
    n_frames += frames.size();
    write_targets(fs::path(a.out) / id, frames);
  }
  write_text(fs::path(a.out) / "warnings.log", warnings);
  write_json(fs::path(a.out) / "meta.json", json{{"supervision", cfg},
                                                  {"supervision_hash", supervision_hash(cfg)},
                                                  {"config_hash", manifest.value("config_hash", "")},
                                                  {"samples", ids}});
  if (!warnings.empty()) std::cerr << warnings;
  std::cout << "targets for " << ids.size() << " samples (" << n_frames << " frames, " << n_substituted
            << " uniform substitutions) in " << a.out << "\n";
  return kOk;
}

// --- train -----------------------------------------------------------------------

struct TrainArgs {
  std::string data, targets, out, log, config;
  double lambda = 100.0, lr = 0.05;
  int epochs = 60, batch = 10;
  std::uint64_t seed = 0;
};

int cmd_train(const TrainArgs &a) {
  ModelConfig mc = load_run_config(a.config).model;
  mc.lambda = a.lambda;
  mc.lr = a.lr;
  mc.epochs = a.epochs;
  mc.batch = a.batch;
  mc.seed = a.seed;
  const json manifest = read_json(fs::path(a.data) / "manifest.json");
  const json meta = read_json(fs::path(a.targets) / "meta.json");
  if (manifest.contains("scene")) mc.n_classes = manifest.at("scene").get<SceneSpec>().n_classes;
  const SupervisionConfig sup = meta.at("supervision").get<SupervisionConfig>();
  mc.patch_px = sup.patch_px;
  if (meta.value("config_hash", "") != manifest.value("config_hash", "")) {
    throw ConfigMismatch("targets were built from a different dataset (config hash " +
                         meta.value("config_hash", std::string("?")) + " vs " +
                         manifest.value("config_hash", std::string("?")) + ")");
  }
  const Dataset data = load_dataset(a.data, a.targets);

  json ckpt{{"model", mc},
            {"supervision", sup},
            {"supervision_hash", supervision_hash(sup)},
            {"data_config_hash", manifest.value("config_hash", "")},
            {"n_train", data.size()}};
  const std::string hash = hash_json(ckpt);
  ckpt["config_hash"] = hash;

  const fs::path log_path = a.log.empty() ? fs::path(a.out).replace_extension(".log.jsonl") : fs::path(a.log);
  std::string log;
  int last_epoch = 0;
  auto flush_log = [&] { write_text(log_path, log); };
  try {
    const TrainResult r = train(data, mc, [&](const EpochLog &e) {
      log += json{{"epoch", e.epoch}, {"ce", e.ce}, {"kl", e.kl}, {"acc", e.acc}, {"config_hash", hash}}.dump() + "\n";
      last_epoch = e.epoch;
    });
    flush_log();
    write_file(a.out, encode_checkpoint(r.params, ckpt));
  } catch (const TrainingDiverged &e) {
    flush_log();
    std::cerr << "training diverged: " << e.what() << "; last finite epoch " << e.last_finite_epoch() << "\n";
    return kDiverged;
  }
  std::cout << "trained " << last_epoch << " epochs on " << data.size() << " samples -> " << a.out << "\n";
  return kOk;
}

// --- eval ------------------------------------------------------------------------

struct EvalArgs {
  std::string model, data, targets, report = "report.json";
  int topk = 10;
  bool oracle = false;
};

int cmd_eval(const EvalArgs &a) {
  const auto [params, ckpt] = decode_checkpoint(read_file(a.model));
  const json meta = read_json(fs::path(a.targets) / "meta.json");
  if (meta.value("supervision_hash", "") != ckpt.value("supervision_hash", "")) {
    throw ConfigMismatch("model was trained on targets with supervision hash " +
                         ckpt.value("supervision_hash", std::string("?")) + " but the targets have " +
                         meta.value("supervision_hash", std::string("?")));
  }
  const ModelConfig mc = ckpt.at("model").get<ModelConfig>();
  const Dataset data = load_dataset(a.data, a.targets);
  EvalOptions opts;
  opts.oracle_attention = a.oracle;
  const EvalReport r = evaluate(params, mc, data, a.topk, opts);
  write_json(a.report, report_json(r, ckpt.value("config_hash", "")));
  std::printf("accuracy %.4f  top-%d overlap %.4f  mean KL %.4f  (%d samples)\n", r.accuracy, a.topk, r.overlap.mean,
              r.mean_kl, r.n_samples);
  return kOk;
}

// --- ablate ----------------------------------------------------------------------

struct AblateArgs {
  std::string data_spec, out;
  std::vector<std::string> variants;
  int seeds = 3;
  std::uint64_t seed_base = 0;
};

int cmd_ablate(const AblateArgs &a) {
  const RunConfig rc = load_run_config(a.data_spec);
  std::vector<Variant> variants;
  for (const auto &axis : a.variants) {
    for (auto &v : parse_variants(axis)) variants.push_back(std::move(v));
  }
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < a.seeds; ++i) seeds.push_back(a.seed_base + static_cast<std::uint64_t>(i));
  const std::string hash = config_hash(rc);
  const fs::path out(a.out);
  fs::create_directories(out / "cells");
  const auto results = run_ablation(rc, variants, seeds, [&](const AblationResult &r) {
    std::string log;
    for (const auto &e : r.log) {
      log += json{{"epoch", e.epoch}, {"ce", e.ce}, {"kl", e.kl}, {"acc", e.acc}, {"config_hash", hash}}.dump() + "\n";
    }
    write_text(out / "cells" / (r.variant + "_seed" + std::to_string(r.seed) + ".jsonl"), log);
    if (r.ok) {
      std::printf("%-20s seed %-3llu acc %.4f  overlap %.4f  kl %.4f\n", r.variant.c_str(),
                  static_cast<unsigned long long>(r.seed), r.accuracy, r.mean_overlap, r.mean_kl);
    } else {
      std::printf("%-20s seed %-3llu FAILED: %s\n", r.variant.c_str(), static_cast<unsigned long long>(r.seed),
                  r.error.c_str());
    }
    std::fflush(stdout);
  });
  write_text(out / "ablation.csv", ablation_csv(results));
  write_json(out / "ablation.json", ablation_json(results, hash));
  for (const auto &s : summarize(results)) {
    std::printf("mean %-15s acc %.4f  overlap %.4f  kl %.4f  (%d ok)\n", s.variant.c_str(), s.accuracy,
                s.mean_overlap, s.mean_kl, s.n_ok);
  }
  return kOk;
}

// --- render ----------------------------------------------------------------------

struct RenderArgs {
  std::string frame, overlay, model, sample, out;
  int index = 0;
};

int cmd_render(const RenderArgs &a) {
  const Frame frame = decode_pgm(read_file(a.frame));
  Tensor overlay;
  if (!a.overlay.empty()) {
    overlay = decode_heatmap(read_file(a.overlay)).mass;
  } else if (!a.model.empty() && !a.sample.empty()) {
    const auto [params, ckpt] = decode_checkpoint(read_file(a.model));
    const ModelConfig mc = ckpt.at("model").get<ModelConfig>();
    const StoredSample s = read_sample(a.sample);
    if (a.index < 0 || a.index >= static_cast<int>(s.frames.size())) throw DomainError("--index out of range");
    Batch b;
    b.frames = s.frames;
    b.label = std::clamp(s.label, 0, mc.n_classes - 1);
    const PatchGrid grid = PatchGrid::tiling(s.dims.width, s.dims.height, mc.patch_px);
    b.targets.assign(s.frames.size(), uniform_distribution(grid.count()));
    AttentionRecord rec;
    total_loss(b, params, mc, &rec);
    overlay = patch_grid_image(rec.weights[static_cast<std::size_t>(a.index)], grid);
  } else {
    throw ConfigError("render needs --overlay, or --model with --sample");
  }
  write_file(a.out, render_heatmap_pgm(frame, overlay));
  return kOk;
}

template <typename F> int guarded(F &&f) {
  try {
    return f();
  } catch (const ConfigMismatch &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMismatch;
  } catch (const TrainingDiverged &e) {
    std::cerr << "error: " << e.what() << "; last finite epoch " << e.last_finite_epoch() << "\n";
    return kDiverged;
  } catch (const nlohmann::json::exception &e) {
    std::cerr << "error: malformed JSON input: " << e.what() << "\n";
    return kInput;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInput;
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"gaze-regularised attention: data, targets, training, evaluation"};
  app.require_subcommand(1);
  int rc = kOk;

  SynthArgs sa;
  auto *synth = app.add_subcommand("synth", "generate synthetic clips with exact gaze, flow and occlusion truth");
  synth->add_option("--spec", sa.spec, "run config JSON (its scene section is used)");
  synth->add_option("--out", sa.out, "output dataset directory")->required();
  synth->add_option("--count", sa.count, "number of samples")->required()->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", sa.seed, "dataset seed");
  synth->callback([&] { rc = guarded([&] { return cmd_synth(sa); }); });

  PreprocessArgs pa;
  auto *pre = app.add_subcommand("preprocess", "turn gaze traces into per-frame patch distributions");
  pre->add_option("--data", pa.data, "dataset directory")->required();
  pre->add_option("--out", pa.out, "targets directory")->required();
  pre->add_option("--sigma", pa.sigma, "Gaussian sigma in pixels")->capture_default_str();
  pre->add_option("--window-ms", pa.window_ms, "aggregation window in ms")->capture_default_str();
  pre->add_option("--max-points", pa.max_points, "most recent gaze points kept")->capture_default_str();
  pre->add_option("--eps", pa.eps, "flow consistency threshold in pixels")->capture_default_str();
  pre->add_option("--eta", pa.eta, "inconsistent-pixel ratio marking a frame occluded")->capture_default_str();
  pre->add_option("--patch", pa.patch, "patch side in pixels")->capture_default_str();
  pre->add_option("--mode", pa.mode, "aggregated|singular")->capture_default_str();
  pre->callback([&] { rc = guarded([&] { return cmd_preprocess(pa); }); });

  TrainArgs ta;
  auto *tr = app.add_subcommand("train", "train the attention model");
  tr->add_option("--data", ta.data, "dataset directory")->required();
  tr->add_option("--targets", ta.targets, "targets directory")->required();
  tr->add_option("--out", ta.out, "checkpoint path")->required();
  tr->add_option("--log", ta.log, "JSON-lines training log (default: <out>.log.jsonl)");
  tr->add_option("--config", ta.config, "run config JSON (its model section supplies the remaining settings)");
  tr->add_option("--lambda", ta.lambda, "gaze regularisation weight")->capture_default_str();
  tr->add_option("--epochs", ta.epochs, "epochs")->capture_default_str();
  tr->add_option("--lr", ta.lr, "step size")->capture_default_str();
  tr->add_option("--batch", ta.batch, "minibatch size")->capture_default_str();
  tr->add_option("--seed", ta.seed, "initialisation and shuffling seed")->capture_default_str();
  tr->callback([&] { rc = guarded([&] { return cmd_train(ta); }); });

  EvalArgs ea;
  auto *ev = app.add_subcommand("eval", "accuracy, top-k attention/gaze overlap and KL on a dataset");
  ev->add_option("--model", ea.model, "checkpoint")->required();
  ev->add_option("--data", ea.data, "dataset directory")->required();
  ev->add_option("--targets", ea.targets, "targets directory")->required();
  ev->add_option("--topk", ea.topk, "k for the overlap metric")->capture_default_str();
  ev->add_option("--report", ea.report, "report path")->capture_default_str();
  ev->add_flag("--oracle", ea.oracle, "score the targets themselves in place of the model attention");
  ev->callback([&] { rc = guarded([&] { return cmd_eval(ea); }); });

  AblateArgs aa;
  auto *ab = app.add_subcommand("ablate", "train and evaluate a grid of variants over several seeds");
  ab->add_option("--data-spec", aa.data_spec, "run config JSON");
  ab->add_option("--variants", aa.variants, "axis=v1,v2 with axis lambda|mode|points; repeatable")->required();
  ab->add_option("--seeds", aa.seeds, "number of seeds")->capture_default_str()->check(CLI::PositiveNumber);
  ab->add_option("--seed-base", aa.seed_base, "first seed")->capture_default_str();
  ab->add_option("--out", aa.out, "output directory")->required();
  ab->callback([&] { rc = guarded([&] { return cmd_ablate(aa); }); });

  RenderArgs ra;
  auto *rd = app.add_subcommand("render", "blend a heatmap or model attention over a frame");
  rd->add_option("--frame", ra.frame, "frame PGM")->required();
  rd->add_option("--overlay", ra.overlay, "heatmap (.gzhm)");
  rd->add_option("--model", ra.model, "checkpoint whose attention is drawn");
  rd->add_option("--sample", ra.sample, "sample directory fed to --model");
  rd->add_option("--index", ra.index, "frame index within --sample")->capture_default_str();
  rd->add_option("--out", ra.out, "output PGM")->required();
  rd->callback([&] { rc = guarded([&] { return cmd_render(ra); }); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kInput;
  }
  return rc;
}
