// Copyright (C) 2026 The cycletrack authors
// SPDX-License-Identifier: Apache-2.0
//
// cycletrack CLI: synthetic dataset generation, self-supervised training,
// one-pass evaluation, and plot rendering.

#include "cycletrack/config.hpp"
#include "cycletrack/data.hpp"
#include "cycletrack/errors.hpp"
#include "cycletrack/eval.hpp"
#include "cycletrack/model.hpp"
#include "cycletrack/plot.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cycletrack;

namespace {

std::vector<std::string> collect_overrides(const std::vector<std::string>& extras) {
  std::vector<std::string> out;
  for (const auto& e : extras) {
    if (e.rfind("--", 0) != 0 || e.find('=') == std::string::npos)
      throw ConfigError("unrecognized argument: " + e +
                        " (overrides look like --section.key=value)");
    out.push_back(e.substr(2));
  }
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError(DataErrorKind::MissingFile, "cannot write " + path);
  out << text;
}

json metrics_to_log_line(const StepMetrics& m, int global_step) {
  return json{{"step", global_step},
              {"epoch", m.epoch},
              {"mode", dca::mode_name(m.mode)},
              {"loss", m.loss},
              {"loss_cls", m.loss_cls},
              {"loss_l1", m.loss_l1},
              {"loss_giou", m.loss_giou},
              {"loss_noise", m.loss_noise},
              {"degenerate_boxes", m.degenerate_boxes}};
}

struct TrainArgs {
  std::string config_path, data_dir, out_dir;
  long long seed = -1;
  int threads = 0;
  bool resume = false;
  bool dry_run = false;
  bool paper_schedule = false;
  std::string ablate;
};

RunConfig resolve_train_config(const TrainArgs& a,
                               const std::vector<std::string>& overrides) {
  RunConfig cfg = RunConfig::defaults();
  if (!a.config_path.empty()) cfg.load_file(a.config_path);
  if (a.paper_schedule) cfg.apply_paper_schedule();
  cfg.apply_overrides(overrides);
  if (!a.ablate.empty()) cfg.variant = a.ablate;
  cfg.seed = resolve_seed(a.seed, cfg.seed);
  if (a.threads > 0) cfg.threads = a.threads;
  cfg.finalize();
  return cfg;
}

// Trains a model into out_dir (checkpoints/, train_log.jsonl,
// config.resolved.json) and returns it.
TrackModel<float> run_training(const RunConfig& cfg, const std::string& data_dir,
                               const std::string& out_dir, bool resume) {
  const auto dataset = load_dataset(data_dir);
  const fs::path out(out_dir);
  fs::create_directories(out / "checkpoints");

  TrackModel<float> model;
  int start_epoch = 0;
  const std::string latest = (out / "checkpoints" / "latest.ckpt").string();
  if (resume && fs::exists(latest)) {
    CheckpointMeta meta;
    model = load_checkpoint<float>(latest, &meta);
    start_epoch = meta.epoch + 1;
    std::printf("resuming from %s at epoch %d\n", latest.c_str(), start_epoch);
  } else {
    model = TrackModel<float>::create(cfg.encoder, cfg.seed);
    const PixelStats stats = compute_pixel_stats(dataset);
    model.pix_mean = stats.mean;
    model.pix_std = stats.stdev;
  }

  write_text((out / "config.resolved.json").string(),
             cfg.to_json_string() + "\n");

  std::ofstream log((out / "train_log.jsonl").string(),
                    resume ? std::ios::app : std::ios::trunc);
  const TrainVariant variant = variant_from_name(cfg.variant);

  auto log_sink = [&](const StepMetrics& m) {
    const int global_step = m.epoch * cfg.train.steps_per_epoch + m.step;
    log << metrics_to_log_line(m, global_step).dump() << "\n";
    if (m.step == 0) {
      std::printf("epoch %3d  mode=%-6s loss=%.4f\n", m.epoch,
                  dca::mode_name(m.mode), m.loss);
      std::fflush(stdout);
    }
  };
  auto checkpoint_sink = [&](int epoch) {
    CheckpointMeta meta;
    meta.epoch = epoch;
    meta.optimizer_step =
        static_cast<long>(epoch + 1) * cfg.train.steps_per_epoch;
    meta.run_config = cfg.to_json_string(-1);
    meta.has_optimizer_state = true;
    char name[64];
    std::snprintf(name, sizeof(name), "epoch_%04d.ckpt", epoch);
    save_checkpoint(model, (out / "checkpoints" / name).string(), meta);
    save_checkpoint(model, latest, meta);
  };

  train<float>(model, dataset, cfg.train, cfg.crop, variant, cfg.seed, log_sink,
               checkpoint_sink, start_epoch, cfg.threads, cfg.loss);

  CheckpointMeta final_meta;
  final_meta.epoch = cfg.train.total_epochs - 1;
  final_meta.run_config = cfg.to_json_string(-1);
  save_checkpoint(model, (out / "model.ckpt").string(), final_meta);
  return model;
}

void run_evaluation(const TrackModel<float>& model, bool oracle,
                    const std::string& data_dir, const std::string& out_dir,
                    int threads) {
  const auto dataset = load_dataset(data_dir);
  const fs::path out(out_dir);
  fs::create_directories(out / "results");

  std::vector<TrackResult> results(dataset.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < dataset.size();
         i = next.fetch_add(1)) {
      results[i] = oracle ? track_oracle(dataset[i])
                          : track(model, dataset[i], CropConfig{});
    }
  };
  std::vector<std::thread> pool;
  const int workers =
      std::max(1, std::min<int>(threads, static_cast<int>(dataset.size())));
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < dataset.size(); ++i)
    write_result_file(dataset[i], results[i],
                      (out / "results" / (dataset[i].id + ".txt")).string());

  const MetricsReport rep = evaluate_results(dataset, results);
  write_metrics_json(rep, (out / "metrics.json").string());
  plot_curve_png((out / "success_plot.png").string(), rep.success, 0.0, 1.0);
  plot_curve_png((out / "precision_plot.png").string(), rep.precision_c, 0.0, 50.0);
  plot_curve_png((out / "norm_precision_plot.png").string(),
                 rep.norm_precision_c, 0.0, 0.5);
  std::printf("AUC %.4f  P %.4f  P_norm %.4f  mIoU %.4f  fps %.1f\n", rep.auc,
              rep.precision, rep.norm_precision, rep.mean_iou, rep.fps);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cycletrack: self-supervised tracker at desk scale"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "generate a synthetic dataset");
  std::string gen_spec, gen_out;
  long long gen_seed = -1;
  gen->add_option("--spec", gen_spec, "dataset spec JSON")->required();
  gen->add_option("--out", gen_out, "output dataset directory")->required();
  gen->add_option("--seed", gen_seed, "root seed (CYCLETRACK_SEED fallback)");

  // train
  auto* tr = app.add_subcommand("train", "self-supervised cycle training");
  tr->allow_extras();
  TrainArgs ta;
  tr->add_option("--config", ta.config_path, "config JSON file");
  tr->add_option("--data", ta.data_dir, "training dataset directory")->required();
  tr->add_option("--out", ta.out_dir, "run output directory")->required();
  tr->add_option("--seed", ta.seed, "root seed (CYCLETRACK_SEED fallback)");
  tr->add_option("--threads", ta.threads, "worker threads");
  tr->add_flag("--resume", ta.resume, "continue from the latest checkpoint");
  tr->add_flag("--dry-run", ta.dry_run, "print the resolved config and exit");
  tr->add_flag("--paper-schedule", ta.paper_schedule,
               "use the verbatim large-scale schedule");
  tr->add_option("--ablate", ta.ablate,
                 "variant: no-prompt | no-noise | query");

  // eval
  auto* ev = app.add_subcommand("eval", "one-pass evaluation");
  ev->allow_extras();
  std::string ev_ckpt, ev_data, ev_out, ev_ablate, ev_train_data, ev_config;
  long long ev_seed = -1;
  int ev_threads = 2;
  bool ev_oracle = false;
  ev->add_option("--checkpoint", ev_ckpt, "trained checkpoint");
  ev->add_option("--data", ev_data, "evaluation dataset directory")->required();
  ev->add_option("--out", ev_out, "output directory")->required();
  ev->add_option("--threads", ev_threads, "sequences tracked in parallel");
  ev->add_flag("--oracle", ev_oracle, "play back ground truth (pipeline check)");
  ev->add_option("--ablate", ev_ablate,
                 "retrain + evaluate a variant: no-prompt | no-noise | query");
  ev->add_option("--train-data", ev_train_data,
                 "training dataset for --ablate");
  ev->add_option("--config", ev_config, "config JSON for --ablate");
  ev->add_option("--seed", ev_seed, "root seed for --ablate");

  // plot
  auto* pl = app.add_subcommand("plot", "render curve plots from metrics.json");
  std::string pl_metrics, pl_out;
  pl->add_option("--metrics", pl_metrics, "metrics.json path")->required();
  pl->add_option("--out", pl_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const DatasetSpec ds = parse_dataset_spec(gen_spec);
      const std::uint64_t seed = resolve_seed(gen_seed, 0);
      const auto ids = generate_dataset(ds, gen_out, seed);
      std::printf("wrote %zu sequences to %s\n", ids.size(), gen_out.c_str());
      return kExitOk;
    }

    if (tr->parsed()) {
      const RunConfig cfg =
          resolve_train_config(ta, collect_overrides(tr->remaining()));
      if (ta.dry_run) {
        std::printf("%s\n", cfg.to_json_string().c_str());
        return kExitOk;
      }
      fs::create_directories(ta.out_dir);
      run_training(cfg, ta.data_dir, ta.out_dir, ta.resume);
      return kExitOk;
    }

    if (ev->parsed()) {
      if (!ev_ablate.empty()) {
        if (ev_train_data.empty())
          throw ConfigError("--ablate needs --train-data");
        TrainArgs t2;
        t2.config_path = ev_config;
        t2.seed = ev_seed;
        t2.ablate = ev_ablate;
        const RunConfig cfg =
            resolve_train_config(t2, collect_overrides(ev->remaining()));
        fs::create_directories(ev_out);
        const auto model =
            run_training(cfg, ev_train_data,
                         (fs::path(ev_out) / ("train_" + ev_ablate)).string(),
                         false);
        run_evaluation(model, false, ev_data, ev_out, ev_threads);
        return kExitOk;
      }
      if (ev_oracle) {
        fs::create_directories(ev_out);
        run_evaluation(TrackModel<float>{}, true, ev_data, ev_out, ev_threads);
        return kExitOk;
      }
      if (ev_ckpt.empty())
        throw ConfigError("eval needs --checkpoint (or --oracle / --ablate)");
      const auto model = load_checkpoint<float>(ev_ckpt);
      fs::create_directories(ev_out);
      run_evaluation(model, false, ev_data, ev_out, ev_threads);
      return kExitOk;
    }

    if (pl->parsed()) {
      std::ifstream in(pl_metrics);
      if (!in)
        throw DataError(DataErrorKind::MissingFile,
                        "cannot open metrics: " + pl_metrics);
      json j = json::parse(in, nullptr, false);
      if (j.is_discarded())
        throw DataError(DataErrorKind::BadFormat,
                        "metrics file is not valid JSON: " + pl_metrics);
      fs::create_directories(pl_out);
      plot_curve_png((fs::path(pl_out) / "success_plot.png").string(),
                     j.at("success_curve").get<std::vector<double>>(), 0, 1);
      plot_curve_png((fs::path(pl_out) / "precision_plot.png").string(),
                     j.at("precision_curve").get<std::vector<double>>(), 0, 50);
      plot_curve_png(
          (fs::path(pl_out) / "norm_precision_plot.png").string(),
          j.at("norm_precision_curve").get<std::vector<double>>(), 0, 0.5);
      std::printf("wrote plots to %s\n", pl_out.c_str());
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfigError;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitDataError;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumericError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return kExitOk;
}
