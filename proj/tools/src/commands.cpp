#include "commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>

#include <json.hpp>

namespace dcmd::app {

using nlohmann::json;

namespace {

void prepare_out_dir(const fs::path& out, bool force) {
  if (fs::exists(out)) {
    if (!fs::is_directory(out)) throw UsageError("output path is not a directory: " + out.string());
    if (!fs::is_empty(out) && !force)
      throw UsageError("output directory " + out.string() + " is not empty (use --force)");
  }
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<ActorTrack> load_data(const fs::path& data, std::ostream& log) {
  LoadReport report;
  auto tracks = load_track_dir(data, &report);
  log << "loaded " << report.loaded << " tracks from " << data.string();
  if (report.dropped) log << " (" << report.dropped << " dropped)";
  log << '\n';
  return tracks;
}

void check_shapes(const ModelConfig& stored, const ModelConfig& requested) {
  const auto& a = stored.autoencoder;
  const auto& b = requested.autoencoder;
  if (stored.history != requested.history || stored.future != requested.future ||
      a.joints != b.joints || a.coords != b.coords)
    throw ShapeError("checkpoint was trained with H=" + std::to_string(stored.history) +
                     ", F=" + std::to_string(stored.future) + ", J=" + std::to_string(a.joints) +
                     " but the config asks for H=" + std::to_string(requested.history) +
                     ", F=" + std::to_string(requested.future) + ", J=" + std::to_string(b.joints));
}

}  // namespace

std::optional<fs::path> find_labels(const fs::path& data) {
  for (const fs::path& p : {data / "labels.csv", data.parent_path() / "labels.csv"})
    if (fs::is_regular_file(p)) return p;
  return std::nullopt;
}

void cmd_synth(const RunConfig& cfg, const fs::path& out_dir, bool force, std::ostream& log) {
  cfg.validate();
  prepare_out_dir(out_dir, force);
  const SynthDataset ds = synth_generate(cfg.synth, cfg.train.seed);
  std::map<std::string, std::vector<ActorTrack>> by_clip;
  for (const auto& t : ds.tracks) by_clip[t.clip_id].push_back(t);
  fs::create_directories(out_dir / "tracks");
  for (const auto& [clip, tracks] : by_clip)
    save_tracks_json(out_dir / "tracks" / (clip + ".json"), clip, tracks);
  save_labels(out_dir / "labels.csv", ds.labels);
  std::size_t positives = 0;
  for (const auto& l : ds.labels)
    for (auto v : l.labels) positives += v;
  log << "synth: " << by_clip.size() << " clips, " << ds.tracks.size() << " tracks, "
      << positives << " anomalous frames -> " << out_dir.string() << '\n';
}

Checkpoint cmd_train(const RunConfig& cfg, const fs::path& data, const fs::path& out_dir,
                     const std::optional<fs::path>& resume, bool force, std::ostream& log) {
  cfg.validate();
  std::optional<Checkpoint> start;
  if (resume) {
    start = load_checkpoint(*resume);
    check_shapes(start->model, [&] {
      ModelConfig m = cfg.model;
      m.finalize();
      return m;
    }());
  }
  const bool resume_in_place = resume && fs::exists(out_dir) &&
                               fs::equivalent(resume->parent_path().empty() ? "." : resume->parent_path(), out_dir);
  prepare_out_dir(out_dir, force || resume_in_place);

  ModelConfig requested = cfg.model;
  requested.finalize();
  const TrainConfig& tc = start ? start->train : cfg.train;
  const ModelConfig& mc = start ? start->model : requested;
  log << "dcmd train: lambda=" << tc.lambda << " epochs=" << cfg.train.epochs
      << " lr=" << tc.lr << " batch=" << tc.batch_size << " T=" << tc.steps
      << " L=" << mc.denoiser.layers << " D=" << mc.denoiser.width << " h=" << mc.denoiser.heads
      << " seed=" << tc.seed << (start ? " (resumed at epoch " + std::to_string(start->epoch) + ")" : "")
      << '\n';

  const auto tracks = load_data(data, log);
  const auto windows = build_windows(tracks, mc.history, mc.future, cfg.stride);
  if (windows.empty()) throw ArgumentError("no training windows in " + data.string());
  log << windows.size() << " windows\n";

  write_text(out_dir / "config.json", to_json(cfg) + "\n");
  const auto t0 = std::chrono::steady_clock::now();
  auto progress = [&](const EpochLog& e) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char line[200];
    std::snprintf(line, sizeof line,
                  "epoch %3d  total %.5f  rec %.5f  pred %.5f  uad %.4f  lr %.2e  (%.0fs)\n",
                  e.epoch, e.loss_total, e.loss_rec, e.loss_pred, e.uad_norm, e.lr, secs);
    log << line << std::flush;
  };

  Checkpoint ckpt;
  if (start) {
    const int extra = std::max(0, cfg.train.epochs - start->epoch);
    ckpt = dcmd::resume(*start, windows, extra, progress);
  } else {
    ckpt = train(windows, requested, cfg.train, progress);
  }
  save_checkpoint(ckpt, out_dir / "checkpoint.bin");
  write_training_log(out_dir / "train_log.csv", ckpt.log);
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(checkpoint_hash(ckpt)));
  log << "checkpoint " << (out_dir / "checkpoint.bin").string() << " (hash " << hash << ")\n";
  return ckpt;
}

ScoreRun cmd_score(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& data,
                   const fs::path& out_dir, const std::optional<fs::path>& labels, bool force,
                   std::ostream& log) {
  cfg.validate();
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  ModelConfig requested = cfg.model;
  requested.finalize();
  check_shapes(ckpt.model, requested);
  prepare_out_dir(out_dir, force);

  InferenceEngine engine(ckpt);
  engine.set_sampler_init(cfg.sampler_init);
  const auto tracks = load_data(data, log);
  const auto windows = build_windows(tracks, ckpt.model.history, ckpt.model.future, cfg.stride);
  if (windows.empty()) throw ArgumentError("no scorable windows in " + data.string());
  const int workers = worker_count();
  log << "scoring " << windows.size() << " windows, m=" << cfg.samples << ", " << workers
      << " worker(s)\n";
  const auto errors = score_windows(engine, windows, cfg.samples, cfg.train.seed, workers);
  save_window_errors(out_dir / "window_errors.csv", errors);

  ScoreRun run;
  run.series = fuse_clips(errors, clip_spans(tracks), cfg.fuse);
  const auto label_path = labels ? labels : find_labels(data);
  if (label_path) {
    std::vector<LabeledFrameSet> sets;
    for (auto& [clip, set] : load_labels(*label_path)) sets.push_back(set);
    attach_labels(run.series, sets);
  }
  save_scores(out_dir / "scores.csv", run.series);
  std::size_t frames = 0;
  for (const auto& s : run.series) frames += s.size();
  if (label_path) {
    run.auc = pooled_auc(run.series);
    json summary{{"dataset", cfg.dataset},
                 {"auc", *run.auc},
                 {"n_frames", frames},
                 {"config_hash", config_hash(cfg)}};
    write_text(out_dir / "summary.json", summary.dump(2) + "\n");
    log << "AUC " << *run.auc << " over " << frames << " frames\n";
  }
  log << "scores -> " << (out_dir / "scores.csv").string() << '\n';
  return run;
}

std::string cmd_eval(const RunConfig& cfg, const fs::path& scores,
                     const std::optional<fs::path>& labels) {
  auto series = load_scores(scores);
  if (labels) {
    std::vector<LabeledFrameSet> sets;
    for (auto& [clip, set] : load_labels(*labels)) sets.push_back(set);
    attach_labels(series, sets);
  }
  std::size_t frames = 0;
  for (const auto& s : series)
    if (s.labels) frames += s.size();
  const double auc = pooled_auc(series);

  std::string dataset = cfg.dataset, hash = config_hash(cfg);
  const fs::path summary = scores.parent_path() / "summary.json";
  if (fs::is_regular_file(summary)) {
    try {
      std::ifstream in(summary);
      const json j = json::parse(in);
      dataset = j.value("dataset", dataset);
      hash = j.value("config_hash", hash);
    } catch (const json::exception&) {
      // A damaged summary only loses provenance; the metric is recomputed.
    }
  }
  json out{{"dataset", dataset}, {"auc", auc}, {"n_frames", frames}, {"config_hash", hash}};
  return out.dump();
}

std::vector<fs::path> cmd_plot(const fs::path& scores, const fs::path& out_dir,
                               const std::optional<fs::path>& labels) {
  auto series = load_scores(scores);
  if (series.empty()) throw ArgumentError("score file " + scores.string() + " holds no frames");
  if (labels) {
    std::vector<LabeledFrameSet> sets;
    for (auto& [clip, set] : load_labels(*labels)) sets.push_back(set);
    attach_labels(series, sets);
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<fs::path> written;
  for (const auto& s : series) {
    const fs::path path = out_dir / (s.clip_id + ".svg");
    emit_plot(s, path);
    written.push_back(path);
  }
  return written;
}

}  // namespace dcmd::app
