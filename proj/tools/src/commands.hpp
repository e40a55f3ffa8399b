#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace dcmd::app {

/// Command-line misuse (exit code 1).
class UsageError : public Error {
 public:
  using Error::Error;
};

namespace fs = std::filesystem;

/// Writes `<out>/tracks/<clip>.json` and `<out>/labels.csv`.
void cmd_synth(const RunConfig& cfg, const fs::path& out_dir, bool force, std::ostream& log);

/// Trains on every track under `data` and writes checkpoint.bin, train_log.csv
/// and config.json into `out_dir`. With `resume`, continues that checkpoint
/// up to cfg.train.epochs total epochs.
Checkpoint cmd_train(const RunConfig& cfg, const fs::path& data, const fs::path& out_dir,
                     const std::optional<fs::path>& resume, bool force, std::ostream& log);

struct ScoreRun {
  std::vector<ScoreSeries> series;
  std::optional<double> auc;
};

/// Inference and fusion: window_errors.csv, scores.csv and, when labels are
/// known, summary.json.
ScoreRun cmd_score(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& data,
                   const fs::path& out_dir, const std::optional<fs::path>& labels, bool force,
                   std::ostream& log);

/// Returns the summary JSON `{dataset, auc, n_frames, config_hash}`.
std::string cmd_eval(const RunConfig& cfg, const fs::path& scores,
                     const std::optional<fs::path>& labels);

/// One SVG (plus sidecar CSV) per clip; returns the written image paths.
std::vector<fs::path> cmd_plot(const fs::path& scores, const fs::path& out_dir,
                               const std::optional<fs::path>& labels);

/// Labels file next to a data directory, if one exists.
std::optional<fs::path> find_labels(const fs::path& data);

}  // namespace dcmd::app
