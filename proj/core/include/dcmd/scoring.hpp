#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dcmd/inference.hpp"
#include "dcmd/pose_data.hpp"

namespace dcmd {

enum class SampleReduce { Min, Mean };
enum class WindowReduce { Mean, Max };
enum class ActorReduce { Max, Mean };
/// PerClipMinMax rescales the fused clip score to [0, 1]. PerBranchMinMax
/// additionally rescales each branch before weighting.
enum class Normalize { None, PerClipMinMax, PerBranchMinMax };

std::string to_string(SampleReduce v);
std::string to_string(WindowReduce v);
std::string to_string(ActorReduce v);
std::string to_string(Normalize v);
SampleReduce sample_reduce_from_string(const std::string& s);
WindowReduce window_reduce_from_string(const std::string& s);
ActorReduce actor_reduce_from_string(const std::string& s);
Normalize normalize_from_string(const std::string& s);

struct FuseOptions {
  SampleReduce sample_reduce = SampleReduce::Min;
  double branch_weight = 0.5;  // 1 = reconstruction only, 0 = prediction only
  ActorReduce actor_reduce = ActorReduce::Max;
  WindowReduce window_reduce = WindowReduce::Mean;
  Normalize normalize = Normalize::PerClipMinMax;

  void validate() const;
};

struct ScoreSeries {
  std::string clip_id;
  std::int64_t first_frame = 0;
  std::vector<double> score;
  std::vector<double> rec;    // reconstruction branch per frame
  std::vector<double> pred;   // prediction branch per frame
  std::vector<std::uint8_t> uncovered;  // 1 where no window covers the frame
  std::optional<std::vector<std::uint8_t>> labels;

  std::size_t size() const { return score.size(); }
};

/// Fuses the windows of one clip into per-frame scores. Each window hands its
/// reconstruction error to its history frames and its reduced prediction
/// error to its future frames. Branch series are reduced over windows, then
/// actors. Under per-clip min-max each branch is rescaled to [0, 1] before
/// the weighted sum, and the sum is rescaled again. A branch missing at a
/// frame takes the nearest covered value of that branch.
ScoreSeries fuse_scores(const std::vector<WindowErrors>& errors, std::int64_t clip_len,
                        const FuseOptions& opts, std::int64_t first_frame = 0,
                        const std::string& clip_id = {});

struct ClipSpan {
  std::string clip_id;
  std::int64_t first_frame = 0;
  std::int64_t length = 0;
};

/// Frame range of every clip, spanning all of its actors' frames.
std::vector<ClipSpan> clip_spans(const std::vector<ActorTrack>& tracks);

/// Groups window errors by clip and fuses each clip, in `clips` order.
std::vector<ScoreSeries> fuse_clips(const std::vector<WindowErrors>& errors,
                                    const std::vector<ClipSpan>& clips, const FuseOptions& opts);

/// Exact ROC-AUC via average ranks. Throws MetricError on single-class labels.
double roc_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

/// O(n^2) Mann-Whitney reference used by tests.
double roc_auc_pairwise(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels);

/// Pooled AUC over all labeled frames of all series.
double pooled_auc(const std::vector<ScoreSeries>& series);

/// CSV `clip_id,frame_idx,score,label`; the label column is empty when unknown.
void save_scores(const std::filesystem::path& path, const std::vector<ScoreSeries>& series);
std::vector<ScoreSeries> load_scores(const std::filesystem::path& path);

/// Replaces labels from a labels file; frames absent from it get none.
void attach_labels(std::vector<ScoreSeries>& series, const std::vector<LabeledFrameSet>& labels);

/// Writes an SVG score curve with shaded anomaly spans and a sidecar CSV
/// `frame_idx,score,label` next to it (same stem, .csv).
void emit_plot(const ScoreSeries& series, const std::filesystem::path& path);

}  // namespace dcmd
