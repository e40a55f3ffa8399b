#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dcmd/common.hpp"

namespace dcmd {

/// COCO-17 keypoint layout, 2-D image coordinates.
inline constexpr int kNumJoints = 17;
inline constexpr int kCoordDims = 2;
inline constexpr int kFlatWidth = kNumJoints * kCoordDims;

enum class Joint : int {
  Nose = 0, LeftEye, RightEye, LeftEar, RightEar,
  LeftShoulder, RightShoulder, LeftElbow, RightElbow, LeftWrist, RightWrist,
  LeftHip, RightHip, LeftKnee, RightKnee, LeftAnkle, RightAnkle
};

/// Undirected bone list of the COCO skeleton.
const std::vector<std::pair<int, int>>& coco_bones();

/// J x J symmetric 0/1 adjacency with self loops for the COCO skeleton.
Mat coco_adjacency();

using Pose = Eigen::Matrix<double, kNumJoints, kCoordDims, Eigen::RowMajor>;

struct PoseFrame {
  std::int64_t index = 0;
  Pose joints = Pose::Zero();
  /// Carried through ingestion untouched; the model never reads it.
  std::optional<std::array<double, kNumJoints>> confidence;
};

struct ActorTrack {
  std::string actor_id;
  std::string clip_id;
  std::vector<PoseFrame> frames;  // strictly increasing frame indices
};

/// Affine map from normalized to source coordinates: source = joints * scale + center.
struct NormRecord {
  Eigen::RowVector2d center = Eigen::RowVector2d::Zero();
  double scale = 1.0;
  bool degenerate = false;  // scale hit the 1e-4 floor
};

struct MotionWindow {
  std::string actor_id;
  std::string clip_id;
  std::int64_t start_frame = 0;
  std::vector<Pose> history;
  std::vector<Pose> future;
  NormRecord norm;

  int horizon() const { return static_cast<int>(history.size() + future.size()); }
};

struct LabeledFrameSet {
  std::string clip_id;
  std::int64_t first_frame = 0;
  std::vector<std::uint8_t> labels;  // one entry per frame starting at first_frame
};

enum class TrackFormat { NativeJson, TrajectoryCsv };

struct LoadReport {
  std::size_t loaded = 0;
  std::size_t dropped = 0;  // tracks removed for violating the pose invariants
};

/// Loads one file. Tracks containing an invalid frame (wrong joint count,
/// non-finite coordinate, non-increasing index) are dropped and counted.
/// Throws IoError if unreadable and ParseError (with the line) on syntax errors.
std::vector<ActorTrack> load_tracks(const std::filesystem::path& path, TrackFormat format,
                                    LoadReport* report = nullptr);

/// Loads every track below a directory: `*.json` as native documents and
/// `<clip>/<actor>.csv` trajectory files.
std::vector<ActorTrack> load_track_dir(const std::filesystem::path& dir,
                                       LoadReport* report = nullptr);

void save_tracks_json(const std::filesystem::path& path, const std::string& clip_id,
                      const std::vector<ActorTrack>& tracks);
void save_track_csv(const std::filesystem::path& path, const ActorTrack& track);

/// Labels CSV `clip_id, frame_idx, label`; header line optional.
std::map<std::string, LabeledFrameSet> load_labels(const std::filesystem::path& path);
void save_labels(const std::filesystem::path& path, const std::vector<LabeledFrameSet>& sets);

/// One window per gap-free alignment of H+F frames, stepping `stride` from the
/// start of each contiguous run. Returned windows carry raw coordinates.
std::vector<MotionWindow> extract_windows(const ActorTrack& track, int history, int future,
                                          int stride);

/// Centers on the mean joint of the first history frame and divides by the
/// larger bounding-box side of that frame (floored at 1e-4). The returned
/// norm record composes with the input's record.
MotionWindow normalize_window(const MotionWindow& window);

/// extract_windows over every track, each window normalized.
std::vector<MotionWindow> build_windows(const std::vector<ActorTrack>& tracks, int history,
                                        int future, int stride);

/// Inverse of all normalizations recorded in `window.norm`.
MotionWindow denormalize_window(const MotionWindow& window);

/// (H+F) x 2J, row t = (x1, y1, x2, y2, ...).
Mat flatten(const MotionWindow& window);

/// Rebuilds a window from a flattened matrix; metadata copied from `like`.
MotionWindow unflatten(const Mat& flat, int history, const MotionWindow& like);

Mat poses_to_rows(const std::vector<Pose>& poses);
std::vector<Pose> rows_to_poses(const Mat& rows);

/// Mixed cycles the three perturbations over the spans of a clip.
enum class AnomalyKind { FreqShift, AmplitudeBurst, JointSwap, Mixed };

std::string to_string(AnomalyKind kind);
AnomalyKind anomaly_kind_from_string(const std::string& name);

struct SynthConfig {
  int n_clips = 1;
  int n_actors = 2;
  int clip_len = 200;
  double anomaly_rate = 0.0;
  AnomalyKind anomaly_kind = AnomalyKind::FreqShift;
  /// Per-coordinate Gaussian jitter, in pixels.
  double jitter = 0.3;
};

struct SynthDataset {
  std::vector<ActorTrack> tracks;
  std::vector<LabeledFrameSet> labels;  // one per clip
};

/// Sinusoidal normal motion with injected anomalous spans; a pure function of
/// (config, seed). Labels mark exactly the perturbed frames.
SynthDataset synth_generate(const SynthConfig& config, std::uint64_t seed);

}  // namespace dcmd
