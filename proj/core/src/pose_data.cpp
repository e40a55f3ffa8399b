#include "dcmd/pose_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "dcmd/rng.hpp"
#include "file_io.hpp"

namespace dcmd {

namespace fs = std::filesystem;
using detail::read_file;
using detail::write_file_atomic;
using nlohmann::json;

const std::vector<std::pair<int, int>>& coco_bones() {
  static const std::vector<std::pair<int, int>> bones = {
      {0, 1},  {0, 2},   {1, 3},   {2, 4},   {3, 5},   {4, 6},   {5, 6},   {5, 7},
      {7, 9},  {6, 8},   {8, 10},  {5, 11},  {6, 12},  {11, 12}, {11, 13}, {13, 15},
      {12, 14}, {14, 16}};
  return bones;
}

Mat coco_adjacency() {
  Mat adj = Mat::Identity(kNumJoints, kNumJoints);
  for (auto [a, b] : coco_bones()) {
    adj(a, b) = 1.0;
    adj(b, a) = 1.0;
  }
  return adj;
}

// ---------------------------------------------------------------------------
// Ingestion

namespace {

bool pose_finite(const Pose& p) { return p.allFinite(); }

bool track_valid(const ActorTrack& track) {
  for (std::size_t i = 0; i < track.frames.size(); ++i) {
    if (!pose_finite(track.frames[i].joints)) return false;
    if (i > 0 && track.frames[i].index <= track.frames[i - 1].index) return false;
  }
  return true;
}

long line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<long>(std::count(text.begin(), text.begin() + offset, '\n'));
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<ActorTrack> parse_native_json(const std::string& text, const fs::path& path,
                                          LoadReport& report) {
  std::vector<ActorTrack> tracks;
  if (trim(text).empty()) return tracks;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    long line = line_of_offset(text, e.byte);
    throw ParseError(path.string() + ":" + std::to_string(line) + ": " + e.what(), line);
  }
  auto fail = [&](const std::string& msg) -> ParseError {
    return ParseError(path.string() + ": " + msg, 0);
  };
  if (!doc.is_object() || !doc.contains("clip_id") || !doc.contains("actors"))
    throw fail("expected {clip_id, actors}");
  const std::string clip_id = doc["clip_id"].is_string() ? doc["clip_id"].get<std::string>()
                                                         : doc["clip_id"].dump();
  for (const auto& actor : doc["actors"]) {
    ActorTrack track;
    track.clip_id = clip_id;
    track.actor_id = actor.at("actor_id").is_string() ? actor["actor_id"].get<std::string>()
                                                      : actor["actor_id"].dump();
    bool valid = true;
    for (const auto& frame : actor.at("frames")) {
      PoseFrame pf;
      pf.index = frame.at("idx").get<std::int64_t>();
      const auto& kp = frame.at("kp");
      if (!kp.is_array() || kp.size() != kNumJoints) {
        valid = false;
        continue;
      }
      for (int j = 0; j < kNumJoints; ++j) {
        const auto& pt = kp[j];
        if (!pt.is_array() || pt.size() != kCoordDims || !pt[0].is_number() ||
            !pt[1].is_number()) {
          valid = false;
          break;
        }
        pf.joints(j, 0) = pt[0].get<double>();
        pf.joints(j, 1) = pt[1].get<double>();
      }
      if (frame.contains("conf") && frame["conf"].is_array() &&
          frame["conf"].size() == kNumJoints) {
        std::array<double, kNumJoints> conf{};
        for (int j = 0; j < kNumJoints; ++j) conf[j] = frame["conf"][j].get<double>();
        pf.confidence = conf;
      }
      track.frames.push_back(pf);
    }
    if (valid && track_valid(track)) {
      tracks.push_back(std::move(track));
    } else {
      ++report.dropped;
    }
  }
  return tracks;
}

std::vector<ActorTrack> parse_trajectory_csv(const std::string& text, const fs::path& path,
                                             LoadReport& report) {
  std::vector<ActorTrack> tracks;
  ActorTrack track;
  track.clip_id = path.parent_path().filename().string();
  track.actor_id = path.stem().string();
  bool valid = true;
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  bool seen_row = false;
  while (std::getline(in, line)) {
    ++line_no;
    auto body = trim(line);
    if (body.empty()) continue;
    auto fields = split_csv(body);
    std::vector<double> values(fields.size());
    bool header = false;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (parse_double(fields[i], values[i])) continue;
      if (!seen_row && i == 0) {
        header = true;
        break;
      }
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                           ": non-numeric field '" + std::string(fields[i]) + "'",
                       line_no);
    }
    seen_row = true;
    if (header) continue;
    if (values.size() != 1 + kFlatWidth) {
      valid = false;
      continue;
    }
    PoseFrame pf;
    pf.index = static_cast<std::int64_t>(values[0]);
    if (static_cast<double>(pf.index) != values[0])
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                           ": frame index is not an integer",
                       line_no);
    for (int k = 0; k < kFlatWidth; ++k) pf.joints.data()[k] = values[1 + static_cast<std::size_t>(k)];
    track.frames.push_back(pf);
  }
  if (track.frames.empty() && valid) return tracks;
  if (valid && track_valid(track)) {
    tracks.push_back(std::move(track));
  } else {
    ++report.dropped;
  }
  return tracks;
}

}  // namespace

std::vector<ActorTrack> load_tracks(const fs::path& path, TrackFormat format,
                                    LoadReport* report) {
  LoadReport local;
  const std::string text = read_file(path);
  auto tracks = format == TrackFormat::NativeJson ? parse_native_json(text, path, local)
                                                  : parse_trajectory_csv(text, path, local);
  local.loaded = tracks.size();
  if (report) {
    report->loaded += local.loaded;
    report->dropped += local.dropped;
  }
  return tracks;
}

std::vector<ActorTrack> load_track_dir(const fs::path& dir, LoadReport* report) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension();
    const auto name = entry.path().filename().string();
    if (ext == ".json" || (ext == ".csv" && name.find("label") == std::string::npos))
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ActorTrack> out;
  for (const auto& f : files) {
    auto tracks = load_tracks(
        f, f.extension() == ".json" ? TrackFormat::NativeJson : TrackFormat::TrajectoryCsv,
        report);
    for (auto& t : tracks) out.push_back(std::move(t));
  }
  return out;
}

void save_tracks_json(const fs::path& path, const std::string& clip_id,
                      const std::vector<ActorTrack>& tracks) {
  json doc;
  doc["clip_id"] = clip_id;
  doc["actors"] = json::array();
  for (const auto& track : tracks) {
    json actor;
    actor["actor_id"] = track.actor_id;
    actor["frames"] = json::array();
    for (const auto& f : track.frames) {
      json frame;
      frame["idx"] = f.index;
      json kp = json::array();
      for (int j = 0; j < kNumJoints; ++j) kp.push_back({f.joints(j, 0), f.joints(j, 1)});
      frame["kp"] = std::move(kp);
      if (f.confidence) frame["conf"] = *f.confidence;
      actor["frames"].push_back(std::move(frame));
    }
    doc["actors"].push_back(std::move(actor));
  }
  write_file_atomic(path, doc.dump());
}

void save_track_csv(const fs::path& path, const ActorTrack& track) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& f : track.frames) {
    out << f.index;
    for (int k = 0; k < kFlatWidth; ++k) out << ',' << f.joints.data()[k];
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

std::map<std::string, LabeledFrameSet> load_labels(const fs::path& path) {
  const std::string text = read_file(path);
  std::map<std::string, std::vector<std::pair<std::int64_t, int>>> rows;
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto body = trim(line);
    if (body.empty()) continue;
    auto fields = split_csv(body);
    if (fields.size() != 3)
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected 3 fields",
                       line_no);
    double idx = 0, label = 0;
    if (!parse_double(fields[1], idx) || !parse_double(fields[2], label)) {
      if (line_no == 1) continue;  // header
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": non-numeric field",
                       line_no);
    }
    if (label != 0.0 && label != 1.0)
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": label must be 0 or 1",
                       line_no);
    rows[std::string(fields[0])].emplace_back(static_cast<std::int64_t>(idx),
                                              static_cast<int>(label));
  }
  std::map<std::string, LabeledFrameSet> out;
  for (auto& [clip, entries] : rows) {
    auto [lo, hi] = std::minmax_element(entries.begin(), entries.end());
    LabeledFrameSet set;
    set.clip_id = clip;
    set.first_frame = lo->first;
    set.labels.assign(static_cast<std::size_t>(hi->first - lo->first + 1), 0);
    for (auto [idx, label] : entries) set.labels[idx - set.first_frame] = label;
    out.emplace(clip, std::move(set));
  }
  return out;
}

void save_labels(const fs::path& path, const std::vector<LabeledFrameSet>& sets) {
  std::ostringstream out;
  out << "clip_id,frame_idx,label\n";
  for (const auto& set : sets)
    for (std::size_t i = 0; i < set.labels.size(); ++i)
      out << set.clip_id << ',' << set.first_frame + static_cast<std::int64_t>(i) << ','
          << int(set.labels[i]) << '\n';
  write_file_atomic(path, out.str());
}

// ---------------------------------------------------------------------------
// Windows

std::vector<MotionWindow> extract_windows(const ActorTrack& track, int history, int future,
                                          int stride) {
  if (history < 1 || future < 1 || stride < 1)
    throw ArgumentError("extract_windows: H, F and stride must be >= 1");
  const std::size_t len = static_cast<std::size_t>(history + future);
  std::vector<MotionWindow> out;
  const auto& frames = track.frames;
  std::size_t run_start = 0;
  while (run_start < frames.size()) {
    std::size_t run_end = run_start + 1;
    while (run_end < frames.size() && frames[run_end].index == frames[run_end - 1].index + 1)
      ++run_end;
    for (std::size_t s = run_start; s + len <= run_end; s += static_cast<std::size_t>(stride)) {
      MotionWindow w;
      w.actor_id = track.actor_id;
      w.clip_id = track.clip_id;
      w.start_frame = frames[s].index;
      for (int k = 0; k < history; ++k) w.history.push_back(frames[s + k].joints);
      for (int k = 0; k < future; ++k) w.future.push_back(frames[s + history + k].joints);
      out.push_back(std::move(w));
    }
    run_start = run_end;
  }
  return out;
}

MotionWindow normalize_window(const MotionWindow& window) {
  if (window.history.empty()) throw ArgumentError("normalize_window: empty history");
  const Pose& ref = window.history.front();
  const Eigen::RowVector2d center = ref.colwise().mean();
  const Eigen::RowVector2d extent = ref.colwise().maxCoeff() - ref.colwise().minCoeff();
  double side = extent.maxCoeff();
  constexpr double kScaleFloor = 1e-4;
  const bool degenerate = !(side >= kScaleFloor);
  if (degenerate) side = kScaleFloor;

  MotionWindow out = window;
  auto apply = [&](Pose& p) { p = (p.rowwise() - center) / side; };
  for (auto& p : out.history) apply(p);
  for (auto& p : out.future) apply(p);
  out.norm.center = window.norm.center + center * window.norm.scale;
  out.norm.scale = window.norm.scale * side;
  out.norm.degenerate = window.norm.degenerate || degenerate;
  return out;
}

std::vector<MotionWindow> build_windows(const std::vector<ActorTrack>& tracks, int history,
                                        int future, int stride) {
  std::vector<MotionWindow> out;
  for (const auto& t : tracks)
    for (auto& w : extract_windows(t, history, future, stride))
      out.push_back(normalize_window(w));
  return out;
}

MotionWindow denormalize_window(const MotionWindow& window) {
  MotionWindow out = window;
  auto apply = [&](Pose& p) { p = (p * window.norm.scale).rowwise() + window.norm.center; };
  for (auto& p : out.history) apply(p);
  for (auto& p : out.future) apply(p);
  out.norm = NormRecord{};
  return out;
}

Mat poses_to_rows(const std::vector<Pose>& poses) {
  Mat out(static_cast<Eigen::Index>(poses.size()), kFlatWidth);
  for (std::size_t t = 0; t < poses.size(); ++t)
    out.row(static_cast<Eigen::Index>(t)) =
        Eigen::Map<const RowVec>(poses[t].data(), kFlatWidth);
  return out;
}

std::vector<Pose> rows_to_poses(const Mat& rows) {
  if (rows.cols() != kFlatWidth) throw ArgumentError("rows_to_poses: width must be 2J");
  std::vector<Pose> out(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index t = 0; t < rows.rows(); ++t)
    Eigen::Map<RowVec>(out[static_cast<std::size_t>(t)].data(), kFlatWidth) = rows.row(t);
  return out;
}

Mat flatten(const MotionWindow& window) {
  Mat out(window.horizon(), kFlatWidth);
  const auto h = static_cast<Eigen::Index>(window.history.size());
  if (h > 0) out.topRows(h) = poses_to_rows(window.history);
  if (!window.future.empty()) out.bottomRows(out.rows() - h) = poses_to_rows(window.future);
  return out;
}

MotionWindow unflatten(const Mat& flat, int history, const MotionWindow& like) {
  if (history < 0 || history > flat.rows()) throw ArgumentError("unflatten: bad history length");
  MotionWindow out;
  out.actor_id = like.actor_id;
  out.clip_id = like.clip_id;
  out.start_frame = like.start_frame;
  out.norm = like.norm;
  out.history = rows_to_poses(flat.topRows(history));
  out.future = rows_to_poses(flat.bottomRows(flat.rows() - history));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

std::string to_string(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::FreqShift: return "freq-shift";
    case AnomalyKind::AmplitudeBurst: return "amplitude-burst";
    case AnomalyKind::JointSwap: return "joint-swap";
    case AnomalyKind::Mixed: return "mixed";
  }
  return "?";
}

AnomalyKind anomaly_kind_from_string(const std::string& name) {
  if (name == "freq-shift") return AnomalyKind::FreqShift;
  if (name == "amplitude-burst") return AnomalyKind::AmplitudeBurst;
  if (name == "joint-swap") return AnomalyKind::JointSwap;
  if (name == "mixed") return AnomalyKind::Mixed;
  throw ConfigError("unknown anomaly kind '" + name + "'");
}

namespace {

// Standing pose around the hip center, image convention (y down), ~110 px tall.
const Pose& template_pose() {
  static const Pose pose = [] {
    Pose p;
    p << 0, -62,  3, -65, -3, -65,  6, -63, -6, -63,
        12, -48, -12, -48, 15, -28, -15, -28, 16, -10, -16, -10,
        8, 0, -8, 0, 9, 22, -9, 22, 9, 44, -9, 44;
    return p;
  }();
  return pose;
}

struct JointSwing {
  double ax, ay, phase;
};

// Oscillation amplitude per joint; right side runs half a cycle behind the
// left, arms opposite to legs.
JointSwing base_swing(int j) {
  constexpr double pi = std::numbers::pi;
  switch (static_cast<Joint>(j)) {
    case Joint::LeftElbow: return {4.0, 1.5, pi};
    case Joint::RightElbow: return {4.0, 1.5, 0.0};
    case Joint::LeftWrist: return {8.0, 3.0, pi};
    case Joint::RightWrist: return {8.0, 3.0, 0.0};
    case Joint::LeftKnee: return {5.0, 2.0, 0.0};
    case Joint::RightKnee: return {5.0, 2.0, pi};
    case Joint::LeftAnkle: return {9.0, 3.5, 0.0};
    case Joint::RightAnkle: return {9.0, 3.5, pi};
    case Joint::LeftShoulder: return {1.0, 1.0, pi};
    case Joint::RightShoulder: return {1.0, 1.0, 0.0};
    default: return {0.5, 1.0, 0.0};
  }
}

struct Span {
  int begin, end;  // [begin, end)
  int actor;
  AnomalyKind kind;
};

std::vector<Span> place_spans(int clip_len, double rate, int n_actors, AnomalyKind kind,
                              int clip, Rng& rng) {
  const int total = static_cast<int>(std::lround(rate * clip_len));
  if (total <= 0 || n_actors <= 0) return {};
  constexpr int kTargetSpan = 20;
  const int k = std::max(1, (total + kTargetSpan - 1) / kTargetSpan);
  std::vector<int> lengths(static_cast<std::size_t>(k), total / k);
  for (int i = 0; i < total % k; ++i) ++lengths[static_cast<std::size_t>(i)];

  // Distribute the free frames over k+1 gaps; interior gaps keep >= 1 frame
  // when possible so spans stay distinct.
  int free = clip_len - total;
  const int interior_min = free >= k - 1 ? 1 : 0;
  free -= interior_min * (k - 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> w(static_cast<std::size_t>(k + 1));
  double wsum = 0.0;
  for (auto& x : w) wsum += (x = unif(rng) + 1e-9);
  std::vector<int> gaps(w.size());
  int used = 0;
  for (std::size_t i = 0; i < w.size(); ++i) used += (gaps[i] = static_cast<int>(free * w[i] / wsum));
  gaps.back() += free - used;
  std::uniform_int_distribution<int> pick_actor(0, n_actors - 1);
  std::vector<Span> spans;
  int pos = gaps[0];
  for (int i = 0; i < k; ++i) {
    const AnomalyKind k_i =
        kind == AnomalyKind::Mixed ? static_cast<AnomalyKind>((clip + i) % 3) : kind;
    Span s{pos, pos + lengths[static_cast<std::size_t>(i)], pick_actor(rng), k_i};
    spans.push_back(s);
    pos = s.end + gaps[static_cast<std::size_t>(i + 1)] + (i + 1 < k ? interior_min : 0);
  }
  return spans;
}

}  // namespace

SynthDataset synth_generate(const SynthConfig& config, std::uint64_t seed) {
  if (!(config.anomaly_rate >= 0.0 && config.anomaly_rate <= 1.0))
    throw ArgumentError("synth_generate: anomaly_rate must lie in [0,1]");
  if (config.clip_len < 1 || config.n_actors < 1 || config.n_clips < 1)
    throw ArgumentError("synth_generate: clip_len, n_actors, n_clips must be positive");
  constexpr double two_pi = 2.0 * std::numbers::pi;

  SynthDataset out;
  for (int c = 0; c < config.n_clips; ++c) {
    Rng rng = derive_rng(seed, "synth.clip", static_cast<std::uint64_t>(c));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    char clip_name[32];
    std::snprintf(clip_name, sizeof clip_name, "clip_%03d", c);

    // Separate stream so the base motion does not depend on the anomaly settings.
    Rng span_rng = derive_rng(seed, "synth.spans", static_cast<std::uint64_t>(c));
    const auto spans = place_spans(config.clip_len, config.anomaly_rate, config.n_actors,
                                    config.anomaly_kind, c, span_rng);
    LabeledFrameSet labels;
    labels.clip_id = clip_name;
    labels.labels.assign(static_cast<std::size_t>(config.clip_len), 0);
    for (const auto& s : spans)
      for (int f = s.begin; f < s.end; ++f) labels.labels[static_cast<std::size_t>(f)] = 1;

    for (int a = 0; a < config.n_actors; ++a) {
      const double x0 = 100.0 + 600.0 * unif(rng);
      const double y0 = 150.0 + 250.0 * unif(rng);
      const double vx = -1.5 + 3.0 * unif(rng);
      const double size = 0.8 + 0.4 * unif(rng);
      const double freq = 1.0 / (12.0 + 8.0 * unif(rng));
      const double phase0 = two_pi * unif(rng);
      const double mod_period = 60.0 + 60.0 * unif(rng);
      const double mod_phase = two_pi * unif(rng);
      std::array<JointSwing, kNumJoints> swing{};
      for (int j = 0; j < kNumJoints; ++j) {
        swing[static_cast<std::size_t>(j)] = base_swing(j);
        swing[static_cast<std::size_t>(j)].phase += 0.3 * (unif(rng) - 0.5);
        swing[static_cast<std::size_t>(j)].ax *= 0.85 + 0.3 * unif(rng);
        swing[static_cast<std::size_t>(j)].ay *= 0.85 + 0.3 * unif(rng);
      }
      std::normal_distribution<double> jitter(0.0, 1.0);

      ActorTrack track;
      track.clip_id = clip_name;
      track.actor_id = std::to_string(a);
      double theta = phase0;
      for (int f = 0; f < config.clip_len; ++f) {
        const Span* active = nullptr;
        for (const auto& s : spans)
          if (s.actor == a && f >= s.begin && f < s.end) active = &s;
        double freq_mult = 1.0, amp_mult = 1.0;
        if (active && active->kind == AnomalyKind::FreqShift) freq_mult = 3.5;
        if (active && active->kind == AnomalyKind::AmplitudeBurst) amp_mult = 3.5;
        if (f > 0) theta += two_pi * freq * freq_mult;
        const double envelope = 1.0 + 0.15 * std::sin(two_pi * f / mod_period + mod_phase);

        Pose p;
        for (int j = 0; j < kNumJoints; ++j) {
          const auto& s = swing[static_cast<std::size_t>(j)];
          const double amp = envelope * amp_mult;
          p(j, 0) = template_pose()(j, 0) + amp * s.ax * std::sin(theta + s.phase);
          p(j, 1) = template_pose()(j, 1) + amp * s.ay * std::sin(2.0 * theta + s.phase);
        }
        if (active && active->kind == AnomalyKind::JointSwap) {
          p.row(static_cast<int>(Joint::LeftWrist)).swap(p.row(static_cast<int>(Joint::RightAnkle)));
          p.row(static_cast<int>(Joint::RightWrist)).swap(p.row(static_cast<int>(Joint::LeftAnkle)));
        }
        p *= size;
        p.col(0).array() += x0 + vx * f;
        p.col(1).array() += y0;
        for (int k = 0; k < kFlatWidth; ++k) p.data()[k] += config.jitter * jitter(rng);
        track.frames.push_back(PoseFrame{f, p, std::nullopt});
      }
      out.tracks.push_back(std::move(track));
    }
    out.labels.push_back(std::move(labels));
  }
  return out;
}

}  // namespace dcmd
