#include "dcmd/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "file_io.hpp"

namespace dcmd {

namespace fs = std::filesystem;

std::string to_string(SampleReduce v) { return v == SampleReduce::Min ? "min" : "mean"; }
std::string to_string(WindowReduce v) { return v == WindowReduce::Mean ? "mean" : "max"; }
std::string to_string(ActorReduce v) { return v == ActorReduce::Max ? "max" : "mean"; }
std::string to_string(Normalize v) {
  switch (v) {
    case Normalize::None: return "none";
    case Normalize::PerClipMinMax: return "per-clip-minmax";
    case Normalize::PerBranchMinMax: return "per-branch-minmax";
  }
  return "none";
}

SampleReduce sample_reduce_from_string(const std::string& s) {
  if (s == "min") return SampleReduce::Min;
  if (s == "mean") return SampleReduce::Mean;
  throw ConfigError("sample_reduce must be min or mean, got '" + s + "'");
}
WindowReduce window_reduce_from_string(const std::string& s) {
  if (s == "mean") return WindowReduce::Mean;
  if (s == "max") return WindowReduce::Max;
  throw ConfigError("window_reduce must be mean or max, got '" + s + "'");
}
ActorReduce actor_reduce_from_string(const std::string& s) {
  if (s == "max") return ActorReduce::Max;
  if (s == "mean") return ActorReduce::Mean;
  throw ConfigError("actor_reduce must be max or mean, got '" + s + "'");
}
Normalize normalize_from_string(const std::string& s) {
  if (s == "none") return Normalize::None;
  if (s == "per-clip-minmax") return Normalize::PerClipMinMax;
  if (s == "per-branch-minmax") return Normalize::PerBranchMinMax;
  throw ConfigError("normalize must be none, per-clip-minmax or per-branch-minmax, got '" + s + "'");
}

void FuseOptions::validate() const {
  if (!(branch_weight >= 0.0 && branch_weight <= 1.0))
    throw ConfigError("branch_weight must lie in [0, 1]");
}

namespace {

struct Accum {
  double sum = 0.0;
  double max = -std::numeric_limits<double>::infinity();
  int count = 0;

  void add(double v) {
    sum += v;
    max = std::max(max, v);
    ++count;
  }
  double get(WindowReduce r) const { return r == WindowReduce::Mean ? sum / count : max; }
};

// Per-frame branch value across actors; NaN where nothing covers the frame.
std::vector<double> reduce_actors(const std::map<std::string, std::vector<Accum>>& per_actor,
                                  std::size_t n, const FuseOptions& opts) {
  std::vector<double> out(n, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t f = 0; f < n; ++f) {
    double acc = 0.0;
    int actors = 0;
    for (const auto& [actor, frames] : per_actor) {
      if (frames[f].count == 0) continue;
      const double v = frames[f].get(opts.window_reduce);
      acc = actors == 0 ? v : (opts.actor_reduce == ActorReduce::Max ? std::max(acc, v) : acc + v);
      ++actors;
    }
    if (actors > 0) out[f] = opts.actor_reduce == ActorReduce::Max ? acc : acc / actors;
  }
  return out;
}

// Fills NaN gaps with the nearest covered value (ties prefer the earlier frame).
bool fill_gaps(std::vector<double>& v) {
  std::vector<std::ptrdiff_t> covered;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!std::isnan(v[i])) covered.push_back(static_cast<std::ptrdiff_t>(i));
  if (covered.empty()) return false;
  std::size_t j = 0;
  const std::vector<double> src = v;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const auto ii = static_cast<std::ptrdiff_t>(i);
    while (j + 1 < covered.size() && std::abs(covered[j + 1] - ii) < std::abs(covered[j] - ii)) ++j;
    v[i] = src[static_cast<std::size_t>(covered[j])];
  }
  return true;
}

void minmax(std::vector<double>& v) {
  if (v.empty()) return;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double a = *lo, range = *hi - *lo;
  for (double& x : v) x = range > 0.0 ? (x - a) / range : 0.0;
}

}  // namespace

ScoreSeries fuse_scores(const std::vector<WindowErrors>& errors, std::int64_t clip_len,
                        const FuseOptions& opts, std::int64_t first_frame,
                        const std::string& clip_id) {
  opts.validate();
  if (clip_len < 0) throw ArgumentError("fuse_scores: negative clip length");
  const auto n = static_cast<std::size_t>(clip_len);
  std::map<std::string, std::vector<Accum>> rec_acc, pred_acc;

  for (const auto& w : errors) {
    const std::int64_t lo = w.start_frame - first_frame;
    const std::int64_t hi = lo + w.history + w.future;
    if (lo < 0 || hi > clip_len)
      throw ArgumentError("fuse_scores: window at frame " + std::to_string(w.start_frame) +
                          " lies outside the clip");
    if (w.pred_errs.empty()) throw ArgumentError("fuse_scores: window without prediction errors");
    double pred = 0.0;
    if (opts.sample_reduce == SampleReduce::Min)
      pred = *std::min_element(w.pred_errs.begin(), w.pred_errs.end());
    else
      pred = std::accumulate(w.pred_errs.begin(), w.pred_errs.end(), 0.0) /
             static_cast<double>(w.pred_errs.size());

    auto& r = rec_acc[w.actor_id];
    auto& p = pred_acc[w.actor_id];
    if (r.empty()) r.resize(n);
    if (p.empty()) p.resize(n);
    for (std::int64_t f = lo; f < lo + w.history; ++f) r[static_cast<std::size_t>(f)].add(w.rec_err);
    for (std::int64_t f = lo + w.history; f < hi; ++f) p[static_cast<std::size_t>(f)].add(pred);
  }

  ScoreSeries s;
  s.clip_id = clip_id;
  s.first_frame = first_frame;
  s.rec = reduce_actors(rec_acc, n, opts);
  s.pred = reduce_actors(pred_acc, n, opts);
  s.uncovered.assign(n, 0);
  for (std::size_t f = 0; f < n; ++f)
    s.uncovered[f] = std::isnan(s.rec[f]) && std::isnan(s.pred[f]);

  const bool have_rec = fill_gaps(s.rec);
  const bool have_pred = fill_gaps(s.pred);
  if (!have_rec) s.rec.assign(n, 0.0);
  if (!have_pred) s.pred.assign(n, 0.0);

  std::vector<double> r = s.rec, p = s.pred;
  if (opts.normalize == Normalize::PerBranchMinMax) {
    minmax(r);
    minmax(p);
  }
  s.score.resize(n);
  for (std::size_t f = 0; f < n; ++f)
    s.score[f] = s.uncovered[f] ? 0.0 : opts.branch_weight * r[f] + (1.0 - opts.branch_weight) * p[f];
  if (opts.normalize != Normalize::None) minmax(s.score);
  return s;
}

std::vector<ClipSpan> clip_spans(const std::vector<ActorTrack>& tracks) {
  std::map<std::string, std::pair<std::int64_t, std::int64_t>> range;
  std::vector<std::string> order;
  for (const auto& t : tracks) {
    if (t.frames.empty()) continue;
    const auto lo = t.frames.front().index, hi = t.frames.back().index;
    auto it = range.find(t.clip_id);
    if (it == range.end()) {
      range.emplace(t.clip_id, std::make_pair(lo, hi));
      order.push_back(t.clip_id);
    } else {
      it->second.first = std::min(it->second.first, lo);
      it->second.second = std::max(it->second.second, hi);
    }
  }
  std::vector<ClipSpan> out;
  for (const auto& id : order) {
    const auto [lo, hi] = range.at(id);
    out.push_back(ClipSpan{id, lo, hi - lo + 1});
  }
  return out;
}

std::vector<ScoreSeries> fuse_clips(const std::vector<WindowErrors>& errors,
                                    const std::vector<ClipSpan>& clips, const FuseOptions& opts) {
  std::map<std::string, std::vector<WindowErrors>> by_clip;
  for (const auto& e : errors) by_clip[e.clip_id].push_back(e);
  std::vector<ScoreSeries> out;
  for (const auto& c : clips) {
    auto it = by_clip.find(c.clip_id);
    static const std::vector<WindowErrors> none;
    out.push_back(fuse_scores(it == by_clip.end() ? none : it->second, c.length, opts,
                              c.first_frame, c.clip_id));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_labels(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels,
                  std::size_t& pos, std::size_t& neg) {
  if (scores.size() != labels.size()) throw ArgumentError("roc_auc: scores and labels differ in length");
  pos = neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 1) throw ArgumentError("roc_auc: labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw ArgumentError("roc_auc: non-finite score");
    (labels[i] ? pos : neg)++;
  }
  if (pos == 0 || neg == 0)
    throw MetricError("AUC is undefined: labels contain a single class");
}

}  // namespace

double roc_auc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  std::size_t pos = 0, neg = 0;
  check_labels(scores, labels, pos, neg);
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  // Twice the average rank keeps every quantity integral.
  std::uint64_t rank_sum2 = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const std::uint64_t avg2 = (i + 1) + j;  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]]) rank_sum2 += avg2;
    i = j;
  }
  const std::uint64_t u2 = rank_sum2 - static_cast<std::uint64_t>(pos) * (pos + 1);
  return static_cast<double>(u2) / 2.0 / (static_cast<double>(pos) * static_cast<double>(neg));
}

double roc_auc_pairwise(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  std::size_t pos = 0, neg = 0;
  check_labels(scores, labels, pos, neg);
  std::uint64_t wins2 = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j]) wins2 += 2;
      else if (scores[i] == scores[j]) wins2 += 1;
    }
  }
  return static_cast<double>(wins2) / 2.0 / (static_cast<double>(pos) * static_cast<double>(neg));
}

double pooled_auc(const std::vector<ScoreSeries>& series) {
  std::vector<double> s;
  std::vector<std::uint8_t> l;
  for (const auto& x : series) {
    if (!x.labels) continue;
    for (std::size_t f = 0; f < x.size(); ++f) {
      s.push_back(x.score[f]);
      l.push_back((*x.labels)[f]);
    }
  }
  if (s.empty()) throw MetricError("no labeled frames to evaluate");
  return roc_auc(s, l);
}

// ---------------------------------------------------------------------------

void save_scores(const fs::path& path, const std::vector<ScoreSeries>& series) {
  std::ostringstream out;
  out.precision(17);
  out << "clip_id,frame_idx,score,label\n";
  for (const auto& s : series)
    for (std::size_t f = 0; f < s.size(); ++f) {
      out << s.clip_id << ',' << s.first_frame + static_cast<std::int64_t>(f) << ',' << s.score[f]
          << ',';
      if (s.labels) out << int((*s.labels)[f]);
      out << '\n';
    }
  detail::write_file_atomic(path, out.str());
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

std::vector<ScoreSeries> load_scores(const fs::path& path) {
  std::istringstream in(detail::read_file(path));
  std::string line;
  std::vector<ScoreSeries> out;
  std::map<std::string, std::size_t> index;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("clip_id", 0) == 0) continue;
    auto cells = split_csv(line);
    if (cells.size() != 4) throw ParseError("score CSV needs 4 columns", lineno);
    ScoreSeries* s = nullptr;
    const std::string clip = trim(cells[0]);
    std::int64_t frame = 0;
    double score = 0.0;
    try {
      std::size_t used = 0;
      frame = std::stoll(cells[1], &used);
      if (trim(cells[1].substr(used)).size()) throw std::invalid_argument("frame");
      score = std::stod(cells[2], &used);
      if (trim(cells[2].substr(used)).size()) throw std::invalid_argument("score");
    } catch (const std::logic_error&) {
      throw ParseError("non-numeric value in score CSV", lineno);
    }
    auto it = index.find(clip);
    if (it == index.end()) {
      index.emplace(clip, out.size());
      out.push_back(ScoreSeries{});
      out.back().clip_id = clip;
      out.back().first_frame = frame;
      out.back().labels.emplace();
    }
    s = &out[index.at(clip)];
    if (frame != s->first_frame + static_cast<std::int64_t>(s->size()))
      throw ParseError("score CSV frames must be consecutive per clip", lineno);
    s->score.push_back(score);
    s->rec.push_back(score);
    s->pred.push_back(score);
    s->uncovered.push_back(0);
    const std::string label = trim(cells[3]);
    if (label.empty()) {
      s->labels.reset();
    } else if (s->labels) {
      if (label != "0" && label != "1") throw ParseError("label must be 0 or 1", lineno);
      s->labels->push_back(label == "1");
    }
  }
  return out;
}

void attach_labels(std::vector<ScoreSeries>& series, const std::vector<LabeledFrameSet>& labels) {
  std::map<std::string, const LabeledFrameSet*> by_clip;
  for (const auto& l : labels) by_clip[l.clip_id] = &l;
  for (auto& s : series) {
    auto it = by_clip.find(s.clip_id);
    if (it == by_clip.end()) {
      s.labels.reset();
      continue;
    }
    const LabeledFrameSet& l = *it->second;
    std::vector<std::uint8_t> v(s.size(), 0);
    for (std::size_t f = 0; f < s.size(); ++f) {
      const std::int64_t k = s.first_frame + static_cast<std::int64_t>(f) - l.first_frame;
      if (k < 0 || k >= static_cast<std::int64_t>(l.labels.size()))
        throw ArgumentError("labels for clip " + s.clip_id + " do not cover frame " +
                            std::to_string(s.first_frame + static_cast<std::int64_t>(f)));
      v[f] = l.labels[static_cast<std::size_t>(k)];
    }
    s.labels = std::move(v);
  }
}

void emit_plot(const ScoreSeries& series, const fs::path& path) {
  if (series.size() == 0) throw ArgumentError("emit_plot: empty score series");
  constexpr double W = 900, Hh = 260, ml = 50, mr = 15, mt = 25, mb = 35;
  const double pw = W - ml - mr, ph = Hh - mt - mb;
  const auto [lo_it, hi_it] = std::minmax_element(series.score.begin(), series.score.end());
  const double lo = *lo_it, hi = *hi_it > *lo_it ? *hi_it : *lo_it + 1.0;
  const double n = static_cast<double>(series.size());
  const auto x_of = [&](double f) { return ml + pw * (n > 1 ? f / (n - 1) : 0.5); };
  const auto y_of = [&](double v) { return mt + ph * (1.0 - (v - lo) / (hi - lo)); };

  std::ostringstream svg;
  svg.precision(6);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hh
      << "\" viewBox=\"0 0 " << W << ' ' << Hh << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << ml << "\" y=\"16\" font-family=\"sans-serif\" font-size=\"13\">"
      << series.clip_id << "</text>\n";
  if (series.labels) {
    const auto& lab = *series.labels;
    for (std::size_t f = 0; f < lab.size();) {
      if (!lab[f]) {
        ++f;
        continue;
      }
      std::size_t g = f;
      while (g < lab.size() && lab[g]) ++g;
      const double step = n > 1 ? pw / (n - 1) : pw;
      const double x0 = std::max(ml, x_of(static_cast<double>(f)) - step / 2);
      const double x1 = std::min(ml + pw, x_of(static_cast<double>(g - 1)) + step / 2);
      svg << "<rect x=\"" << x0 << "\" y=\"" << mt << "\" width=\"" << x1 - x0 << "\" height=\""
          << ph << "\" fill=\"#f4a6a6\" fill-opacity=\"0.5\"/>\n";
      f = g;
    }
  }
  svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n<polyline fill=\"none\" stroke=\"#1f5fbf\" "
         "stroke-width=\"1.5\" points=\"";
  for (std::size_t f = 0; f < series.size(); ++f)
    svg << x_of(static_cast<double>(f)) << ',' << y_of(series.score[f]) << ' ';
  svg << "\"/>\n";
  svg << "<text x=\"" << ml << "\" y=\"" << Hh - 10 << "\" font-family=\"sans-serif\" "
         "font-size=\"11\">frame "
      << series.first_frame << "</text>\n<text x=\"" << ml + pw << "\" y=\"" << Hh - 10
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">frame "
      << series.first_frame + static_cast<std::int64_t>(series.size()) - 1 << "</text>\n"
      << "<text x=\"" << ml - 6 << "\" y=\"" << mt + 4
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << hi
      << "</text>\n<text x=\"" << ml - 6 << "\" y=\"" << mt + ph
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << lo
      << "</text>\n</svg>\n";

  std::ostringstream csv;
  csv.precision(17);
  csv << "frame_idx,score,label\n";
  for (std::size_t f = 0; f < series.size(); ++f) {
    csv << series.first_frame + static_cast<std::int64_t>(f) << ',' << series.score[f] << ',';
    if (series.labels) csv << int((*series.labels)[f]);
    csv << '\n';
  }
  fs::path sidecar = path;
  sidecar.replace_extension(".csv");
  detail::write_file_atomic(path, svg.str());
  detail::write_file_atomic(sidecar, csv.str());
}

}  // namespace dcmd
