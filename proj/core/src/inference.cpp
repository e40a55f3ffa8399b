#include "dcmd/inference.hpp"

#include <cstdlib>
#include <sstream>
#include <thread>

#include "file_io.hpp"

namespace dcmd {

Mat history_mask(int history, int future, Eigen::Index width) {
  if (history < 0 || future < 0) throw ArgumentError("history_mask: negative length");
  Mat mask = Mat::Zero(history + future, width);
  mask.topRows(history).setOnes();
  return mask;
}

Mat pad_observation(const Mat& history, int future) {
  if (history.rows() < 1) throw ArgumentError("pad_observation: history must have >= 1 frame");
  if (future < 0) throw ArgumentError("pad_observation: negative future length");
  Mat out(history.rows() + future, history.cols());
  out.topRows(history.rows()) = history;
  for (int f = 0; f < future; ++f) out.row(history.rows() + f) = history.row(history.rows() - 1);
  return out;
}

SpectrumMatrix mask_complete(const CompletionState& state) {
  const Mat& m = state.mask;
  const Mat xn = idct(state.noised);
  const Mat xd = idct(state.denoised);
  if (xn.rows() != xd.rows() || xn.cols() != xd.cols() || m.rows() != xn.rows() ||
      m.cols() != xn.cols())
    throw ShapeError("mask_complete: mask and spectra differ in shape");
  return dct(Mat(m.cwiseProduct(xn) + (Mat::Ones(m.rows(), m.cols()) - m).cwiseProduct(xd)));
}

std::string to_string(SamplerInit v) {
  return v == SamplerInit::Gaussian ? "gaussian" : "noised-observation";
}

SamplerInit sampler_init_from_string(const std::string& s) {
  if (s == "gaussian") return SamplerInit::Gaussian;
  if (s == "noised-observation") return SamplerInit::NoisedObservation;
  throw ConfigError("sampler_init must be gaussian or noised-observation, got '" + s + "'");
}

namespace {

// Batched splice: the first `history` rows of every block come from `noised`.
Mat complete_blocks(const Mat& noised, const Mat& denoised, Eigen::Index seq, int history) {
  Mat xn = idct_blocks(noised, seq);
  Mat out = idct_blocks(denoised, seq);
  for (Eigen::Index b = 0; b < out.rows() / seq; ++b)
    out.middleRows(b * seq, history) = xn.middleRows(b * seq, history);
  return dct_blocks(out, seq);
}

}  // namespace

InferenceEngine::InferenceEngine(const Checkpoint& ckpt)
    : model_(std::make_shared<const Model>(model_from_checkpoint(ckpt))),
      schedule_(std::make_shared<const NoiseSchedule>(schedule_from_checkpoint(ckpt))),
      smooth_l1_beta_(ckpt.train.smooth_l1_beta) {}

InferenceEngine::InferenceEngine(Model model, NoiseSchedule schedule, double smooth_l1_beta)
    : model_(std::make_shared<const Model>(std::move(model))),
      schedule_(std::make_shared<const NoiseSchedule>(std::move(schedule))),
      smooth_l1_beta_(smooth_l1_beta) {}

const Model& InferenceEngine::model() const {
  if (!model_) throw StateError("no model loaded");
  return *model_;
}

const NoiseSchedule& InferenceEngine::schedule() const {
  if (!schedule_) throw StateError("no model loaded");
  return *schedule_;
}

std::vector<Mat> InferenceEngine::sample_future(const Mat& history, int m, Rng& rng,
                                                const StepObserver& observer) const {
  const Model& mdl = model();
  const NoiseSchedule& sched = schedule();
  const int H = mdl.config.history, F = mdl.config.future;
  const Eigen::Index seq = H + F;
  const Eigen::Index width = mdl.config.denoiser.in_dim;
  if (m < 1) throw ArgumentError("sample_future: m must be >= 1");
  if (history.rows() != H || history.cols() != width)
    throw ShapeError("sample_future: history must be H x 2J of the model");

  const RowVec u = mdl.autoencoder.encode(history);
  const Mat cond = u.replicate(m, 1);
  const Mat x0_one = dct(pad_observation(history, F)).coeffs();
  const Mat x0 = x0_one.replicate(m, 1);
  const int T = sched.steps();

  Mat denoised = standard_normal(rng, m * seq, width);
  if (init_ == SamplerInit::NoisedObservation) denoised = q_sample(x0, T, denoised, sched);
  Mat noised = q_sample(x0, T, standard_normal(rng, m * seq, width), sched);
  Mat x = complete_blocks(noised, denoised, seq, H);
  if (observer) observer(T, noised, x);

  // Loop index t is the target of each reverse step t+1 -> t.
  for (int t = T - 1; t >= 0; --t) {
    ag::Tape tape(false);
    Binder bind(tape, mdl.denoiser.params());
    const std::vector<int> steps(static_cast<std::size_t>(m), t + 1);
    const auto out =
        mdl.denoiser.forward(bind, tape.constant(x), steps, tape.constant(cond), m);
    const Mat z = t == 0 ? Mat::Zero(x.rows(), x.cols()) : standard_normal(rng, x.rows(), x.cols());
    denoised = reverse_step(x, t + 1, out.eps_pred.value(), z, sched);
    noised = t == 0 ? x0 : q_sample(x0, t, standard_normal(rng, x.rows(), x.cols()), sched);
    x = complete_blocks(noised, denoised, seq, H);
    if (observer) observer(t, noised, x);
  }

  const Mat motion = idct_blocks(x, seq);
  std::vector<Mat> futures;
  futures.reserve(static_cast<std::size_t>(m));
  for (int k = 0; k < m; ++k) futures.push_back(motion.middleRows(k * seq + H, F));
  return futures;
}

std::vector<Mat> InferenceEngine::sample_future(const Mat& history, int m, std::uint64_t seed,
                                                const StepObserver& observer) const {
  Rng rng = derive_rng(seed, "sample");
  return sample_future(history, m, rng, observer);
}

double InferenceEngine::reconstruction_error(const Mat& history) const {
  const Autoencoder& ae = model().autoencoder;
  return rec_loss(ae.decode(ae.encode(history)), history);
}

std::uint64_t window_id(const MotionWindow& window) {
  std::uint64_t h = fnv1a64(window.clip_id);
  h = fnv1a64("/", h);
  h = fnv1a64(window.actor_id, h);
  return h ^ static_cast<std::uint64_t>(window.start_frame);
}

WindowErrors InferenceEngine::window_errors(const MotionWindow& window, int m,
                                            std::uint64_t seed) const {
  const auto& cfg = model().config;
  if (static_cast<int>(window.history.size()) != cfg.history ||
      static_cast<int>(window.future.size()) != cfg.future)
    throw ShapeError("window length " + std::to_string(window.history.size()) + "+" +
                     std::to_string(window.future.size()) + " does not match the model's " +
                     std::to_string(cfg.history) + "+" + std::to_string(cfg.future));
  const Mat hist = poses_to_rows(window.history);
  const Mat truth = poses_to_rows(window.future);

  WindowErrors e;
  e.clip_id = window.clip_id;
  e.actor_id = window.actor_id;
  e.start_frame = window.start_frame;
  e.history = cfg.history;
  e.future = cfg.future;
  e.rec_err = reconstruction_error(hist);
  Rng rng = derive_rng(seed, "window", window_id(window));
  for (const Mat& f : sample_future(hist, m, rng))
    e.pred_errs.push_back(pred_loss(truth, f, smooth_l1_beta_));
  return e;
}

int worker_count() {
  if (const char* env = std::getenv("DCMD_NUM_WORKERS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n > 0) return static_cast<int>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<WindowErrors> score_windows(const InferenceEngine& engine,
                                        const std::vector<MotionWindow>& windows, int m,
                                        std::uint64_t seed, int workers) {
  std::vector<WindowErrors> out(windows.size());
  if (workers <= 0) workers = worker_count();
  workers = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers),
                                                   std::max<std::size_t>(1, windows.size())));
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(workers));
  auto run = [&](int w) {
    try {
      for (std::size_t i = static_cast<std::size_t>(w); i < windows.size();
           i += static_cast<std::size_t>(workers))
        out[i] = engine.window_errors(windows[i], m, seed);
    } catch (...) {
      failures[static_cast<std::size_t>(w)] = std::current_exception();
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(run, w);
    for (auto& th : pool) th.join();
  }
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);
  return out;
}

void save_window_errors(const std::filesystem::path& path, const std::vector<WindowErrors>& errors) {
  std::ostringstream out;
  out.precision(17);
  out << "clip_id,actor_id,start_frame,rec_err,pred_err_min,pred_err_mean\n";
  for (const auto& e : errors) {
    double lo = e.pred_errs.empty() ? 0.0 : e.pred_errs.front(), sum = 0.0;
    for (double p : e.pred_errs) {
      lo = std::min(lo, p);
      sum += p;
    }
    const double mean = e.pred_errs.empty() ? 0.0 : sum / static_cast<double>(e.pred_errs.size());
    out << e.clip_id << ',' << e.actor_id << ',' << e.start_frame << ',' << e.rec_err << ','
        << lo << ',' << mean << '\n';
  }
  detail::write_file_atomic(path, out.str());
}

}  // namespace dcmd
