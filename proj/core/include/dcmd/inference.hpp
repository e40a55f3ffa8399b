#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dcmd/spectrum.hpp"
#include "dcmd/training.hpp"

namespace dcmd {

/// One reverse-diffusion state of the completion sampler.
struct CompletionState {
  SpectrumMatrix noised;    // X_t^n
  SpectrumMatrix denoised;  // X_t^d
  Mat mask;                 // (H+F) x 2J, first H rows ones
  int t = 0;
};

/// (H+F) x width mask with ones on the first H rows.
Mat history_mask(int history, int future, Eigen::Index width);

/// Repeats the last observed row `future` times.
Mat pad_observation(const Mat& history, int future);

/// Time-domain splice: observed rows from X^n, the rest from X^d, back to spectrum.
SpectrumMatrix mask_complete(const CompletionState& state);

/// Starting point of the predicted region. Gaussian draws X_T^d ~ N(0, I);
/// NoisedObservation draws it as q_sample of the padded observation at T.
enum class SamplerInit { Gaussian, NoisedObservation };

std::string to_string(SamplerInit v);
SamplerInit sampler_init_from_string(const std::string& s);

/// Called once per reverse step with the step index t (the target of the
/// step) and stacked (m*(H+F)) x 2J spectra of the noised observation and of
/// the completed state.
using StepObserver = std::function<void(int t, const Mat& noised, const Mat& completed)>;

struct WindowErrors {
  std::string clip_id;
  std::string actor_id;
  std::int64_t start_frame = 0;
  int history = 0;
  int future = 0;
  double rec_err = 0.0;
  std::vector<double> pred_errs;  // one per sample
};

/// Read-only model plus schedule for sampling and window scoring.
class InferenceEngine {
 public:
  InferenceEngine() = default;
  explicit InferenceEngine(const Checkpoint& ckpt);
  InferenceEngine(Model model, NoiseSchedule schedule, double smooth_l1_beta = 1.0);

  bool loaded() const { return model_ != nullptr; }
  void set_sampler_init(SamplerInit init) { init_ = init; }
  SamplerInit sampler_init() const { return init_; }
  const Model& model() const;
  const NoiseSchedule& schedule() const;
  int history() const { return model().config.history; }
  int future() const { return model().config.future; }

  /// m predicted futures, each F x 2J, for one normalized H x 2J history.
  std::vector<Mat> sample_future(const Mat& history, int m, Rng& rng,
                                 const StepObserver& observer = {}) const;
  std::vector<Mat> sample_future(const Mat& history, int m, std::uint64_t seed,
                                 const StepObserver& observer = {}) const;

  /// Reconstruction error of the history (sum of squares).
  double reconstruction_error(const Mat& history) const;

  /// Errors for one normalized window; RNG derived from (seed, window id).
  WindowErrors window_errors(const MotionWindow& window, int m, std::uint64_t seed) const;

 private:
  std::shared_ptr<const Model> model_;
  std::shared_ptr<const NoiseSchedule> schedule_;
  double smooth_l1_beta_ = 1.0;
  SamplerInit init_ = SamplerInit::NoisedObservation;
};

/// Identifier hashed into the sampling RNG of a window.
std::uint64_t window_id(const MotionWindow& window);

/// Worker count: DCMD_NUM_WORKERS if set and positive, otherwise the
/// hardware concurrency (at least 1).
int worker_count();

/// Scores windows concurrently; output order follows input order.
std::vector<WindowErrors> score_windows(const InferenceEngine& engine,
                                        const std::vector<MotionWindow>& windows, int m,
                                        std::uint64_t seed, int workers = 0);

void save_window_errors(const std::filesystem::path& path, const std::vector<WindowErrors>& errors);

}  // namespace dcmd
