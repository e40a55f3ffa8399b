#pragma once

#include <string>
#include <vector>

#include "dcmd/spectrum.hpp"

namespace dcmd {

/// How beta_1..beta_T are laid out between the configured endpoints.
enum class ScheduleKind {
  CosineBeta,      // cosine-shaped ramp of beta from beta1 to betaT
  CosineAlphaBar,  // cosine alpha-bar schedule, betas clipped to [beta1, betaT]
};

enum class SigmaKind {
  SqrtBeta,   // sigma_t = sqrt(beta_t)
  Posterior,  // sigma_t = sqrt(beta_t (1 - abar_{t-1}) / (1 - abar_t))
};

std::string to_string(ScheduleKind kind);
std::string to_string(SigmaKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);
SigmaKind sigma_kind_from_string(const std::string& name);

/// Diffusion variances indexed by step t = 1..T. Immutable after construction.
class NoiseSchedule {
 public:
  /// Derives alpha, alpha-bar and sigma from an explicit beta vector.
  NoiseSchedule(std::vector<double> betas, SigmaKind sigma_kind);

  int steps() const { return static_cast<int>(beta_.size()); }
  double beta(int t) const { return beta_.at(index(t)); }
  double alpha(int t) const { return alpha_.at(index(t)); }
  double alpha_bar(int t) const { return alpha_bar_.at(index(t)); }
  double sigma(int t) const { return sigma_.at(index(t)); }
  SigmaKind sigma_kind() const { return sigma_kind_; }

  const std::vector<double>& betas() const { return beta_; }

 private:
  std::size_t index(int t) const;

  std::vector<double> beta_, alpha_, alpha_bar_, sigma_;
  SigmaKind sigma_kind_;
};

/// Throws ConfigError unless 0 < beta1 <= betaT < 1 and T >= 1.
NoiseSchedule build_schedule(int steps, double beta1, double betaT,
                             ScheduleKind kind = ScheduleKind::CosineBeta,
                             SigmaKind sigma_kind = SigmaKind::SqrtBeta);

/// sqrt(abar_t) x0 + sqrt(1 - abar_t) eps. t is 1-based.
Mat q_sample(const Mat& x0, int t, const Mat& eps, const NoiseSchedule& sched);
SpectrumMatrix q_sample(const SpectrumMatrix& x0, int t, const Mat& eps,
                        const NoiseSchedule& sched);

/// One ancestral step t -> t-1:
/// (x_t - (1 - alpha_t) / sqrt(1 - abar_t) eps_pred) / sqrt(alpha_t) + sigma_t z.
/// z must be all zeros at t = 1.
Mat reverse_step(const Mat& xt, int t, const Mat& eps_pred, const Mat& z,
                 const NoiseSchedule& sched);
SpectrumMatrix reverse_step(const SpectrumMatrix& xt, int t, const Mat& eps_pred, const Mat& z,
                            const NoiseSchedule& sched);

}  // namespace dcmd
