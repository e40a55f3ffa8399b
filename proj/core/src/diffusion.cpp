#include "dcmd/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dcmd {

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::CosineBeta ? "cosine-beta" : "cosine-alpha-bar";
}

std::string to_string(SigmaKind kind) {
  return kind == SigmaKind::SqrtBeta ? "sqrt-beta" : "posterior";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "cosine-beta") return ScheduleKind::CosineBeta;
  if (name == "cosine-alpha-bar") return ScheduleKind::CosineAlphaBar;
  throw ConfigError("unknown schedule kind '" + name + "'");
}

SigmaKind sigma_kind_from_string(const std::string& name) {
  if (name == "sqrt-beta") return SigmaKind::SqrtBeta;
  if (name == "posterior") return SigmaKind::Posterior;
  throw ConfigError("unknown sigma kind '" + name + "'");
}

NoiseSchedule::NoiseSchedule(std::vector<double> betas, SigmaKind sigma_kind)
    : beta_(std::move(betas)), sigma_kind_(sigma_kind) {
  if (beta_.empty()) throw ConfigError("noise schedule needs at least one step");
  double prod = 1.0;
  for (double b : beta_) {
    if (!(b > 0.0 && b < 1.0)) throw ConfigError("beta values must lie in (0,1)");
    alpha_.push_back(1.0 - b);
    prod *= 1.0 - b;
    alpha_bar_.push_back(prod);
  }
  for (std::size_t i = 0; i < beta_.size(); ++i) {
    if (sigma_kind_ == SigmaKind::SqrtBeta) {
      sigma_.push_back(std::sqrt(beta_[i]));
    } else {
      const double prev = i == 0 ? 1.0 : alpha_bar_[i - 1];
      sigma_.push_back(std::sqrt(beta_[i] * (1.0 - prev) / (1.0 - alpha_bar_[i])));
    }
  }
}

std::size_t NoiseSchedule::index(int t) const {
  if (t < 1 || t > steps())
    throw ArgumentError("diffusion step " + std::to_string(t) + " outside [1, " +
                        std::to_string(steps()) + "]");
  return static_cast<std::size_t>(t - 1);
}

NoiseSchedule build_schedule(int steps, double beta1, double betaT, ScheduleKind kind,
                             SigmaKind sigma_kind) {
  if (steps < 1) throw ConfigError("T must be >= 1");
  if (!(beta1 > 0.0 && beta1 <= betaT && betaT < 1.0))
    throw ConfigError("need 0 < beta1 <= betaT < 1");
  std::vector<double> betas(static_cast<std::size_t>(steps));
  if (steps == 1) {
    betas[0] = betaT;
    return NoiseSchedule(std::move(betas), sigma_kind);
  }
  const double pi = std::numbers::pi;
  if (kind == ScheduleKind::CosineBeta) {
    for (int t = 1; t <= steps; ++t) {
      const double phase = pi * (t - 1) / (steps - 1);
      betas[static_cast<std::size_t>(t - 1)] =
          betaT + 0.5 * (beta1 - betaT) * (1.0 + std::cos(phase));
    }
    // Pin the endpoints exactly; cos(pi) rounding would otherwise leak.
    betas.front() = beta1;
    betas.back() = betaT;
  } else {
    constexpr double s = 0.008;
    auto f = [&](double t) {
      const double c = std::cos((t / steps + s) / (1.0 + s) * pi / 2.0);
      return c * c;
    };
    for (int t = 1; t <= steps; ++t) {
      const double b = 1.0 - f(t) / f(t - 1);
      betas[static_cast<std::size_t>(t - 1)] = std::clamp(b, beta1, betaT);
    }
  }
  return NoiseSchedule(std::move(betas), sigma_kind);
}

Mat q_sample(const Mat& x0, int t, const Mat& eps, const NoiseSchedule& sched) {
  if (eps.rows() != x0.rows() || eps.cols() != x0.cols())
    throw ArgumentError("q_sample: eps shape differs from x0");
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

SpectrumMatrix q_sample(const SpectrumMatrix& x0, int t, const Mat& eps,
                        const NoiseSchedule& sched) {
  return SpectrumMatrix(q_sample(x0.coeffs(), t, eps, sched));
}

Mat reverse_step(const Mat& xt, int t, const Mat& eps_pred, const Mat& z,
                 const NoiseSchedule& sched) {
  if (eps_pred.rows() != xt.rows() || eps_pred.cols() != xt.cols() || z.rows() != xt.rows() ||
      z.cols() != xt.cols())
    throw ArgumentError("reverse_step: shape mismatch");
  if (t == 1 && !z.isZero(0.0)) throw ArgumentError("reverse_step: z must be zero at t = 1");
  const double a = sched.alpha(t);
  const double coef = (1.0 - a) / std::sqrt(1.0 - sched.alpha_bar(t));
  Mat out = (xt - coef * eps_pred) / std::sqrt(a);
  if (t > 1) out += sched.sigma(t) * z;
  return out;
}

SpectrumMatrix reverse_step(const SpectrumMatrix& xt, int t, const Mat& eps_pred, const Mat& z,
                            const NoiseSchedule& sched) {
  return SpectrumMatrix(reverse_step(xt.coeffs(), t, eps_pred, z, sched));
}

}  // namespace dcmd
