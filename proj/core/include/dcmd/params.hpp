#pragma once

#include <string>
#include <vector>

#include "dcmd/autograd.hpp"
#include "dcmd/rng.hpp"

namespace dcmd {

struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
};

/// Ordered, named parameter list owned by one network.
class ParamSet {
 public:
  int add(std::string name, Mat value);

  Parameter& operator[](int idx) { return params_.at(static_cast<std::size_t>(idx)); }
  const Parameter& operator[](int idx) const { return params_.at(static_cast<std::size_t>(idx)); }
  int find(const std::string& name) const;  // -1 if absent
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  int size() const { return static_cast<int>(params_.size()); }
  std::size_t scalar_count() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter> params_;
};

/// Binds parameters onto one tape lazily, then hands gradients back.
class Binder {
 public:
  Binder(ag::Tape& tape, const ParamSet& params);

  ag::Var operator()(int idx);
  ag::Tape& tape() { return tape_; }

  /// Adds every bound parameter's tape gradient into `params[i].grad`.
  void accumulate_grads(ParamSet& params) const;

 private:
  ag::Tape& tape_;
  const ParamSet& params_;
  std::vector<int> ids_;
};

/// Truncated normal at +-2 std.
Mat trunc_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols, double std);
/// Glorot/Xavier uniform for a fan_in x fan_out weight.
Mat glorot_uniform(Rng& rng, Eigen::Index fan_in, Eigen::Index fan_out);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. State is keyed by position in each ParamSet.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void step(std::vector<ParamSet*> sets, double lr);

  long steps_taken() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

  // Serialization access: first / second moments, same order as the sets.
  std::vector<Mat>& first_moments() { return m_; }
  std::vector<Mat>& second_moments() { return v_; }
  const std::vector<Mat>& first_moments() const { return m_; }
  const std::vector<Mat>& second_moments() const { return v_; }
  void set_steps(long s) { step_ = s; }

 private:
  AdamConfig cfg_;
  long step_ = 0;
  std::vector<Mat> m_, v_;
};

}  // namespace dcmd
