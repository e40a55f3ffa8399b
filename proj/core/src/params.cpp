#include "dcmd/params.hpp"

#include <cmath>

namespace dcmd {

int ParamSet::add(std::string name, Mat value) {
  if (find(name) >= 0) throw ArgumentError("duplicate parameter " + name);
  Mat grad = Mat::Zero(value.rows(), value.cols());
  params_.push_back(Parameter{std::move(name), std::move(value), std::move(grad)});
  return size() - 1;
}

int ParamSet::find(const std::string& name) const {
  for (int i = 0; i < size(); ++i)
    if (params_[static_cast<std::size_t>(i)].name == name) return i;
  return -1;
}

Parameter& ParamSet::at(const std::string& name) {
  const int i = find(name);
  if (i < 0) throw ArgumentError("no parameter named " + name);
  return params_[static_cast<std::size_t>(i)];
}

const Parameter& ParamSet::at(const std::string& name) const {
  const int i = find(name);
  if (i < 0) throw ArgumentError("no parameter named " + name);
  return params_[static_cast<std::size_t>(i)];
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

Binder::Binder(ag::Tape& tape, const ParamSet& params)
    : tape_(tape), params_(params), ids_(static_cast<std::size_t>(params.size()), -1) {}

ag::Var Binder::operator()(int idx) {
  auto& id = ids_.at(static_cast<std::size_t>(idx));
  if (id < 0) id = tape_.leaf(params_[idx].value).id();
  return ag::Var(&tape_, id);
}

void Binder::accumulate_grads(ParamSet& params) const {
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (ids_[i] < 0) continue;
    if (const Mat* g = tape_.grad(ag::Var(&tape_, ids_[i])))
      params[static_cast<int>(i)].grad += *g;
  }
}

Mat trunc_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols, double std) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat out(rows, cols);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    double v;
    do v = normal(rng);
    while (std::abs(v) > 2.0);
    out.data()[i] = v * std;
  }
  return out;
}

Mat glorot_uniform(Rng& rng, Eigen::Index fan_in, Eigen::Index fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> unif(-limit, limit);
  Mat out(fan_in, fan_out);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = unif(rng);
  return out;
}

void Adam::step(std::vector<ParamSet*> sets, double lr) {
  std::size_t total = 0;
  for (auto* s : sets) total += static_cast<std::size_t>(s->size());
  if (m_.empty()) {
    for (auto* s : sets)
      for (const auto& p : *s) {
        m_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
        v_.push_back(Mat::Zero(p.value.rows(), p.value.cols()));
      }
  }
  if (m_.size() != total) throw StateError("optimizer state does not match parameters");
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  std::size_t k = 0;
  for (auto* s : sets) {
    for (auto& p : *s) {
      Mat& m = m_[k];
      Mat& v = v_[k];
      ++k;
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * p.grad;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * p.grad.cwiseAbs2();
      p.value.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg_.eps);
    }
  }
}

}  // namespace dcmd
