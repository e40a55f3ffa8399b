#include "dcmd/uad.hpp"

#include <cmath>

namespace dcmd {

std::vector<Mat> time_association(const Mat& sigma) {
  if ((sigma.array() <= 0.0).any()) throw ArgumentError("time_association: sigma must be > 0");
  ag::Tape tape(false);
  const Mat stacked = ag::time_association(tape.constant(sigma), 1, sigma.rows()).value();
  std::vector<Mat> out;
  for (Eigen::Index m = 0; m < sigma.cols(); ++m)
    out.push_back(stacked.middleRows(m * sigma.rows(), sigma.rows()));
  return out;
}

namespace {

double sym_kl(const RowVec& p, const RowVec& q) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < p.size(); ++j)
    s += (p(j) - q(j)) *
         (std::log(std::max(p(j), kLogFloor)) - std::log(std::max(q(j), kLogFloor)));
  return s;
}

}  // namespace

Vec uad_score(const AssociationPair& pair) {
  if (pair.time.size() != pair.global.size() || pair.time.empty())
    throw ArgumentError("uad_score: layer counts differ");
  const Eigen::Index seq = pair.time.front().front().rows();
  Vec out = Vec::Zero(seq);
  for (std::size_t l = 0; l < pair.time.size(); ++l) {
    const auto& tl = pair.time[l];
    const auto& gl = pair.global[l];
    if (tl.size() != gl.size() || tl.empty()) throw ArgumentError("uad_score: head counts differ");
    for (std::size_t m = 0; m < tl.size(); ++m)
      for (Eigen::Index i = 0; i < seq; ++i)
        out(i) += sym_kl(tl[m].row(i), gl[m].row(i)) / static_cast<double>(tl.size());
  }
  return out / static_cast<double>(pair.time.size());
}

double uad_norm(const AssociationPair& pair) { return uad_score(pair).mean(); }

double pred_loss(const Mat& eps, const Mat& eps_pred, double beta) {
  ag::Tape tape(false);
  return pred_loss(tape.constant(eps), tape.constant(eps_pred), beta).value()(0, 0);
}

ag::Var pred_loss(ag::Var eps, ag::Var eps_pred, double beta) {
  return ag::mean(ag::smooth_l1(eps - eps_pred, beta));
}

ag::Var uad_norm(const std::vector<ag::Var>& time, const std::vector<ag::Var>& global) {
  if (time.size() != global.size() || time.empty())
    throw ArgumentError("uad_norm: layer counts differ");
  ag::Var total;
  for (std::size_t l = 0; l < time.size(); ++l) {
    ag::Var layer = ag::mean(ag::sym_kl_rows(time[l], global[l], kLogFloor));
    total = total.valid() ? total + layer : layer;
  }
  return ag::scale(total, 1.0 / static_cast<double>(time.size()));
}

MinimaxLosses minimax_losses(double rec, double pred, const AssociationPair& pair,
                             double lambda) {
  if (lambda < 0.0) throw ArgumentError("lambda must be >= 0");
  const double u = uad_norm(pair);
  return {rec + pred + lambda * u, rec + pred - lambda * u};
}

namespace {

std::vector<ag::Var> detach_all(const std::vector<ag::Var>& vars) {
  std::vector<ag::Var> out;
  for (const auto& v : vars) out.push_back(v.tape().detach(v));
  return out;
}

}  // namespace

MinimaxVars minimax_losses(ag::Var rec, ag::Var pred, const std::vector<ag::Var>& time,
                           const std::vector<ag::Var>& global, double lambda) {
  if (lambda < 0.0) throw ArgumentError("lambda must be >= 0");
  ag::Var base = rec + pred;
  ag::Var pull = uad_norm(time, detach_all(global));
  ag::Var push = uad_norm(detach_all(time), global);
  return {base + ag::scale(pull, lambda), base - ag::scale(push, lambda)};
}

ag::Var minimax_objective(ag::Var rec, ag::Var pred, const std::vector<ag::Var>& time,
                          const std::vector<ag::Var>& global, double lambda) {
  if (lambda < 0.0) throw ArgumentError("lambda must be >= 0");
  ag::Var pull = uad_norm(time, detach_all(global));
  ag::Var push = uad_norm(detach_all(time), global);
  return rec + pred + ag::scale(pull, lambda) - ag::scale(push, lambda);
}

}  // namespace dcmd
