#include <doctest.h>

#include <dcmd/uad.hpp>

#include "support.hpp"

using namespace dcmd;

namespace {

Mat random_stochastic(Rng& rng, Eigen::Index n) {
  Mat m = standard_normal(rng, n, n).array().exp();
  for (Eigen::Index r = 0; r < n; ++r) m.row(r) /= m.row(r).sum();
  return m;
}

AssociationPair single(const Mat& t, const Mat& g) {
  AssociationPair p;
  p.time = {{t}};
  p.global = {{g}};
  return p;
}

}  // namespace

TEST_CASE("time association: scalar Gaussian oracle for N=3, sigma=1") {
  auto t = time_association(Mat::Ones(3, 1));
  REQUIRE(t.size() == 1);
  const double w[3] = {1.0, std::exp(-0.5), std::exp(-2.0)};
  const double z = w[0] + w[1] + w[2];
  for (int j = 0; j < 3; ++j) CHECK(std::abs(t[0](0, j) - w[j] / z) < 1e-9);
  // Middle row is symmetric.
  CHECK(std::abs(t[0](1, 0) - t[0](1, 2)) < 1e-15);
}

TEST_CASE("time association: small sigma is one-hot, rows stochastic") {
  auto t = time_association(Mat::Constant(5, 2, 1e-3));
  CHECK((t[1] - Mat::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-9);
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Mat sigma = standard_normal(rng, 7, 4).array().abs() + 1e-3;
    for (const auto& m : time_association(sigma)) {
      CHECK((m.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
      CHECK(m.minCoeff() >= 0.0);
    }
  }
  CHECK_THROWS_AS(time_association(Mat::Zero(3, 1)), ArgumentError);
}

TEST_CASE("symmetric KL hand oracle on two-frame rows") {
  Mat t(2, 2), g(2, 2);
  t << 0.7, 0.3, 0.7, 0.3;
  g << 0.5, 0.5, 0.5, 0.5;
  const double oracle = 0.7 * std::log(0.7 / 0.5) + 0.3 * std::log(0.3 / 0.5) +
                        0.5 * std::log(0.5 / 0.7) + 0.5 * std::log(0.5 / 0.3);
  Vec s = uad_score(single(t, g));
  CHECK(std::abs(s(0) - oracle) < 1e-12);
  CHECK(std::abs(s(1) - oracle) < 1e-12);
  CHECK(std::abs(uad_norm(single(t, g)) - oracle) < 1e-12);
}

TEST_CASE("UAD of identical associations is exactly zero") {
  Rng rng(4);
  Mat a = random_stochastic(rng, 7);
  CHECK(uad_score(single(a, a)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("UAD decreases as time rows are blended toward global rows") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Mat t = random_stochastic(rng, 6), g = random_stochastic(rng, 6);
    double prev = uad_norm(single(t, g));
    for (double a : {0.25, 0.5, 0.75, 1.0}) {
      Mat blend = (1.0 - a) * t + a * g;
      const double cur = uad_norm(single(blend, g));
      CHECK(cur <= prev + 1e-15);
      prev = cur;
    }
  }
}

TEST_CASE("UAD averages over heads and layers") {
  Rng rng(6);
  Mat t1 = random_stochastic(rng, 4), g1 = random_stochastic(rng, 4);
  Mat t2 = random_stochastic(rng, 4), g2 = random_stochastic(rng, 4);
  AssociationPair p;
  p.time = {{t1, t2}, {t1, t1}};
  p.global = {{g1, g2}, {t1, t1}};
  Vec expect = (uad_score(single(t1, g1)) + uad_score(single(t2, g2))) / 4.0;
  CHECK((uad_score(p) - expect).cwiseAbs().maxCoeff() < 1e-14);

  // Tape version on the same rows agrees.
  ag::Tape tape(false);
  Mat ts(8, 4), gs(8, 4);
  ts << t1, t2;
  gs << g1, g2;
  ag::Var v = uad_norm({tape.constant(ts)}, {tape.constant(gs)});
  AssociationPair q;
  q.time = {{t1, t2}};
  q.global = {{g1, g2}};
  CHECK(std::abs(v.value()(0, 0) - uad_norm(q)) < 1e-14);
}

TEST_CASE("prediction loss piecewise values") {
  Mat eps = Mat::Zero(3, 4);
  CHECK(pred_loss(eps, eps) == 0.0);
  CHECK(pred_loss(eps, Mat::Constant(3, 4, 0.5)) == doctest::Approx(0.125));
  CHECK(pred_loss(eps, Mat::Constant(3, 4, 2.0)) == doctest::Approx(1.5));
}

TEST_CASE("minimax losses with lambda = 0 reduce to rec + pred") {
  Rng rng(7);
  auto p = single(random_stochastic(rng, 5), random_stochastic(rng, 5));
  auto l = minimax_losses(1.25, 0.5, p, 0.0);
  CHECK(l.loss_min == 1.75);
  CHECK(l.loss_max == 1.75);
  auto l2 = minimax_losses(1.25, 0.5, p, 0.1);
  CHECK(l2.loss_min > 1.75);
  CHECK(l2.loss_max < 1.75);
  CHECK_THROWS_AS(minimax_losses(1.0, 1.0, p, -1.0), ArgumentError);
}

TEST_CASE("stop-gradient phases route gradients to one side only") {
  Rng rng(8);
  Mat t = random_stochastic(rng, 4), g = random_stochastic(rng, 4);
  auto run = [&](int phase, bool want_t) {
    ag::Tape tape;
    ag::Var tv = tape.leaf(t), gv = tape.leaf(g);
    ag::Var zero = tape.constant(Mat::Zero(1, 1));
    auto l = minimax_losses(zero, zero, {tv}, {gv}, 0.5);
    tape.backward(phase == 0 ? l.loss_min : l.loss_max);
    const Mat* grad = tape.grad(want_t ? tv : gv);
    return grad ? grad->cwiseAbs().maxCoeff() : 0.0;
  };
  CHECK(run(0, true) > 0.0);
  CHECK(run(0, false) == 0.0);
  CHECK(run(1, true) == 0.0);
  CHECK(run(1, false) > 0.0);
}
