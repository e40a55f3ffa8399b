#include <doctest.h>

#include <dcmd/spectrum.hpp>

#include "support.hpp"

using namespace dcmd;

TEST_CASE("constant column has only a DC coefficient") {
  const int n = 7;
  Mat x = Mat::Constant(n, 3, 2.5);
  Mat s = dct(x).coeffs();
  for (int c = 0; c < 3; ++c) CHECK(s(0, c) == doctest::Approx(2.5 * std::sqrt(n)));
  CHECK(s.bottomRows(n - 1).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(dct(Mat::Zero(n, 4)).coeffs() == Mat::Zero(n, 4));
}

TEST_CASE("DC-only spectrum inverts to a constant signal") {
  const int n = 7;
  Mat s = Mat::Zero(n, 2);
  s.row(0).setConstant(std::sqrt(n));
  Mat x = idct(SpectrumMatrix(s));
  CHECK((x.array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("basis matches the orthonormal DCT-II formula") {
  const int n = 5;
  Mat b = dct_basis(n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i) {
      const double a = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
      CHECK(b(k, i) == doctest::Approx(a * std::cos(M_PI * (i + 0.5) * k / n)).epsilon(1e-14));
    }
  CHECK((b * b.transpose() - Mat::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("round trips in both directions") {
  Rng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    Mat x = test::random_mat(rng, 7, 34);
    CHECK((idct(dct(x)) - x).cwiseAbs().maxCoeff() < 1e-10);
    Mat s = test::random_mat(rng, 7, 34);
    CHECK((dct(idct(SpectrumMatrix(s))).coeffs() - s).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("block transforms act on each block independently") {
  Rng rng(3);
  Mat x = test::random_mat(rng, 21, 6);
  Mat s = dct_blocks(x, 7);
  for (int b = 0; b < 3; ++b)
    CHECK((s.middleRows(b * 7, 7) - dct(x.middleRows(b * 7, 7)).coeffs()).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((idct_blocks(s, 7) - x).cwiseAbs().maxCoeff() < 1e-12);
}
