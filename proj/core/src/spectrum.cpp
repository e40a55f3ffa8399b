#include "dcmd/spectrum.hpp"

#include <cmath>
#include <numbers>

namespace dcmd {

Mat dct_basis(Eigen::Index n) {
  if (n < 1) throw ArgumentError("dct: need at least one frame");
  thread_local Mat cached;
  if (cached.rows() == n) return cached;
  Mat c(n, n);
  const double nd = static_cast<double>(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double a = k == 0 ? std::sqrt(1.0 / nd) : std::sqrt(2.0 / nd);
    for (Eigen::Index i = 0; i < n; ++i)
      c(k, i) = a * std::cos(std::numbers::pi * (2.0 * static_cast<double>(i) + 1.0) *
                             static_cast<double>(k) / (2.0 * nd));
  }
  cached = c;
  return c;
}

SpectrumMatrix dct(const Mat& x) { return SpectrumMatrix(dct_basis(x.rows()) * x); }

Mat idct(const SpectrumMatrix& s) {
  return dct_basis(s.n_frames()).transpose() * s.coeffs();
}

Mat dct_blocks(const Mat& x, Eigen::Index block_rows) {
  if (block_rows < 1 || x.rows() % block_rows != 0)
    throw ArgumentError("dct_blocks: rows must be a multiple of the block length");
  const Mat c = dct_basis(block_rows);
  Mat out(x.rows(), x.cols());
  for (Eigen::Index b = 0; b < x.rows(); b += block_rows)
    out.middleRows(b, block_rows).noalias() = c * x.middleRows(b, block_rows);
  return out;
}

Mat idct_blocks(const Mat& s, Eigen::Index block_rows) {
  if (block_rows < 1 || s.rows() % block_rows != 0)
    throw ArgumentError("idct_blocks: rows must be a multiple of the block length");
  const Mat ct = dct_basis(block_rows).transpose();
  Mat out(s.rows(), s.cols());
  for (Eigen::Index b = 0; b < s.rows(); b += block_rows)
    out.middleRows(b, block_rows).noalias() = ct * s.middleRows(b, block_rows);
  return out;
}

}  // namespace dcmd
