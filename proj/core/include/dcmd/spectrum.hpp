#pragma once

#include "dcmd/common.hpp"

namespace dcmd {

/// Temporal DCT coefficients of a motion matrix: row k is frequency k of
/// every joint-coordinate column.
class SpectrumMatrix {
 public:
  SpectrumMatrix() = default;
  explicit SpectrumMatrix(Mat coeffs) : coeffs_(std::move(coeffs)) {}

  const Mat& coeffs() const { return coeffs_; }
  Mat& coeffs() { return coeffs_; }
  Eigen::Index n_frames() const { return coeffs_.rows(); }

 private:
  Mat coeffs_;
};

/// N x N orthonormal DCT-II basis; row k holds frequency k.
Mat dct_basis(Eigen::Index n);

/// Orthonormal DCT-II along the time (row) axis, every column independently.
SpectrumMatrix dct(const Mat& x);

/// Orthonormal DCT-III; exact inverse of dct().
Mat idct(const SpectrumMatrix& s);

/// Applies dct / idct to each consecutive block of `block_rows` rows.
Mat dct_blocks(const Mat& x, Eigen::Index block_rows);
Mat idct_blocks(const Mat& s, Eigen::Index block_rows);

}  // namespace dcmd
