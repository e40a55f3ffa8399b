#pragma once

#include <functional>
#include <vector>

#include "dcmd/common.hpp"

// Minimal reverse-mode automatic differentiation over dense matrices.
// A Tape records every operation of one forward pass; backward() walks it in
// reverse. Operations whose inputs need no gradient record no closure.

namespace dcmd::ag {

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Mat& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Mat value);
  /// Differentiable leaf (a parameter or an input under test).
  Var leaf(Mat value);
  /// Same value, no gradient path (stop-gradient).
  Var detach(Var v);

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates.
  void backward(Var out);

  /// Gradient reaching a node, or nullptr if none did.
  const Mat* grad(Var v) const;

  // Op-building interface.
  const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  Mat& grad_buffer(int id);
  int next_id() const { return static_cast<int>(nodes_.size()); }
  /// `backward` receives the gradient of the pushed node.
  Var push(Mat value, bool requires_grad, std::function<void(const Mat&)> backward);

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::function<void(const Mat&)> backward;
  };
  std::vector<Node> nodes_;
  bool grad_enabled_;
};

// Element-wise / structural ops.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var matmul(Var a, Var b);
/// x (n x d) + bias (1 x d) broadcast over rows.
Var add_bias(Var x, Var bias);
/// (B x d) -> (B*n x d); row b*n+i = x[b].
Var repeat_rows(Var x, Eigen::Index n);
/// (n x d) -> (B*n x d); row b*n+i = x[i].
Var tile_rows(Var x, Eigen::Index copies);
Var concat_cols(Var a, Var b);
Var slice_cols(Var x, Eigen::Index start, Eigen::Index count);
/// Row-major reshape (memory order preserved).
Var reshape(Var x, Eigen::Index rows, Eigen::Index cols);

Var gelu(Var x);
Var softplus(Var x);
Var add_scalar(Var x, double c);
Var square(Var x);
/// Huber-style smooth L1 with threshold beta, element-wise.
Var smooth_l1(Var x, double beta = 1.0);
/// Per-row normalization to zero mean and unit variance (no affine).
Var layer_norm_rows(Var x, double eps = 1e-5);

Var sum(Var x);
Var mean(Var x);

/// Per-head softmax(Q_m K_m^T / scale) for each of `batch` sequences of
/// `seq` rows. Output is (batch*heads*seq) x seq, row (b*heads + m)*seq + i.
Var attention_scores(Var q, Var k, Eigen::Index batch, Eigen::Index seq, Eigen::Index heads,
                     double scale);
/// Per-head G_m V_m, heads concatenated along columns -> (batch*seq) x D.
Var attention_apply(Var g, Var v, Eigen::Index batch, Eigen::Index seq, Eigen::Index heads);
/// Row-normalized Gaussian kernel over frame distance; sigma is
/// (batch*seq) x heads. Output layout matches attention_scores.
Var time_association(Var sigma, Eigen::Index batch, Eigen::Index seq);
/// Per row: KL(p||q) + KL(q||p), logs floored at `floor`. Output rows x 1.
Var sym_kl_rows(Var p, Var q, double floor = 1e-12);

/// Applies `mix` (J x J) to every consecutive block of J rows.
Var graph_mix(Var x, const Mat& mix);
/// Rows ordered (b, frame, joint); shifts every sample by `offset` frames
/// (out frame f = in frame f - offset), zero filled.
Var frame_shift(Var x, Eigen::Index frames, Eigen::Index joints, Eigen::Index offset);
/// Mean of each consecutive group of `group` rows.
Var group_mean_rows(Var x, Eigen::Index group);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

}  // namespace dcmd::ag
