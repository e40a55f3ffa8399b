#include "dcmd/autograd.hpp"

#include <cmath>
#include <numbers>

namespace dcmd::ag {

const Mat& Var::value() const { return tape_->value(id_); }

Var Tape::push(Mat value, bool requires_grad, std::function<void(const Mat&)> backward) {
  const bool rg = requires_grad && grad_enabled_;
  nodes_.push_back(Node{std::move(value), Mat(), rg, rg ? std::move(backward) : nullptr});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Mat value) { return push(std::move(value), false, nullptr); }

Var Tape::leaf(Mat value) { return push(std::move(value), true, nullptr); }

Var Tape::detach(Var v) { return constant(v.value()); }

Mat& Tape::grad_buffer(int id) {
  auto& node = nodes_[static_cast<std::size_t>(id)];
  if (node.grad.size() == 0) node.grad = Mat::Zero(node.value.rows(), node.value.cols());
  return node.grad;
}

const Mat* Tape::grad(Var v) const {
  const auto& node = nodes_[static_cast<std::size_t>(v.id())];
  return node.grad.size() == 0 ? nullptr : &node.grad;
}

void Tape::backward(Var out) {
  if (out.value().size() != 1) throw ArgumentError("backward: output must be 1x1");
  if (!requires_grad(out.id())) return;
  grad_buffer(out.id()).setConstant(1.0);
  for (int i = out.id(); i >= 0; --i) {
    auto& node = nodes_[static_cast<std::size_t>(i)];
    if (node.backward && node.grad.size() != 0) node.backward(node.grad);
  }
}

namespace {

template <typename Fn>
Var record(Tape& t, Mat value, std::initializer_list<Var> inputs, Fn&& backward) {
  bool rg = false;
  for (const auto& v : inputs) rg = rg || t.requires_grad(v.id());
  return t.push(std::move(value), rg, std::forward<Fn>(backward));
}

void check_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ArgumentError(std::string(op) + ": shape mismatch");
}

// Accumulates into an input's gradient when that input is differentiable.
template <typename Expr>
void accumulate(Tape& t, int id, const Expr& g) {
  if (t.requires_grad(id)) t.grad_buffer(id) += g;
}

}  // namespace

Var add(Var a, Var b) {
  check_same_shape(a, b, "add");
  Tape& t = a.tape();
  const int ia = a.id(), ib = b.id();
  return record(t, a.value() + b.value(), {a, b}, [&t, ia, ib](const Mat& g) {
    accumulate(t, ia, g);
    accumulate(t, ib, g);
  });
}

Var sub(Var a, Var b) {
  check_same_shape(a, b, "sub");
  Tape& t = a.tape();
  const int ia = a.id(), ib = b.id();
  return record(t, a.value() - b.value(), {a, b}, [&t, ia, ib](const Mat& g) {
    accumulate(t, ia, g);
    if (t.requires_grad(ib)) t.grad_buffer(ib) -= g;
  });
}

Var mul(Var a, Var b) {
  check_same_shape(a, b, "mul");
  Tape& t = a.tape();
  const int ia = a.id(), ib = b.id();
  return record(t, a.value().cwiseProduct(b.value()), {a, b}, [&t, ia, ib](const Mat& g) {
    accumulate(t, ia, g.cwiseProduct(t.value(ib)));
    accumulate(t, ib, g.cwiseProduct(t.value(ia)));
  });
}

Var scale(Var a, double s) {
  Tape& t = a.tape();
  const int ia = a.id();
  return record(t, a.value() * s, {a}, [&t, ia, s](const Mat& g) { accumulate(t, ia, g * s); });
}

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw ArgumentError("matmul: inner dimensions differ");
  Tape& t = a.tape();
  const int ia = a.id(), ib = b.id();
  Mat value = a.value() * b.value();
  return record(t, std::move(value), {a, b}, [&t, ia, ib](const Mat& g) {
    if (t.requires_grad(ia)) t.grad_buffer(ia).noalias() += g * t.value(ib).transpose();
    if (t.requires_grad(ib)) t.grad_buffer(ib).noalias() += t.value(ia).transpose() * g;
  });
}

Var add_bias(Var x, Var bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) throw ArgumentError("add_bias: bad bias shape");
  Tape& t = x.tape();
  const int ix = x.id(), ib = bias.id();
  Mat value = x.value().rowwise() + bias.value().row(0);
  return record(t, std::move(value), {x, bias}, [&t, ix, ib](const Mat& g) {
    accumulate(t, ix, g);
    accumulate(t, ib, g.colwise().sum());
  });
}

Var repeat_rows(Var x, Eigen::Index n) {
  Tape& t = x.tape();
  const int ix = x.id();
  const Mat& xv = x.value();
  Mat value(xv.rows() * n, xv.cols());
  for (Eigen::Index b = 0; b < xv.rows(); ++b) value.middleRows(b * n, n).rowwise() = xv.row(b);
  return record(t, std::move(value), {x}, [&t, ix, n](const Mat& g) {
    if (!t.requires_grad(ix)) return;
    Mat& gx = t.grad_buffer(ix);
    for (Eigen::Index b = 0; b < gx.rows(); ++b) gx.row(b) += g.middleRows(b * n, n).colwise().sum();
  });
}

Var tile_rows(Var x, Eigen::Index copies) {
  Tape& t = x.tape();
  const int ix = x.id();
  const Mat& xv = x.value();
  const Eigen::Index n = xv.rows();
  Mat value(n * copies, xv.cols());
  for (Eigen::Index b = 0; b < copies; ++b) value.middleRows(b * n, n) = xv;
  return record(t, std::move(value), {x}, [&t, ix, n, copies](const Mat& g) {
    if (!t.requires_grad(ix)) return;
    Mat& gx = t.grad_buffer(ix);
    for (Eigen::Index b = 0; b < copies; ++b) gx += g.middleRows(b * n, n);
  });
}

Var concat_cols(Var a, Var b) {
  if (a.rows() != b.rows()) throw ArgumentError("concat_cols: row counts differ");
  Tape& t = a.tape();
  const int ia = a.id(), ib = b.id();
  const Eigen::Index ca = a.cols(), cb = b.cols();
  Mat value(a.rows(), ca + cb);
  value << a.value(), b.value();
  return record(t, std::move(value), {a, b}, [&t, ia, ib, ca, cb](const Mat& g) {
    accumulate(t, ia, g.leftCols(ca));
    accumulate(t, ib, g.rightCols(cb));
  });
}

Var slice_cols(Var x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || start + count > x.cols()) throw ArgumentError("slice_cols: out of range");
  Tape& t = x.tape();
  const int ix = x.id();
  return record(t, x.value().middleCols(start, count), {x}, [&t, ix, start, count](const Mat& g) {
    if (t.requires_grad(ix)) t.grad_buffer(ix).middleCols(start, count) += g;
  });
}

Var reshape(Var x, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != x.value().size()) throw ArgumentError("reshape: size mismatch");
  Tape& t = x.tape();
  const int ix = x.id();
  const Eigen::Index r0 = x.rows(), c0 = x.cols();
  Mat value = Eigen::Map<const Mat>(x.value().data(), rows, cols);
  return record(t, std::move(value), {x}, [&t, ix, r0, c0](const Mat& g) {
    accumulate(t, ix, Eigen::Map<const Mat>(g.data(), r0, c0));
  });
}

Var gelu(Var x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double c = 0.044715;
  Tape& t = x.tape();
  const int ix = x.id();
  Mat value = x.value().unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(k * (v + c * v * v * v)));
  });
  return record(t, std::move(value), {x}, [&t, ix](const Mat& g) {
    if (!t.requires_grad(ix)) return;
    Mat d = t.value(ix).unaryExpr([](double v) {
      const double th = std::tanh(k * (v + c * v * v * v));
      return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * k * (1.0 + 3.0 * c * v * v);
    });
    t.grad_buffer(ix) += g.cwiseProduct(d);
  });
}

Var softplus(Var x) {
  Tape& t = x.tape();
  const int ix = x.id();
  Mat value = x.value().unaryExpr([](double v) {
    return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  });
  return record(t, std::move(value), {x}, [&t, ix](const Mat& g) {
    if (!t.requires_grad(ix)) return;
    Mat d = t.value(ix).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    t.grad_buffer(ix) += g.cwiseProduct(d);
  });
}

Var add_scalar(Var x, double c) {
  Tape& t = x.tape();
  const int ix = x.id();
  return record(t, (x.value().array() + c).matrix(), {x},
                [&t, ix](const Mat& g) { accumulate(t, ix, g); });
}

Var square(Var x) {
  Tape& t = x.tape();
  const int ix = x.id();
  return record(t, x.value().cwiseAbs2(), {x}, [&t, ix](const Mat& g) {
    accumulate(t, ix, 2.0 * g.cwiseProduct(t.value(ix)));
  });
}

Var smooth_l1(Var x, double beta) {
  if (!(beta > 0.0)) throw ArgumentError("smooth_l1: beta must be positive");
  Tape& t = x.tape();
  const int ix = x.id();
  Mat value = x.value().unaryExpr([beta](double v) {
    const double a = std::abs(v);
    return a < beta ? 0.5 * v * v / beta : a - 0.5 * beta;
  });
  return record(t, std::move(value), {x}, [&t, ix, beta](const Mat& g) {
    if (!t.requires_grad(ix)) return;
    Mat d = t.value(ix).unaryExpr([beta](double v) {
      return std::abs(v) < beta ? v / beta : (v > 0.0 ? 1.0 : -1.0);
    });
    t.grad_buffer(ix) += g.cwiseProduct(d);
  });
}

namespace {

// Row-wise (x - mean) / sqrt(var + eps); also returns 1/sqrt(var + eps).
Mat normalize_rows(const Mat& x, double eps, Vec* inv_std_out) {
  const double d = static_cast<double>(x.cols());
  Mat out(x.rows(), x.cols());
  Vec inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mu = x.row(r).mean();
    const double var = (x.row(r).array() - mu).square().sum() / d;
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    out.row(r) = (x.row(r).array() - mu) * inv_std(r);
  }
  if (inv_std_out) *inv_std_out = std::move(inv_std);
  return out;
}

}  // namespace

Var layer_norm_rows(Var x, double eps) {
  Tape& t = x.tape();
  const int ix = x.id();
  return record(t, normalize_rows(x.value(), eps, nullptr), {x}, [&t, ix, eps](const Mat& g) {
    if (!t.requires_grad(ix)) return;
    Vec inv_std;
    const Mat xhat = normalize_rows(t.value(ix), eps, &inv_std);
    Mat& gx = t.grad_buffer(ix);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double mg = g.row(r).mean();
      const double mgx = g.row(r).dot(xhat.row(r)) / static_cast<double>(g.cols());
      gx.row(r).array() += inv_std(r) * (g.row(r).array() - mg - xhat.row(r).array() * mgx);
    }
  });
}

Var sum(Var x) {
  Tape& t = x.tape();
  const int ix = x.id();
  Mat value(1, 1);
  value(0, 0) = x.value().sum();
  return record(t, std::move(value), {x}, [&t, ix](const Mat& g) {
    if (t.requires_grad(ix)) t.grad_buffer(ix).array() += g(0, 0);
  });
}

Var mean(Var x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum(x), 1.0 / n);
}

Var attention_scores(Var q, Var k, Eigen::Index batch, Eigen::Index seq, Eigen::Index heads,
                     double scale_factor) {
  check_same_shape(q, k, "attention_scores");
  if (q.rows() != batch * seq || q.cols() % heads != 0)
    throw ArgumentError("attention_scores: bad shape");
  Tape& t = q.tape();
  const int iq = q.id(), ik = k.id();
  const Eigen::Index dh = q.cols() / heads;
  Mat value(batch * heads * seq, seq);
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (Eigen::Index m = 0; m < heads; ++m) {
      auto qb = q.value().block(b * seq, m * dh, seq, dh);
      auto kb = k.value().block(b * seq, m * dh, seq, dh);
      Mat s = (qb * kb.transpose()) / scale_factor;
      for (Eigen::Index i = 0; i < seq; ++i) {
        const double mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp().matrix();
        s.row(i) /= s.row(i).sum();
      }
      value.middleRows((b * heads + m) * seq, seq) = s;
    }
  }
  const int io = t.next_id();
  return record(t, std::move(value), {q, k},
                   [&t, iq, ik, io, batch, seq, heads, dh, scale_factor](const Mat& g) {
                     const Mat& gv = t.value(io);
                     for (Eigen::Index b = 0; b < batch; ++b) {
                       for (Eigen::Index m = 0; m < heads; ++m) {
                         const Eigen::Index r0 = (b * heads + m) * seq;
                         auto pb = gv.middleRows(r0, seq);
                         auto dp = g.middleRows(r0, seq);
                         Mat ds = pb.cwiseProduct(dp);
                         const Vec rowdot = ds.rowwise().sum();
                         ds -= (pb.array().colwise() * rowdot.array()).matrix();
                         ds /= scale_factor;
                         if (t.requires_grad(iq))
                           t.grad_buffer(iq).block(b * seq, m * dh, seq, dh).noalias() +=
                               ds * t.value(ik).block(b * seq, m * dh, seq, dh);
                         if (t.requires_grad(ik))
                           t.grad_buffer(ik).block(b * seq, m * dh, seq, dh).noalias() +=
                               ds.transpose() * t.value(iq).block(b * seq, m * dh, seq, dh);
                       }
                     }
                   });
}

Var attention_apply(Var g, Var v, Eigen::Index batch, Eigen::Index seq, Eigen::Index heads) {
  if (g.rows() != batch * heads * seq || g.cols() != seq || v.rows() != batch * seq ||
      v.cols() % heads != 0)
    throw ArgumentError("attention_apply: bad shape");
  Tape& t = g.tape();
  const int ig = g.id(), iv = v.id();
  const Eigen::Index dh = v.cols() / heads;
  Mat value(batch * seq, v.cols());
  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index m = 0; m < heads; ++m)
      value.block(b * seq, m * dh, seq, dh).noalias() =
          g.value().middleRows((b * heads + m) * seq, seq) *
          v.value().block(b * seq, m * dh, seq, dh);
  return record(t, std::move(value), {g, v}, [&t, ig, iv, batch, seq, heads, dh](const Mat& go) {
    for (Eigen::Index b = 0; b < batch; ++b) {
      for (Eigen::Index m = 0; m < heads; ++m) {
        auto gob = go.block(b * seq, m * dh, seq, dh);
        if (t.requires_grad(ig))
          t.grad_buffer(ig).middleRows((b * heads + m) * seq, seq).noalias() +=
              gob * t.value(iv).block(b * seq, m * dh, seq, dh).transpose();
        if (t.requires_grad(iv))
          t.grad_buffer(iv).block(b * seq, m * dh, seq, dh).noalias() +=
              t.value(ig).middleRows((b * heads + m) * seq, seq).transpose() * gob;
      }
    }
  });
}

Var time_association(Var sigma, Eigen::Index batch, Eigen::Index seq) {
  if (sigma.rows() != batch * seq) throw ArgumentError("time_association: bad shape");
  Tape& t = sigma.tape();
  const int is = sigma.id();
  const Eigen::Index heads = sigma.cols();
  // The 1/(sqrt(2 pi) sigma_i) prefactor is constant along a row, so the row
  // rescaling removes it; only the exponent matters.
  auto kernel_row = [seq](double s, Eigen::Index i) {
    RowVec row(seq);
    for (Eigen::Index j = 0; j < seq; ++j) {
      const double d = static_cast<double>(j - i);
      row(j) = -d * d / (2.0 * s * s);
    }
    row = (row.array() - row.maxCoeff()).exp().matrix();
    return RowVec(row / row.sum());
  };
  Mat value(batch * heads * seq, seq);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index m = 0; m < heads; ++m)
      for (Eigen::Index i = 0; i < seq; ++i)
        value.row((b * heads + m) * seq + i) = kernel_row(sigma.value()(b * seq + i, m), i);
  return record(t, std::move(value), {sigma}, [&t, is, batch, seq, heads, kernel_row](const Mat& g) {
    if (!t.requires_grad(is)) return;
    Mat& gs = t.grad_buffer(is);
    const Mat& sv = t.value(is);
    for (Eigen::Index b = 0; b < batch; ++b) {
      for (Eigen::Index m = 0; m < heads; ++m) {
        for (Eigen::Index i = 0; i < seq; ++i) {
          const double s = sv(b * seq + i, m);
          const RowVec p = kernel_row(s, i);
          RowVec da(seq);  // d(exponent_j)/d(sigma)
          for (Eigen::Index j = 0; j < seq; ++j) {
            const double d = static_cast<double>(j - i);
            da(j) = d * d / (s * s * s);
          }
          const double mean_da = p.dot(da);
          const auto gr = g.row((b * heads + m) * seq + i);
          gs(b * seq + i, m) += (gr.array() * p.array() * (da.array() - mean_da)).sum();
        }
      }
    }
  });
}

Var sym_kl_rows(Var p, Var q, double floor) {
  check_same_shape(p, q, "sym_kl_rows");
  Tape& t = p.tape();
  const int ip = p.id(), iq = q.id();
  auto logs = [floor](const Mat& m) { return m.cwiseMax(floor).array().log().matrix().eval(); };
  const Mat diff_log = logs(p.value()) - logs(q.value());
  Mat value = (p.value() - q.value()).cwiseProduct(diff_log).rowwise().sum();
  return record(t, std::move(value), {p, q}, [&t, ip, iq, floor, logs](const Mat& g) {
    const Mat& pv = t.value(ip);
    const Mat& qv = t.value(iq);
    const Mat dl = logs(pv) - logs(qv);
    const Mat diff = pv - qv;
    // d/dp [(p - q)(log p - log q)] = (log p - log q) + (p - q)/p, the second
    // term vanishing where the floor is active; likewise for q.
    const Mat inv_p = pv.unaryExpr([floor](double v) { return v >= floor ? 1.0 / v : 0.0; });
    const Mat inv_q = qv.unaryExpr([floor](double v) { return v >= floor ? 1.0 / v : 0.0; });
    const Mat w = g.col(0).replicate(1, pv.cols());
    if (t.requires_grad(ip))
      t.grad_buffer(ip) += w.cwiseProduct(dl + diff.cwiseProduct(inv_p));
    if (t.requires_grad(iq))
      t.grad_buffer(iq) += w.cwiseProduct(-dl - diff.cwiseProduct(inv_q));
  });
}

Var graph_mix(Var x, const Mat& mix) {
  const Eigen::Index j = mix.rows();
  if (mix.cols() != j || x.rows() % j != 0) throw ArgumentError("graph_mix: bad shape");
  Tape& t = x.tape();
  const int ix = x.id();
  Mat value(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); r += j)
    value.middleRows(r, j).noalias() = mix * x.value().middleRows(r, j);
  return record(t, std::move(value), {x}, [&t, ix, mixt = Mat(mix.transpose()), j](const Mat& g) {
    if (!t.requires_grad(ix)) return;
    Mat& gx = t.grad_buffer(ix);
    for (Eigen::Index r = 0; r < g.rows(); r += j) gx.middleRows(r, j).noalias() += mixt * g.middleRows(r, j);
  });
}

Var frame_shift(Var x, Eigen::Index frames, Eigen::Index joints, Eigen::Index offset) {
  const Eigen::Index block = frames * joints;
  if (x.rows() % block != 0) throw ArgumentError("frame_shift: bad shape");
  Tape& t = x.tape();
  const int ix = x.id();
  const Eigen::Index batch = x.rows() / block;
  Mat value = Mat::Zero(x.rows(), x.cols());
  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index f = 0; f < frames; ++f) {
      const Eigen::Index src = f - offset;
      if (src < 0 || src >= frames) continue;
      value.middleRows(b * block + f * joints, joints) =
          x.value().middleRows(b * block + src * joints, joints);
    }
  return record(t, std::move(value), {x}, [&t, ix, batch, frames, joints, offset, block](const Mat& g) {
    if (!t.requires_grad(ix)) return;
    Mat& gx = t.grad_buffer(ix);
    for (Eigen::Index b = 0; b < batch; ++b)
      for (Eigen::Index f = 0; f < frames; ++f) {
        const Eigen::Index src = f - offset;
        if (src < 0 || src >= frames) continue;
        gx.middleRows(b * block + src * joints, joints) += g.middleRows(b * block + f * joints, joints);
      }
  });
}

Var group_mean_rows(Var x, Eigen::Index group) {
  if (group < 1 || x.rows() % group != 0) throw ArgumentError("group_mean_rows: bad group");
  Tape& t = x.tape();
  const int ix = x.id();
  const Eigen::Index n = x.rows() / group;
  Mat value(n, x.cols());
  for (Eigen::Index r = 0; r < n; ++r)
    value.row(r) = x.value().middleRows(r * group, group).colwise().mean();
  return record(t, std::move(value), {x}, [&t, ix, group, n](const Mat& g) {
    if (!t.requires_grad(ix)) return;
    Mat& gx = t.grad_buffer(ix);
    const double inv = 1.0 / static_cast<double>(group);
    for (Eigen::Index r = 0; r < n; ++r) gx.middleRows(r * group, group).rowwise() += g.row(r) * inv;
  });
}

}  // namespace dcmd::ag
