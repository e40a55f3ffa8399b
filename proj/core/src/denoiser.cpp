#include "dcmd/denoiser.hpp"

#include <cmath>

namespace dcmd {

using ag::Var;

double DenoiserConfig::effective_attn_scale() const {
  return attn_scale > 0.0 ? attn_scale : std::sqrt(2.0 * width);
}

void DenoiserConfig::validate() const {
  if (layers < 1 || heads < 1 || width < 1 || cond_dim < 1 || seq_len < 1 || in_dim < 1)
    throw ConfigError("denoiser sizes must be positive");
  if (width % heads != 0) throw ConfigError("denoiser width must be divisible by heads");
  if (width % 2 != 0) throw ConfigError("denoiser width must be even (sinusoidal embedding)");
}

RowVec time_embedding(int t, int dim) {
  if (t < 0) throw ArgumentError("time_embedding: t must be >= 0");
  RowVec out(dim);
  for (int i = 0; 2 * i < dim; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / static_cast<double>(dim));
    out(2 * i) = std::sin(t * freq);
    if (2 * i + 1 < dim) out(2 * i + 1) = std::cos(t * freq);
  }
  return out;
}

Denoiser::Denoiser(const DenoiserConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng = derive_rng(seed, "denoiser.init");
  const Eigen::Index d = cfg_.width;
  constexpr double kStd = 0.02;
  auto w = [&](Eigen::Index r, Eigen::Index c) { return trunc_normal(rng, r, c, kStd); };
  auto zeros = [](Eigen::Index c) { return Mat(Mat::Zero(1, c)); };

  in_w_ = params_.add("in.w", w(cfg_.in_dim, d));
  in_b_ = params_.add("in.b", zeros(d));
  pos_ = params_.add("pos", w(cfg_.seq_len, d));
  cond_w_ = params_.add("cond.w", w(cfg_.cond_dim, d));
  cond_b_ = params_.add("cond.b", zeros(d));

  for (int l = 0; l < cfg_.layers; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    BlockIdx b{};
    if (skip_partner(l) >= 0) {
      Mat sw = w(2 * d, d);
      sw.topRows(d) += Mat::Identity(d, d);
      b.skip_w = params_.add(p + "skip.w", std::move(sw));
      b.skip_b = params_.add(p + "skip.b", zeros(d));
    }
    b.wq = params_.add(p + "attn.wq", w(d, d));
    b.wk = params_.add(p + "attn.wk", w(d, d));
    b.wv = params_.add(p + "attn.wv", w(d, d));
    b.wo = params_.add(p + "attn.wo", w(d, d));
    b.bo = params_.add(p + "attn.bo", zeros(d));
    for (int f = 0; f < 2; ++f) {
      const std::string fp = p + "film" + std::to_string(f) + ".";
      b.film[f].wg = params_.add(fp + "wg", w(d, d));
      b.film[f].bg = params_.add(fp + "bg", Mat::Ones(1, d));
      b.film[f].wb = params_.add(fp + "wb", w(d, d));
      b.film[f].bb = params_.add(fp + "bb", zeros(d));
    }
    b.w1 = params_.add(p + "ffn.w1", w(d, 4 * d));
    b.b1 = params_.add(p + "ffn.b1", zeros(4 * d));
    b.w2 = params_.add(p + "ffn.w2", w(4 * d, d));
    b.b2 = params_.add(p + "ffn.b2", zeros(d));
    b.ws = params_.add(p + "sigma.w", w(d, cfg_.heads));
    b.bs = params_.add(p + "sigma.b", zeros(cfg_.heads));
    blocks_.push_back(b);
  }
  out_w_ = params_.add("out.w", w(d, cfg_.in_dim));
  out_b_ = params_.add("out.b", zeros(cfg_.in_dim));
}

int Denoiser::skip_partner(int layer) const {
  // Block l (0-based) in the upper half receives the output of block L-1-l.
  const int partner = cfg_.layers - 1 - layer;
  return partner < cfg_.layers / 2 && partner <= layer && layer >= cfg_.layers / 2 ? partner : -1;
}

std::vector<int> Denoiser::sigma_head_params() const {
  std::vector<int> out;
  for (const auto& b : blocks_) {
    out.push_back(b.ws);
    out.push_back(b.bs);
  }
  return out;
}

std::vector<int> Denoiser::query_key_params(int layer) const {
  const auto& b = blocks_.at(static_cast<std::size_t>(layer));
  return {b.wq, b.wk};
}

Var Denoiser::attention_var(Binder& bind, Var x, Eigen::Index batch, int layer,
                            Var* assoc) const {
  const auto& b = blocks_.at(static_cast<std::size_t>(layer));
  const Eigen::Index seq = x.rows() / batch;
  Var q = ag::matmul(x, bind(b.wq));
  Var k = ag::matmul(x, bind(b.wk));
  Var v = ag::matmul(x, bind(b.wv));
  Var g = ag::attention_scores(q, k, batch, seq, cfg_.heads, cfg_.effective_attn_scale());
  if (assoc) *assoc = g;
  Var heads = ag::attention_apply(g, v, batch, seq, cfg_.heads);
  return ag::add_bias(ag::matmul(heads, bind(b.wo)), bind(b.bo));
}

Var Denoiser::film_var(Binder& bind, Var x, Var cond, int layer, int which) const {
  const auto& f = blocks_.at(static_cast<std::size_t>(layer)).film[which];
  const Eigen::Index seq = x.rows() / cond.rows();
  Var gamma = ag::add_bias(ag::matmul(cond, bind(f.wg)), bind(f.bg));
  Var beta = ag::add_bias(ag::matmul(cond, bind(f.wb)), bind(f.bb));
  return ag::mul(ag::repeat_rows(gamma, seq), ag::layer_norm_rows(x)) + ag::repeat_rows(beta, seq);
}

Var Denoiser::block_var(Binder& bind, Var x, Var cond, Eigen::Index batch, int layer,
                        Var* assoc, Var* sigma) const {
  const auto& b = blocks_.at(static_cast<std::size_t>(layer));
  const Eigen::Index seq = x.rows() / batch;
  Var cond_rows = ag::repeat_rows(cond, seq);
  Var attn = attention_var(bind, x, batch, layer, assoc);
  Var z = film_var(bind, attn + cond_rows, cond, layer, 0) + x;
  Var hidden = ag::gelu(ag::add_bias(ag::matmul(z, bind(b.w1)), bind(b.b1)));
  Var ffn = ag::add_bias(ag::matmul(hidden, bind(b.w2)), bind(b.b2));
  Var y = film_var(bind, ffn + cond_rows, cond, layer, 1) + z;
  if (sigma) {
    // Kernel widths come from the block input, so the time association never
    // depends on this block's own attention.
    *sigma = ag::add_scalar(ag::softplus(ag::add_bias(ag::matmul(x, bind(b.ws)), bind(b.bs))), 1e-4);
  }
  return y;
}

DenoiserVars Denoiser::forward(Binder& bind, Var xt, const std::vector<int>& steps, Var u,
                               Eigen::Index batch) const {
  const Eigen::Index seq = cfg_.seq_len;
  if (xt.rows() != batch * seq || xt.cols() != cfg_.in_dim)
    throw ArgumentError("denoiser: x_t must be (batch*" + std::to_string(seq) + ") x " +
                        std::to_string(cfg_.in_dim));
  if (u.rows() != batch || u.cols() != cfg_.cond_dim)
    throw ArgumentError("denoiser: u must be batch x " + std::to_string(cfg_.cond_dim));
  if (static_cast<Eigen::Index>(steps.size()) != batch)
    throw ArgumentError("denoiser: one diffusion step per sequence required");

  ag::Tape& tape = bind.tape();
  Mat te(batch, cfg_.width);
  for (Eigen::Index b = 0; b < batch; ++b) te.row(b) = time_embedding(steps[static_cast<std::size_t>(b)], cfg_.width);
  Var u_proj = ag::add_bias(ag::matmul(u, bind(cond_w_)), bind(cond_b_));
  Var cond = tape.constant(std::move(te)) + u_proj;

  Var h = ag::add_bias(ag::matmul(xt, bind(in_w_)), bind(in_b_)) + ag::tile_rows(bind(pos_), batch);
  DenoiserVars out;
  std::vector<Var> block_out;
  for (int l = 0; l < cfg_.layers; ++l) {
    const auto& b = blocks_[static_cast<std::size_t>(l)];
    if (const int partner = skip_partner(l); partner >= 0)
      h = ag::add_bias(ag::matmul(ag::concat_cols(h, block_out[static_cast<std::size_t>(partner)]),
                                  bind(b.skip_w)),
                       bind(b.skip_b));
    Var assoc, sigma;
    h = block_var(bind, h, cond, batch, l, &assoc, &sigma);
    block_out.push_back(h);
    out.assoc.push_back(assoc);
    out.sigma.push_back(sigma);
  }
  out.eps_pred = ag::add_bias(ag::matmul(h, bind(out_w_)), bind(out_b_));
  return out;
}

namespace {

std::vector<Mat> split_heads(const Mat& assoc, Eigen::Index heads, Eigen::Index seq) {
  std::vector<Mat> out;
  for (Eigen::Index m = 0; m < heads; ++m) out.push_back(assoc.middleRows(m * seq, seq));
  return out;
}

}  // namespace

DenoiserOutput Denoiser::forward(const Mat& xt, int step, const RowVec& u) const {
  ag::Tape tape(false);
  Binder bind(tape, params_);
  auto vars = forward(bind, tape.constant(xt), {step}, tape.constant(u), 1);
  DenoiserOutput out;
  out.eps_pred = vars.eps_pred.value();
  for (int l = 0; l < cfg_.layers; ++l) {
    out.assoc.push_back(split_heads(vars.assoc[static_cast<std::size_t>(l)].value(), cfg_.heads, cfg_.seq_len));
    out.sigma.push_back(vars.sigma[static_cast<std::size_t>(l)].value());
  }
  return out;
}

AttentionOutput Denoiser::attention(const Mat& x, int layer) const {
  ag::Tape tape(false);
  Binder bind(tape, params_);
  Var assoc;
  Var y = attention_var(bind, tape.constant(x), 1, layer, &assoc);
  return {y.value(), split_heads(assoc.value(), cfg_.heads, x.rows())};
}

Mat Denoiser::film(const Mat& x, const RowVec& cond, int layer, int which) const {
  ag::Tape tape(false);
  Binder bind(tape, params_);
  return film_var(bind, tape.constant(x), tape.constant(cond), layer, which).value();
}

BlockOutput Denoiser::block_forward(const Mat& x, const RowVec& te, const RowVec& u_proj,
                                    int layer) const {
  ag::Tape tape(false);
  Binder bind(tape, params_);
  Var assoc, sigma;
  Var y = block_var(bind, tape.constant(x), tape.constant(Mat(te + u_proj)), 1, layer, &assoc,
                    &sigma);
  return {y.value(), split_heads(assoc.value(), cfg_.heads, x.rows()), sigma.value()};
}

RowVec Denoiser::project_condition(const RowVec& u) const {
  return u * params_[cond_w_].value + params_[cond_b_].value;
}

}  // namespace dcmd
