#include "dcmd/reconstruction.hpp"

#include <cmath>

namespace dcmd {

using ag::Var;

void AutoencoderConfig::validate() const {
  if (hidden.empty()) throw ConfigError("autoencoder needs at least one hidden size");
  for (int h : hidden)
    if (h < 1) throw ConfigError("autoencoder hidden sizes must be positive");
  if (embedding_dim < 1 || joints < 1 || coords < 1 || history < 1)
    throw ConfigError("autoencoder sizes must be positive");
  if (temporal_kernel < 1 || temporal_kernel % 2 == 0)
    throw ConfigError("temporal kernel must be odd and positive");
  if (adjacency.rows() != joints || adjacency.cols() != joints)
    throw ConfigError("adjacency must be J x J");
  if (!adjacency.isApprox(adjacency.transpose(), 0.0) ||
      (adjacency.diagonal().array() != 1.0).any())
    throw ConfigError("adjacency must be symmetric with self loops");
}

Mat normalize_adjacency(const Mat& adjacency) {
  const Vec deg = adjacency.rowwise().sum();
  const Vec inv_sqrt = deg.array().rsqrt();
  return inv_sqrt.asDiagonal() * adjacency * inv_sqrt.asDiagonal();
}

Autoencoder::StBlock Autoencoder::make_block(Rng& rng, const std::string& prefix, int cin,
                                             int cout) {
  StBlock b;
  b.ws = params_.add(prefix + "spatial.w", glorot_uniform(rng, cin, cout));
  b.bs = params_.add(prefix + "spatial.b", Mat::Zero(1, cout));
  for (int k = 0; k < cfg_.temporal_kernel; ++k)
    b.wt.push_back(params_.add(prefix + "temporal.w" + std::to_string(k),
                               glorot_uniform(rng, cout, cout) /
                                   std::sqrt(static_cast<double>(cfg_.temporal_kernel))));
  b.bt = params_.add(prefix + "temporal.b", Mat::Zero(1, cout));
  return b;
}

Autoencoder::Autoencoder(const AutoencoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  adj_norm_ = normalize_adjacency(cfg_.adjacency);
  Rng rng = derive_rng(seed, "autoencoder.init");
  const auto& hs = cfg_.hidden;
  int cin = cfg_.coords;
  for (std::size_t i = 0; i < hs.size(); ++i) {
    enc_.push_back(make_block(rng, "enc" + std::to_string(i) + ".", cin, hs[i]));
    cin = hs[i];
  }
  emb_w_ = params_.add("embed.w", glorot_uniform(rng, hs.back(), cfg_.embedding_dim));
  emb_b_ = params_.add("embed.b", Mat::Zero(1, cfg_.embedding_dim));

  const int nodes = cfg_.history * cfg_.joints;
  unpool_w_ = params_.add("unpool.w", glorot_uniform(rng, cfg_.embedding_dim, nodes * hs.back()) *
                                          std::sqrt(static_cast<double>(nodes)));
  unpool_b_ = params_.add("unpool.b", Mat::Zero(1, nodes * hs.back()));
  for (std::size_t i = hs.size() - 1; i > 0; --i)
    dec_.push_back(make_block(rng, "dec" + std::to_string(hs.size() - 1 - i) + ".", hs[i], hs[i - 1]));
  out_w_ = params_.add("out.w", glorot_uniform(rng, hs.front(), cfg_.coords));
  out_b_ = params_.add("out.b", Mat::Zero(1, cfg_.coords));
}

Var Autoencoder::apply_block(Binder& bind, Var x, const StBlock& b) const {
  Var s = ag::add_bias(ag::matmul(ag::graph_mix(x, adj_norm_), bind(b.ws)), bind(b.bs));
  const int half = cfg_.temporal_kernel / 2;
  Var acc;
  for (int k = 0; k < cfg_.temporal_kernel; ++k) {
    // Tap k reads frame f + (k - half).
    Var shifted = ag::frame_shift(s, cfg_.history, cfg_.joints, half - k);
    Var term = ag::matmul(shifted, bind(b.wt[static_cast<std::size_t>(k)]));
    acc = acc.valid() ? acc + term : term;
  }
  return ag::gelu(ag::add_bias(acc, bind(b.bt)));
}

Var Autoencoder::encode_var(Binder& bind, Var hist, Eigen::Index batch) const {
  const Eigen::Index rows = batch * cfg_.history;
  if (hist.rows() != rows || hist.cols() != cfg_.joints * cfg_.coords)
    throw ArgumentError("encode: history must be (batch*H) x (J*C)");
  Var x = ag::reshape(hist, rows * cfg_.joints, cfg_.coords);
  for (const auto& b : enc_) x = apply_block(bind, x, b);
  Var pooled = ag::group_mean_rows(x, static_cast<Eigen::Index>(cfg_.history) * cfg_.joints);
  return ag::add_bias(ag::matmul(pooled, bind(emb_w_)), bind(emb_b_));
}

Var Autoencoder::decode_var(Binder& bind, Var u, Eigen::Index batch) const {
  if (u.rows() != batch || u.cols() != cfg_.embedding_dim)
    throw ArgumentError("decode: embedding must be batch x E");
  const Eigen::Index nodes = static_cast<Eigen::Index>(cfg_.history) * cfg_.joints;
  Var x = ag::add_bias(ag::matmul(u, bind(unpool_w_)), bind(unpool_b_));
  x = ag::gelu(ag::reshape(x, batch * nodes, cfg_.hidden.back()));
  for (const auto& b : dec_) x = apply_block(bind, x, b);
  x = ag::add_bias(ag::matmul(ag::graph_mix(x, adj_norm_), bind(out_w_)), bind(out_b_));
  return ag::reshape(x, batch * cfg_.history, static_cast<Eigen::Index>(cfg_.joints) * cfg_.coords);
}

RowVec Autoencoder::encode(const Mat& hist) const {
  ag::Tape tape(false);
  Binder bind(tape, params_);
  return encode_var(bind, tape.constant(hist), 1).value();
}

Mat Autoencoder::decode(const RowVec& u) const {
  ag::Tape tape(false);
  Binder bind(tape, params_);
  return decode_var(bind, tape.constant(u), 1).value();
}

double rec_loss(const Mat& reconstruction, const Mat& target, Eigen::Index batch) {
  if (reconstruction.rows() != target.rows() || reconstruction.cols() != target.cols())
    throw ArgumentError("rec_loss: shape mismatch");
  return (reconstruction - target).squaredNorm() / static_cast<double>(batch);
}

Var rec_loss(Var reconstruction, Var target, Eigen::Index batch) {
  return ag::scale(ag::sum(ag::square(reconstruction - target)), 1.0 / static_cast<double>(batch));
}

}  // namespace dcmd
