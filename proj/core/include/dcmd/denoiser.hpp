#pragma once

#include <vector>

#include "dcmd/params.hpp"

namespace dcmd {

struct DenoiserConfig {
  int layers = 6;
  int heads = 8;
  int width = 512;      // D
  int cond_dim = 256;   // width of the conditioning embedding u
  int seq_len = 7;      // H + F
  int in_dim = 34;      // 2J
  /// Attention logit divisor; <= 0 selects sqrt(2 D).
  double attn_scale = 0.0;

  double effective_attn_scale() const;
  /// Throws ConfigError on non-positive sizes or width % heads != 0.
  void validate() const;
};

/// Sinusoidal step embedding: [sin(t w_0), cos(t w_0), sin(t w_1), ...] with
/// w_i = 10000^(-2i/D).
RowVec time_embedding(int t, int dim);

struct DenoiserOutput {
  Mat eps_pred;                              // seq x in_dim
  std::vector<std::vector<Mat>> assoc;       // [layer][head] seq x seq, row-stochastic
  std::vector<Mat> sigma;                    // [layer] seq x heads, > 0
};

struct AttentionOutput {
  Mat y;                  // seq x D (after the output projection)
  std::vector<Mat> assoc; // per head, seq x seq
};

struct BlockOutput {
  Mat y;
  std::vector<Mat> assoc;
  Mat sigma;
};

/// Tape-level outputs for a batch of `batch` sequences stacked along rows.
struct DenoiserVars {
  ag::Var eps_pred;                // (batch*seq) x in_dim
  std::vector<ag::Var> assoc;      // per layer, (batch*heads*seq) x seq
  std::vector<ag::Var> sigma;      // per layer, (batch*seq) x heads
};

/// Noise-prediction transformer: input projection + learned frame embedding,
/// L FiLM-modulated attention blocks with U-Net style long skips, output
/// projection back to 2J.
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(const DenoiserConfig& cfg, std::uint64_t seed);

  const DenoiserConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  /// Indices of the parameters that feed only the per-block sigma heads.
  std::vector<int> sigma_head_params() const;
  /// Indices of the attention query/key projections of block `layer`.
  std::vector<int> query_key_params(int layer) const;

  DenoiserVars forward(Binder& bind, ag::Var xt, const std::vector<int>& steps, ag::Var u,
                       Eigen::Index batch) const;

  DenoiserOutput forward(const Mat& xt, int step, const RowVec& u) const;

  // Single-sequence access to the building blocks.
  AttentionOutput attention(const Mat& x, int layer) const;
  /// which = 0 for the post-attention FiLM, 1 for the post-FFN FiLM.
  Mat film(const Mat& x, const RowVec& cond, int layer, int which) const;
  BlockOutput block_forward(const Mat& x, const RowVec& te, const RowVec& u_proj,
                            int layer) const;
  RowVec project_condition(const RowVec& u) const;

  // Tape-level building blocks (batch sequences stacked along rows).
  ag::Var attention_var(Binder& bind, ag::Var x, Eigen::Index batch, int layer,
                        ag::Var* assoc) const;
  ag::Var film_var(Binder& bind, ag::Var x, ag::Var cond, int layer, int which) const;
  ag::Var block_var(Binder& bind, ag::Var x, ag::Var cond, Eigen::Index batch, int layer,
                    ag::Var* assoc, ag::Var* sigma) const;

 private:
  struct FilmIdx {
    int wg, bg, wb, bb;
  };
  struct BlockIdx {
    int wq, wk, wv, wo, bo;
    FilmIdx film[2];
    int w1, b1, w2, b2;
    int ws, bs;
    int skip_w = -1, skip_b = -1;  // only on blocks fed by a long skip
  };

  int skip_partner(int layer) const;  // -1 if none

  DenoiserConfig cfg_;
  ParamSet params_;
  int in_w_ = -1, in_b_ = -1, pos_ = -1, cond_w_ = -1, cond_b_ = -1, out_w_ = -1, out_b_ = -1;
  std::vector<BlockIdx> blocks_;
};

}  // namespace dcmd
