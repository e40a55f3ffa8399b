#pragma once

#include <vector>

#include "dcmd/params.hpp"

namespace dcmd {

struct AutoencoderConfig {
  std::vector<int> hidden = {512, 256};
  int embedding_dim = 256;
  int joints = 17;
  int coords = 2;
  int history = 3;
  int temporal_kernel = 3;  // odd
  /// J x J symmetric 0/1 adjacency with self loops.
  Mat adjacency;

  void validate() const;
};

/// Space-time separable graph autoencoder over the skeleton. Each block is a
/// per-frame graph convolution (symmetrically normalized adjacency) followed
/// by a per-joint temporal convolution; the encoder ends in global pooling
/// and a linear map to the embedding, the decoder mirrors it.
///
/// Histories are passed flattened, H x (J*C), matching flatten().
class Autoencoder {
 public:
  Autoencoder() = default;
  Autoencoder(const AutoencoderConfig& cfg, std::uint64_t seed);

  const AutoencoderConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  /// `hist` stacks `batch` histories: (batch*H) x (J*C). Returns batch x E.
  ag::Var encode_var(Binder& bind, ag::Var hist, Eigen::Index batch) const;
  /// batch x E -> (batch*H) x (J*C).
  ag::Var decode_var(Binder& bind, ag::Var u, Eigen::Index batch) const;

  RowVec encode(const Mat& hist) const;
  Mat decode(const RowVec& u) const;

  const Mat& normalized_adjacency() const { return adj_norm_; }

 private:
  struct StBlock {
    int ws, bs;               // spatial: Cin -> Cout
    std::vector<int> wt;      // temporal taps, Cout -> Cout
    int bt;
  };

  StBlock make_block(Rng& rng, const std::string& prefix, int cin, int cout);
  ag::Var apply_block(Binder& bind, ag::Var x, const StBlock& b) const;

  AutoencoderConfig cfg_;
  ParamSet params_;
  Mat adj_norm_;
  std::vector<StBlock> enc_;
  int emb_w_ = -1, emb_b_ = -1;
  int unpool_w_ = -1, unpool_b_ = -1;
  std::vector<StBlock> dec_;
  int out_w_ = -1, out_b_ = -1;
};

/// Symmetric normalization D^-1/2 A D^-1/2.
Mat normalize_adjacency(const Mat& adjacency);

/// Squared L2 error summed per window and averaged over `batch` windows.
double rec_loss(const Mat& reconstruction, const Mat& target, Eigen::Index batch = 1);
ag::Var rec_loss(ag::Var reconstruction, ag::Var target, Eigen::Index batch);

}  // namespace dcmd
