#pragma once

#include <dcmd/training.hpp>

namespace dcmd::test {

/// L=1, h=2, D=8 on a 3-joint chain (2J = 6): small enough for finite differences.
inline ModelConfig toy_model_config(int layers = 1) {
  ModelConfig cfg;
  cfg.history = 3;
  cfg.future = 4;
  cfg.denoiser.layers = layers;
  cfg.denoiser.heads = 2;
  cfg.denoiser.width = 8;
  cfg.autoencoder.hidden = {4};
  cfg.autoencoder.embedding_dim = 4;
  cfg.autoencoder.joints = 3;
  cfg.autoencoder.coords = 2;
  Mat adj = Mat::Identity(3, 3);
  adj(0, 1) = adj(1, 0) = adj(1, 2) = adj(2, 1) = 1.0;
  cfg.autoencoder.adjacency = adj;
  cfg.finalize();
  return cfg;
}

/// Smooth random motion, (batch*(H+F)) x width.
inline Mat smooth_motion(Rng& rng, Eigen::Index batch, Eigen::Index seq, Eigen::Index width) {
  Mat out(batch * seq, width);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Mat a = standard_normal(rng, 2, width) * 0.3;
    for (Eigen::Index f = 0; f < seq; ++f)
      out.row(b * seq + f) = a.row(0) + a.row(1) * (static_cast<double>(f) / seq);
  }
  return out;
}

}  // namespace dcmd::test
