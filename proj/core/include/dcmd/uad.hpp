#pragma once

#include <vector>

#include "dcmd/autograd.hpp"

namespace dcmd {

inline constexpr double kLogFloor = 1e-12;

/// Row-normalized Gaussian kernel over frame distance, one matrix per head.
/// `sigma` is seq x heads, strictly positive.
std::vector<Mat> time_association(const Mat& sigma);

/// [layer][head] seq x seq row-stochastic matrices.
struct AssociationPair {
  std::vector<std::vector<Mat>> time;
  std::vector<std::vector<Mat>> global;
};

/// Per-frame discrepancy: for each frame the symmetric KL between its time
/// and global association rows, averaged over heads and layers.
Vec uad_score(const AssociationPair& pair);

/// Mean of uad_score over frames (the L1 norm used in the loss, frame-averaged).
double uad_norm(const AssociationPair& pair);

/// Smooth-L1 (threshold `beta`) between true and predicted noise, averaged
/// over all elements.
double pred_loss(const Mat& eps, const Mat& eps_pred, double beta = 1.0);
ag::Var pred_loss(ag::Var eps, ag::Var eps_pred, double beta = 1.0);

/// Frame-, head-, layer- and batch-averaged symmetric KL between stacked
/// association rows (layout of ag::attention_scores).
ag::Var uad_norm(const std::vector<ag::Var>& time, const std::vector<ag::Var>& global);

struct MinimaxLosses {
  double loss_min = 0.0;
  double loss_max = 0.0;
};

/// Values of the two phase objectives.
MinimaxLosses minimax_losses(double rec, double pred, const AssociationPair& pair,
                             double lambda);

struct MinimaxVars {
  ag::Var loss_min;  // rec + pred + lambda |UAD(T, stopgrad G)|
  ag::Var loss_max;  // rec + pred - lambda |UAD(stopgrad T, G)|
};

MinimaxVars minimax_losses(ag::Var rec, ag::Var pred, const std::vector<ag::Var>& time,
                           const std::vector<ag::Var>& global, double lambda);

/// Single objective whose gradient is the sum of both phases' association
/// gradients plus the shared rec + pred gradient:
/// rec + pred + lambda |UAD(T, sg G)| - lambda |UAD(sg T, G)|.
ag::Var minimax_objective(ag::Var rec, ag::Var pred, const std::vector<ag::Var>& time,
                          const std::vector<ag::Var>& global, double lambda);

}  // namespace dcmd
