#pragma once

#include "tggat/model.hpp"
#include "tggat/numerics.hpp"

namespace tggat::loss {

using nx::Matrix;
using nx::Var;

// Center-format box (x, y, w, h), normally in observation-normalized units.
struct Box {
  double x = 0.5;
  double y = 0.5;
  double w = 1.0;
  double h = 1.0;

  Matrix row() const;
  double area() const { return w * h; }
};

struct GroundingTarget {
  int c = 0;  // 1 when the target is visible in the current observation
  Box box;    // meaningful only when c == 1
};

struct LossWeights {
  double kappa1 = 1.0;   // smooth-L1
  double kappa2 = 3.0;   // GIoU
  double kappa3 = 1.5;   // confidence BCE
  double lambda1 = 0.2;  // navigation
  double lambda2 = 0.1;  // human attention
  double lambda3 = 0.25; // grounding

  bool operator==(const LossWeights&) const = default;
};

inline constexpr double kBceClamp = 1e-7;
inline constexpr double kSmoothL1Beta = 1.0;

// Mean over the four coordinates of the beta = 1 smooth-L1.
Var smooth_l1(const Var& predicted, const Box& target);
// 1 - GIoU with axis-aligned boxes; throws DomainError for zero-area boxes.
Var giou_loss(const Var& predicted, const Box& target);
// Probability clamped to [1e-7, 1 - 1e-7].
Var bce(const Var& probability, double label);

struct GroundingLoss {
  Var l1, giou, bce, total;
};
// c = 1: k1 L1 + k2 GIoU + k3 BCE; c = 0: k3 BCE only.
GroundingLoss grounding_loss(const gat::GroundingPrediction& pred, const GroundingTarget& target,
                             const LossWeights& w);

// MSE of displacement / max_step against the oracle plus stop BCE.
Var nav_loss(const gat::ActionPrediction& pred, const geo::Action& oracle, double max_step);

// Mean per-cell BCE against a binary G x G mask.
Var hap_loss(const gat::AttentionMapPrediction& pred, const Matrix& mask);

Var total_loss(const Var& nav, const Var& hap, const Var& gr, const LossWeights& w);

}  // namespace tggat::loss
