#pragma once

#include <vector>

#include "mixls/loss.hpp"

namespace mixls {

/// One grid sample of a 1D cost-surface scan.
struct ScanRow {
  double x = 0.0;
  double half_cost = 0.0;       // 1/2 ||rho(x)||^2
  double pseudo_hessian = 0.0;  // (J^T J)(0,0) from the analytical Jacobian
};

/// Samples half-cost and pseudo-Hessian of the chosen loss over a regular
/// grid (1D mixtures only; dcs_phi applies when kind is the DCS baseline,
/// where the residual is whitened by the first component).
std::vector<ScanRow> scan_loss(const GaussianMixture& mixture, LossKind kind,
                               const MixtureLossConfig& config, double lo,
                               double hi, double resolution,
                               double dcs_phi = 1.0);

}  // namespace mixls
