#include "mixls/scan.hpp"

#include <cmath>
#include <stdexcept>

namespace mixls {

std::vector<ScanRow> scan_loss(const GaussianMixture& mixture, LossKind kind,
                               const MixtureLossConfig& config, double lo,
                               double hi, double resolution, double dcs_phi) {
  if (mixture.dimension() != 1) {
    throw std::invalid_argument("cost scans are defined for 1D mixtures");
  }
  if (!(resolution > 0.0) || !(hi > lo)) {
    throw std::invalid_argument("invalid scan range");
  }
  const auto& inlier = mixture.component(0);
  const int steps =
      static_cast<int>(std::floor((hi - lo) / resolution + 1e-9)) + 1;

  std::vector<ScanRow> rows;
  rows.reserve(steps);
  Vector r(1);
  for (int i = 0; i < steps; ++i) {
    r[0] = lo + i * resolution;
    LossEvaluation le;
    switch (kind) {
      case LossKind::kMaxMixture:
        le = evaluate_mm(mixture, config, r);
        break;
      case LossKind::kSumMixture:
        le = evaluate_sm(mixture, config, r);
        break;
      case LossKind::kMaxSumMixture:
        le = evaluate_msm(mixture, config, r);
        break;
      case LossKind::kDcs:
        le = evaluate_dcs(dcs_phi,
                          inlier.sqrt_info() * (r - inlier.mean()));
        // Chain through the whitening so the scan is over x, not the
        // whitened residual.
        le.jacobian = le.jacobian * inlier.sqrt_info();
        break;
    }
    ScanRow row;
    row.x = r[0];
    row.half_cost = le.half_squared_norm();
    row.pseudo_hessian = (le.jacobian.transpose() * le.jacobian)(0, 0);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mixls
