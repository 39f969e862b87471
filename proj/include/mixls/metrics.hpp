#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mixls/gmm.hpp"

namespace mixls {

/// Outcome of one optimization run inside a Monte Carlo study.
struct TrialRecord {
  std::int64_t trial_id = 0;
  std::string loss;
  int dimension = 0;  // length of error_vector, also the NEES normalizer
  Vector initial_state;
  Vector final_state;
  Vector truth;
  /// Tangent-space estimation error (truth relative to the estimate).
  Vector error_vector;
  double error_trans = 0.0;
  double error_rot_deg = 0.0;
  int iterations = 0;
  double time_us = 0.0;
  std::string termination;
  /// Tangent-space covariance recovered from the pseudo-Hessian, absent
  /// when the normal matrix was rank-deficient.
  std::optional<Matrix> covariance;
  double nees = std::numeric_limits<double>::quiet_NaN();
};

/// sqrt(mean(selector(record)^2)) over the records.
double compute_rmse(const std::vector<TrialRecord>& records,
                    const std::function<double(const TrialRecord&)>& selector);

struct AneesResult {
  double anees = std::numeric_limits<double>::quiet_NaN();
  int used = 0;
  int excluded_singular = 0;
};

/// Mean of error^T covariance^{-1} error / dimension. Records without a
/// recovered covariance are excluded and counted separately.
AneesResult compute_anees(const std::vector<TrialRecord>& records);

/// NEES of a single record, NaN when the covariance is missing.
double trial_nees(const TrialRecord& record);

/// Per-loss summary row mirroring the layout of the study tables.
struct LossAggregate {
  std::string loss;
  int trials = 0;
  double rmse_trans = 0.0;
  double rmse_rot_deg = 0.0;
  double rmse_successful = 0.0;
  double success_rate = 0.0;
  double mean_iterations = 0.0;
  double mean_time_us = 0.0;
  double anees = std::numeric_limits<double>::quiet_NaN();
  int anees_excluded = 0;
  int max_iteration_hits = 0;
};

/// Folds records of one loss into a summary row. success_threshold < 0
/// disables the success-rate column (point set registration has none).
LossAggregate aggregate_records(const std::vector<TrialRecord>& records,
                                const std::string& loss,
                                double success_threshold);

}  // namespace mixls
