#include "mixls/metrics.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

namespace mixls {

double compute_rmse(const std::vector<TrialRecord>& records,
                    const std::function<double(const TrialRecord&)>& selector) {
  if (records.empty()) {
    throw std::invalid_argument("rmse of an empty record set");
  }
  double sum = 0.0;
  for (const auto& r : records) {
    const double v = selector(r);
    sum += v * v;
  }
  return std::sqrt(sum / static_cast<double>(records.size()));
}

double trial_nees(const TrialRecord& record) {
  if (!record.covariance) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  const Matrix& cov = *record.covariance;
  if (cov.rows() != record.error_vector.size() || record.dimension <= 0) {
    throw std::invalid_argument("error vector and covariance dimension mismatch");
  }
  const Vector weighted = cov.ldlt().solve(record.error_vector);
  return record.error_vector.dot(weighted) /
         static_cast<double>(record.dimension);
}

AneesResult compute_anees(const std::vector<TrialRecord>& records) {
  AneesResult result;
  double sum = 0.0;
  for (const auto& r : records) {
    if (!r.covariance) {
      ++result.excluded_singular;
      continue;
    }
    sum += trial_nees(r);
    ++result.used;
  }
  if (result.used > 0) {
    result.anees = sum / result.used;
  }
  return result;
}

LossAggregate aggregate_records(const std::vector<TrialRecord>& records,
                                const std::string& loss,
                                double success_threshold) {
  LossAggregate agg;
  agg.loss = loss;
  double sum_trans = 0.0;
  double sum_rot = 0.0;
  double sum_trans_success = 0.0;
  int successes = 0;
  double sum_iters = 0.0;
  double sum_time = 0.0;
  std::vector<TrialRecord> mine;
  for (const auto& r : records) {
    if (r.loss != loss) continue;
    mine.push_back(r);
    sum_trans += r.error_trans * r.error_trans;
    sum_rot += r.error_rot_deg * r.error_rot_deg;
    sum_iters += r.iterations;
    sum_time += r.time_us;
    if (r.termination == "max-iterations") ++agg.max_iteration_hits;
    if (success_threshold > 0.0 && r.error_trans < success_threshold) {
      ++successes;
      sum_trans_success += r.error_trans * r.error_trans;
    }
  }
  agg.trials = static_cast<int>(mine.size());
  if (agg.trials == 0) return agg;
  agg.rmse_trans = std::sqrt(sum_trans / agg.trials);
  agg.rmse_rot_deg = std::sqrt(sum_rot / agg.trials);
  agg.mean_iterations = sum_iters / agg.trials;
  agg.mean_time_us = sum_time / agg.trials;
  if (success_threshold > 0.0) {
    agg.success_rate = static_cast<double>(successes) / agg.trials;
    agg.rmse_successful =
        successes > 0 ? std::sqrt(sum_trans_success / successes)
                      : std::numeric_limits<double>::quiet_NaN();
  }
  const AneesResult anees = compute_anees(mine);
  agg.anees = anees.anees;
  agg.anees_excluded = anees.excluded_singular;
  return agg;
}

}  // namespace mixls
