#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "mixls/metrics.hpp"
#include "mixls/solver.hpp"

namespace mixls {

struct PsrExperimentConfig {
  int dimension = 2;  // 2 or 3
  int configurations = 20;
  int runs_per_configuration = 100;
  int base_landmarks = 10;  // 20 in the 3D study
  double cluster_fraction = 0.4;
  int cluster_copies = 2;
  double cluster_sigma = 0.1;
  double landmark_half_extent = 5.0;  // 2D: uniform square
  double shell_radius = 10.0;         // 3D: spherical shell radius
  double shell_half_width = 1.0;
  double translation_range = 0.5;    // +- per axis
  double rotation_range_deg = 15.0;  // 2D yaw; 5 deg per axis in 3D
  double range_sigma = 0.2;
  double angle_sigma_deg = 3.0;
  bool outlier_component = false;
  double outlier_weight = 0.1;
  double outlier_sigma = 10.0;
  std::uint64_t master_seed = 42;
  MixtureLossConfig loss_config;
  SolverConfig solver;

  /// Fills the dimension-dependent defaults of the study tables
  /// (20 landmarks and +-5 deg rotations in 3D).
  static PsrExperimentConfig for_dimension(int dimension);
};

struct PointSet {
  std::vector<Vector> points;
  std::vector<Matrix> covariances;

  int size() const { return static_cast<int>(points.size()); }
};

struct RigidTransform {
  Vector translation;
  Matrix rotation;

  static RigidTransform identity(int dimension);
  Vector apply(const Vector& p) const { return rotation * p + translation; }
  RigidTransform inverse() const;
};

struct PsrInstance {
  PointSet fixed;
  PointSet moving;
  RigidTransform truth;
};

/// True landmark positions: base draws plus cluster copies spread with
/// cluster_sigma (40% of the base landmarks get cluster_copies extra
/// copies each).
std::vector<Vector> generate_landmarks(const PsrExperimentConfig& config,
                                       std::mt19937_64& rng);

RigidTransform sample_transform(const PsrExperimentConfig& config,
                                std::mt19937_64& rng);

/// Measures every point with polar (2D) or spherical (3D) noise and
/// attaches the first-order propagated Cartesian covariance.
PointSet measure_point_set(const std::vector<Vector>& true_points,
                           const PsrExperimentConfig& config,
                           std::mt19937_64& rng);

/// One full measurement pair: landmarks, a random transform, and both
/// noisy point sets (the moving one expressed in its own frame).
PsrInstance generate_psr_instance(const PsrExperimentConfig& config,
                                  std::mt19937_64& rng);

/// One residual block per moving point; its mixture has one component per
/// fixed point with combined covariance fixed_cov + R moving_cov R^T,
/// rebuilt at every evaluation from the current rotation estimate. The
/// optional broad outlier component is appended last.
LeastSquaresProblem build_registration_problem(const PointSet& fixed,
                                               const PointSet& moving,
                                               LossKind kind,
                                               const PsrExperimentConfig& config);

/// State encoding of the registration problem ([t, yaw] or Pose3Space).
std::shared_ptr<const StateSpace> registration_state_space(int dimension);
Vector encode_transform(const RigidTransform& t);
RigidTransform decode_transform(const Vector& x, int dimension);

struct PsrResult {
  std::vector<TrialRecord> records;
  std::vector<LossAggregate> aggregates;
};

/// Registration runs from identity initialization over configurations x
/// runs x losses; the same transform sequence is reused across landmark
/// configurations.
PsrResult run_psr_experiment(const PsrExperimentConfig& config,
                             const std::vector<LossKind>& losses,
                             int threads = 1);

}  // namespace mixls
