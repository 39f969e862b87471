#include "mixls/psr_experiment.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mixls/detail/parallel.hpp"
#include "mixls/geometry.hpp"

namespace mixls {

PsrExperimentConfig PsrExperimentConfig::for_dimension(int dimension) {
  PsrExperimentConfig config;
  config.dimension = dimension;
  if (dimension == 3) {
    config.base_landmarks = 20;
    config.rotation_range_deg = 5.0;
  } else if (dimension != 2) {
    throw std::invalid_argument("registration supports dimensions 2 and 3");
  }
  return config;
}

RigidTransform RigidTransform::identity(int dimension) {
  return {Vector::Zero(dimension), Matrix::Identity(dimension, dimension)};
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

std::vector<Vector> generate_landmarks(const PsrExperimentConfig& config,
                                       std::mt19937_64& rng) {
  const int d = config.dimension;
  std::vector<Vector> landmarks;
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);

  for (int i = 0; i < config.base_landmarks; ++i) {
    Vector p(d);
    if (d == 2) {
      p[0] = uniform(rng) * config.landmark_half_extent;
      p[1] = uniform(rng) * config.landmark_half_extent;
    } else {
      const double radius =
          config.shell_radius + uniform(rng) * config.shell_half_width;
      const double azimuth = uniform(rng) * std::numbers::pi;
      const double elevation = uniform(rng) * std::numbers::pi / 2.0;
      p[0] = radius * std::cos(elevation) * std::cos(azimuth);
      p[1] = radius * std::cos(elevation) * std::sin(azimuth);
      p[2] = radius * std::sin(elevation);
    }
    landmarks.push_back(std::move(p));
  }

  // The first cluster_fraction of the base landmarks get extra copies.
  const int clustered =
      static_cast<int>(std::llround(config.cluster_fraction *
                                    config.base_landmarks));
  std::normal_distribution<double> spread(0.0, config.cluster_sigma);
  for (int i = 0; i < clustered; ++i) {
    for (int c = 0; c < config.cluster_copies; ++c) {
      Vector p = landmarks[i];
      for (int a = 0; a < d; ++a) p[a] += spread(rng);
      landmarks.push_back(std::move(p));
    }
  }
  return landmarks;
}

RigidTransform sample_transform(const PsrExperimentConfig& config,
                                std::mt19937_64& rng) {
  const int d = config.dimension;
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  RigidTransform t;
  t.translation.resize(d);
  for (int a = 0; a < d; ++a) {
    t.translation[a] = uniform(rng) * config.translation_range;
  }
  const double range_rad = config.rotation_range_deg * kDegToRad;
  if (d == 2) {
    t.rotation = rotation2d(uniform(rng) * range_rad);
  } else {
    const double ax = uniform(rng) * range_rad;
    const double ay = uniform(rng) * range_rad;
    const double az = uniform(rng) * range_rad;
    t.rotation = rotation_from_euler_xyz(ax, ay, az);
  }
  return t;
}

namespace {

// First-order propagation of polar/spherical noise into a Cartesian
// covariance, evaluated at the measured coordinates.
Matrix polar_covariance_2d(double radius, double theta, double sigma_r,
                           double sigma_a) {
  Eigen::Matrix2d g;
  g << std::cos(theta), -radius * std::sin(theta),  //
      std::sin(theta), radius * std::cos(theta);
  const Eigen::Vector2d diag(sigma_r * sigma_r, sigma_a * sigma_a);
  return g * diag.asDiagonal() * g.transpose();
}

Matrix spherical_covariance_3d(double radius, double theta, double phi,
                               double sigma_r, double sigma_a) {
  const double ct = std::cos(theta), st = std::sin(theta);
  const double cp = std::cos(phi), sp = std::sin(phi);
  Eigen::Matrix3d g;
  g.col(0) << cp * ct, cp * st, sp;
  g.col(1) << -radius * cp * st, radius * cp * ct, 0.0;
  g.col(2) << -radius * sp * ct, -radius * sp * st, radius * cp;
  const Eigen::Vector3d diag(sigma_r * sigma_r, sigma_a * sigma_a,
                             sigma_a * sigma_a);
  return g * diag.asDiagonal() * g.transpose();
}

}  // namespace

PointSet measure_point_set(const std::vector<Vector>& true_points,
                           const PsrExperimentConfig& config,
                           std::mt19937_64& rng) {
  const int d = config.dimension;
  const double sigma_a = config.angle_sigma_deg * kDegToRad;
  std::normal_distribution<double> gauss(0.0, 1.0);

  PointSet set;
  for (const Vector& p : true_points) {
    if (d == 2) {
      const double radius =
          std::hypot(p[0], p[1]) + config.range_sigma * gauss(rng);
      const double theta = std::atan2(p[1], p[0]) + sigma_a * gauss(rng);
      Vector m(2);
      m << radius * std::cos(theta), radius * std::sin(theta);
      set.points.push_back(std::move(m));
      set.covariances.push_back(
          polar_covariance_2d(radius, theta, config.range_sigma, sigma_a));
    } else {
      const double true_radius = p.norm();
      const double radius = true_radius + config.range_sigma * gauss(rng);
      const double theta = std::atan2(p[1], p[0]) + sigma_a * gauss(rng);
      const double phi =
          std::asin(p[2] / true_radius) + sigma_a * gauss(rng);
      Vector m(3);
      m << radius * std::cos(phi) * std::cos(theta),
          radius * std::cos(phi) * std::sin(theta), radius * std::sin(phi);
      set.points.push_back(std::move(m));
      set.covariances.push_back(spherical_covariance_3d(
          radius, theta, phi, config.range_sigma, sigma_a));
    }
  }
  return set;
}

PsrInstance generate_psr_instance(const PsrExperimentConfig& config,
                                  std::mt19937_64& rng) {
  PsrInstance instance;
  const std::vector<Vector> landmarks = generate_landmarks(config, rng);
  instance.truth = sample_transform(config, rng);

  // Moving-frame ground truth: the inverse transform maps the fixed-frame
  // landmarks into the moving sensor's frame.
  const RigidTransform inv = instance.truth.inverse();
  std::vector<Vector> moving_truth;
  moving_truth.reserve(landmarks.size());
  for (const Vector& p : landmarks) {
    moving_truth.push_back(inv.apply(p));
  }

  instance.fixed = measure_point_set(landmarks, config, rng);
  instance.moving = measure_point_set(moving_truth, config, rng);
  return instance;
}

std::shared_ptr<const StateSpace> registration_state_space(int dimension) {
  if (dimension == 2) {
    return std::make_shared<EuclideanSpace>(3);  // [tx, ty, yaw]
  }
  if (dimension == 3) {
    return std::make_shared<Pose3Space>();
  }
  throw std::invalid_argument("registration supports dimensions 2 and 3");
}

Vector encode_transform(const RigidTransform& t) {
  const int d = static_cast<int>(t.translation.size());
  if (d == 2) {
    Vector x(3);
    x.head<2>() = t.translation;
    x[2] = std::atan2(t.rotation(1, 0), t.rotation(0, 0));
    return x;
  }
  return Pose3Space::encode(t.translation, t.rotation);
}

RigidTransform decode_transform(const Vector& x, int dimension) {
  RigidTransform t;
  if (dimension == 2) {
    t.translation = x.head<2>();
    t.rotation = rotation2d(x[2]);
  } else {
    Pose3Space::decode(x, t.translation, t.rotation);
  }
  return t;
}

namespace {

// Shared per-problem view of the fixed point set.
struct FixedSetData {
  std::vector<Vector> means;
  std::vector<Matrix> covariances;
  bool outlier = false;
  double outlier_weight = 0.1;
  double outlier_sigma = 10.0;

  GaussianMixture mixture_for(const Matrix& rotation,
                              const Matrix& moving_cov) const {
    const int n = static_cast<int>(means.size());
    const Matrix transformed = rotation * moving_cov * rotation.transpose();
    const double base_weight =
        (outlier ? 1.0 - outlier_weight : 1.0) / n;
    std::vector<GaussianComponent> comps;
    comps.reserve(n + 1);
    for (int j = 0; j < n; ++j) {
      comps.push_back(GaussianComponent::from_covariance(
          base_weight, means[j], covariances[j] + transformed));
    }
    if (outlier) {
      const int d = static_cast<int>(means.front().size());
      comps.push_back(GaussianComponent::from_stddev(
          outlier_weight, Vector::Zero(d),
          Vector::Constant(d, outlier_sigma)));
    }
    return GaussianMixture(std::move(comps));
  }
};

class PsrBlock final : public ResidualBlock {
 public:
  PsrBlock(std::shared_ptr<const FixedSetData> fixed, Vector point,
           Matrix point_cov, LossKind kind, MixtureLossConfig config,
           int dimension)
      : fixed_(std::move(fixed)),
        point_(std::move(point)),
        point_cov_(std::move(point_cov)),
        kind_(kind),
        config_(config),
        dimension_(dimension) {}

  int value_size() const override {
    return kind_ == LossKind::kSumMixture ? 1 : dimension_ + 1;
  }

  void evaluate(const Vector& x, Vector& value, Matrix* jacobian) const override {
    const RigidTransform t = decode_transform(x, dimension_);
    const GaussianMixture mixture =
        fixed_->mixture_for(t.rotation, point_cov_);
    const Vector r = t.apply(point_);

    LossEvaluation le;
    switch (kind_) {
      case LossKind::kMaxMixture:
        le = evaluate_mm(mixture, config_, r);
        break;
      case LossKind::kSumMixture:
        le = evaluate_sm(mixture, config_, r);
        break;
      case LossKind::kMaxSumMixture:
        le = evaluate_msm(mixture, config_, r);
        break;
      case LossKind::kDcs:
        throw std::invalid_argument(
            "dcs is not a mixture model, registration does not support it");
    }
    value = std::move(le.value);
    if (!jacobian) return;

    // d r / d tangent, combined covariance treated as locally constant.
    Matrix dr;
    if (dimension_ == 2) {
      dr.resize(2, 3);
      dr.leftCols<2>() = Eigen::Matrix2d::Identity();
      const double yaw = x[2];
      dr(0, 2) = -std::sin(yaw) * point_[0] - std::cos(yaw) * point_[1];
      dr(1, 2) = std::cos(yaw) * point_[0] - std::sin(yaw) * point_[1];
    } else {
      dr.resize(3, 6);
      dr.leftCols<3>() = Eigen::Matrix3d::Identity();
      dr.rightCols<3>() =
          -Eigen::Matrix3d(t.rotation) * skew(Eigen::Vector3d(point_));
    }
    *jacobian = le.jacobian * dr;
  }

  std::string name() const override { return "psr-" + loss_name(kind_); }

 private:
  std::shared_ptr<const FixedSetData> fixed_;
  Vector point_;
  Matrix point_cov_;
  LossKind kind_;
  MixtureLossConfig config_;
  int dimension_;
};

}  // namespace

LeastSquaresProblem build_registration_problem(
    const PointSet& fixed, const PointSet& moving, LossKind kind,
    const PsrExperimentConfig& config) {
  if (fixed.size() == 0 || moving.size() == 0) {
    throw std::invalid_argument("registration needs nonempty point sets");
  }
  const int d = config.dimension;
  for (const auto& p : fixed.points) {
    if (p.size() != d) throw std::invalid_argument("fixed set dimension mismatch");
  }
  for (const auto& p : moving.points) {
    if (p.size() != d) throw std::invalid_argument("moving set dimension mismatch");
  }

  auto data = std::make_shared<FixedSetData>();
  data->means = fixed.points;
  data->covariances = fixed.covariances;
  data->outlier = config.outlier_component;
  data->outlier_weight = config.outlier_weight;
  data->outlier_sigma = config.outlier_sigma;

  LeastSquaresProblem problem(registration_state_space(d));
  for (int i = 0; i < moving.size(); ++i) {
    problem.add_block(std::make_shared<PsrBlock>(
        data, moving.points[i], moving.covariances[i], kind,
        config.loss_config, d));
  }
  return problem;
}

namespace {

std::mt19937_64 seeded_rng(std::uint64_t master, std::uint64_t stream,
                           std::uint64_t a = 0, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(master),
                    static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(a),
                    static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

}  // namespace

PsrResult run_psr_experiment(const PsrExperimentConfig& config,
                             const std::vector<LossKind>& losses,
                             int threads) {
  const int d = config.dimension;
  const int runs = config.runs_per_configuration;
  const int tangent = d == 2 ? 3 : 6;

  // Landmark configurations and the transform sequence shared by all of
  // them, drawn up front so trials stay independent work items.
  std::vector<std::vector<Vector>> landmark_sets(config.configurations);
  for (int ci = 0; ci < config.configurations; ++ci) {
    auto rng = seeded_rng(config.master_seed, 1, ci);
    landmark_sets[ci] = generate_landmarks(config, rng);
  }
  std::vector<RigidTransform> transforms(runs);
  {
    auto rng = seeded_rng(config.master_seed, 2);
    for (int ri = 0; ri < runs; ++ri) {
      transforms[ri] = sample_transform(config, rng);
    }
  }

  PsrResult result;
  const int trial_count = config.configurations * runs;
  const int per_trial = static_cast<int>(losses.size());
  result.records.resize(static_cast<std::size_t>(trial_count) * per_trial);

  detail::parallel_for(trial_count, threads, [&](int trial) {
    const int ci = trial / runs;
    const int ri = trial % runs;
    const RigidTransform& truth = transforms[ri];

    auto rng = seeded_rng(config.master_seed, 3, ci, ri);
    const RigidTransform inv = truth.inverse();
    std::vector<Vector> moving_truth;
    moving_truth.reserve(landmark_sets[ci].size());
    for (const Vector& p : landmark_sets[ci]) {
      moving_truth.push_back(inv.apply(p));
    }
    const PointSet fixed = measure_point_set(landmark_sets[ci], config, rng);
    const PointSet moving = measure_point_set(moving_truth, config, rng);

    for (std::size_t li = 0; li < losses.size(); ++li) {
      const LossKind kind = losses[li];
      LeastSquaresProblem problem =
          build_registration_problem(fixed, moving, kind, config);
      const Vector x0 = encode_transform(RigidTransform::identity(d));
      const SolverReport report = solve(problem, x0, config.solver);
      const RigidTransform estimate =
          decode_transform(report.final_state, d);

      TrialRecord rec;
      rec.trial_id = trial;
      rec.loss = loss_name(kind);
      rec.dimension = tangent;
      rec.initial_state = x0;
      rec.final_state = report.final_state;
      rec.truth = encode_transform(truth);
      rec.error_vector.resize(tangent);
      rec.error_vector.head(d) = truth.translation - estimate.translation;
      if (d == 2) {
        const double dyaw = wrap_angle(
            std::atan2(truth.rotation(1, 0), truth.rotation(0, 0)) -
            std::atan2(estimate.rotation(1, 0), estimate.rotation(0, 0)));
        rec.error_vector[2] = dyaw;
        rec.error_rot_deg = std::abs(dyaw) * kRadToDeg;
      } else {
        const Eigen::Vector3d dtheta = log_so3(
            Eigen::Matrix3d(estimate.rotation.transpose() * truth.rotation));
        rec.error_vector.tail<3>() = dtheta;
        rec.error_rot_deg = dtheta.norm() * kRadToDeg;
      }
      rec.error_trans = (truth.translation - estimate.translation).norm();
      rec.iterations = report.iterations;
      rec.time_us = report.wall_time_us;
      rec.termination = termination_name(report.termination);
      const CovarianceResult cov =
          recover_covariance(problem, report.final_state);
      if (cov.covariance) {
        rec.covariance = cov.covariance;
        rec.nees = trial_nees(rec);
      }
      result.records[static_cast<std::size_t>(trial) * per_trial + li] =
          std::move(rec);
    }
  });

  for (LossKind kind : losses) {
    result.aggregates.push_back(
        aggregate_records(result.records, loss_name(kind), -1.0));
  }
  return result;
}

}  // namespace mixls
