#include <doctest.h>

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mixls/geometry.hpp"
#include "mixls/plain_experiment.hpp"
#include "mixls/psr_experiment.hpp"
#include "mixls/run_io.hpp"
#include "test_support.hpp"

using namespace mixls;

TEST_CASE("plain mixture sampling honors the spec ranges") {
  PlainExperimentConfig config;
  config.dimension = 2;
  config.symmetric = false;
  std::mt19937_64 rng(71);
  for (int i = 0; i < 500; ++i) {
    const GaussianMixture m = sample_plain_mixture(config, rng);
    REQUIRE(m.size() == 2);
    CHECK(m.component(0).mean().norm() == 0.0);
    CHECK(m.component(0).weight() >= 0.2);
    CHECK(m.component(0).weight() <= 0.8);
    CHECK(m.component(0).weight() + m.component(1).weight() ==
          doctest::Approx(1.0));
    for (int a = 0; a < 2; ++a) {
      const double sigma1 = 1.0 / m.component(0).sqrt_info()(a, a);
      const double sigma2 = 1.0 / m.component(1).sqrt_info()(a, a);
      CHECK(sigma1 >= 0.1);
      CHECK(sigma1 <= 1.0);
      CHECK(sigma2 / sigma1 >= 2.0 - 1e-12);
      CHECK(sigma2 / sigma1 <= 10.0 + 1e-12);
      CHECK(std::abs(m.component(1).mean()[a]) <= 2.0);
    }
  }
  config.symmetric = true;
  const GaussianMixture sym = sample_plain_mixture(config, rng);
  CHECK(sym.component(1).mean().norm() == 0.0);
}

TEST_CASE("plain corpus generation is deterministic and unimodal") {
  PlainExperimentConfig config;
  config.dimension = 1;
  config.symmetric = false;
  config.mixture_count = 12;
  config.master_seed = 7;

  const PlainCorpus a = generate_plain_corpus(config);
  const PlainCorpus b = generate_plain_corpus(config);
  REQUIRE(a.mixtures.size() == 12);
  CHECK(a.draws == b.draws);
  CHECK(a.acceptance_rate == b.acceptance_rate);
  CHECK(a.acceptance_rate > 0.01);
  const SearchRegion region = SearchRegion::cube(1, 4.0);
  for (std::size_t i = 0; i < a.mixtures.size(); ++i) {
    CHECK(a.mixtures[i].to_json().dump() == b.mixtures[i].to_json().dump());
    CHECK(a.modes[i] == b.modes[i]);
    CHECK(count_local_minima(a.mixtures[i], region, 0.01) == 1);
  }
}

TEST_CASE("start points are linearly spaced") {
  PlainExperimentConfig config;
  config.dimension = 1;
  config.starts_per_mixture = 100;
  auto starts = plain_start_points(config);
  REQUIRE(starts.size() == 100);
  CHECK(starts.front()[0] == doctest::Approx(-4.0));
  CHECK(starts.back()[0] == doctest::Approx(4.0));
  CHECK(starts[1][0] - starts[0][0] == doctest::Approx(8.0 / 99.0));

  config.dimension = 2;
  starts = plain_start_points(config);
  REQUIRE(starts.size() == 100);  // 10 x 10 grid
  CHECK(starts.front().isApprox(Vector::Constant(2, -4.0)));
  CHECK(starts.back().isApprox(Vector::Constant(2, 4.0)));
}

TEST_CASE("small plain experiment sanity") {
  PlainExperimentConfig config;
  config.dimension = 1;
  config.symmetric = true;
  config.mixture_count = 6;
  config.starts_per_mixture = 16;
  config.master_seed = 3;

  const std::vector<LossKind> losses = {
      LossKind::kMaxMixture, LossKind::kSumMixture, LossKind::kMaxSumMixture,
      LossKind::kDcs};
  const PlainResult result = run_plain_experiment(config, losses, 2);
  CHECK(result.records.size() == 6u * 16u * 4u);

  for (const auto& agg : result.aggregates) {
    CHECK(agg.trials == 6 * 16);
    if (agg.loss == "msm" || agg.loss == "dcs") {
      CHECK(agg.success_rate == doctest::Approx(1.0));
    }
    if (agg.loss != "sm") {
      CHECK(agg.max_iteration_hits == 0);
    }
  }

  // exact losses have a vanishing total-cost gradient at the oracle mode
  MixtureLossConfig loss_config;
  for (std::size_t i = 0; i < result.corpus.mixtures.size(); ++i) {
    const GaussianMixture& m = result.corpus.mixtures[i];
    for (LossKind kind : {LossKind::kSumMixture, LossKind::kMaxSumMixture}) {
      LeastSquaresProblem problem(std::make_shared<EuclideanSpace>(1));
      problem.add_block(std::make_shared<StateLossBlock>(
          std::shared_ptr<Loss>(make_mixture_loss(kind, m, loss_config)), 1));
      Vector values;
      Matrix jacobian;
      problem.linearize(result.corpus.modes[i], values, jacobian);
      CHECK((jacobian.transpose() * values).norm() < 1e-6);
    }
  }
}

TEST_CASE("plain records replay identically modulo wall time") {
  PlainExperimentConfig config;
  config.dimension = 1;
  config.symmetric = false;
  config.mixture_count = 4;
  config.starts_per_mixture = 9;
  config.master_seed = 11;
  const std::vector<LossKind> losses = {LossKind::kMaxMixture,
                                        LossKind::kMaxSumMixture};
  const PlainResult a = run_plain_experiment(config, losses, 4);
  const PlainResult b = run_plain_experiment(config, losses, 1);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].trial_id == b.records[i].trial_id);
    CHECK(a.records[i].loss == b.records[i].loss);
    CHECK(a.records[i].final_state == b.records[i].final_state);
    CHECK(a.records[i].error_trans == b.records[i].error_trans);
    CHECK(a.records[i].iterations == b.records[i].iterations);
    CHECK(a.records[i].termination == b.records[i].termination);
  }
}

TEST_CASE("rmse") {
  std::vector<TrialRecord> records(2);
  records[0].error_trans = 3.0;
  records[1].error_trans = 4.0;
  CHECK(compute_rmse(records, [](const TrialRecord& r) {
          return r.error_trans;
        }) == doctest::Approx(std::sqrt(12.5)));

  for (auto& r : records) r.error_trans = 0.0;
  CHECK(compute_rmse(records, [](const TrialRecord& r) {
          return r.error_trans;
        }) == 0.0);

  CHECK_THROWS_AS(compute_rmse({}, [](const TrialRecord&) { return 0.0; }),
                  std::invalid_argument);
}

TEST_CASE("rmse matches a brute-force recomputation from the emitted csv") {
  PlainExperimentConfig config;
  config.dimension = 1;
  config.symmetric = true;
  config.mixture_count = 3;
  config.starts_per_mixture = 9;
  const PlainResult result =
      run_plain_experiment(config, {LossKind::kMaxSumMixture}, 1);

  const auto dir = std::filesystem::temp_directory_path() / "mixls_test_rmse";
  std::filesystem::create_directories(dir);
  const auto csv = dir / "records.csv";
  write_records_csv(csv, result.records, config.master_seed, "cafe");

  // independent re-reading of the emitted rows
  std::ifstream in(csv);
  std::string line;
  double sum_sq = 0.0;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("trial_id", 0) == 0) {
      continue;
    }
    std::stringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');  // trial_id
    std::getline(ss, field, ',');  // loss
    std::getline(ss, field, ',');  // dim
    std::getline(ss, field, ',');  // error_trans
    const double err = std::stod(field);
    sum_sq += err * err;
    ++rows;
  }
  REQUIRE(rows == static_cast<int>(result.records.size()));
  const double csv_rmse = std::sqrt(sum_sq / rows);
  const double direct = compute_rmse(
      result.records, [](const TrialRecord& r) { return r.error_trans; });
  CHECK(csv_rmse == doctest::Approx(direct).epsilon(1e-12));
  std::filesystem::remove_all(dir);
}

TEST_CASE("anees calibration and inverse proportionality") {
  // synthetic errors drawn from the reported covariance: anees -> 1
  std::mt19937_64 rng(73);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix cov(3, 3);
  cov << 1.0, 0.3, 0.1, 0.3, 2.0, -0.2, 0.1, -0.2, 0.5;
  const Matrix l = Eigen::LLT<Matrix>(cov).matrixL();

  std::vector<TrialRecord> records(100000);
  for (auto& r : records) {
    Vector z(3);
    for (int i = 0; i < 3; ++i) z[i] = gauss(rng);
    r.dimension = 3;
    r.error_vector = l * z;
    r.covariance = cov;
  }
  const AneesResult calibrated = compute_anees(records);
  CHECK(calibrated.used == 100000);
  CHECK(calibrated.anees == doctest::Approx(1.0).epsilon(0.02));

  // doubling the covariance halves the anees exactly
  for (auto& r : records) r.covariance = Matrix(2.0 * cov);
  const AneesResult doubled = compute_anees(records);
  CHECK(doubled.anees == doctest::Approx(0.5 * calibrated.anees).epsilon(1e-12));

  // singular records are excluded and counted
  records[0].covariance.reset();
  records[1].covariance.reset();
  const AneesResult excluded = compute_anees(records);
  CHECK(excluded.excluded_singular == 2);
  CHECK(excluded.used == 99998);
}

TEST_CASE("error metrics ignore trial ordering") {
  PlainExperimentConfig config;
  config.dimension = 1;
  config.mixture_count = 3;
  config.starts_per_mixture = 9;
  PlainResult result = run_plain_experiment(config, {LossKind::kMaxMixture}, 1);
  const LossAggregate before =
      aggregate_records(result.records, "mm", config.success_threshold);
  std::mt19937_64 rng(79);
  std::shuffle(result.records.begin(), result.records.end(), rng);
  const LossAggregate after =
      aggregate_records(result.records, "mm", config.success_threshold);
  CHECK(before.rmse_trans == after.rmse_trans);
  CHECK(before.success_rate == after.success_rate);
  CHECK(before.anees == after.anees);
}

TEST_CASE("psr instance generation") {
  PsrExperimentConfig config = PsrExperimentConfig::for_dimension(2);
  std::mt19937_64 rng(83);
  const auto landmarks = generate_landmarks(config, rng);
  CHECK(landmarks.size() == 18);  // 10 base + 4 clustered x 2 copies

  PsrExperimentConfig config3 = PsrExperimentConfig::for_dimension(3);
  const auto landmarks3 = generate_landmarks(config3, rng);
  CHECK(landmarks3.size() == 36);  // 20 base + 8 clustered x 2 copies
  for (const auto& p : landmarks3) {
    // within the sampled shell, allowing the cluster spread
    CHECK(p.norm() > 9.0 - 1.0);
    CHECK(p.norm() < 11.0 + 1.0);
  }

  const PsrInstance instance = generate_psr_instance(config, rng);
  CHECK(instance.fixed.size() == 18);
  CHECK(instance.moving.size() == 18);
  CHECK(instance.truth.translation.norm() <= std::sqrt(2.0) * 0.5 + 1e-12);

  // zero noise, identity transform: both sets coincide with the landmarks
  PsrExperimentConfig quiet = config;
  quiet.range_sigma = 0.0;
  quiet.angle_sigma_deg = 0.0;
  quiet.translation_range = 0.0;
  quiet.rotation_range_deg = 0.0;
  std::mt19937_64 rng2(85);
  const PsrInstance exact = generate_psr_instance(quiet, rng2);
  CHECK((exact.truth.rotation - Matrix::Identity(2, 2)).norm() == 0.0);
  for (int i = 0; i < exact.fixed.size(); ++i) {
    CHECK((exact.fixed.points[i] - exact.moving.points[i]).norm() < 1e-12);
  }
}

TEST_CASE("measured covariance matches a monte carlo estimate") {
  PsrExperimentConfig config = PsrExperimentConfig::for_dimension(2);
  const Vector landmark = (Vector(2) << 10.0, 0.0).finished();
  const std::vector<Vector> many(100000, landmark);
  std::mt19937_64 rng(89);
  const PointSet set = measure_point_set(many, config, rng);

  Vector mean = Vector::Zero(2);
  for (const auto& p : set.points) mean += p;
  mean /= set.size();
  Matrix sample_cov = Matrix::Zero(2, 2);
  for (const auto& p : set.points) {
    sample_cov += (p - mean) * (p - mean).transpose();
  }
  sample_cov /= set.size() - 1;

  // analytic first-order covariance at bearing zero
  Matrix expected = Matrix::Zero(2, 2);
  expected(0, 0) = 0.2 * 0.2;
  expected(1, 1) = std::pow(10.0 * 3.0 * kDegToRad, 2);
  CHECK(sample_cov(0, 0) == doctest::Approx(expected(0, 0)).epsilon(0.05));
  CHECK(sample_cov(1, 1) == doctest::Approx(expected(1, 1)).epsilon(0.05));
  CHECK(std::abs(sample_cov(0, 1)) < 0.05 * expected(1, 1));

  // the covariance attached per point agrees on average
  Matrix attached = Matrix::Zero(2, 2);
  for (const auto& c : set.covariances) attached += c;
  attached /= set.size();
  CHECK((attached - expected).norm() < 0.05 * expected.norm());
}

TEST_CASE("registration problem structure") {
  PsrExperimentConfig config = PsrExperimentConfig::for_dimension(2);

  // combined covariance: diag(0.01) + diag(0.04) at identity
  PointSet fixed;
  fixed.points.push_back(Vector::Zero(2));
  fixed.covariances.push_back(0.01 * Matrix::Identity(2, 2));
  PointSet moving;
  moving.points.push_back((Vector(2) << 0.6, -0.2).finished());
  moving.covariances.push_back(0.04 * Matrix::Identity(2, 2));

  LeastSquaresProblem problem = build_registration_problem(
      fixed, moving, LossKind::kMaxSumMixture, config);
  REQUIRE(problem.block_count() == 1);
  Vector value;
  const Vector x0 = encode_transform(RigidTransform::identity(2));
  problem.block(0).evaluate(x0, value, nullptr);
  // first rows are the whitened residual with covariance 0.05 I
  const Vector expected = moving.points[0] / std::sqrt(0.05);
  CHECK(value.head(2).isApprox(expected, 1e-9));

  // a single point cannot observe rotation: flagged rank-deficient
  const CovarianceResult cov = recover_covariance(problem, x0);
  CHECK(!cov.covariance.has_value());
  CHECK(cov.rank < cov.dimension);

  PointSet wrong_dim;
  wrong_dim.points.push_back(Vector::Zero(3));
  wrong_dim.covariances.push_back(Matrix::Identity(3, 3));
  CHECK_THROWS_AS(build_registration_problem(wrong_dim, moving,
                                             LossKind::kMaxSumMixture, config),
                  std::invalid_argument);
}

TEST_CASE("noise-free registration terminates at the truth") {
  for (int dim : {2, 3}) {
    PsrExperimentConfig config = PsrExperimentConfig::for_dimension(dim);

    // well separated landmarks keep the cross-component responsibilities at
    // machine zero, which makes the truth an exact stationary point
    std::vector<Vector> landmarks;
    if (dim == 2) {
      for (double x : {-4.0, 4.0}) {
        for (double y : {-4.0, 4.0}) {
          landmarks.push_back((Vector(2) << x, y).finished());
        }
      }
      landmarks.push_back((Vector(2) << 0.0, 4.0).finished());
      landmarks.push_back((Vector(2) << 4.0, 0.0).finished());
    } else {
      for (int axis = 0; axis < 3; ++axis) {
        for (double sign : {-10.0, 10.0}) {
          Vector p = Vector::Zero(3);
          p[axis] = sign;
          landmarks.push_back(std::move(p));
        }
      }
    }

    std::mt19937_64 rng(91 + dim);
    const RigidTransform truth = sample_transform(config, rng);
    const RigidTransform inv = truth.inverse();

    PointSet fixed, moving;
    for (const auto& p : landmarks) {
      fixed.points.push_back(p);
      fixed.covariances.push_back(0.02 * Matrix::Identity(dim, dim));
      moving.points.push_back(inv.apply(p));
      moving.covariances.push_back(0.03 * Matrix::Identity(dim, dim));
    }

    for (LossKind kind : {LossKind::kMaxMixture, LossKind::kSumMixture,
                          LossKind::kMaxSumMixture}) {
      LeastSquaresProblem problem =
          build_registration_problem(fixed, moving, kind, config);
      const Vector x0 = encode_transform(truth);
      const SolverReport report = solve(problem, x0, config.solver);
      const RigidTransform estimate =
          decode_transform(report.final_state, dim);
      CHECK((estimate.translation - truth.translation).norm() < 1e-8);
      CHECK((estimate.rotation - truth.rotation).norm() < 1e-8);

      // total cost at the truth is the sum of the per-block constants
      MixtureLossConfig lc = config.loss_config;
      double expected_cost = 0.0;
      const int n = fixed.size();
      for (int i = 0; i < n; ++i) {
        const Matrix combined =
            fixed.covariances[i] +
            truth.rotation * moving.covariances[i] * truth.rotation.transpose();
        const double det_sqrt_info =
            1.0 / std::sqrt(combined.determinant());
        const double s_star = det_sqrt_info / n;
        double gamma = 0.0;
        double s_max = 0.0;
        for (int j = 0; j < n; ++j) {
          const Matrix cj =
              fixed.covariances[j] +
              truth.rotation * moving.covariances[j] * truth.rotation.transpose();
          const double sj = (1.0 / std::sqrt(cj.determinant())) / n;
          s_max = std::max(s_max, sj);
          gamma += sj;
        }
        if (kind == LossKind::kMaxMixture) gamma = s_max;
        if (kind == LossKind::kMaxSumMixture) gamma = n * s_max + lc.damping;
        expected_cost += std::log(gamma) - std::log(s_star);
      }
      CHECK(problem.evaluate_total_cost(x0) ==
            doctest::Approx(expected_cost).epsilon(1e-8));
    }
  }
}

TEST_CASE("psr experiment determinism and smoke") {
  PsrExperimentConfig config = PsrExperimentConfig::for_dimension(2);
  config.configurations = 2;
  config.runs_per_configuration = 3;
  const std::vector<LossKind> losses = {LossKind::kMaxMixture,
                                        LossKind::kMaxSumMixture};
  const PsrResult a = run_psr_experiment(config, losses, 3);
  const PsrResult b = run_psr_experiment(config, losses, 1);
  REQUIRE(a.records.size() == 2u * 3u * 2u);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].final_state == b.records[i].final_state);
    CHECK(a.records[i].error_trans == b.records[i].error_trans);
    CHECK(a.records[i].error_rot_deg == b.records[i].error_rot_deg);
    CHECK(a.records[i].iterations == b.records[i].iterations);
    CHECK(std::isfinite(a.records[i].error_trans));
  }
  for (const auto& agg : a.aggregates) {
    CHECK(agg.trials == 6);
    CHECK(std::isfinite(agg.rmse_trans));
  }
}
