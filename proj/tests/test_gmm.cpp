#include <doctest.h>

#include <nlohmann/json.hpp>

#include "test_support.hpp"

using namespace mixls;

namespace {

GaussianMixture single_gaussian(double mean, double sigma) {
  return GaussianMixture({GaussianComponent::from_stddev(
      1.0, Vector::Constant(1, mean), Vector::Constant(1, sigma))});
}

// w=[0.5,0.5], mu=[0,2], sigma=[1,2]; the recurring reference mixture.
GaussianMixture reference_mixture() {
  return GaussianMixture(
      {GaussianComponent::from_stddev(0.5, Vector::Constant(1, 0.0),
                                      Vector::Constant(1, 1.0)),
       GaussianComponent::from_stddev(0.5, Vector::Constant(1, 2.0),
                                      Vector::Constant(1, 2.0))});
}

}  // namespace

TEST_CASE("component construction and invariants") {
  Matrix u(2, 2);
  u << 2.0, 0.5, 0.0, 4.0;
  GaussianComponent c(0.3, Vector::Zero(2), u);
  CHECK(c.sqrt_info_det() == doctest::Approx(8.0));
  CHECK((c.info() - u.transpose() * u).norm() == doctest::Approx(0.0));

  Matrix lower(2, 2);
  lower << 2.0, 0.0, 0.5, 4.0;
  CHECK_THROWS_AS(GaussianComponent(0.3, Vector::Zero(2), lower),
                  std::invalid_argument);
  Matrix negative = Matrix::Identity(2, 2);
  negative(1, 1) = -1.0;
  CHECK_THROWS_AS(GaussianComponent(0.3, Vector::Zero(2), negative),
                  std::invalid_argument);
  CHECK_THROWS_AS(GaussianComponent(0.0, Vector::Zero(2), u),
                  std::invalid_argument);

  // from_covariance reproduces the Mahalanobis form.
  Matrix cov(2, 2);
  cov << 0.5, 0.2, 0.2, 0.8;
  GaussianComponent g = GaussianComponent::from_covariance(1.0, Vector::Zero(2), cov);
  CHECK((g.info() - cov.inverse()).norm() < 1e-12);
  CHECK((g.covariance() - cov).norm() < 1e-12);
}

TEST_CASE("mixture weight renormalization") {
  GaussianMixture m({GaussianComponent::from_stddev(
                         0.5, Vector::Zero(1), Vector::Constant(1, 1.0)),
                     GaussianComponent::from_stddev(
                         1.0, Vector::Zero(1), Vector::Constant(1, 2.0))});
  CHECK(m.component(0).weight() == doctest::Approx(1.0 / 3.0));
  CHECK(m.component(1).weight() == doctest::Approx(2.0 / 3.0));
  CHECK(m.component(0).weight() + m.component(1).weight() ==
        doctest::Approx(1.0).epsilon(1e-9));

  Vector short_mean(1);
  short_mean << 0.0;
  CHECK_THROWS_AS(
      GaussianMixture({GaussianComponent::from_stddev(0.5, Vector::Zero(2),
                                                      Vector::Ones(2)),
                       GaussianComponent::from_stddev(0.5, short_mean,
                                                      Vector::Ones(1))}),
      std::invalid_argument);
}

TEST_CASE("scalings") {
  CHECK(scalings(single_gaussian(0.0, 1.0))[0] == doctest::Approx(1.0));

  // w=0.5, sigma=2 -> 0.25 (second component keeps the weights at 0.5)
  GaussianMixture half(
      {GaussianComponent::from_stddev(0.5, Vector::Zero(1),
                                      Vector::Constant(1, 2.0)),
       GaussianComponent::from_stddev(0.5, Vector::Zero(1),
                                      Vector::Constant(1, 1.0))});
  CHECK(scalings(half)[0] == doctest::Approx(0.25));

  // 2D, w=0.3, sqrt_info=diag(2,4) -> 0.3 * 8 = 2.4
  Matrix u = Matrix::Zero(2, 2);
  u(0, 0) = 2.0;
  u(1, 1) = 4.0;
  GaussianMixture diag(
      {GaussianComponent(0.3, Vector::Zero(2), u),
       GaussianComponent::from_stddev(0.7, Vector::Zero(2), Vector::Ones(2))});
  CHECK(scalings(diag)[0] == doctest::Approx(2.4));
}

TEST_CASE("exponents") {
  GaussianMixture m = reference_mixture();
  Vector r(1);

  r << 0.0;  // r = mu_0
  CHECK(exponents(m, r)[0] == doctest::Approx(0.0));
  r << 2.0;  // mu=0, sigma=1, r=2 -> -2
  CHECK(exponents(m, r)[0] == doctest::Approx(-2.0));

  // mu=1, sqrt_info=0.5, r=3 -> -0.5
  GaussianMixture shifted({GaussianComponent::from_stddev(
      1.0, Vector::Constant(1, 1.0), Vector::Constant(1, 2.0))});
  r << 3.0;
  CHECK(exponents(shifted, r)[0] == doctest::Approx(-0.5));

  Vector bad(2);
  bad << 0.0, 0.0;
  CHECK_THROWS_AS(exponents(m, bad), std::invalid_argument);

  // all exponents are nonpositive for any residual
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    GaussianMixture random = test::random_study_mixture(rng, 2, false);
    const Vector x = test::random_residual(rng, 2, 6.0);
    CHECK(exponents(random, x).maxCoeff() <= 0.0);
    CHECK(scalings(random).minCoeff() > 0.0);
  }
}

TEST_CASE("dominant component selection") {
  Vector s(2), e(2);
  s << 0.5, 0.5;
  e << 0.0, -2.0;
  CHECK(dominant_component(s, e) == 0);
  s << 0.1, 10.0;
  e << 0.0, 0.0;
  CHECK(dominant_component(s, e) == 1);
  s << 1.0, 1.0;
  e << -3.0, -3.0;
  CHECK(dominant_component(s, e) == 0);  // tie -> lowest index

  // invariant under uniform positive scaling
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> su(0.01, 10.0);
  std::uniform_real_distribution<double> eu(-50.0, 0.0);
  std::uniform_real_distribution<double> cu(1e-6, 1e6);
  for (int i = 0; i < 500; ++i) {
    Vector sv(3), ev(3);
    for (int l = 0; l < 3; ++l) {
      sv[l] = su(rng);
      ev[l] = eu(rng);
    }
    const double c = cu(rng);
    CHECK(dominant_component(sv, ev) == dominant_component(c * sv, ev));
  }
}

TEST_CASE("log_sum_exp_robust") {
  Vector s(1), e(1);
  s << 1.0;
  e << -5.0;
  CHECK(log_sum_exp_robust(s, e) == doctest::Approx(-5.0));

  Vector s2(2), e2(2);
  s2 << 0.5, 0.5;
  e2 << 0.0, 0.0;
  CHECK(log_sum_exp_robust(s2, e2) == doctest::Approx(0.0));

  // extreme exponent: second term is below double underflow entirely
  s2 << 1.0, 1.0;
  e2 << 0.0, -2000.0;
  CHECK(log_sum_exp_robust(s2, e2) == 0.0);

  // finite even when every exp(e_l) underflows on its own
  e2 << -800.0, -900.0;
  CHECK(std::isfinite(log_sum_exp_robust(s2, e2)));
  CHECK(log_sum_exp_robust(s2, e2) == doctest::Approx(-800.0).epsilon(1e-12));

  // matches the naive form whenever that does not underflow
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> su(0.01, 10.0);
  std::uniform_real_distribution<double> eu(-30.0, 0.0);
  for (int i = 0; i < 2000; ++i) {
    Vector sv(4), ev(4);
    double naive = 0.0;
    for (int l = 0; l < 4; ++l) {
      sv[l] = su(rng);
      ev[l] = eu(rng);
      naive += sv[l] * std::exp(ev[l]);
    }
    CHECK(log_sum_exp_robust(sv, ev) ==
          doctest::Approx(std::log(naive)).epsilon(1e-12));
  }
}

TEST_CASE("negative log likelihood") {
  GaussianMixture unit = single_gaussian(0.0, 1.0);
  Vector r(1);
  r << 0.0;
  CHECK(negative_log_likelihood(unit, r) == doctest::Approx(0.0));
  r << 2.0;
  CHECK(negative_log_likelihood(unit, r) == doctest::Approx(2.0));

  // frozen high-precision value for the reference mixture at r=1
  GaussianMixture m = reference_mixture();
  r << 1.0;
  CHECK(negative_log_likelihood(m, r) ==
        doctest::Approx(0.64647438881848190).epsilon(1e-14));

  // continuity under shrinking steps
  std::mt19937_64 rng(17);
  for (int i = 0; i < 100; ++i) {
    GaussianMixture random = test::random_study_mixture(rng, 1, false);
    const Vector x = test::random_residual(rng, 1, 4.0);
    const double base = negative_log_likelihood(random, x);
    double previous_gap = std::numeric_limits<double>::infinity();
    for (double h : {1e-2, 1e-4, 1e-6}) {
      Vector shifted = x;
      shifted[0] += h;
      const double gap = std::abs(negative_log_likelihood(random, shifted) - base);
      CHECK(gap <= previous_gap + 1e-12);
      previous_gap = gap;
    }
    CHECK(previous_gap < 1e-3);
  }
}

TEST_CASE("analytic nll derivatives match finite differences") {
  std::mt19937_64 rng(19);
  for (int i = 0; i < 100; ++i) {
    const int dim = 1 + (i % 2);
    GaussianMixture m = test::random_study_mixture(rng, dim, false);
    const Vector x = test::random_residual(rng, dim, 3.0);
    CHECK((nll_gradient(m, x) - test::fd_nll_gradient(m, x)).norm() < 1e-5);
    CHECK((nll_hessian(m, x) - test::fd_nll_hessian(m, x)).norm() < 1e-4);
  }
}

TEST_CASE("find_global_mode") {
  const SearchRegion region = SearchRegion::cube(1, 4.0);

  // unimodal: mode = mean
  Vector mode = find_global_mode(single_gaussian(0.7, 0.5), region, 0.01);
  CHECK(mode[0] == doctest::Approx(0.7).epsilon(1e-8));

  // well separated, equal sigma: mode at the heavy component
  GaussianMixture heavy(
      {GaussianComponent::from_stddev(0.8, Vector::Constant(1, -1.5),
                                      Vector::Constant(1, 0.5)),
       GaussianComponent::from_stddev(0.2, Vector::Constant(1, 2.5),
                                      Vector::Constant(1, 0.5))});
  mode = find_global_mode(heavy, region, 0.01);
  CHECK(mode[0] == doctest::Approx(-1.5).epsilon(1e-6));

  // random mixtures against an exhaustive fine grid
  std::mt19937_64 rng(23);
  for (int i = 0; i < 10; ++i) {
    GaussianMixture m = test::random_study_mixture(rng, 1, false);
    mode = find_global_mode(m, region, 0.01);

    double best = std::numeric_limits<double>::infinity();
    double best_x = 0.0;
    for (double x = -4.0; x <= 4.0; x += 1e-4) {
      const double f = test::naive_nll(m, Vector::Constant(1, x));
      if (f < best) {
        best = f;
        best_x = x;
      }
    }
    CHECK(std::abs(mode[0] - best_x) < 1e-3);
    // numerically zero gradient at the refined mode
    CHECK(test::fd_nll_gradient(m, mode).norm() < 1e-8);
  }
}

TEST_CASE("count_local_minima") {
  CHECK(count_local_minima(single_gaussian(0.3, 0.6),
                           SearchRegion::cube(1, 4.0), 0.01) == 1);

  GaussianMixture far(
      {GaussianComponent::from_stddev(0.5, Vector::Constant(1, 0.0),
                                      Vector::Constant(1, 1.0)),
       GaussianComponent::from_stddev(0.5, Vector::Constant(1, 10.0),
                                      Vector::Constant(1, 1.0))});
  CHECK(count_local_minima(far, SearchRegion::cube(1, 12.0), 0.01) == 2);

  // verified against a 1e-4 grid enumeration: single minimum
  GaussianMixture overlapping(
      {GaussianComponent::from_stddev(0.5, Vector::Constant(1, 0.0),
                                      Vector::Constant(1, 1.0)),
       GaussianComponent::from_stddev(0.5, Vector::Constant(1, 0.5),
                                      Vector::Constant(1, 2.0))});
  CHECK(count_local_minima(overlapping, SearchRegion::cube(1, 4.0), 0.01) == 1);
}

TEST_CASE("sample_mixture statistics and determinism") {
  std::mt19937_64 rng(31);
  GaussianMixture unit = single_gaussian(0.0, 1.0);
  const int n = 100000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = sample_mixture(unit, rng)[0];
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / n;
  const double stddev = std::sqrt(sum_sq / n - mean * mean);
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(stddev - 1.0) < 0.02);

  std::mt19937_64 a(99), b(99);
  GaussianMixture m = reference_mixture();
  for (int i = 0; i < 50; ++i) {
    CHECK(sample_mixture(m, a) == sample_mixture(m, b));
  }

  // component frequencies: far separated means allow exact classification
  GaussianMixture split(
      {GaussianComponent::from_stddev(0.2, Vector::Constant(1, 0.0),
                                      Vector::Constant(1, 1.0)),
       GaussianComponent::from_stddev(0.8, Vector::Constant(1, 100.0),
                                      Vector::Constant(1, 1.0))});
  int first = 0;
  for (int i = 0; i < n; ++i) {
    if (sample_mixture(split, rng)[0] < 50.0) ++first;
  }
  CHECK(std::abs(first / static_cast<double>(n) - 0.2) < 0.01);
}

TEST_CASE("mixture json round trip") {
  std::mt19937_64 rng(37);
  for (int i = 0; i < 20; ++i) {
    const int dim = 1 + (i % 2);
    GaussianMixture m = test::random_study_mixture(rng, dim, false);
    GaussianMixture back = GaussianMixture::from_json(m.to_json());
    REQUIRE(back.size() == m.size());
    for (int trial = 0; trial < 5; ++trial) {
      const Vector r = test::random_residual(rng, dim, 4.0);
      CHECK(negative_log_likelihood(back, r) ==
            doctest::Approx(negative_log_likelihood(m, r)).epsilon(1e-14));
    }
  }

  const nlohmann::json j = reference_mixture().to_json();
  CHECK(j.contains("components"));
  CHECK(j["components"].size() == 2);
  CHECK(j["components"][0].contains("weight"));
  CHECK(j["components"][0].contains("mean"));
  CHECK(j["components"][0].contains("sqrt_info"));
}
