#include "mixls/gmm.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace mixls {

namespace {

void check_upper_triangular(const Matrix& u) {
  if (u.rows() != u.cols()) {
    throw std::invalid_argument("sqrt_info must be square");
  }
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    if (!(u(i, i) > 0.0)) {
      throw std::invalid_argument("sqrt_info diagonal must be positive");
    }
    for (Eigen::Index j = 0; j < i; ++j) {
      if (u(i, j) != 0.0) {
        throw std::invalid_argument("sqrt_info must be upper-triangular");
      }
    }
  }
}

}  // namespace

GaussianComponent::GaussianComponent(double weight, Vector mean,
                                     Matrix sqrt_info)
    : weight_(weight), mean_(std::move(mean)), sqrt_info_(std::move(sqrt_info)) {
  if (!(weight_ > 0.0) || weight_ > 1.0 + 1e-12) {
    throw std::invalid_argument("component weight must be in (0, 1]");
  }
  if (sqrt_info_.rows() != mean_.size()) {
    throw std::invalid_argument("sqrt_info dimension does not match mean");
  }
  check_upper_triangular(sqrt_info_);
  info_ = sqrt_info_.transpose() * sqrt_info_;
  sqrt_info_det_ = sqrt_info_.diagonal().prod();
}

GaussianComponent GaussianComponent::from_covariance(double weight,
                                                     Vector mean,
                                                     const Matrix& covariance) {
  // Sigma = L L^T  =>  Sigma^{-1} = L^{-T} L^{-1} = U^T U with U = L^{-1}
  // transposed back into upper-triangular form.
  Eigen::LLT<Matrix> llt(covariance);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("covariance is not positive definite");
  }
  Matrix l_inv = llt.matrixL().solve(
      Matrix::Identity(covariance.rows(), covariance.cols()));
  Matrix u = l_inv.transpose();
  // Belt and braces against roundoff below the diagonal.
  u = u.triangularView<Eigen::Upper>();
  return GaussianComponent(weight, std::move(mean), std::move(u));
}

GaussianComponent GaussianComponent::from_stddev(double weight, Vector mean,
                                                 const Vector& sigma) {
  if (sigma.size() != mean.size()) {
    throw std::invalid_argument("sigma dimension does not match mean");
  }
  Matrix u = Matrix::Zero(sigma.size(), sigma.size());
  for (Eigen::Index i = 0; i < sigma.size(); ++i) {
    if (!(sigma[i] > 0.0)) {
      throw std::invalid_argument("standard deviations must be positive");
    }
    u(i, i) = 1.0 / sigma[i];
  }
  return GaussianComponent(weight, std::move(mean), std::move(u));
}

Matrix GaussianComponent::covariance() const {
  return info_.llt().solve(Matrix::Identity(info_.rows(), info_.cols()));
}

GaussianMixture::GaussianMixture(std::vector<GaussianComponent> components)
    : components_(std::move(components)) {
  if (components_.empty()) {
    throw std::invalid_argument("mixture needs at least one component");
  }
  dimension_ = components_.front().dimension();
  double total = 0.0;
  for (const auto& c : components_) {
    if (c.dimension() != dimension_) {
      throw std::invalid_argument("components must share one dimension");
    }
    total += c.weight();
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw std::invalid_argument("component weights must sum to a positive value");
  }
  for (auto& c : components_) {
    c.weight_ /= total;
  }
}

nlohmann::json GaussianMixture::to_json() const {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : components_) {
    nlohmann::json jc;
    jc["weight"] = c.weight();
    jc["mean"] = std::vector<double>(c.mean().data(),
                                     c.mean().data() + c.mean().size());
    std::vector<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < c.sqrt_info().rows(); ++i) {
      std::vector<double> row;
      for (Eigen::Index j = 0; j < c.sqrt_info().cols(); ++j) {
        row.push_back(c.sqrt_info()(i, j));
      }
      rows.push_back(std::move(row));
    }
    jc["sqrt_info"] = rows;
    comps.push_back(std::move(jc));
  }
  return nlohmann::json{{"components", std::move(comps)}};
}

GaussianMixture GaussianMixture::from_json(const nlohmann::json& j) {
  std::vector<GaussianComponent> comps;
  for (const auto& jc : j.at("components")) {
    const auto mean_v = jc.at("mean").get<std::vector<double>>();
    Vector mean = Eigen::Map<const Vector>(mean_v.data(), mean_v.size());
    const auto rows = jc.at("sqrt_info").get<std::vector<std::vector<double>>>();
    Matrix u(rows.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows.size()) {
        throw std::invalid_argument("sqrt_info rows must form a square matrix");
      }
      for (std::size_t k = 0; k < rows[i].size(); ++k) {
        u(i, k) = rows[i][k];
      }
    }
    comps.emplace_back(jc.at("weight").get<double>(), std::move(mean),
                       std::move(u));
  }
  return GaussianMixture(std::move(comps));
}

Vector scalings(const GaussianMixture& mixture) {
  Vector s(mixture.size());
  for (int l = 0; l < mixture.size(); ++l) {
    s[l] = mixture.component(l).weight() * mixture.component(l).sqrt_info_det();
  }
  return s;
}

Vector exponents(const GaussianMixture& mixture, const Vector& r) {
  if (r.size() != mixture.dimension()) {
    throw std::invalid_argument("residual dimension does not match mixture");
  }
  Vector e(mixture.size());
  for (int l = 0; l < mixture.size(); ++l) {
    const auto& c = mixture.component(l);
    e[l] = -0.5 * (c.sqrt_info() * (r - c.mean())).squaredNorm();
  }
  return e;
}

ScaledExponents scaled_exponents(const GaussianMixture& mixture,
                                 const Vector& r) {
  ScaledExponents se;
  se.scalings = scalings(mixture);
  se.exponents = exponents(mixture, r);
  se.dominant = dominant_component(se.scalings, se.exponents);
  return se;
}

Eigen::Index dominant_component(const Vector& scalings,
                                const Vector& exponents) {
  if (scalings.size() == 0 || scalings.size() != exponents.size()) {
    throw std::invalid_argument("scalings/exponents must be nonempty and equal length");
  }
  Eigen::Index best = 0;
  double best_log = std::log(scalings[0]) + exponents[0];
  for (Eigen::Index l = 1; l < scalings.size(); ++l) {
    const double v = std::log(scalings[l]) + exponents[l];
    if (v > best_log) {
      best_log = v;
      best = l;
    }
  }
  return best;
}

double log_sum_exp_robust(const Vector& scalings, const Vector& exponents) {
  const Eigen::Index k = dominant_component(scalings, exponents);
  // Every term s_l exp(e_l - e_k) is bounded by s_k, so the sum never
  // overflows and the dominant term keeps it from underflowing to zero.
  double sum = 0.0;
  for (Eigen::Index l = 0; l < scalings.size(); ++l) {
    sum += std::exp(std::log(scalings[l]) + exponents[l] - exponents[k]);
  }
  return exponents[k] + std::log(sum);
}

double negative_log_likelihood(const GaussianMixture& mixture,
                               const Vector& r) {
  const ScaledExponents se = scaled_exponents(mixture, r);
  return -log_sum_exp_robust(se.scalings, se.exponents);
}

Vector nll_gradient(const GaussianMixture& mixture, const Vector& r) {
  const ScaledExponents se = scaled_exponents(mixture, r);
  const Eigen::Index k = se.dominant;
  Vector grad = Vector::Zero(mixture.dimension());
  double total = 0.0;
  for (int l = 0; l < mixture.size(); ++l) {
    const auto& c = mixture.component(l);
    const double t =
        std::exp(std::log(se.scalings[l]) + se.exponents[l] - se.exponents[k]);
    grad += t * (c.info() * (r - c.mean()));
    total += t;
  }
  return grad / total;
}

Matrix nll_hessian(const GaussianMixture& mixture, const Vector& r) {
  const ScaledExponents se = scaled_exponents(mixture, r);
  const Eigen::Index k = se.dominant;
  const int d = mixture.dimension();
  Matrix h = Matrix::Zero(d, d);
  Vector mean_pull = Vector::Zero(d);
  double total = 0.0;
  std::vector<Vector> pulls(mixture.size());
  std::vector<double> terms(mixture.size());
  for (int l = 0; l < mixture.size(); ++l) {
    const auto& c = mixture.component(l);
    terms[l] =
        std::exp(std::log(se.scalings[l]) + se.exponents[l] - se.exponents[k]);
    pulls[l] = c.info() * (r - c.mean());
    total += terms[l];
  }
  for (int l = 0; l < mixture.size(); ++l) {
    const double q = terms[l] / total;
    h += q * (mixture.component(l).info() - pulls[l] * pulls[l].transpose());
    mean_pull += q * pulls[l];
  }
  h += mean_pull * mean_pull.transpose();
  return h;
}

SearchRegion SearchRegion::cube(int dimension, double half_extent) {
  SearchRegion region;
  region.lo = Vector::Constant(dimension, -half_extent);
  region.hi = Vector::Constant(dimension, half_extent);
  return region;
}

RefinementResult refine_nll_minimum(const GaussianMixture& mixture,
                                    const Vector& start,
                                    double gradient_tolerance,
                                    int max_iterations) {
  RefinementResult result;
  result.x = start;
  result.nll = negative_log_likelihood(mixture, result.x);
  double tau = 1e-8;
  const int d = mixture.dimension();
  for (int it = 0; it < max_iterations; ++it) {
    const Vector g = nll_gradient(mixture, result.x);
    result.gradient_norm = g.norm();
    if (result.gradient_norm < gradient_tolerance) {
      result.converged = true;
      return result;
    }
    const Matrix h = nll_hessian(mixture, result.x);
    bool stepped = false;
    for (int attempt = 0; attempt < 60 && !stepped; ++attempt) {
      Matrix damped = h + tau * Matrix::Identity(d, d);
      Eigen::LDLT<Matrix> ldlt(damped);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        const Vector dx = ldlt.solve(-g);
        const Vector candidate = result.x + dx;
        const double candidate_nll = negative_log_likelihood(mixture, candidate);
        if (std::isfinite(candidate_nll) && candidate_nll < result.nll) {
          result.x = candidate;
          result.nll = candidate_nll;
          tau = std::max(tau / 3.0, 1e-12);
          stepped = true;
          break;
        }
      }
      tau *= 10.0;
    }
    if (!stepped) {
      break;  // damping exhausted; report the best point found
    }
  }
  result.gradient_norm = nll_gradient(mixture, result.x).norm();
  result.converged = result.gradient_norm < gradient_tolerance;
  return result;
}

namespace {

// Allocation-free NLL evaluator for tight grid loops.
class NllScan {
 public:
  explicit NllScan(const GaussianMixture& mixture)
      : mixture_(mixture),
        log_s_(mixture.size()),
        log_terms_(mixture.size()),
        diff_(mixture.dimension()),
        whitened_(mixture.dimension()) {
    const Vector s = scalings(mixture);
    for (int l = 0; l < mixture.size(); ++l) {
      log_s_[l] = std::log(s[l]);
    }
  }

  double operator()(const Vector& x) {
    double top = -std::numeric_limits<double>::infinity();
    for (int l = 0; l < mixture_.size(); ++l) {
      const auto& c = mixture_.component(l);
      diff_ = x - c.mean();
      whitened_.noalias() = c.sqrt_info() * diff_;
      log_terms_[l] = log_s_[l] - 0.5 * whitened_.squaredNorm();
      top = std::max(top, log_terms_[l]);
    }
    double sum = 0.0;
    for (int l = 0; l < mixture_.size(); ++l) {
      sum += std::exp(log_terms_[l] - top);
    }
    return -(top + std::log(sum));
  }

 private:
  const GaussianMixture& mixture_;
  std::vector<double> log_s_;
  std::vector<double> log_terms_;
  Vector diff_;
  Vector whitened_;
};

// Calls fn(index_vector) for every grid node of the region at the given
// resolution. Grid coordinates are lo + i * resolution per axis.
template <typename Fn>
void for_each_grid_point(const SearchRegion& region, double resolution,
                         Fn&& fn) {
  const int d = static_cast<int>(region.lo.size());
  std::vector<int> counts(d);
  for (int a = 0; a < d; ++a) {
    counts[a] =
        static_cast<int>(std::floor((region.hi[a] - region.lo[a]) / resolution + 1e-9)) + 1;
  }
  std::vector<int> idx(d, 0);
  Vector x(d);
  while (true) {
    for (int a = 0; a < d; ++a) {
      x[a] = region.lo[a] + idx[a] * resolution;
    }
    fn(idx, x);
    int axis = 0;
    while (axis < d) {
      if (++idx[axis] < counts[axis]) break;
      idx[axis] = 0;
      ++axis;
    }
    if (axis == d) break;
  }
}

std::vector<int> grid_counts(const SearchRegion& region, double resolution) {
  const int d = static_cast<int>(region.lo.size());
  std::vector<int> counts(d);
  for (int a = 0; a < d; ++a) {
    counts[a] =
        static_cast<int>(std::floor((region.hi[a] - region.lo[a]) / resolution + 1e-9)) + 1;
  }
  return counts;
}

}  // namespace

Vector find_global_mode(const GaussianMixture& mixture,
                        const SearchRegion& region, double grid_resolution) {
  if (region.lo.size() != mixture.dimension()) {
    throw std::invalid_argument("search region dimension mismatch");
  }
  double best = std::numeric_limits<double>::infinity();
  Vector best_x = region.lo;
  NllScan nll(mixture);
  for_each_grid_point(region, grid_resolution,
                      [&](const std::vector<int>&, const Vector& x) {
                        const double f = nll(x);
                        if (f < best) {
                          best = f;
                          best_x = x;
                        }
                      });
  return refine_nll_minimum(mixture, best_x).x;
}

int count_local_minima(const GaussianMixture& mixture,
                       const SearchRegion& region, double grid_resolution) {
  const int d = mixture.dimension();
  if (region.lo.size() != d) {
    throw std::invalid_argument("search region dimension mismatch");
  }
  const std::vector<int> counts = grid_counts(region, grid_resolution);

  // Flat NLL table; row-major over the index odometer.
  std::size_t total = 1;
  for (int c : counts) total *= static_cast<std::size_t>(c);
  std::vector<double> nll(total);
  std::vector<std::ptrdiff_t> strides(d, 1);
  for (int a = 1; a < d; ++a) {
    strides[a] = strides[a - 1] * counts[a - 1];
  }
  NllScan scan(mixture);
  for_each_grid_point(region, grid_resolution,
                      [&](const std::vector<int>& idx, const Vector& x) {
                        std::size_t flat = 0;
                        for (int a = 0; a < d; ++a) {
                          flat += idx[a] * strides[a];
                        }
                        nll[flat] = scan(x);
                      });

  // Candidate cells sit at or below every existing neighbor (full Moore
  // neighborhood) and get refined before deduplication.
  std::vector<Vector> minima;
  for_each_grid_point(region, grid_resolution, [&](const std::vector<int>& idx,
                                                   const Vector& x) {
    std::size_t flat = 0;
    for (int a = 0; a < d; ++a) flat += idx[a] * strides[a];
    const double center = nll[flat];

    std::vector<int> nb(d, -1);
    bool is_candidate = true;
    while (is_candidate) {
      bool all_zero = true;
      std::size_t nflat = 0;
      bool valid = true;
      for (int a = 0; a < d; ++a) {
        if (nb[a] != 0) all_zero = false;
        const int j = idx[a] + nb[a];
        if (j < 0 || j >= counts[a]) {
          valid = false;
        } else {
          nflat += static_cast<std::size_t>(j) * strides[a];
        }
      }
      if (!all_zero && valid && nll[nflat] < center) {
        is_candidate = false;
        break;
      }
      int axis = 0;
      while (axis < d) {
        if (++nb[axis] <= 1) break;
        nb[axis] = -1;
        ++axis;
      }
      if (axis == d) break;
    }
    if (!is_candidate) return;

    const RefinementResult refined = refine_nll_minimum(mixture, x);
    // Refinements that escape the (slightly padded) region are out of scope.
    for (int a = 0; a < d; ++a) {
      if (refined.x[a] < region.lo[a] - grid_resolution ||
          refined.x[a] > region.hi[a] + grid_resolution) {
        return;
      }
    }
    for (const Vector& m : minima) {
      if ((m - refined.x).norm() < 1e-3) return;
    }
    minima.push_back(refined.x);
  });
  return static_cast<int>(minima.size());
}

Vector sample_mixture(const GaussianMixture& mixture, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  double cumulative = 0.0;
  int chosen = mixture.size() - 1;
  for (int l = 0; l < mixture.size(); ++l) {
    cumulative += mixture.component(l).weight();
    if (u <= cumulative) {
      chosen = l;
      break;
    }
  }
  const auto& c = mixture.component(chosen);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector z(c.dimension());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    z[i] = gauss(rng);
  }
  // x = mean + U^{-1} z has covariance (U^T U)^{-1}.
  return c.mean() +
         c.sqrt_info().triangularView<Eigen::Upper>().solve(z);
}

}  // namespace mixls
