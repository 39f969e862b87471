#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace mixls {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// One weighted Gaussian. The noise model is stored as the canonical
/// upper-triangular square-root information matrix U with positive diagonal,
/// so that U^T U is the information matrix and ||U (r - mean)|| is the
/// Mahalanobis distance.
class GaussianComponent {
 public:
  GaussianComponent(double weight, Vector mean, Matrix sqrt_info);

  /// Builds the component from a covariance matrix (inverted and factored
  /// into the canonical upper-triangular form at construction).
  static GaussianComponent from_covariance(double weight, Vector mean,
                                           const Matrix& covariance);

  /// Axis-aligned component from per-axis standard deviations.
  static GaussianComponent from_stddev(double weight, Vector mean,
                                       const Vector& sigma);

  double weight() const { return weight_; }
  const Vector& mean() const { return mean_; }
  const Matrix& sqrt_info() const { return sqrt_info_; }
  /// Full information matrix U^T U.
  const Matrix& info() const { return info_; }
  /// det(U), the product of the (positive) diagonal.
  double sqrt_info_det() const { return sqrt_info_det_; }
  int dimension() const { return static_cast<int>(mean_.size()); }

  /// Covariance (U^T U)^{-1}; computed on demand, used by sampling tests.
  Matrix covariance() const;

 private:
  friend class GaussianMixture;
  double weight_;
  Vector mean_;
  Matrix sqrt_info_;
  Matrix info_;
  double sqrt_info_det_;
};

/// Immutable Gaussian mixture. Weights are renormalized to sum to one at
/// construction; all components must share one dimension.
class GaussianMixture {
 public:
  explicit GaussianMixture(std::vector<GaussianComponent> components);

  int dimension() const { return dimension_; }
  int size() const { return static_cast<int>(components_.size()); }
  const GaussianComponent& component(int l) const { return components_[l]; }
  const std::vector<GaussianComponent>& components() const {
    return components_;
  }

  nlohmann::json to_json() const;
  static GaussianMixture from_json(const nlohmann::json& j);

 private:
  std::vector<GaussianComponent> components_;
  int dimension_;
};

/// Per-component scalings s_l = w_l det(U_l) and exponents
/// e_l = -1/2 ||U_l (r - mean_l)||^2, plus the index of the component with
/// the largest s_l exp(e_l).
struct ScaledExponents {
  Vector scalings;
  Vector exponents;
  Eigen::Index dominant;
};

Vector scalings(const GaussianMixture& mixture);
Vector exponents(const GaussianMixture& mixture, const Vector& r);
ScaledExponents scaled_exponents(const GaussianMixture& mixture,
                                 const Vector& r);

/// argmax_l s_l exp(e_l), evaluated as argmax of log(s_l) + e_l.
/// Ties resolve to the lowest index.
Eigen::Index dominant_component(const Vector& scalings,
                                const Vector& exponents);

/// log sum_l s_l exp(e_l) without underflow: the dominant exponent is pulled
/// out so every remaining term is bounded by the dominant scaling.
double log_sum_exp_robust(const Vector& scalings, const Vector& exponents);

/// Exact (unnormalized) negative log-likelihood -log sum_l s_l exp(e_l(r)).
double negative_log_likelihood(const GaussianMixture& mixture,
                               const Vector& r);

Vector nll_gradient(const GaussianMixture& mixture, const Vector& r);
Matrix nll_hessian(const GaussianMixture& mixture, const Vector& r);

/// Axis-aligned search box, one [lo, hi] interval per dimension.
struct SearchRegion {
  Vector lo;
  Vector hi;

  static SearchRegion cube(int dimension, double half_extent);
};

struct RefinementResult {
  Vector x;
  double nll;
  double gradient_norm;
  bool converged;
};

/// Damped Newton descent on the exact negative log-likelihood.
RefinementResult refine_nll_minimum(const GaussianMixture& mixture,
                                    const Vector& start,
                                    double gradient_tolerance = 1e-10,
                                    int max_iterations = 200);

/// Grid scan of the negative log-likelihood followed by local refinement of
/// the best cell. Practical for dimensions 1 and 2.
Vector find_global_mode(const GaussianMixture& mixture,
                        const SearchRegion& region, double grid_resolution);

/// Number of distinct local minima of the negative log-likelihood inside
/// the region: grid points at or below all neighbors are refined and
/// deduplicated within 1e-3.
int count_local_minima(const GaussianMixture& mixture,
                       const SearchRegion& region, double grid_resolution);

/// Draws one sample: component by weight, then a Gaussian draw transformed
/// through the inverse square-root information.
Vector sample_mixture(const GaussianMixture& mixture, std::mt19937_64& rng);

}  // namespace mixls
