#include "mixls/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace mixls {

namespace {

// Shared scaffolding for MM/SM/MSM: scalings, exponents, dominant index and
// the shifted terms t_l = s_l exp(e_l - e_k). Every t_l is bounded by s_k.
struct MixtureTerms {
  ScaledExponents se;
  Vector shifted;  // t_l
  double shifted_sum = 0.0;
};

MixtureTerms mixture_terms(const GaussianMixture& mixture, const Vector& r) {
  MixtureTerms t;
  t.se = scaled_exponents(mixture, r);
  const Eigen::Index k = t.se.dominant;
  t.shifted.resize(mixture.size());
  for (int l = 0; l < mixture.size(); ++l) {
    t.shifted[l] = std::exp(std::log(t.se.scalings[l]) + t.se.exponents[l] -
                            t.se.exponents[k]);
    t.shifted_sum += t.shifted[l];
  }
  return t;
}

}  // namespace

LossEvaluation evaluate_msm(const GaussianMixture& mixture,
                            const MixtureLossConfig& config, const Vector& r) {
  const int d = mixture.dimension();
  const MixtureTerms t = mixture_terms(mixture, r);
  const Eigen::Index k = t.se.dominant;
  const auto& dominant = mixture.component(k);

  const double gamma =
      mixture.size() * t.se.scalings.maxCoeff() + config.damping;
  const double arg = 2.0 * (std::log(gamma) - std::log(t.shifted_sum));
  if (arg < -1e-12) {
    throw std::logic_error("max-sum-mixture square root argument is negative");
  }

  LossEvaluation out;
  out.value.resize(d + 1);
  out.value.head(d) = dominant.sqrt_info() * (r - dominant.mean());
  out.value[d] = std::sqrt(std::max(arg, 0.0));

  out.jacobian.resize(d + 1, d);
  out.jacobian.topRows(d) = dominant.sqrt_info();
  const Vector pull_k = dominant.info() * (r - dominant.mean());
  Vector numerator = Vector::Zero(d);
  for (int l = 0; l < mixture.size(); ++l) {
    const auto& c = mixture.component(l);
    numerator += t.shifted[l] * (c.info() * (r - c.mean()) - pull_k);
  }
  const double denom =
      t.shifted_sum * std::sqrt(std::max(arg, config.sqrt_epsilon));
  out.jacobian.row(d) = numerator.transpose() / denom;
  return out;
}

LossEvaluation evaluate_mm(const GaussianMixture& mixture,
                           const MixtureLossConfig& config, const Vector& r) {
  const int d = mixture.dimension();
  const ScaledExponents se = scaled_exponents(mixture, r);
  const Eigen::Index k = se.dominant;
  const auto& dominant = mixture.component(k);

  const double gamma = se.scalings.maxCoeff() * config.normalization_scale;
  // s_k <= gamma, so the argument is nonnegative.
  const double arg = -2.0 * (std::log(se.scalings[k]) - std::log(gamma));

  LossEvaluation out;
  out.value.resize(d + 1);
  out.value.head(d) = dominant.sqrt_info() * (r - dominant.mean());
  out.value[d] = std::sqrt(std::max(arg, 0.0));

  out.jacobian = Matrix::Zero(d + 1, d);
  out.jacobian.topRows(d) = dominant.sqrt_info();
  return out;
}

LossEvaluation evaluate_sm(const GaussianMixture& mixture,
                           const MixtureLossConfig& config, const Vector& r) {
  const int d = mixture.dimension();
  const MixtureTerms t = mixture_terms(mixture, r);
  const Eigen::Index k = t.se.dominant;

  const double gamma = t.se.scalings.sum() * config.normalization_scale;
  const double arg =
      -2.0 * t.se.exponents[k] -
      2.0 * (std::log(t.shifted_sum) - std::log(gamma));

  LossEvaluation out;
  const double floored = std::max(arg, config.sqrt_epsilon);
  out.value.resize(1);
  out.value[0] = std::sqrt(floored);

  // The shift by exp(e_k) cancels between numerator and denominator, which
  // keeps the quotient finite when every exp(e_l) underflows.
  Vector numerator = Vector::Zero(d);
  for (int l = 0; l < mixture.size(); ++l) {
    const auto& c = mixture.component(l);
    numerator += t.shifted[l] * (c.info() * (r - c.mean()));
  }
  out.jacobian.resize(1, d);
  out.jacobian.row(0) =
      numerator.transpose() / (t.shifted_sum * std::sqrt(floored));
  return out;
}

double dcs_weight(double phi, double squared_norm) {
  return std::min(1.0, 2.0 * phi / (phi + squared_norm));
}

LossEvaluation evaluate_dcs(double phi, const Vector& r) {
  if (!(phi > 0.0)) {
    throw std::invalid_argument("dcs phi must be positive");
  }
  const int d = static_cast<int>(r.size());
  const double chi2 = r.squaredNorm();

  LossEvaluation out;
  if (chi2 <= phi) {
    out.value = r;
    out.jacobian = Matrix::Identity(d, d);
    return out;
  }
  // Outlier region: rescale the residual direction so that half the squared
  // value equals half of the DCS kernel phi (3 chi2 - phi) / (phi + chi2).
  const double kernel = phi * (3.0 * chi2 - phi) / (phi + chi2);
  const double kernel_slope =
      4.0 * phi * phi / ((phi + chi2) * (phi + chi2));  // = weight^2
  const double scale = std::sqrt(kernel / chi2);
  const double scale_slope =
      (kernel_slope * chi2 - kernel) / (2.0 * chi2 * chi2 * scale);
  out.value = scale * r;
  out.jacobian = scale * Matrix::Identity(d, d) +
                 2.0 * scale_slope * (r * r.transpose());
  return out;
}

std::string loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::kMaxMixture:
      return "mm";
    case LossKind::kSumMixture:
      return "sm";
    case LossKind::kMaxSumMixture:
      return "msm";
    case LossKind::kDcs:
      return "dcs";
  }
  return "unknown";
}

LossKind parse_loss_name(const std::string& name) {
  if (name == "mm") return LossKind::kMaxMixture;
  if (name == "sm") return LossKind::kSumMixture;
  if (name == "msm") return LossKind::kMaxSumMixture;
  if (name == "dcs") return LossKind::kDcs;
  throw std::invalid_argument("unknown loss '" + name +
                              "' (valid: mm, sm, msm, dcs)");
}

LossEvaluation IdentityLoss::evaluate(const Vector& r) const {
  LossEvaluation out;
  out.value = r;
  out.jacobian = Matrix::Identity(r.size(), r.size());
  return out;
}

DcsLoss::DcsLoss(double phi) : phi_(phi) {
  if (!(phi > 0.0)) {
    throw std::invalid_argument("dcs phi must be positive");
  }
}

std::unique_ptr<Loss> make_mixture_loss(LossKind kind, GaussianMixture mixture,
                                        const MixtureLossConfig& config,
                                        double dcs_phi) {
  switch (kind) {
    case LossKind::kMaxMixture:
      return std::make_unique<MaxMixtureLoss>(std::move(mixture), config);
    case LossKind::kSumMixture:
      return std::make_unique<SumMixtureLoss>(std::move(mixture), config);
    case LossKind::kMaxSumMixture:
      return std::make_unique<MaxSumMixtureLoss>(std::move(mixture), config);
    case LossKind::kDcs:
      return std::make_unique<DcsLoss>(dcs_phi);
  }
  throw std::invalid_argument("unknown loss kind");
}

double loss_jacobian_fd_check(const Loss& loss, const Vector& r, double step) {
  if (!(step > 0.0)) {
    throw std::invalid_argument("finite-difference step must be positive");
  }
  const LossEvaluation at = loss.evaluate(r);
  double max_dev = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    Vector forward = r;
    Vector backward = r;
    forward[i] += step;
    backward[i] -= step;
    const Vector column =
        (loss.evaluate(forward).value - loss.evaluate(backward).value) /
        (2.0 * step);
    max_dev = std::max(max_dev, (column - at.jacobian.col(i)).cwiseAbs().maxCoeff());
  }
  return max_dev;
}

}  // namespace mixls
