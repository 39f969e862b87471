#pragma once

#include <memory>
#include <string>

#include "mixls/gmm.hpp"

namespace mixls {

/// Stacked loss residual rho(r) together with d rho / d r. Half the squared
/// norm of `value` is the cost contributed by the wrapped residual.
struct LossEvaluation {
  Vector value;
  Matrix jacobian;

  double half_squared_norm() const { return 0.5 * value.squaredNorm(); }
};

/// Shared knobs of the mixture losses.
struct MixtureLossConfig {
  /// Damping delta added to the Max-Sum-Mixture normalization constant.
  double damping = 10.0;
  /// Floor applied inside square roots before dividing by them.
  double sqrt_epsilon = 1e-10;
  /// Multiplier (>= 1) on the tight Max-Mixture / Sum-Mixture normalization
  /// bounds; 1 keeps the bounds tight.
  double normalization_scale = 1.0;
};

/// Max-Sum-Mixture: [ U_k (r - mean_k) ; sqrt(-2 log( sum_l s_l exp(e_l-e_k)
/// / gamma )) ] with gamma = L * max_l s_l + damping. The log argument never
/// exceeds one, so the square root argument stays nonnegative; a violation
/// beyond -1e-12 throws, it cannot come from legitimate inputs.
LossEvaluation evaluate_msm(const GaussianMixture& mixture,
                            const MixtureLossConfig& config, const Vector& r);

/// Max-Mixture: the locally dominant component only, plus the constant
/// normalization entry sqrt(-2 log(s_k / gamma)), gamma = max_l s_l.
LossEvaluation evaluate_mm(const GaussianMixture& mixture,
                           const MixtureLossConfig& config, const Vector& r);

/// Sum-Mixture: scalar sqrt(-2 e_k - 2 log( sum_l s_l exp(e_l-e_k) / gamma ))
/// with gamma = sum_l s_l. The square root argument is floored at
/// sqrt_epsilon; in that regime the Jacobian is evaluated at the floored
/// value (the loss is singular there by construction).
LossEvaluation evaluate_sm(const GaussianMixture& mixture,
                           const MixtureLossConfig& config, const Vector& r);

/// Dynamic Covariance Scaling on an already whitened residual. Inside the
/// quadratic region (|r|^2 <= phi) the residual passes through unchanged;
/// outside it is rescaled so that half the squared value equals the DCS
/// kernel cost phi (3 |r|^2 - phi) / (2 (phi + |r|^2)).
LossEvaluation evaluate_dcs(double phi, const Vector& r);

/// DCS scaling weight min(1, 2 phi / (phi + |r|^2)).
double dcs_weight(double phi, double squared_norm);

enum class LossKind { kMaxMixture, kSumMixture, kMaxSumMixture, kDcs };

std::string loss_name(LossKind kind);
/// Parses "mm", "sm", "msm", "dcs"; throws std::invalid_argument otherwise.
LossKind parse_loss_name(const std::string& name);

/// Polymorphic loss attached to a residual block.
class Loss {
 public:
  virtual ~Loss() = default;
  virtual int value_size(int residual_dim) const = 0;
  virtual LossEvaluation evaluate(const Vector& r) const = 0;
  virtual std::string name() const = 0;
};

/// Passes the residual through untouched (plain Gaussian, pre-whitened).
class IdentityLoss final : public Loss {
 public:
  int value_size(int residual_dim) const override { return residual_dim; }
  LossEvaluation evaluate(const Vector& r) const override;
  std::string name() const override { return "gauss"; }
};

class MaxMixtureLoss final : public Loss {
 public:
  MaxMixtureLoss(GaussianMixture mixture, MixtureLossConfig config)
      : mixture_(std::move(mixture)), config_(config) {}
  int value_size(int residual_dim) const override { return residual_dim + 1; }
  LossEvaluation evaluate(const Vector& r) const override {
    return evaluate_mm(mixture_, config_, r);
  }
  std::string name() const override { return "mm"; }

 private:
  GaussianMixture mixture_;
  MixtureLossConfig config_;
};

class SumMixtureLoss final : public Loss {
 public:
  SumMixtureLoss(GaussianMixture mixture, MixtureLossConfig config)
      : mixture_(std::move(mixture)), config_(config) {}
  int value_size(int) const override { return 1; }
  LossEvaluation evaluate(const Vector& r) const override {
    return evaluate_sm(mixture_, config_, r);
  }
  std::string name() const override { return "sm"; }

 private:
  GaussianMixture mixture_;
  MixtureLossConfig config_;
};

class MaxSumMixtureLoss final : public Loss {
 public:
  MaxSumMixtureLoss(GaussianMixture mixture, MixtureLossConfig config)
      : mixture_(std::move(mixture)), config_(config) {}
  int value_size(int residual_dim) const override { return residual_dim + 1; }
  LossEvaluation evaluate(const Vector& r) const override {
    return evaluate_msm(mixture_, config_, r);
  }
  std::string name() const override { return "msm"; }

 private:
  GaussianMixture mixture_;
  MixtureLossConfig config_;
};

class DcsLoss final : public Loss {
 public:
  explicit DcsLoss(double phi);
  int value_size(int residual_dim) const override { return residual_dim; }
  LossEvaluation evaluate(const Vector& r) const override {
    return evaluate_dcs(phi_, r);
  }
  std::string name() const override { return "dcs"; }

 private:
  double phi_;
};

/// Builds the mixture loss of the requested kind around one mixture.
/// dcs_phi is only used for LossKind::kDcs (the mixture is then ignored
/// apart from its dimension; DCS expects a pre-whitened residual).
std::unique_ptr<Loss> make_mixture_loss(LossKind kind, GaussianMixture mixture,
                                        const MixtureLossConfig& config,
                                        double dcs_phi = 1.0);

/// Max absolute entrywise deviation between the analytical Jacobian and a
/// central finite-difference Jacobian of the loss value.
double loss_jacobian_fd_check(const Loss& loss, const Vector& r, double step);

}  // namespace mixls
