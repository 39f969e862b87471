#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mixls/loss.hpp"

namespace mixls {

/// Levenberg-Marquardt settings. Tolerances are kept identical across all
/// loss functions so their comparisons stay fair.
struct SolverConfig {
  int max_iterations = 200;
  double initial_lambda = 1e-4;
  double lambda_up = 2.0;
  double lambda_down = 1.0 / 3.0;
  double gradient_tolerance = 1e-10;
  double cost_change_tolerance = 1e-8;  // relative
  double parameter_tolerance = 1e-10;
};

enum class Termination { kGradient, kCostChange, kParameterChange, kMaxIterations };

std::string termination_name(Termination t);

struct SolverReport {
  int iterations = 0;  // linear solves attempted (accepted + rejected steps)
  Termination termination = Termination::kMaxIterations;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  Vector final_state;
  double wall_time_us = 0.0;

  nlohmann::json to_json() const;
};

/// Describes how local increments retract onto the ambient state vector.
class StateSpace {
 public:
  virtual ~StateSpace() = default;
  virtual int ambient_size() const = 0;
  virtual int tangent_size() const = 0;
  virtual void retract(Vector& x, const Vector& dx) const = 0;
};

class EuclideanSpace final : public StateSpace {
 public:
  explicit EuclideanSpace(int n) : n_(n) {}
  int ambient_size() const override { return n_; }
  int tangent_size() const override { return n_; }
  void retract(Vector& x, const Vector& dx) const override { x += dx; }

 private:
  int n_;
};

/// Rigid 3D pose stored as [t(3), q(w,x,y,z)]. Increments are
/// [dt(3), dtheta(3)] composed right-multiplicatively onto the rotation;
/// the quaternion is renormalized after every retraction.
class Pose3Space final : public StateSpace {
 public:
  int ambient_size() const override { return 7; }
  int tangent_size() const override { return 6; }
  void retract(Vector& x, const Vector& dx) const override;

  static Vector encode(const Vector& translation, const Matrix& rotation);
  static void decode(const Vector& x, Vector& translation, Matrix& rotation);
};

/// One term of the objective: evaluates the robustified residual rho(r(x))
/// and its Jacobian with respect to the state-space tangent.
class ResidualBlock {
 public:
  virtual ~ResidualBlock() = default;
  virtual int value_size() const = 0;
  /// jacobian may be nullptr for cost-only evaluation.
  virtual void evaluate(const Vector& x, Vector& value,
                        Matrix* jacobian) const = 0;
  virtual std::string name() const { return "block"; }
};

/// Linear residual r(x) = A x - b with an optional loss on top.
class AffineBlock final : public ResidualBlock {
 public:
  AffineBlock(Matrix a, Vector b, std::shared_ptr<const Loss> loss = nullptr);
  int value_size() const override;
  void evaluate(const Vector& x, Vector& value, Matrix* jacobian) const override;
  std::string name() const override { return "affine"; }

 private:
  Matrix a_;
  Vector b_;
  std::shared_ptr<const Loss> loss_;
};

/// Applies a loss directly to the state vector (residual r(x) = x); the
/// building block of the plain-optimization study.
class StateLossBlock final : public ResidualBlock {
 public:
  StateLossBlock(std::shared_ptr<const Loss> loss, int state_dim);
  int value_size() const override;
  void evaluate(const Vector& x, Vector& value, Matrix* jacobian) const override;
  std::string name() const override;

 private:
  std::shared_ptr<const Loss> loss_;
  int state_dim_;
};

class LeastSquaresProblem {
 public:
  explicit LeastSquaresProblem(std::shared_ptr<const StateSpace> space);

  void add_block(std::shared_ptr<const ResidualBlock> block);
  int block_count() const { return static_cast<int>(blocks_.size()); }
  const ResidualBlock& block(int i) const { return *blocks_[i]; }
  const StateSpace& space() const { return *space_; }

  /// Sum over blocks of half the squared loss value. Throws with the
  /// offending block's name if any evaluation is non-finite.
  double evaluate_total_cost(const Vector& x) const;

  /// Stacks all loss values and tangent Jacobians.
  void linearize(const Vector& x, Vector& values, Matrix& jacobian) const;

  int total_value_size() const;

 private:
  std::shared_ptr<const StateSpace> space_;
  std::vector<std::shared_ptr<const ResidualBlock>> blocks_;
};

/// Dense Levenberg-Marquardt on the stacked robustified residuals.
SolverReport solve(const LeastSquaresProblem& problem, const Vector& x0,
                   const SolverConfig& config = {});

struct CovarianceResult {
  /// Tangent-space covariance (J^T J)^{-1}; empty when rank-deficient.
  std::optional<Matrix> covariance;
  int rank = 0;
  int dimension = 0;
};

/// Recovers the pseudo-Hessian inverse at a converged state. Singular
/// normal matrices are reported as rank-deficient, never pseudo-inverted.
CovarianceResult recover_covariance(const LeastSquaresProblem& problem,
                                    const Vector& state);

}  // namespace mixls
