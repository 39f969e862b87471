#include "mixls/solver.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace mixls {

std::string termination_name(Termination t) {
  switch (t) {
    case Termination::kGradient:
      return "gradient";
    case Termination::kCostChange:
      return "cost-change";
    case Termination::kParameterChange:
      return "parameter-change";
    case Termination::kMaxIterations:
      return "max-iterations";
  }
  return "unknown";
}

nlohmann::json SolverReport::to_json() const {
  return nlohmann::json{{"iterations", iterations},
                        {"termination", termination_name(termination)},
                        {"final_cost", final_cost},
                        {"wall_time_us", wall_time_us}};
}

void Pose3Space::retract(Vector& x, const Vector& dx) const {
  x.head<3>() += dx.head<3>();
  Eigen::Quaterniond q(x[3], x[4], x[5], x[6]);
  const Eigen::Vector3d theta = dx.tail<3>();
  const double angle = theta.norm();
  Eigen::Quaterniond dq = Eigen::Quaterniond::Identity();
  if (angle > 0.0) {
    dq = Eigen::Quaterniond(Eigen::AngleAxisd(angle, theta / angle));
  }
  q = (q * dq).normalized();
  x[3] = q.w();
  x[4] = q.x();
  x[5] = q.y();
  x[6] = q.z();
}

Vector Pose3Space::encode(const Vector& translation, const Matrix& rotation) {
  const Eigen::Matrix3d rot = rotation;
  Eigen::Quaterniond q(rot);
  q.normalize();
  Vector x(7);
  x.head<3>() = translation;
  x[3] = q.w();
  x[4] = q.x();
  x[5] = q.y();
  x[6] = q.z();
  return x;
}

void Pose3Space::decode(const Vector& x, Vector& translation, Matrix& rotation) {
  translation = x.head<3>();
  Eigen::Quaterniond q(x[3], x[4], x[5], x[6]);
  rotation = q.normalized().toRotationMatrix();
}

AffineBlock::AffineBlock(Matrix a, Vector b, std::shared_ptr<const Loss> loss)
    : a_(std::move(a)), b_(std::move(b)), loss_(std::move(loss)) {
  if (a_.rows() != b_.size()) {
    throw std::invalid_argument("affine block shape mismatch");
  }
}

int AffineBlock::value_size() const {
  const int rows = static_cast<int>(a_.rows());
  return loss_ ? loss_->value_size(rows) : rows;
}

void AffineBlock::evaluate(const Vector& x, Vector& value,
                           Matrix* jacobian) const {
  const Vector r = a_ * x - b_;
  if (!loss_) {
    value = r;
    if (jacobian) *jacobian = a_;
    return;
  }
  const LossEvaluation le = loss_->evaluate(r);
  value = le.value;
  if (jacobian) *jacobian = le.jacobian * a_;
}

StateLossBlock::StateLossBlock(std::shared_ptr<const Loss> loss, int state_dim)
    : loss_(std::move(loss)), state_dim_(state_dim) {
  if (!loss_) {
    throw std::invalid_argument("state loss block needs a loss");
  }
}

int StateLossBlock::value_size() const { return loss_->value_size(state_dim_); }

std::string StateLossBlock::name() const { return loss_->name() + "-state"; }

void StateLossBlock::evaluate(const Vector& x, Vector& value,
                              Matrix* jacobian) const {
  const LossEvaluation le = loss_->evaluate(x);
  value = le.value;
  if (jacobian) *jacobian = le.jacobian;
}

LeastSquaresProblem::LeastSquaresProblem(std::shared_ptr<const StateSpace> space)
    : space_(std::move(space)) {
  if (!space_) {
    throw std::invalid_argument("problem needs a state space");
  }
}

void LeastSquaresProblem::add_block(std::shared_ptr<const ResidualBlock> block) {
  if (!block) {
    throw std::invalid_argument("null residual block");
  }
  blocks_.push_back(std::move(block));
}

int LeastSquaresProblem::total_value_size() const {
  int n = 0;
  for (const auto& b : blocks_) n += b->value_size();
  return n;
}

double LeastSquaresProblem::evaluate_total_cost(const Vector& x) const {
  double cost = 0.0;
  Vector value;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    blocks_[i]->evaluate(x, value, nullptr);
    const double c = 0.5 * value.squaredNorm();
    if (!std::isfinite(c)) {
      throw std::runtime_error("non-finite cost in block " + std::to_string(i) +
                               " (" + blocks_[i]->name() + ")");
    }
    cost += c;
  }
  return cost;
}

void LeastSquaresProblem::linearize(const Vector& x, Vector& values,
                                    Matrix& jacobian) const {
  const int rows = total_value_size();
  const int cols = space_->tangent_size();
  values.resize(rows);
  jacobian.resize(rows, cols);
  int row = 0;
  Vector value;
  Matrix jac;
  for (const auto& b : blocks_) {
    b->evaluate(x, value, &jac);
    values.segment(row, value.size()) = value;
    jacobian.middleRows(row, jac.rows()) = jac;
    row += static_cast<int>(value.size());
  }
}

SolverReport solve(const LeastSquaresProblem& problem, const Vector& x0,
                   const SolverConfig& config) {
  const auto start_time = std::chrono::steady_clock::now();
  const auto& space = problem.space();
  if (x0.size() != space.ambient_size()) {
    throw std::invalid_argument("initial state size mismatch");
  }

  SolverReport report;
  Vector x = x0;
  double cost = problem.evaluate_total_cost(x);  // throws if non-finite
  report.initial_cost = cost;
  report.termination = Termination::kMaxIterations;

  double lambda = config.initial_lambda;
  Vector values;
  Matrix jacobian;

  int iteration = 0;
  while (iteration < config.max_iterations) {
    problem.linearize(x, values, jacobian);
    const Vector gradient = jacobian.transpose() * values;
    if (gradient.lpNorm<Eigen::Infinity>() <= config.gradient_tolerance) {
      report.termination = Termination::kGradient;
      break;
    }
    const Matrix normal = jacobian.transpose() * jacobian;
    Vector scaling = normal.diagonal().cwiseMax(1e-8);

    bool done = false;
    while (iteration < config.max_iterations) {
      ++iteration;
      Matrix damped = normal;
      damped.diagonal() += lambda * scaling;
      Eigen::LDLT<Matrix> ldlt(damped);
      Vector step;
      bool usable = ldlt.info() == Eigen::Success;
      if (usable) {
        step = ldlt.solve(-gradient);
        usable = step.allFinite();
      }
      if (!usable) {
        lambda *= config.lambda_up;
        continue;
      }

      Vector candidate = x;
      space.retract(candidate, step);
      double candidate_cost;
      try {
        candidate_cost = problem.evaluate_total_cost(candidate);
      } catch (const std::runtime_error&) {
        candidate_cost = std::numeric_limits<double>::infinity();
      }

      if (candidate_cost < cost) {
        const double change = cost - candidate_cost;
        x = candidate;
        const double previous = cost;
        cost = candidate_cost;
        lambda = std::max(lambda * config.lambda_down, 1e-12);
        if (step.norm() <= config.parameter_tolerance) {
          report.termination = Termination::kParameterChange;
          done = true;
        } else if (change <= config.cost_change_tolerance *
                                 std::max(previous, 1e-300)) {
          report.termination = Termination::kCostChange;
          done = true;
        }
        break;  // relinearize
      }

      lambda *= config.lambda_up;
      if (step.norm() <= config.parameter_tolerance) {
        // Even the rejected step is below the motion tolerance; larger
        // damping only shrinks it further.
        report.termination = Termination::kParameterChange;
        done = true;
        break;
      }
    }
    if (done) break;
  }

  report.iterations = iteration;
  report.final_cost = cost;
  report.final_state = x;
  report.wall_time_us =
      std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() -
                                                start_time)
          .count();
  return report;
}

CovarianceResult recover_covariance(const LeastSquaresProblem& problem,
                                    const Vector& state) {
  Vector values;
  Matrix jacobian;
  problem.linearize(state, values, jacobian);
  const Matrix normal = jacobian.transpose() * jacobian;

  Eigen::SelfAdjointEigenSolver<Matrix> eigen(normal);
  if (eigen.info() != Eigen::Success) {
    throw std::runtime_error("eigendecomposition of the normal matrix failed");
  }
  const Vector& eigenvalues = eigen.eigenvalues();
  const double largest = eigenvalues.maxCoeff();
  const double threshold = std::max(largest, 1.0) * 1e-12;

  CovarianceResult result;
  result.dimension = static_cast<int>(normal.rows());
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    if (eigenvalues[i] > threshold) ++result.rank;
  }
  if (result.rank < result.dimension) {
    return result;  // rank-deficient, no silent pseudo-inverse
  }
  result.covariance =
      eigen.eigenvectors() *
      eigenvalues.cwiseInverse().asDiagonal() *
      eigen.eigenvectors().transpose();
  return result;
}

}  // namespace mixls
