#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>

namespace nvmag {

// Damped least squares on a residual vector r(p); minimizes sum r_i^2.
struct LmOptions {
  int max_iterations = 500;
  double relative_cost_tolerance = 1e-10;
  double initial_lambda = 1e-3;
  // Central-difference step is jacobian_step * scale_j for parameter j.
  double jacobian_step = 1e-6;
};

struct LmResult {
  Eigen::VectorXd params;
  // sigma^2 (J^T J)^-1 with sigma^2 = cost / (m - n); empty if singular.
  Eigen::MatrixXd covariance;
  double cost = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;

  double sigma(Eigen::Index j) const;
};

using ResidualFunction = std::function<void(const Eigen::VectorXd& p, Eigen::VectorXd& r)>;
using JacobianFunction = std::function<void(const Eigen::VectorXd& p, Eigen::MatrixXd& jac)>;

class LevenbergMarquardt {
 public:
  LevenbergMarquardt(ResidualFunction residual, Eigen::Index residual_count,
                     LmOptions options = {});

  // Analytic Jacobian; otherwise central differences are used.
  void set_jacobian(JacobianFunction jacobian) { jacobian_ = std::move(jacobian); }
  // Typical magnitude of each parameter for finite-difference steps.
  void set_parameter_scale(Eigen::VectorXd scale) { scale_ = std::move(scale); }

  LmResult minimize(const Eigen::VectorXd& start) const;

  void numeric_jacobian(const Eigen::VectorXd& p, Eigen::MatrixXd& jac) const;

 private:
  double step_for(const Eigen::VectorXd& p, Eigen::Index j) const;

  ResidualFunction residual_;
  JacobianFunction jacobian_;
  Eigen::Index m_;
  LmOptions options_;
  Eigen::VectorXd scale_;
};

}  // namespace nvmag
