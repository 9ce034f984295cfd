#pragma once

// Unconstrained minimizers with finite-difference derivatives. Both accept a
// step only when it lowers the objective, so the objective history is
// non-increasing.

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ces_skill::optimize {

struct Options {
  int max_iterations = 500;
  double gradient_tol = 1e-8;
  double step_tol = 1e-12;
  double fd_relative_step = 1e-6;
};

struct Report {
  bool converged = false;
  std::string message;
  int iterations = 0;
  int evaluations = 0;
  double objective = 0.0;
  // BFGS: |grad f|. Levenberg-Marquardt: max_j |J_j'r| / (|J_j| |r|).
  double gradient_norm = 0.0;
  double last_step = 0.0;
  std::vector<double> history;  // objective after each accepted iteration
};

struct Result {
  Eigen::VectorXd x;
  Report report;
};

using ObjectiveFn = std::function<double(const Eigen::VectorXd&)>;
using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

// Central differences with step rel * max(|x_j|, 1).
Eigen::VectorXd fd_gradient(const ObjectiveFn& f, const Eigen::VectorXd& x, double rel = 1e-6);
Eigen::MatrixXd fd_jacobian(const ResidualFn& r, const Eigen::VectorXd& x, double rel = 1e-6);

// BFGS with an Armijo backtracking line search on f.
Result bfgs(const ObjectiveFn& f, Eigen::VectorXd x0, const Options& options = {});

// Levenberg-Marquardt on f(x) = |r(x)|^2. `jacobian` may be empty, in which
// case fd_jacobian is used.
Result levenberg_marquardt(const ResidualFn& r, const JacobianFn& jacobian,
                           Eigen::VectorXd x0, const Options& options = {});

}  // namespace ces_skill::optimize
