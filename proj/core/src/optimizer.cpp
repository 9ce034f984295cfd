#include "ces_skill/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ces_skill::optimize {
namespace {

double fd_step(double x, double rel) { return rel * std::max(std::abs(x), 1.0); }

bool finite(double v) { return std::isfinite(v); }

// Largest cosine between the residual and a Jacobian column; invariant to
// rescaling residuals or parameters.
double scaled_gradient(const Eigen::MatrixXd& J, const Eigen::VectorXd& r,
                       const Eigen::VectorXd& Jtr) {
  const double rn = r.norm();
  if (rn == 0.0) return 0.0;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < J.cols(); ++j) {
    const double cn = J.col(j).norm();
    if (cn > 0.0) worst = std::max(worst, std::abs(Jtr(j)) / (cn * rn));
  }
  return worst;
}

}  // namespace

Eigen::VectorXd fd_gradient(const ObjectiveFn& f, const Eigen::VectorXd& x, double rel) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = fd_step(x(j), rel);
    xp(j) = x(j) + h;
    const double fp = f(xp);
    xp(j) = x(j) - h;
    const double fm = f(xp);
    xp(j) = x(j);
    g(j) = (fp - fm) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd fd_jacobian(const ResidualFn& r, const Eigen::VectorXd& x, double rel) {
  Eigen::MatrixXd jac;
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double h = fd_step(x(j), rel);
    xp(j) = x(j) + h;
    const Eigen::VectorXd rp = r(xp);
    xp(j) = x(j) - h;
    const Eigen::VectorXd rm = r(xp);
    xp(j) = x(j);
    if (j == 0) jac.resize(rp.size(), x.size());
    jac.col(j) = (rp - rm) / (2.0 * h);
  }
  return jac;
}

Result bfgs(const ObjectiveFn& f, Eigen::VectorXd x, const Options& options) {
  Result out;
  Report& rep = out.report;
  const Eigen::Index n = x.size();
  double fx = f(x);
  ++rep.evaluations;
  if (!finite(fx)) {
    rep.message = "objective not finite at the starting point";
    rep.objective = fx;
    out.x = x;
    return out;
  }
  Eigen::VectorXd g = fd_gradient(f, x, options.fd_relative_step);
  rep.evaluations += static_cast<int>(2 * n);
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  rep.history.push_back(fx);

  for (rep.iterations = 0; rep.iterations < options.max_iterations; ++rep.iterations) {
    rep.gradient_norm = g.norm();
    if (rep.gradient_norm < options.gradient_tol) {
      rep.converged = true;
      rep.message = "gradient norm below tolerance";
      break;
    }
    Eigen::VectorXd d = -H * g;
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      H.setIdentity();
      d = -g;
      slope = -g.squaredNorm();
    }
    double t = 1.0;
    double f_new = fx;
    Eigen::VectorXd x_new = x;
    bool accepted = false;
    for (int k = 0; k < 60; ++k) {
      x_new = x + t * d;
      f_new = f(x_new);
      ++rep.evaluations;
      if (finite(f_new) && f_new <= fx + 1e-4 * t * slope && f_new <= fx) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    const Eigen::VectorXd s = x_new - x;
    rep.last_step = s.norm();
    if (!accepted) {
      rep.converged = rep.last_step < options.step_tol * (1.0 + x.norm());
      rep.message = "line search failed to decrease the objective";
      break;
    }
    x = x_new;
    fx = f_new;
    rep.history.push_back(fx);
    const Eigen::VectorXd g_new = fd_gradient(f, x, options.fd_relative_step);
    rep.evaluations += static_cast<int>(2 * n);
    const Eigen::VectorXd y = g_new - g;
    g = g_new;
    if (rep.last_step < options.step_tol * (1.0 + x.norm())) {
      rep.converged = true;
      rep.message = "step below tolerance";
      ++rep.iterations;
      break;
    }
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double inv = 1.0 / sy;
      const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
      H = (I - inv * s * y.transpose()) * H * (I - inv * y * s.transpose()) +
          inv * s * s.transpose();
    }
  }
  if (!rep.converged && rep.message.empty()) rep.message = "iteration limit reached";
  rep.objective = fx;
  rep.gradient_norm = g.norm();
  out.x = x;
  return out;
}

Result levenberg_marquardt(const ResidualFn& r, const JacobianFn& jacobian,
                           Eigen::VectorXd x, const Options& options) {
  Result out;
  Report& rep = out.report;
  const auto jac_at = [&](const Eigen::VectorXd& p) {
    return jacobian ? jacobian(p) : fd_jacobian(r, p, options.fd_relative_step);
  };
  Eigen::VectorXd res = r(x);
  ++rep.evaluations;
  double fx = res.squaredNorm();
  if (!finite(fx)) {
    rep.message = "objective not finite at the starting point";
    rep.objective = fx;
    out.x = x;
    return out;
  }
  rep.history.push_back(fx);
  Eigen::MatrixXd J = jac_at(x);
  Eigen::MatrixXd JtJ = J.transpose() * J;
  Eigen::VectorXd Jtr = J.transpose() * res;
  double damping = 1e-3 * std::max(JtJ.diagonal().maxCoeff(), 1e-12);
  double nu = 2.0;

  for (rep.iterations = 0; rep.iterations < options.max_iterations; ++rep.iterations) {
    rep.gradient_norm = scaled_gradient(J, res, Jtr);
    if (rep.gradient_norm < options.gradient_tol) {
      rep.converged = true;
      rep.message = "gradient norm below tolerance";
      break;
    }
    Eigen::VectorXd scale = JtJ.diagonal().cwiseMax(1e-12 * std::max(1.0, JtJ.diagonal().maxCoeff()));
    bool accepted = false;
    Eigen::VectorXd step;
    while (damping < 1e32) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal() += damping * scale;
      step = A.ldlt().solve(-Jtr);
      if (!step.allFinite()) {
        damping *= nu;
        nu *= 2.0;
        continue;
      }
      const Eigen::VectorXd x_new = x + step;
      const Eigen::VectorXd res_new = r(x_new);
      ++rep.evaluations;
      const double f_new = res_new.squaredNorm();
      const double predicted = -(2.0 * step.dot(Jtr) + step.dot(JtJ * step));
      if (finite(f_new) && f_new < fx) {
        const double gain = predicted > 0.0 ? (fx - f_new) / predicted : 0.0;
        damping *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * gain - 1.0, 3));
        nu = 2.0;
        x = x_new;
        res = res_new;
        fx = f_new;
        accepted = true;
        break;
      }
      if (step.norm() < options.step_tol * (1.0 + x.norm())) break;
      damping *= nu;
      nu *= 2.0;
    }
    rep.last_step = step.size() ? step.norm() : 0.0;
    if (!accepted) {
      rep.converged = rep.last_step < options.step_tol * (1.0 + x.norm()) ||
                      fx == 0.0;
      rep.message = rep.converged ? "step below tolerance"
                                  : "no step lowers the objective";
      break;
    }
    rep.history.push_back(fx);
    J = jac_at(x);
    JtJ = J.transpose() * J;
    Jtr = J.transpose() * res;
    if (rep.last_step < options.step_tol * (1.0 + x.norm())) {
      rep.converged = true;
      rep.message = "step below tolerance";
      ++rep.iterations;
      break;
    }
  }
  if (!rep.converged && rep.message.empty()) rep.message = "iteration limit reached";
  rep.objective = fx;
  rep.gradient_norm = scaled_gradient(J, res, Jtr);
  out.x = x;
  return out;
}

}  // namespace ces_skill::optimize
