#pragma once

#include <Eigen/Core>

#include <functional>

namespace iuq {

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Derivative-free simplex minimization. Small dimension only; used for
/// kernel hyperparameter search and posterior mode finding in tests.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, double initial_step = 0.5,
                             int max_evaluations = 500, double tol = 1e-8);

}  // namespace iuq
