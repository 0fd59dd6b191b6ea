#include "iuq/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace iuq {

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, double initial_step, int max_evaluations,
                             double tol) {
  const int n = static_cast<int>(x0.size());
  const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;

  NelderMeadResult res;
  res.evaluations = 0;

  auto eval = [&](const Eigen::VectorXd& x) {
    ++res.evaluations;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };

  std::vector<Eigen::VectorXd> simplex(n + 1, x0);
  std::vector<double> fv(n + 1);
  for (int i = 0; i < n; ++i) simplex[i + 1](i) += initial_step;
  for (int i = 0; i <= n; ++i) fv[i] = eval(simplex[i]);

  std::vector<int> order(n + 1);
  while (res.evaluations < max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    const int best = order[0], worst = order[n], second_worst = order[n - 1];

    if (std::abs(fv[worst] - fv[best]) <= tol * (std::abs(fv[best]) + tol)) {
      res.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int i = 0; i <= n; ++i) {
      if (i != worst) centroid += simplex[i];
    }
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd reflected = centroid + alpha * (centroid - simplex[worst]);
    const double fr = eval(reflected);

    if (fr < fv[best]) {
      const Eigen::VectorXd expanded = centroid + gamma * (reflected - centroid);
      const double fe = eval(expanded);
      if (fe < fr) {
        simplex[worst] = expanded;
        fv[worst] = fe;
      } else {
        simplex[worst] = reflected;
        fv[worst] = fr;
      }
    } else if (fr < fv[second_worst]) {
      simplex[worst] = reflected;
      fv[worst] = fr;
    } else {
      const Eigen::VectorXd contracted = centroid + rho * (simplex[worst] - centroid);
      const double fc = eval(contracted);
      if (fc < fv[worst]) {
        simplex[worst] = contracted;
        fv[worst] = fc;
      } else {
        for (int i = 0; i <= n; ++i) {
          if (i == best) continue;
          simplex[i] = simplex[best] + sigma * (simplex[i] - simplex[best]);
          fv[i] = eval(simplex[i]);
        }
      }
    }
  }

  int best = 0;
  for (int i = 1; i <= n; ++i) {
    if (fv[i] < fv[best]) best = i;
  }
  res.x = simplex[best];
  res.value = fv[best];
  return res;
}

}  // namespace iuq
