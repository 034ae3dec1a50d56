#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace gfl {

// Fixed-order compensated (Kahan-Neumaier) summation. All integral reductions
// in the library go through this so results are identical run to run.
inline double kahan_sum(const Eigen::ArrayXd& a) {
  double s = 0.0, c = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double x = a[i];
    const double t = s + x;
    if (std::abs(s) >= std::abs(x))
      c += (s - t) + x;
    else
      c += (x - t) + s;
    s = t;
  }
  return s + c;
}

inline double kahan_dot(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
  return kahan_sum(a * b);
}

// Golden-section search for a scalar quasi-convex function on [lo, hi].
inline double golden_section_minimize(const std::function<double(double)>& f,
                                      double lo, double hi, int iters = 80) {
  static const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int k = 0; k < iters; ++k) {
    if (f1 < f2) {
      b = x2; x2 = x1; f2 = f1;
      x1 = b - phi * (b - a); f1 = f(x1);
    } else {
      a = x1; x1 = x2; f1 = f2;
      x2 = a + phi * (b - a); f2 = f(x2);
    }
  }
  const double xm = 0.5 * (a + b);
  return std::min({f(xm), f(lo), f(hi)});
}

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Gauss-Legendre rule on [0, 1] by Golub-Welsch.
inline QuadratureRule gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: need n >= 1");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int k = 0; k < n; ++k) {
    rule.nodes[k] = 0.5 * (es.eigenvalues()[k] + 1.0);
    rule.weights[k] = es.eigenvectors()(0, k) * es.eigenvectors()(0, k);
  }
  return rule;
}

// Gauss-Hermite rule for the standard Gaussian weight exp(-y^2/2)/sqrt(2*pi).
inline QuadratureRule gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: need n >= 1");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(double(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int k = 0; k < n; ++k) {
    rule.nodes[k] = es.eigenvalues()[k];
    rule.weights[k] = es.eigenvectors()(0, k) * es.eigenvectors()(0, k);
  }
  return rule;
}

// Chebyshev-Gauss rule, exact for integrals with the arcsine weight
// 1/sqrt(sigma*(alpha-sigma)) on (0, alpha).
inline double arcsine_integral(const std::function<double(double)>& f,
                               double alpha, int n) {
  double s = 0.0;
  for (int k = 1; k <= n; ++k) {
    const double theta = M_PI * (2.0 * k - 1.0) / (2.0 * n);
    const double sigma = 0.5 * alpha * (1.0 + std::cos(theta));
    s += f(sigma);
  }
  return s * M_PI / n;
}

// Least-squares slope of log(y) against log(x); the empirical convergence
// order of a refinement ladder.
inline double loglog_slope(const std::vector<double>& x,
                           const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("loglog_slope: need matched ladders, size >= 2");
  const int n = int(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const double lx = std::log(x[i]), ly = std::log(std::max(y[i], 1e-300));
    sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace gfl
