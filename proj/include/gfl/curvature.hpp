#pragma once

#include <map>

#include "gfl/calculus.hpp"

namespace gfl {

// I_K(t) = (e^{Kt} - 1)/K, with the K -> 0 limit t handled exactly.
double curvature_integral(double K, double t);

// Worst violation of one curvature inequality over probes x times. Defects
// are positive parts, relative to the probe's own gradient scale.
struct CurvatureReport {
  std::string check;
  double K = 0.0;
  double worst_defect = 0.0;
  int worst_probe = -1;
  double worst_t = 0.0;
  int probe_count = 0;
  int t_count = 0;
  nlohmann::json table;  // per (probe, t) defects
};

// Gamma(P_t f) <= e^{-2Kt} P_t(Gamma f).
CurvatureReport be2_check(const Space& space, double K,
                          const std::vector<Field>& probes,
                          const std::vector<double>& t_grid);

// sqrt(Gamma(P_t f)) <= e^{-Kt} P_t(sqrt(Gamma f)); negative round-off in
// Gamma clamped at 0 before the root.
CurvatureReport be1_check(const Space& space, double K,
                          const std::vector<Field>& probes,
                          const std::vector<double>& t_grid);

struct ReversePoincareReport {
  CurvatureReport base;  // 2 I_{2K}(t) Gamma(P_t f) <= P_t(f^2) - (P_t f)^2
  std::map<double, double> c_p;  // p -> sup ||sqrt(Gamma P_t f)||_p sqrt(t^1) / ||f||_p
};

ReversePoincareReport reverse_poincare_check(const Space& space, double K,
                                             const std::vector<Field>& probes,
                                             const std::vector<double>& t_grid);

// sup over probes of ||Gamma f||_p / (||f||_inf ||Delta f + lambda f||_p),
// probes with vanishing denominator skipped. Requires lambda >= max(-K, 0).
double gradient_interpolation_check(const Space& space, double K, double lambda,
                                    const std::vector<Field>& probes, double p);

// int [ -Gamma(Gamma f, phi)/2 + (Delta f) Gamma(f, phi)
//       + ((Delta f)^2 - K Gamma f) phi ] dm,  phi >= 0.
// With phi = 1 the first two terms vanish identically and the value reduces
// to int ((Delta f)^2 - K Gamma f) dm.
double gamma2_pairing(const Space& space, double K, const Field& f,
                      const Field& phi);

struct HessianBoundReport {
  double gamma2_integral = 0.0;  // int ((Delta V)^2 - K Gamma V) dm
  double worst_pair_margin = 0.0;  // relative excess of |int H[V](f,g) dm|
  bool pairs_ok = false;
  double deformation_estimate = 0.0;  // probe bound for ||D^sym b_V||_{4,4}
  double deformation_budget = 0.0;    // ||(Delta V)^2 - K Gamma V||_1 + tol
  bool deformation_ok = false;
};

// (i) |int H[V](f,g) dm| <= sqrt(gamma2 integral) ||sqrt(Gamma f)||_4
//     ||sqrt(Gamma g)||_4 (1 + tol) per pair;
// (ii) deformation estimate of the gradient derivation of V within the
//     ||(Delta V)^2 - K Gamma V||_1 budget.
HessianBoundReport hessian_bound_check(
    const Space& space, double K, const Field& V,
    const std::vector<std::pair<Field, Field>>& pairs,
    const ProbeFamily& probes);

nlohmann::json curvature_json(const CurvatureReport& report);

}  // namespace gfl
