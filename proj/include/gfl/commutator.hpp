#pragma once

#include <ostream>

#include "gfl/calculus.hpp"

namespace gfl {

// C^alpha(u, b) = div((P_alpha u) b) - P_alpha(div(u b)).
Field commutator(const Space& space, const Derivation& b, const Field& u,
                 double alpha, double t = 0.0);

struct CommutatorStudy {
  std::vector<double> alphas;       // strictly decreasing ladder
  std::vector<double> split_norms;  // L^{s'} + L^2
  std::vector<double> l2_norms;
  double q = 0, r = 0, s = 0;
  double u_norm = 0.0;          // ||u||_{L^r cap L^2}
  double dsym_estimate = 0.0;   // probe lower bound for ||D^sym b||_{r,s}
  double div_norm = 0.0;        // ||div b||_{L^q + L^inf}
  double bound_rhs = 0.0;       // u_norm * (dsym_estimate + div_norm)
  double calibrated_c = 0.0;    // max split norm / bound_rhs
  double floor_alpha = 0.0;     // ~ h^2 mesh floor; decay below it stalls
  bool decay_ok = false;        // monotone trend above the floor (5% jitter)
  // The D^sym term is a lower bound from finitely many probe pairs, so the
  // reported c may be an overestimate; always true, kept explicit.
  bool rhs_is_lower_bound = true;
};

// Norms of C^alpha along the ladder plus the uniform-bound calibration.
// Requires 1/q + 1/r + 1/s = 1.
CommutatorStudy decay_study(const Space& space, const Derivation& b,
                            const Field& u, const std::vector<double>& alphas,
                            double q, double r, double s,
                            const ProbeFamily& probes, double t = 0.0);

// |int f C^alpha(u,b) dm - 2 int_0^alpha D^sym b(P_{alpha-s}f, P_s u) dm ds|
// with Gauss-Legendre quadrature in s. Requires ||div b||_inf <= 1e-8.
double interpolation_identity_residual(const Space& space, const Derivation& b,
                                       const Field& u, const Field& f,
                                       double alpha, int quad_nodes = 16);

// Internal quadrature self-test: int_0^alpha dsigma / sqrt(sigma(alpha-sigma))
// evaluated by the same rule used for singular-in-time integrals; exact value
// is pi for every alpha.
double singular_quadrature_selftest(double alpha, int nodes = 16);

// CSV decay table: alpha, split norm, l2 norm, bound rhs.
void write_commutator_csv(const CommutatorStudy& study, std::ostream& os);

}  // namespace gfl
