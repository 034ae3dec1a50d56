#include "gfl/commutator.hpp"

#include <cmath>
#include <stdexcept>

#include "gfl/numeric.hpp"

namespace gfl {

Field commutator(const Space& space, const Derivation& b, const Field& u,
                 double alpha, double t) {
  if (!(alpha > 0.0)) throw std::invalid_argument("commutator: need alpha > 0");
  const Field pu = apply_semigroup(space, u, alpha);
  const Field smoothed_then_div = b.scaled_by(pu).divergence(t);
  const Field div_then_smoothed =
      apply_semigroup(space, b.scaled_by(u).divergence(t), alpha);
  return smoothed_then_div - div_then_smoothed;
}

CommutatorStudy decay_study(const Space& space, const Derivation& b,
                            const Field& u, const std::vector<double>& alphas,
                            double q, double r, double s,
                            const ProbeFamily& probes, double t) {
  if (std::abs(1.0 / q + 1.0 / r + 1.0 / s - 1.0) > 1e-12)
    throw std::invalid_argument("decay_study: need 1/q + 1/r + 1/s = 1");
  for (size_t i = 1; i < alphas.size(); ++i)
    if (!(alphas[i] < alphas[i - 1]))
      throw std::invalid_argument("decay_study: ladder must strictly decrease");

  CommutatorStudy study;
  study.alphas = alphas;
  study.q = q;
  study.r = r;
  study.s = s;
  const double s_conj = s <= 1.0 ? std::numeric_limits<double>::infinity()
                                 : s / (s - 1.0);
  for (double a : alphas) {
    const Field c = commutator(space, b, u, a, t);
    study.split_norms.push_back(lp_sum_norm(space, c, s_conj, 2.0));
    study.l2_norms.push_back(lp_norm(space, c, 2.0));
  }

  study.u_norm = std::max(lp_norm(space, u, r), lp_norm(space, u, 2.0));
  study.dsym_estimate = deformation_norm_estimate(space, b, r, s, probes, t).estimate;
  study.div_norm = lp_sum_norm(space, b.divergence(t), q,
                               std::numeric_limits<double>::infinity());
  study.bound_rhs = study.u_norm * (study.dsym_estimate + study.div_norm);
  if (study.bound_rhs > 0)
    for (double n : study.split_norms)
      study.calibrated_c = std::max(study.calibrated_c, n / study.bound_rhs);

  const double h = space.h(0);
  study.floor_alpha = h * h;
  study.decay_ok = true;
  for (size_t i = 1; i < alphas.size(); ++i) {
    if (alphas[i] < study.floor_alpha) break;  // below the mesh floor
    if (study.split_norms[i] > 1.05 * study.split_norms[i - 1] + 1e-14)
      study.decay_ok = false;
  }
  return study;
}

double interpolation_identity_residual(const Space& space, const Derivation& b,
                                       const Field& u, const Field& f,
                                       double alpha, int quad_nodes) {
  if (!(alpha > 0.0))
    throw std::invalid_argument("interpolation identity: need alpha > 0");
  const double div_sup = b.divergence().abs().maxCoeff();
  if (div_sup > 1e-8)
    throw std::invalid_argument(
        "interpolation identity: drift is not divergence-free (sup |div b| = " +
        std::to_string(div_sup) + ")");
  const double lhs = space.integrate(f * commutator(space, b, u, alpha));
  const QuadratureRule gl = gauss_legendre(quad_nodes);
  double rhs = 0.0;
  for (int k = 0; k < quad_nodes; ++k) {
    const double s = alpha * gl.nodes[k];
    const Field fs = apply_semigroup(space, f, alpha - s);
    const Field us = apply_semigroup(space, u, s);
    rhs += alpha * gl.weights[k] * deformation_pairing(space, b, fs, us);
  }
  return std::abs(lhs - 2.0 * rhs);
}

double singular_quadrature_selftest(double alpha, int nodes) {
  return arcsine_integral([](double) { return 1.0; }, alpha, nodes);
}

void write_commutator_csv(const CommutatorStudy& study, std::ostream& os) {
  os << "alpha,split_norm,l2_norm,bound_rhs\n";
  os.precision(17);
  for (size_t i = 0; i < study.alphas.size(); ++i)
    os << study.alphas[i] << ',' << study.split_norms[i] << ','
       << study.l2_norms[i] << ',' << study.bound_rhs << '\n';
}

}  // namespace gfl
