#include "gfl/curvature.hpp"

#include <cmath>
#include <stdexcept>

#include "gfl/numeric.hpp"

namespace gfl {

double curvature_integral(double K, double t) {
  if (K == 0.0) return t;
  const double z = K * t;
  if (std::abs(z) < 1e-5) return t * (1.0 + 0.5 * z + z * z / 6.0);
  return std::expm1(z) / K;
}

namespace {

void check_t_grid(const std::vector<double>& t_grid) {
  if (t_grid.empty())
    throw std::invalid_argument("curvature check: empty time grid");
  for (double t : t_grid)
    if (!(t > 0.0) || t > 2.0)
      throw std::invalid_argument("curvature check: times must lie in (0, 2]");
}

// Shared driver: defect(probe, t) relative to the probe's own scale.
CurvatureReport sweep(
    const Space& space, const char* name, double K,
    const std::vector<Field>& probes, const std::vector<double>& t_grid,
    const std::function<double(const Field&, double)>& defect) {
  check_t_grid(t_grid);
  CurvatureReport rep;
  rep.check = name;
  rep.K = K;
  rep.probe_count = int(probes.size());
  rep.t_count = int(t_grid.size());
  rep.table = nlohmann::json::array();
  for (size_t p = 0; p < probes.size(); ++p)
    for (double t : t_grid) {
      const double d = defect(probes[p], t);
      rep.table.push_back({{"probe", p}, {"t", t}, {"defect", d}});
      if (d > rep.worst_defect) {
        rep.worst_defect = d;
        rep.worst_probe = int(p);
        rep.worst_t = t;
      }
    }
  return rep;
}

}  // namespace

CurvatureReport be2_check(const Space& space, double K,
                          const std::vector<Field>& probes,
                          const std::vector<double>& t_grid) {
  return sweep(space, "be2", K, probes, t_grid, [&](const Field& f, double t) {
    const Field gf = gamma(space, f);
    const double fsup = std::max(f.abs().maxCoeff(), 1.0);
    const double scale = std::max(gf.maxCoeff(), 1e-14 * fsup * fsup);
    const Field lhs = gamma(space, apply_semigroup(space, f, t));
    const Field rhs = std::exp(-2.0 * K * t) * apply_semigroup(space, gf, t);
    return (lhs - rhs).maxCoeff() / scale;
  });
}

CurvatureReport be1_check(const Space& space, double K,
                          const std::vector<Field>& probes,
                          const std::vector<double>& t_grid) {
  return sweep(space, "be1", K, probes, t_grid, [&](const Field& f, double t) {
    const Field root_gf = gamma(space, f).max(0.0).sqrt();
    const double scale =
        std::max(root_gf.maxCoeff(), 1e-7 * std::max(f.abs().maxCoeff(), 1.0));
    const Field lhs =
        gamma(space, apply_semigroup(space, f, t)).max(0.0).sqrt();
    const Field rhs = std::exp(-K * t) * apply_semigroup(space, root_gf, t);
    return (lhs - rhs).maxCoeff() / scale;
  });
}

ReversePoincareReport reverse_poincare_check(const Space& space, double K,
                                             const std::vector<Field>& probes,
                                             const std::vector<double>& t_grid) {
  ReversePoincareReport rep;
  rep.base = sweep(space, "reverse_poincare", K, probes, t_grid,
                   [&](const Field& f, double t) {
                     const double scale =
                         std::max(f.abs().maxCoeff() * f.abs().maxCoeff(),
                                  1e-300);
                     const Field ptf = apply_semigroup(space, f, t);
                     const Field lhs = 2.0 * curvature_integral(2.0 * K, t) *
                                       gamma(space, ptf);
                     const Field rhs =
                         apply_semigroup(space, f.square(), t) - ptf.square();
                     return (lhs - rhs).maxCoeff() / scale;
                   });
  for (double p : {2.0, 4.0, std::numeric_limits<double>::infinity()}) {
    double best = 0.0;
    for (const Field& f : probes) {
      const double denom = lp_norm(space, f, p);
      if (denom < 1e-14) continue;
      for (double t : t_grid) {
        const Field g =
            gamma(space, apply_semigroup(space, f, t)).max(0.0).sqrt();
        best = std::max(best, lp_norm(space, g, p) *
                                  std::sqrt(std::min(t, 1.0)) / denom);
      }
    }
    rep.c_p[p] = best;
  }
  return rep;
}

double gradient_interpolation_check(const Space& space, double K, double lambda,
                                    const std::vector<Field>& probes,
                                    double p) {
  if (lambda < std::max(-K, 0.0))
    throw std::invalid_argument(
        "gradient_interpolation_check: need lambda >= max(-K, 0)");
  double best = 0.0;
  for (const Field& f : probes) {
    const double sup = f.abs().maxCoeff();
    const double denom =
        lp_norm(space, laplacian(space, f) + lambda * f, p) * sup;
    if (denom < 1e-12 * std::max(1.0, sup)) continue;  // eigenvector, skip
    best = std::max(best, lp_norm(space, gamma(space, f), p) / denom);
  }
  return best;
}

double gamma2_pairing(const Space& space, double K, const Field& f,
                      const Field& phi) {
  if (phi.size() != space.node_count() || f.size() != space.node_count())
    throw std::invalid_argument("gamma2_pairing: field size mismatch");
  if (phi.minCoeff() < 0.0)
    throw std::invalid_argument("gamma2_pairing: weight must be nonnegative");
  const Field lf = laplacian(space, f);
  const Field gf = gamma(space, f);
  const Field integrand = -0.5 * gamma(space, gf, phi) +
                          lf * gamma(space, f, phi) +
                          (lf.square() - K * gf) * phi;
  return space.integrate(integrand);
}

HessianBoundReport hessian_bound_check(
    const Space& space, double K, const Field& V,
    const std::vector<std::pair<Field, Field>>& pairs,
    const ProbeFamily& probes) {
  HessianBoundReport rep;
  const Field lv = laplacian(space, V);
  const Field gv = gamma(space, V);
  rep.gamma2_integral = space.integrate(lv.square() - K * gv);
  const double h = space.h(0);
  const double tol = 1e-2 + 10.0 * h * h;

  const double root = std::sqrt(std::max(rep.gamma2_integral, 0.0));
  rep.worst_pair_margin = -1.0;
  for (const auto& [f, g] : pairs) {
    const double lhs = std::abs(space.integrate(hessian(space, V, f, g)));
    const double nf = lp_norm(space, gamma(space, f).max(0.0).sqrt(), 4.0);
    const double ng = lp_norm(space, gamma(space, g).max(0.0).sqrt(), 4.0);
    // Multiplicative slack plus an absolute floor for degenerate weights
    // whose second-order integral sits at round-off scale.
    const double bound = root * nf * ng * (1.0 + tol) + tol * nf * ng;
    const double margin = (lhs - bound) / std::max(bound, 1e-300);
    rep.worst_pair_margin = std::max(rep.worst_pair_margin, margin);
  }
  rep.pairs_ok = pairs.empty() || rep.worst_pair_margin <= 0.0;

  Derivation bv = Derivation::gradient(space, V);
  rep.deformation_estimate =
      deformation_norm_estimate(space, bv, 4.0, 4.0, probes).estimate;
  const double budget_core = lp_norm(space, lv.square() - K * gv, 1.0);
  rep.deformation_budget = budget_core + tol * std::max(1.0, budget_core);
  rep.deformation_ok = rep.deformation_estimate <= rep.deformation_budget;
  return rep;
}

nlohmann::json curvature_json(const CurvatureReport& report) {
  return {{"check", report.check},
          {"K", report.K},
          {"worst_defect", report.worst_defect},
          {"worst_probe", report.worst_probe},
          {"worst_t", report.worst_t},
          {"probe_count", report.probe_count},
          {"t_count", report.t_count},
          {"defects", report.table}};
}

}  // namespace gfl
