#include "gfl/continuity.hpp"

#include <Eigen/SparseLU>
#include <cmath>
#include <future>
#include <sstream>
#include <stdexcept>

#include "gfl/numeric.hpp"

namespace gfl {

Eigen::SparseMatrix<double> transport_matrix(const Space& space,
                                             const Derivation& b, double t,
                                             Transport transport) {
  const int n = space.node_count();
  const EdgeVelocity v = b.velocity(t);
  const Field& w = b.weight();
  std::vector<Eigen::Triplet<double>> trip;
  for (int a = 0; a < space.spec.dimension; ++a) {
    const EdgeList& e = space.edges[a];
    const double h = space.h(a);
    for (size_t k = 0; k < e.from.size(); ++k) {
      const int i = e.from[k], j = e.to[k];
      const double q = e.conductance[k] * h * v.axis[a][k];
      if (q == 0.0) continue;
      if (transport == Transport::Adjoint) {
        trip.emplace_back(i, i, 0.5 * q * w[i] / space.measure[i]);
        trip.emplace_back(i, j, 0.5 * q * w[j] / space.measure[i]);
        trip.emplace_back(j, i, -0.5 * q * w[i] / space.measure[j]);
        trip.emplace_back(j, j, -0.5 * q * w[j] / space.measure[j]);
      } else if (q > 0.0) {  // donor node i
        trip.emplace_back(i, i, q * w[i] / space.measure[i]);
        trip.emplace_back(j, i, -q * w[i] / space.measure[j]);
      } else {  // donor node j
        trip.emplace_back(i, j, q * w[j] / space.measure[i]);
        trip.emplace_back(j, j, -q * w[j] / space.measure[j]);
      }
    }
  }
  Eigen::SparseMatrix<double> T(n, n);
  T.setFromTriplets(trip.begin(), trip.end());
  return T;
}

CESolution solve_viscous_ce(const Space& space, const Derivation& b,
                            const Field& u0, double T, const CEScheme& in) {
  if (u0.size() != space.node_count())
    throw std::invalid_argument("solve_viscous_ce: initial field size mismatch");
  if (!(in.dt > 0.0) || !(T > 0.0))
    throw std::invalid_argument("solve_viscous_ce: need dt > 0 and T > 0");
  if (in.theta < 0.0 || in.theta > 1.0 || in.sigma < 0.0)
    throw std::invalid_argument("solve_viscous_ce: theta in [0,1], sigma >= 0");

  CESolution sol;
  sol.space = &space;
  sol.scheme = in;
  sol.T = T;
  const long steps = std::max<long>(1, std::lround(T / in.dt));
  const double dt = T / double(steps);
  sol.scheme.dt = dt;
  const double hmin = std::min(space.h(0), space.h(space.spec.dimension - 1));

  auto guard_cfl = [&](double t_mid) {
    if (in.theta >= 1.0) return;
    const double speed = b.max_speed(t_mid);
    if (dt * speed / hmin > 0.5 + 1e-12) {
      std::ostringstream msg;
      msg << "solve_viscous_ce: CFL violation, dt*max|b|/h = "
          << dt * speed / hmin << "; use dt <= " << 0.5 * hmin / speed;
      throw std::invalid_argument(msg.str());
    }
    if (in.theta < 0.5 && in.sigma > 0.0 &&
        dt * in.sigma * 2.0 * space.spec.dimension / (hmin * hmin) > 1.0)
      throw std::invalid_argument(
          "solve_viscous_ce: explicit diffusion unstable; raise theta or cut dt");
  };

  const int n = space.node_count();
  Eigen::SparseMatrix<double> eye(n, n);
  eye.setIdentity();

  auto assemble = [&](double t_mid) {
    Eigen::SparseMatrix<double> A =
        -transport_matrix(space, b, t_mid, in.transport);
    if (in.sigma > 0.0) A += in.sigma * space.generator;
    return A;
  };

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  Eigen::SparseMatrix<double> A_exp;
  const bool autonomous = !b.is_time_dependent();
  if (autonomous) {
    guard_cfl(0.0);
    const auto A = assemble(0.0);
    A_exp = eye + (1.0 - in.theta) * dt * A;
    if (in.theta > 0.0) {
      Eigen::SparseMatrix<double> A_imp = eye - in.theta * dt * A;
      lu.compute(A_imp);
      if (lu.info() != Eigen::Success)
        throw std::runtime_error("solve_viscous_ce: implicit factorization failed");
    }
  }

  Field u = u0;
  const double mass0 = space.integrate(u0);
  const double scale = std::max(space.integrate(u0.abs()), 1e-300);
  const int stride = std::max(1, in.checkpoint_stride);
  sol.times.push_back(0.0);
  sol.fields.push_back(u);
  sol.mass_trace.push_back(mass0);
  sol.l2_trace.push_back(lp_norm(space, u, 2.0));
  sol.min_value = u.minCoeff();

  for (long k = 0; k < steps; ++k) {
    const double t_mid = (double(k) + 0.5) * dt;
    if (!autonomous) {
      guard_cfl(t_mid);
      const auto A = assemble(t_mid);
      A_exp = eye + (1.0 - in.theta) * dt * A;
      if (in.theta > 0.0) {
        Eigen::SparseMatrix<double> A_imp = eye - in.theta * dt * A;
        lu.compute(A_imp);
        if (lu.info() != Eigen::Success)
          throw std::runtime_error(
              "solve_viscous_ce: implicit factorization failed");
      }
    }
    Eigen::VectorXd rhs = A_exp * u.matrix();
    if (in.theta > 0.0) {
      u = lu.solve(rhs).array();
      if (lu.info() != Eigen::Success)
        throw std::runtime_error("solve_viscous_ce: linear solve failed");
    } else {
      u = rhs.array();
    }
    const double mass = space.integrate(u);
    sol.mass_trace.push_back(mass);
    sol.l2_trace.push_back(lp_norm(space, u, 2.0));
    sol.min_value = std::min(sol.min_value, u.minCoeff());
    sol.mass_drift = std::max(sol.mass_drift, std::abs(mass - mass0) / scale);
    if ((k + 1) % stride == 0 || k + 1 == steps) {
      sol.times.push_back(double(k + 1) * dt);
      sol.fields.push_back(u);
    }
  }
  return sol;
}

ViscosityTable vanishing_viscosity(const Space& space, const Derivation& b,
                                   const Field& u0,
                                   const std::vector<double>& sigmas, double T,
                                   CEScheme base) {
  if (sigmas.size() < 3)
    throw std::invalid_argument("vanishing_viscosity: need >= 3 ladder entries");
  for (size_t i = 1; i < sigmas.size(); ++i)
    if (!(sigmas[i] < sigmas[i - 1]))
      throw std::invalid_argument(
          "vanishing_viscosity: ladder must strictly decrease");

  std::vector<std::future<CESolution>> runs;
  for (double s : sigmas)
    runs.push_back(std::async(std::launch::async, [&, s] {
      CEScheme sch = base;
      sch.sigma = s;
      return solve_viscous_ce(space, b, u0, T, sch);
    }));
  std::vector<CESolution> sols;
  for (auto& r : runs) sols.push_back(r.get());

  ViscosityTable table;
  table.sigmas = sigmas;
  for (size_t i = 0; i + 1 < sols.size(); ++i) {
    table.differences.push_back(
        lp_norm(space, sols[i].final() - sols[i + 1].final(), 1.0));
    if (i > 0 &&
        table.differences[i] > 1.05 * table.differences[i - 1] + 1e-14)
      table.monotone = false;
  }
  std::vector<double> x(sigmas.begin(), sigmas.end() - 1);
  table.order = loglog_slope(x, table.differences);
  table.limit = std::move(sols.back());
  return table;
}

// ---------------------------------------------------------------------------
// Entropies

EntropyFamily entropy_identity() {
  return {"identity", [](double z) { return z; }, [](double) { return 1.0; },
          [](double) { return 0.0; }};
}

EntropyFamily entropy_square() {
  return {"square", [](double z) { return z * z; },
          [](double z) { return 2.0 * z; }, [](double z) { return z * z; }};
}

EntropyFamily entropy_power_plus(double r) {
  if (r < 1.0)
    throw std::invalid_argument("entropy_power_plus: need r >= 1");
  auto beta = [r](double z) { return z > 0 ? std::pow(z, r) : 0.0; };
  auto dbeta = [r](double z) { return z > 0 ? r * std::pow(z, r - 1.0) : 0.0; };
  auto leg = [r](double z) { return z > 0 ? (r - 1.0) * std::pow(z, r) : 0.0; };
  return {"power_plus_" + std::to_string(r), beta, dbeta, leg};
}

EntropyFamily entropy_positive_part() {
  return {"positive_part", [](double z) { return z > 0 ? z : 0.0; },
          [](double z) { return z > 0 ? 1.0 : 0.0; },
          [](double) { return 0.0; }};
}

EntropyFamily truncate(const EntropyFamily& f, double n) {
  if (!(n > 0)) throw std::invalid_argument("truncate: need n > 0");
  auto beta = f.beta, dbeta = f.dbeta;
  auto bn = [=](double z) {
    if (z > n) return beta(n) + dbeta(n) * (z - n);
    if (z < -n) return beta(-n) + dbeta(-n) * (z + n);
    return beta(z);
  };
  auto dbn = [=](double z) { return dbeta(std::clamp(z, -n, n)); };
  auto leg = [=](double z) { return z * dbn(z) - bn(z); };
  return {f.name + "_trunc_" + std::to_string(n), bn, dbn, leg};
}

double legendre_min(const EntropyFamily& family, double lo, double hi,
                    int samples) {
  double worst = 0.0;
  for (int k = 0; k < samples; ++k) {
    const double z = lo + (hi - lo) * k / double(samples - 1);
    worst = std::min(worst, family.legendre(z));
  }
  return worst;
}

EntropyReport entropy_trace(const CESolution& sol, const EntropyFamily& family,
                            const Derivation& b) {
  const Space& sp = *sol.space;
  if (sol.scheme.checkpoint_stride != 1)
    throw std::invalid_argument("entropy_trace: needs checkpoint_stride = 1");
  EntropyReport rep;
  const double dt = sol.scheme.dt, h = sp.h(0);
  std::vector<double> bound(sol.times.size(), 0.0);
  double emax = 0.0, bmax = 0.0;
  for (size_t k = 0; k < sol.times.size(); ++k) {
    const Field beta_u = sol.fields[k].unaryExpr(family.beta);
    rep.trace.push_back(sp.integrate(beta_u));
    const Field leg_u = sol.fields[k].unaryExpr(family.legendre);
    const Field div_neg = (-b.divergence(sol.times[k])).max(0.0);
    bound[k] = sp.integrate(leg_u * div_neg);
    emax = std::max(emax, std::abs(rep.trace.back()));
    bmax = std::max(bmax, std::abs(bound[k]));
  }
  for (size_t k = 1; k + 1 < sol.times.size(); ++k) {
    const double ddt = (rep.trace[k + 1] - rep.trace[k - 1]) / (2.0 * dt);
    rep.worst_residual = std::max(rep.worst_residual, ddt - bound[k]);
  }
  rep.tolerance = 5.0 * (dt + h * h) * std::max({1.0, emax, bmax});
  rep.ok = rep.worst_residual <= rep.tolerance;
  return rep;
}

AprioriReport apriori_check(const CESolution& sol, const Derivation& b,
                            double r) {
  if (r < 1.0) throw std::invalid_argument("apriori_check: need r >= 1");
  const Space& sp = *sol.space;
  AprioriReport rep;
  rep.r = r;
  const double slack =
      1.0 + 10.0 * (sol.scheme.dt + sp.h(0) * sp.h(0));
  const double expo = std::isinf(r) ? 1.0 : 1.0 - 1.0 / r;
  const double p0 = lp_norm(sp, sol.initial().max(0.0), r);
  const double n0 = lp_norm(sp, (-sol.initial()).max(0.0), r);

  double integral = 0.0;  // trapezoid of ||(div b)^-||_inf over checkpoints
  double prev_val = (-b.divergence(0.0)).max(0.0).maxCoeff();
  rep.worst_margin = -1.0;
  for (size_t k = 1; k < sol.times.size(); ++k) {
    const double val = (-b.divergence(sol.times[k])).max(0.0).maxCoeff();
    integral += 0.5 * (prev_val + val) * (sol.times[k] - sol.times[k - 1]);
    prev_val = val;
    const double factor = slack * std::exp(expo * integral);
    for (int sign : {+1, -1}) {
      const double base = sign > 0 ? p0 : n0;
      const Field part = sign > 0 ? sol.fields[k].max(0.0).eval()
                                  : (-sol.fields[k]).max(0.0).eval();
      const double bound = factor * base;
      const double margin =
          (lp_norm(sp, part, r) - bound) / std::max(bound, 1e-300);
      if (margin > rep.worst_margin) {
        rep.worst_margin = margin;
        rep.worst_time = sol.times[k];
      }
    }
  }
  rep.ok = rep.worst_margin <= 0.0;
  return rep;
}

double weak_residual(const CESolution& sol, const Derivation& b,
                     const Field& phi) {
  const Space& sp = *sol.space;
  if (sol.scheme.checkpoint_stride != 1)
    throw std::invalid_argument("weak_residual: needs checkpoint_stride = 1");
  const double dt = sol.scheme.dt, h = sp.h(0);
  std::vector<double> pairing, rhs;
  for (size_t k = 0; k < sol.times.size(); ++k) {
    pairing.push_back(sp.integrate(sol.fields[k] * phi));
    rhs.push_back(sp.integrate(sol.fields[k] * b.apply(phi, sol.times[k])) +
                  sol.scheme.sigma *
                      sp.integrate(sol.fields[k] * laplacian(sp, phi)));
  }
  double scale = 1.0;
  for (double v : rhs) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  for (size_t k = 1; k + 1 < sol.times.size(); ++k) {
    const double ddt = (pairing[k + 1] - pairing[k - 1]) / (2.0 * dt);
    worst = std::max(worst, std::abs(ddt - rhs[k]));
  }
  return worst / (5.0 * (dt + h * h) * scale);
}

UniquenessReport uniqueness_probe(const Space& space, const Derivation& b,
                                  const Field& u0, CEScheme first,
                                  CEScheme second, double T, int levels) {
  UniquenessReport rep;
  const double scale = std::max(space.integrate(u0.abs()), 1e-300);
  for (int lvl = 0; lvl < levels; ++lvl) {
    const double refine = std::pow(0.5, lvl);
    CEScheme c1 = first, c2 = second;
    c1.dt = first.dt * refine;
    c2.dt = c1.dt;  // shared time grid so checkpoints align
    c1.sigma = first.sigma * refine;
    c2.sigma = second.sigma * refine;
    const long steps = std::max<long>(8, std::lround(T / c1.dt));
    c1.checkpoint_stride = c2.checkpoint_stride = std::max<long>(1, steps / 8);
    auto s1 = std::async(std::launch::async,
                         [&] { return solve_viscous_ce(space, b, u0, T, c1); });
    CESolution u2 = solve_viscous_ce(space, b, u0, T, c2);
    CESolution u1 = s1.get();
    double diff = 0.0;
    const size_t common = std::min(u1.fields.size(), u2.fields.size());
    for (size_t k = 0; k < common; ++k)
      diff = std::max(diff, lp_norm(space, u1.fields[k] - u2.fields[k], 1.0));
    rep.levels.push_back(refine);
    rep.differences.push_back(diff);
  }
  bool negligible = true;
  for (double d : rep.differences) negligible &= d < 1e-12 * scale;
  if (negligible) {
    rep.order = std::numeric_limits<double>::infinity();
    rep.ok = true;
  } else {
    rep.order = loglog_slope(rep.levels, rep.differences);
    rep.ok = rep.order >= 0.8 - 1e-9;
  }
  return rep;
}

void write_ce_csv(const CESolution& sol, std::ostream& os) {
  os << "t,mass,l2,sup\n";
  const double dt = sol.scheme.dt;
  os.precision(17);
  for (size_t k = 0; k < sol.times.size(); ++k) {
    const size_t step = size_t(std::lround(sol.times[k] / dt));
    const size_t idx = std::min(step, sol.mass_trace.size() - 1);
    os << sol.times[k] << ',' << sol.mass_trace[idx] << ',' << sol.l2_trace[idx]
       << ',' << sol.fields[k].abs().maxCoeff() << '\n';
  }
}

}  // namespace gfl
