#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <sstream>

#include "doctest.h"
#include "gfl/flow.hpp"

using namespace gfl;

namespace {
Space flat_torus(int n) {
  return build_space(GridSpec::torus(2.0 * M_PI, n),
                     [](double, double) { return 0.0; }, false);
}
Field sample(const Space& sp, const std::function<double(double)>& f) {
  Field out(sp.node_count());
  for (int i = 0; i < sp.node_count(); ++i) out[i] = f(sp.node_coord(i, 0));
  return out;
}
Eigen::ArrayXXd line_points(int n, double lo, double hi) {
  Eigen::ArrayXXd pts(n, 1);
  for (int i = 0; i < n; ++i) pts(i, 0) = lo + (hi - lo) * (i + 0.5) / n;
  return pts;
}
}  // namespace

TEST_CASE("zero and constant drifts integrate exactly") {
  Space sp = flat_torus(64);
  Eigen::ArrayXXd pts = line_points(32, 0.0, 2.0 * M_PI);
  FlowConfig cfg;
  cfg.ode_step = 0.01;

  PathEnsemble frozen = integrate_flow(sp, Derivation::zero(sp), pts, 1.0, cfg);
  CHECK((frozen.positions.back() - pts).abs().maxCoeff() == 0.0);

  Derivation c = Derivation::from_axis_functions(
      sp, [](double, double) { return 0.7; });
  PathEnsemble moved = integrate_flow(sp, c, pts, 1.0, cfg);
  double worst = 0.0;
  for (int p = 0; p < 32; ++p)
    worst = std::max(worst, sp.axis_distance(moved.positions.back()(p, 0),
                                             pts(p, 0) + 0.7, 0));
  CHECK(worst < 1e-10);
}

TEST_CASE("trajectories converge to a high-resolution reference") {
  Space sp = flat_torus(512);
  Derivation b = Derivation::from_axis_functions(
      sp, [](double x, double) { return std::sin(x); });
  Eigen::ArrayXXd pts = line_points(16, 0.3, 6.0);
  FlowConfig coarse, fine;
  coarse.ode_step = 1e-3;
  fine.ode_step = 1e-5;
  PathEnsemble ec = integrate_flow(sp, b, pts, 1.0, coarse);
  PathEnsemble ef = integrate_flow(sp, b, pts, 1.0, fine);
  double worst = 0.0;
  for (int p = 0; p < 16; ++p)
    worst = std::max(worst, sp.axis_distance(ec.positions.back()(p, 0),
                                             ef.positions.back()(p, 0), 0));
  CHECK(worst < 1e-8);
}

TEST_CASE("fixed seed and config reproduce the ensemble bit for bit") {
  Space sp = flat_torus(128);
  Derivation b = Derivation::from_axis_functions(
      sp, [](double x, double) { return std::sin(x); });
  Field density = sample(sp, [](double x) { return 1.0 + 0.5 * std::cos(x); });
  FlowConfig cfg;
  cfg.ode_step = 0.01;
  cfg.seed = 99;
  PathEnsemble a = integrate_flow(sp, b, density, 4000, 0.5, cfg);
  PathEnsemble b2 = integrate_flow(sp, b, density, 4000, 0.5, cfg);
  for (size_t k = 0; k < a.positions.size(); ++k)
    CHECK(std::memcmp(a.positions[k].data(), b2.positions[k].data(),
                      sizeof(double) * a.positions[k].size()) == 0);
  cfg.seed = 100;
  PathEnsemble c = integrate_flow(sp, b, density, 4000, 0.5, cfg);
  CHECK((a.positions[0] - c.positions[0]).abs().maxCoeff() > 0.0);
}

TEST_CASE("1d transport distance sees shifts and forgives sampling noise") {
  Space sp = flat_torus(256);
  Field density = sample(sp, [](double x) { return 1.0 + std::cos(x); });
  FlowConfig cfg;
  cfg.ode_step = 0.1;
  cfg.seed = 5;
  PathEnsemble ens =
      integrate_flow(sp, Derivation::zero(sp), density, 20000, 0.1, cfg);
  std::vector<double> xs(ens.positions[0].col(0).begin(),
                         ens.positions[0].col(0).end());
  CHECK(wasserstein_1d(sp, xs, density) < 0.02);
  for (double& x : xs) x = std::fmod(x + 0.3, 2.0 * M_PI);
  CHECK(wasserstein_1d(sp, xs, density) > 0.1);
}

TEST_CASE("flow marginals track the continuity equation") {
  Space sp = build_space(GridSpec::torus(2.0 * M_PI, 256),
                         [](double, double) { return 0.0; });
  Field u0 = sample(sp, [](double x) { return 1.0 + 0.8 * std::cos(x); });
  Derivation b = Derivation::from_axis_functions(
      sp, [](double x, double) { return 0.5 + 0.3 * std::sin(x); });

  CEScheme sch;
  sch.dt = 0.00625;
  sch.checkpoint_stride = 20;  // checkpoints at multiples of 1/8
  CESolution ce = solve_viscous_ce(sp, b, u0, 1.0, sch);

  FlowConfig cfg;
  cfg.ode_step = 0.0025;
  cfg.seed = 31;
  PathEnsemble ens = integrate_flow(sp, b, u0, 20000, 1.0, cfg);
  FlowReport rep = superposition_check(sp, ens, ce);
  CHECK(rep.checkpoint_times.size() >= 5);
  CHECK(rep.worst_marginal < 0.02);

  // Mismatched initial law is rejected.
  Field other =
      sample(sp, [](double x) { return std::exp(-8.0 * (x - M_PI) * (x - M_PI)); });
  CESolution ce2 = solve_viscous_ce(sp, b, other, 1.0, sch);
  CHECK_THROWS_AS(superposition_check(sp, ens, ce2), std::invalid_argument);

  CHECK(flow_semigroup_defect(sp, b, ens) < 1e-12);
}

TEST_CASE("occupation stays comparable to the reference measure") {
  Space sp = flat_torus(128);
  FlowConfig cfg;
  cfg.ode_step = 0.01;
  cfg.seed = 8;
  Field flat = Field::Ones(sp.node_count());

  PathEnsemble still =
      integrate_flow(sp, Derivation::zero(sp), flat, 30000, 0.5, cfg);
  CompressibilityReport r0 = compressibility(sp, still, 3.0 * sp.h(0));
  CHECK(r0.estimate == doctest::Approx(1.0).epsilon(0.1));

  Derivation shift = Derivation::from_axis_functions(
      sp, [](double, double) { return 1.0; });
  PathEnsemble pushed = integrate_flow(sp, shift, flat, 30000, 0.5, cfg);
  CHECK(compressibility(sp, pushed, 3.0 * sp.h(0)).estimate <= 1.15);
  CHECK_THROWS_AS(compressibility(sp, pushed, 0.5 * sp.h(0)),
                  std::invalid_argument);
}

TEST_CASE("compressibility of a gradient flow matches the transport oracle") {
  Space sp = flat_torus(128);
  Field V = sample(sp, [](double x) { return std::sin(x); });
  Derivation bv = Derivation::gradient(sp, V);
  FlowConfig cfg;
  cfg.ode_step = 0.005;
  cfg.seed = 17;
  PathEnsemble ens =
      integrate_flow(sp, bv, Field::Ones(sp.node_count()), 40000, 0.5, cfg);
  CompressibilityReport cr = compressibility(sp, ens, 3.0 * sp.h(0));

  CEScheme sch;
  sch.dt = 0.005;
  CESolution ce =
      solve_viscous_ce(sp, bv, Field::Ones(sp.node_count()), 0.5, sch);
  double sup = 0.0;
  for (const Field& u : ce.fields) sup = std::max(sup, u.maxCoeff());
  CHECK(cr.estimate == doctest::Approx(sup).epsilon(0.15));
}

TEST_CASE("particle speeds realize the dual modulus of the drift") {
  Space sp = flat_torus(512);
  Derivation b = Derivation::from_axis_functions(
      sp, [](double x, double) { return std::sin(x); });
  Eigen::ArrayXXd pts = line_points(128, 0.2, 2.0 * M_PI - 0.2);
  FlowConfig cfg;
  cfg.ode_step = 1e-3;
  cfg.store_stride = 1;
  PathEnsemble ens = integrate_flow(sp, b, pts, 0.2, cfg);
  Space spec_sp = build_space(GridSpec::torus(2.0 * M_PI, 512),
                              [](double, double) { return 0.0; });
  ProbeFamily probes = make_probe_family(spec_sp, 3u, 12, 8, 0.05);
  SpeedStats stats = speed_identity_check(spec_sp, ens, b, probes);
  CHECK(stats.median_rel <= 0.02);
}

TEST_CASE("gradient flows pay for ascent exactly with their gradient energy") {
  Space sp = build_space(GridSpec::torus(2.0 * M_PI, 512),
                         [](double, double) { return 0.0; });
  Field V = sample(sp, [](double x) { return std::cos(x); });
  Derivation bv = Derivation::gradient(sp, V);
  Eigen::ArrayXXd pts = line_points(128, 0.1, 2.0 * M_PI - 0.1);
  FlowConfig cfg;
  cfg.ode_step = 1e-3;
  cfg.store_stride = 1;
  PathEnsemble ens = integrate_flow(sp, bv, pts, 1.0, cfg);
  DissipationReport rep = dissipation_check(sp, ens, V);
  CHECK(rep.worst_residual <= 1e-4);
  CHECK(rep.monotone_violation >= -1e-8);
  CHECK(rep.speed_median_rel <= 0.02);
}

TEST_CASE("no branching for regular drifts; rough drifts flag few seeds") {
  Space sp = flat_torus(512);
  FlowConfig c1, c2;
  c1.ode_step = 1e-2;
  c2.ode_step = 5e-3;

  Derivation lips = Derivation::from_axis_functions(
      sp, [](double x, double) { return std::sin(x); });
  Eigen::ArrayXXd pts = line_points(256, 0.0, 2.0 * M_PI);
  BranchingReport smooth = no_branching_check(sp, lips, pts, 1.0, c1, c2, 1e-5);
  CHECK(smooth.max_gap <= 1e-5);
  CHECK(smooth.flagged_fraction == 0.0);

  Derivation rough = Derivation::from_axis_functions(
      sp, [](double x, double) {
        const double s = std::sin(x);
        return std::copysign(std::pow(std::abs(s), 0.6), s);
      });
  Eigen::ArrayXXd seeds = line_points(10000, 0.0, 2.0 * M_PI);
  BranchingReport r = no_branching_check(sp, rough, seeds, 1.0, c1, c2, 0.05);
  CHECK(r.flagged_fraction <= 0.01);
}

TEST_CASE("interval flows reflect at the walls and say so") {
  Space sp = build_space(GridSpec::interval(-2.0, 2.0, 64),
                         [](double, double) { return 0.0; }, false);
  Derivation out = Derivation::from_axis_functions(
      sp, [](double x, double) { return x; });  // outward push
  Eigen::ArrayXXd pts = line_points(16, -1.9, 1.9);
  FlowConfig cfg;
  cfg.ode_step = 0.01;
  PathEnsemble ens = integrate_flow(sp, out, pts, 3.0, cfg);
  for (const auto& block : ens.positions) {
    CHECK(block.col(0).minCoeff() >= -2.0);
    CHECK(block.col(0).maxCoeff() <= 2.0);
  }
  int flagged = 0;
  for (uint8_t f : ens.clamped) flagged += f;
  CHECK(flagged > 0);
}

TEST_CASE("ensembles export tidy csv") {
  Space sp = flat_torus(32);
  Eigen::ArrayXXd pts = line_points(3, 0.0, 2.0 * M_PI);
  FlowConfig cfg;
  cfg.ode_step = 0.1;
  cfg.checkpoints = 3;
  PathEnsemble ens = integrate_flow(sp, Derivation::zero(sp), pts, 1.0, cfg);
  std::ostringstream os;
  write_ensemble_csv(ens, os);
  std::istringstream is(os.str());
  std::string line;
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 1 + 3 * int(ens.sample_times.size()));
}
