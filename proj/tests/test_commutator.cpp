#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "gfl/commutator.hpp"
#include "gfl/continuity.hpp"

using namespace gfl;

namespace {
Field sample1d(const Space& sp, const std::function<double(double)>& f) {
  Field out(sp.node_count());
  for (int i = 0; i < sp.node_count(); ++i) out[i] = f(sp.node_coord(i, 0));
  return out;
}
}  // namespace

TEST_CASE("degenerate commutators vanish") {
  Space sp = build_space(GridSpec::torus(2.0 * M_PI, 32),
                         [](double x, double) { return 0.2 * std::sin(x); });
  Field u = sample1d(sp, [](double x) { return std::exp(std::cos(x)); });
  CHECK(commutator(sp, Derivation::zero(sp), u, 0.1).abs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(commutator(sp, Derivation::zero(sp), u, 0.0),
                  std::invalid_argument);

  // Constant u against a divergence-free drift.
  Space sq = build_space(GridSpec::torus2d(2.0 * M_PI, 16),
                         [](double, double) { return 0.0; });
  Derivation rot = Derivation::from_stream_function(
      sq, [](double x, double y) { return std::sin(x) * std::sin(y); });
  Field c = Field::Constant(sq.node_count(), 3.0);
  CHECK(commutator(sq, rot, c, 0.1).abs().maxCoeff() < 1e-10);
}

TEST_CASE("matches the dense operator composition at N = 16") {
  Space sp = build_space(GridSpec::torus(2.0 * M_PI, 16),
                         [](double x, double) { return 0.3 * std::cos(x); });
  const int n = sp.node_count();
  Derivation b = Derivation::from_axis_functions(
      sp, [](double x, double) { return std::sin(x) + 0.4; });
  Field u = sample1d(sp, [](double x) { return std::cos(2 * x) + 0.1 * x; });
  const double alpha = 0.1;

  Eigen::MatrixXd T = transport_matrix(sp, b, 0.0, Transport::Adjoint);
  const Spectrum& es = sp.spectrum();
  Eigen::MatrixXd P = es.vectors *
                      (es.values.array() * alpha).exp().matrix().asDiagonal() *
                      es.vectors.transpose() * sp.measure.matrix().asDiagonal();
  Field dense = (T * P * u.matrix() - P * T * u.matrix()).array();
  CHECK((commutator(sp, b, u, alpha) - dense).abs().maxCoeff() < 1e-12);
}

TEST_CASE("commutator is linear in the transported density") {
  Space sp = build_space(GridSpec::torus(2.0 * M_PI, 48),
                         [](double, double) { return 0.0; });
  Derivation b = Derivation::from_axis_functions(
      sp, [](double x, double) { return std::sin(x); });
  Field u = sample1d(sp, [](double x) { return std::cos(x); });
  Field v = sample1d(sp, [](double x) { return std::sin(3 * x) + 0.5; });
  Field lhs = commutator(sp, b, (2.0 * u - v).eval(), 0.05);
  Field rhs = 2.0 * commutator(sp, b, u, 0.05) - commutator(sp, b, v, 0.05);
  CHECK((lhs - rhs).abs().maxCoeff() < 1e-10);
}

TEST_CASE("decay ladder: an order of magnitude down to the mesh floor") {
  Space sp = build_space(GridSpec::torus(2.0 * M_PI, 64),
                         [](double, double) { return 0.0; });
  Field V = sample1d(sp, [](double x) { return std::sin(x); });
  Derivation grad = Derivation::gradient(sp, V);
  // Gradient of sin plus a rigid shift, realized as node coefficients.
  std::array<Field, 2> coeff{
      sample1d(sp, [](double x) { return std::cos(x) + 0.5; }), Field()};
  Derivation b = Derivation::from_node_coefficients(sp, coeff);
  Field u = sample1d(sp, [](double x) {  // smooth bump
    return std::exp(-std::pow(std::sin(0.5 * (x - M_PI)), 2));
  });
  ProbeFamily probes = make_probe_family(sp, 5u, 10, 6, 0.05);
  std::vector<double> ladder{0.2, 0.1, 0.05, 0.025, 0.0125};
  CommutatorStudy study = decay_study(sp, b, u, ladder, 4.0, 4.0, 2.0, probes);

  CHECK(study.split_norms.back() <= 0.1 * study.split_norms.front());
  CHECK(study.decay_ok);
  CHECK(study.floor_alpha == doctest::Approx(sp.h(0) * sp.h(0)));
  // Continuity along the ladder: no 10x jumps between neighbours.
  for (size_t i = 1; i < ladder.size(); ++i) {
    CHECK(study.l2_norms[i] < 10.0 * study.l2_norms[i - 1] + 1e-14);
    CHECK(study.l2_norms[i - 1] < 10.0 * study.l2_norms[i] + 1e-14);
  }
  // Uniform bound with the calibrated constant, by construction <= c.
  for (double n : study.split_norms)
    CHECK(n <= study.calibrated_c * study.bound_rhs + 1e-14);
  CHECK(study.rhs_is_lower_bound);
  CHECK_THROWS_AS(decay_study(sp, b, u, ladder, 2.0, 2.0, 2.0, probes),
                  std::invalid_argument);

  // The whole study is zero for b = 0.
  CommutatorStudy zero =
      decay_study(sp, Derivation::zero(sp), u, ladder, 4.0, 4.0, 2.0, probes);
  for (double n : zero.split_norms) CHECK(n == 0.0);
}

TEST_CASE("singular-time quadrature reproduces pi") {
  for (double alpha : {0.03, 0.5, 2.0})
    CHECK(std::abs(singular_quadrature_selftest(alpha) - M_PI) < 1e-8);
}

TEST_CASE("interpolation identity holds for divergence-free drifts") {
  Space sq = build_space(GridSpec::torus2d(2.0 * M_PI, 32),
                         [](double, double) { return 0.0; });
  Derivation rot = Derivation::from_stream_function(
      sq, [](double x, double y) { return std::sin(x) * std::sin(y); });
  Field u(sq.node_count()), f(sq.node_count());
  for (int i = 0; i < sq.node_count(); ++i) {
    const double x = sq.node_coord(i, 0), y = sq.node_coord(i, 1);
    u[i] = std::cos(x) + 0.3 * std::sin(y);
    f[i] = std::sin(x + y);
  }
  const double lhs_scale =
      std::max(1.0, std::abs(sq.integrate(f * commutator(sq, rot, u, 0.1))));
  const double res = interpolation_identity_residual(sq, rot, u, f, 0.1, 16);
  CHECK(res <= 1e-6 * lhs_scale);
  // More quadrature nodes never hurt for an analytic integrand.
  CHECK(interpolation_identity_residual(sq, rot, u, f, 0.1, 32) <=
        res + 1e-10);

  // Compressible drifts are refused.
  Derivation bad = Derivation::gradient(sq, u);
  CHECK_THROWS_AS(interpolation_identity_residual(sq, bad, u, f, 0.1),
                  std::invalid_argument);
}
