#include "gfl/calculus.hpp"

#include <cmath>
#include <stdexcept>

#include "gfl/numeric.hpp"
#include "gfl/rng.hpp"

namespace gfl {

namespace {

void check_field(const Space& space, const Field& f, const char* who) {
  if (f.size() != space.node_count())
    throw std::invalid_argument(std::string(who) + ": field size mismatch");
}

}  // namespace

Field gamma(const Space& space, const Field& f, const Field& g) {
  check_field(space, f, "gamma");
  check_field(space, g, "gamma");
  Field acc = Field::Zero(space.node_count());
  for (int axis = 0; axis < space.spec.dimension; ++axis) {
    const EdgeList& e = space.edges[axis];
    for (size_t k = 0; k < e.from.size(); ++k) {
      const int i = e.from[k], j = e.to[k];
      const double d = e.conductance[k] * (f[j] - f[i]) * (g[j] - g[i]);
      acc[i] += d;
      acc[j] += d;
    }
  }
  return acc / (2.0 * space.measure);
}

Field gamma(const Space& space, const Field& f) { return gamma(space, f, f); }

// ---------------------------------------------------------------------------
// Derivation

Derivation Derivation::zero(const Space& space) {
  EdgeVelocity v;
  for (int a = 0; a < 2; ++a)
    v.axis[a] = Eigen::ArrayXd::Zero(space.edges[a].from.size());
  return from_edge_velocity(space, std::move(v));
}

Derivation Derivation::from_edge_velocity(const Space& space, EdgeVelocity v) {
  for (int a = 0; a < space.spec.dimension; ++a)
    if (v.axis[a].size() != Eigen::Index(space.edges[a].from.size()))
      throw std::invalid_argument("Derivation: edge velocity size mismatch");
  Derivation b;
  b.space_ = &space;
  b.vel_ = std::move(v);
  for (int a = space.spec.dimension; a < 2; ++a)
    b.vel_.axis[a] = Eigen::ArrayXd::Zero(space.edges[a].from.size());
  b.weight_ = Field::Ones(space.node_count());
  return b;
}

Derivation Derivation::from_node_coefficients(const Space& space,
                                              const std::array<Field, 2>& c) {
  EdgeVelocity v;
  for (int a = 0; a < space.spec.dimension; ++a) {
    check_field(space, c[a], "Derivation::from_node_coefficients");
    const EdgeList& e = space.edges[a];
    v.axis[a].resize(e.from.size());
    for (size_t k = 0; k < e.from.size(); ++k)
      v.axis[a][k] = 0.5 * (c[a][e.from[k]] + c[a][e.to[k]]);
  }
  return from_edge_velocity(space, std::move(v));
}

Derivation Derivation::from_node_coefficients(const Space& space,
                                              const Field& bx) {
  if (space.spec.dimension != 1)
    throw std::invalid_argument("single-axis coefficients on a 2D space");
  return from_node_coefficients(space, std::array<Field, 2>{bx, Field()});
}

Derivation Derivation::from_axis_functions(
    const Space& space, const std::function<double(double, double)>& vx,
    const std::function<double(double, double)>& vy) {
  EdgeVelocity v;
  for (int a = 0; a < space.spec.dimension; ++a) {
    const auto& f = (a == 0) ? vx : vy;
    if (!f) throw std::invalid_argument("missing axis velocity function");
    const EdgeList& e = space.edges[a];
    v.axis[a].resize(e.from.size());
    for (size_t k = 0; k < e.from.size(); ++k) {
      double x = space.node_coord(e.from[k], 0);
      double y = space.spec.dimension == 2 ? space.node_coord(e.from[k], 1) : 0.0;
      if (a == 0)
        x = space.wrap(x + 0.5 * space.h(0), 0);
      else
        y = space.wrap(y + 0.5 * space.h(1), 1);
      v.axis[a][k] = f(x, y);
    }
  }
  return from_edge_velocity(space, std::move(v));
}

Derivation Derivation::gradient(const Space& space, const Field& V) {
  check_field(space, V, "Derivation::gradient");
  EdgeVelocity v;
  for (int a = 0; a < space.spec.dimension; ++a) {
    const EdgeList& e = space.edges[a];
    v.axis[a].resize(e.from.size());
    for (size_t k = 0; k < e.from.size(); ++k)
      v.axis[a][k] = (V[e.to[k]] - V[e.from[k]]) / space.h(a);
  }
  Derivation b = from_edge_velocity(space, std::move(v));
  b.potential_ = V;
  return b;
}

Derivation Derivation::from_stream_function(
    const Space& space, const std::function<double(double, double)>& psi) {
  if (space.spec.dimension != 2)
    throw std::invalid_argument("stream function needs a 2D space");
  auto dual = [&](double x, double y) {
    return psi(space.wrap(x + 0.5 * space.h(0), 0),
               space.wrap(y + 0.5 * space.h(1), 1));
  };
  EdgeVelocity v;
  for (int a = 0; a < 2; ++a) {
    const EdgeList& e = space.edges[a];
    v.axis[a].resize(e.from.size());
    for (size_t k = 0; k < e.from.size(); ++k) {
      const double x = space.node_coord(e.from[k], 0);
      const double y = space.node_coord(e.from[k], 1);
      if (a == 0)  // x-edge: v_x = -d(psi)/dy across the dual cell
        v.axis[a][k] = -(dual(x, y) - dual(x, y - space.h(1))) / space.h(1);
      else
        v.axis[a][k] = (dual(x, y) - dual(x - space.h(0), y)) / space.h(0);
    }
  }
  return from_edge_velocity(space, std::move(v));
}

Derivation Derivation::time_dependent(
    const Space& space, const std::function<EdgeVelocity(double)>& v_of_t) {
  Derivation b = from_edge_velocity(space, v_of_t(0.0));
  b.time_vel_ = v_of_t;
  return b;
}

EdgeVelocity Derivation::velocity(double t) const {
  return time_vel_ ? time_vel_(t) : vel_;
}

Field Derivation::apply(const Field& f, double t) const {
  check_field(*space_, f, "Derivation::apply");
  const EdgeVelocity v = velocity(t);
  Field acc = Field::Zero(space_->node_count());
  for (int a = 0; a < space_->spec.dimension; ++a) {
    const EdgeList& e = space_->edges[a];
    const double h = space_->h(a);
    for (size_t k = 0; k < e.from.size(); ++k) {
      const int i = e.from[k], j = e.to[k];
      const double d = e.conductance[k] * h * v.axis[a][k] * (f[j] - f[i]);
      acc[i] += d;
      acc[j] += d;
    }
  }
  return weight_ * acc / (2.0 * space_->measure);
}

Field Derivation::divergence(double t) const {
  const EdgeVelocity v = velocity(t);
  Field acc = Field::Zero(space_->node_count());
  for (int a = 0; a < space_->spec.dimension; ++a) {
    const EdgeList& e = space_->edges[a];
    const double h = space_->h(a);
    for (size_t k = 0; k < e.from.size(); ++k) {
      const int i = e.from[k], j = e.to[k];
      const double d =
          e.conductance[k] * h * v.axis[a][k] * 0.5 * (weight_[i] + weight_[j]);
      acc[i] += d;
      acc[j] -= d;
    }
  }
  return acc / space_->measure;
}

Derivation Derivation::scaled_by(const Field& u) const {
  check_field(*space_, u, "Derivation::scaled_by");
  Derivation b = *this;
  b.weight_ = weight_ * u;
  return b;
}

std::array<Field, 2> Derivation::node_velocity(double t) const {
  const EdgeVelocity v = velocity(t);
  std::array<Field, 2> nv;
  for (int a = 0; a < 2; ++a) {
    nv[a] = Field::Zero(space_->node_count());
    if (a >= space_->spec.dimension) continue;
    Field cnt = Field::Zero(space_->node_count());
    const EdgeList& e = space_->edges[a];
    for (size_t k = 0; k < e.from.size(); ++k) {
      nv[a][e.from[k]] += v.axis[a][k];
      nv[a][e.to[k]] += v.axis[a][k];
      cnt[e.from[k]] += 1.0;
      cnt[e.to[k]] += 1.0;
    }
    nv[a] = weight_ * nv[a] / cnt.max(1.0);
  }
  return nv;
}

Field Derivation::node_speed(double t) const {
  const auto nv = node_velocity(t);
  return (nv[0].square() + nv[1].square()).sqrt();
}

double Derivation::max_speed(double t) const {
  const Field s = node_speed(t);
  return s.size() ? s.maxCoeff() : 0.0;
}

// ---------------------------------------------------------------------------
// Probes

std::vector<Field> smooth_probes(const Space& space, int count) {
  std::vector<Field> out;
  const Field x = space.coords(0);
  const bool periodic = space.spec.boundary == Boundary::Periodic;
  if (space.spec.dimension == 1) {
    const double a = space.spec.axis_min[0], L = space.spec.axis_len[0];
    if (periodic) {
      const Field th = 2.0 * M_PI * (x - a) / L;
      for (int k = 1; int(out.size()) < count; ++k) {
        out.push_back((double(k) * th).sin());
        if (int(out.size()) < count) out.push_back((double(k) * th).cos());
      }
    } else {
      // Low Hermite modes about the center, then Neumann cosine modes.
      const Field z = x - (a + 0.5 * L);
      out.push_back(z);
      out.push_back(z.square() - 1.0);
      out.push_back(z.cube() - 3.0 * z);
      out.push_back(z.square().square() - 6.0 * z.square() + 3.0);
      const Field th = M_PI * (x - a) / L;
      for (int k = 1; int(out.size()) < count; ++k)
        out.push_back((double(k) * th).cos());
    }
  } else {
    const Field y = space.coords(1);
    const double ax = space.spec.axis_min[0], Lx = space.spec.axis_len[0];
    const double ay = space.spec.axis_min[1], Ly = space.spec.axis_len[1];
    const double sx = (periodic ? 2.0 * M_PI : M_PI) / Lx;
    const double sy = (periodic ? 2.0 * M_PI : M_PI) / Ly;
    const Field tx = sx * (x - ax), ty = sy * (y - ay);
    for (int total = 1; int(out.size()) < count; ++total) {
      for (int k = 0; k <= total && int(out.size()) < count; ++k) {
        const int l = total - k;
        if (periodic) {
          Field f = Field::Ones(space.node_count());
          if (k > 0) f *= (double(k) * tx).sin();
          if (l > 0) f *= (double(l) * ty).sin();
          if (k > 0 || l > 0) out.push_back(f);
          if (int(out.size()) < count && (k > 0 || l > 0)) {
            Field g = Field::Ones(space.node_count());
            if (k > 0) g *= (double(k) * tx).cos();
            if (l > 0) g *= (double(l) * ty).cos();
            out.push_back(g);
          }
        } else {
          out.push_back((double(k) * tx).cos() * (double(l) * ty).cos());
        }
      }
    }
  }
  // Normalize so ||sqrt(Gamma(f))||_inf = 1.
  for (Field& f : out) {
    const double g = std::sqrt(gamma(space, f).maxCoeff());
    if (g > 0) f /= g;
  }
  return out;
}

ProbeFamily make_probe_family(const Space& space, uint64_t seed, int n_smooth,
                              int n_noise, double heat_reg) {
  ProbeFamily family;
  family.seed = seed;
  family.probes = smooth_probes(space, n_smooth);
  for (int k = 0; k < n_noise; ++k) {
    RngStream rng(seed, uint64_t(k) + 1);
    Field noise(space.node_count());
    for (int i = 0; i < space.node_count(); ++i) noise[i] = rng.next_normal();
    Field f = apply_semigroup(space, noise, heat_reg);
    const double g = std::sqrt(gamma(space, f).maxCoeff());
    if (g > 0) f /= g;
    family.probes.push_back(std::move(f));
  }
  return family;
}

std::pair<Field, Field> modulus(const Space& space, const Derivation& b,
                                const ProbeFamily& probes, double t) {
  if (probes.probes.empty())
    throw std::invalid_argument("modulus: empty probe family");
  Field abs_b = b.node_speed(t);
  if (b.has_potential() && (b.weight() == 1.0).all())
    abs_b = gamma(space, b.potential_field()).max(0.0).sqrt();
  Field dual = Field::Zero(space.node_count());
  double gmax = 0.0;
  std::vector<Field> gammas;
  for (const Field& p : probes.probes) {
    gammas.push_back(gamma(space, p));
    gmax = std::max(gmax, gammas.back().maxCoeff());
  }
  const double tol = 1e-12 * std::max(gmax, 1e-300);
  for (size_t k = 0; k < probes.probes.size(); ++k) {
    const Field action = b.apply(probes.probes[k], t);
    for (int i = 0; i < space.node_count(); ++i)
      if (gammas[k][i] > tol)
        dual[i] = std::max(dual[i], std::abs(action[i]) / std::sqrt(gammas[k][i]));
  }
  return {abs_b, dual};
}

double chain_rule_defect(const Space& space, const Derivation& b,
                         const SmoothMap& map, const std::vector<Field>& fields,
                         double t) {
  const int n = space.node_count();
  const int m = int(fields.size());
  Field composed(n);
  Eigen::MatrixXd grads(n, m);
  Eigen::ArrayXd args(m);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < m; ++k) args[k] = fields[k][i];
    composed[i] = map.value(args);
    grads.row(i) = map.grad(args).matrix().transpose();
  }
  Field lhs = b.apply(composed, t);
  Field rhs = Field::Zero(n);
  for (int k = 0; k < m; ++k)
    rhs += grads.col(k).array() * b.apply(fields[k], t);
  return lp_norm(space, lhs - rhs, 2.0);
}

double deformation_pairing(const Space& space, const Derivation& b,
                           const Field& f, const Field& g, double t) {
  const Field df = b.apply(f, t), dg = b.apply(g, t);
  const Field lf = laplacian(space, f), lg = laplacian(space, g);
  const Field div_b = b.divergence(t);
  return -0.5 * kahan_sum(space.measure *
                          (df * lg + dg * lf - div_b * gamma(space, f, g)));
}

DeformationReport deformation_norm_estimate(const Space& space,
                                            const Derivation& b, double r,
                                            double s,
                                            const ProbeFamily& probes,
                                            double t) {
  const double inv_q = 1.0 - 1.0 / r - 1.0 / s;
  if (!(inv_q >= 0.0) || !(inv_q < 1.0) || r < 1 || s < 1)
    throw std::invalid_argument(
        "deformation_norm_estimate: need 1/q + 1/r + 1/s = 1 with q in (1,inf]");
  DeformationReport report;
  report.r = r;
  report.s = s;
  report.q = inv_q == 0.0 ? std::numeric_limits<double>::infinity() : 1.0 / inv_q;
  std::vector<double> nr, ns;
  for (const Field& p : probes.probes) {
    const Field sg = gamma(space, p).max(0.0).sqrt();
    nr.push_back(lp_norm(space, sg, r));
    ns.push_back(lp_norm(space, sg, s));
  }
  for (size_t i = 0; i < probes.probes.size(); ++i)
    for (size_t j = 0; j < probes.probes.size(); ++j) {
      if (nr[i] <= 1e-14 || ns[j] <= 1e-14) continue;
      const double pv =
          deformation_pairing(space, b, probes.probes[i], probes.probes[j], t);
      report.estimate = std::max(report.estimate, std::abs(pv) / (nr[i] * ns[j]));
      ++report.pairs_used;
    }
  return report;
}

Field hessian(const Space& space, const Field& V, const Field& f,
              const Field& g) {
  return 0.5 * (gamma(space, f, gamma(space, V, g)) +
                gamma(space, g, gamma(space, V, f)) -
                gamma(space, V, gamma(space, f, g)));
}

// ---------------------------------------------------------------------------
// JSON families

Derivation derivation_from_json(const Space& space, const nlohmann::json& j) {
  if (j.contains("coefficients")) {
    const auto& c = j.at("coefficients");
    std::array<Field, 2> coeff;
    auto to_field = [&](const nlohmann::json& arr) {
      const auto v = arr.get<std::vector<double>>();
      return Eigen::Map<const Field>(v.data(), v.size()).eval();
    };
    coeff[0] = to_field(c.at("x"));
    coeff[1] = space.spec.dimension == 2 ? to_field(c.at("y")) : Field();
    return Derivation::from_node_coefficients(space, coeff);
  }
  const std::string family = j.at("family").get<std::string>();
  const double amp = j.value("amplitude", 1.0);
  const int mode = j.value("mode", 1);
  const double a = space.spec.axis_min[0], L = space.spec.axis_len[0];
  const double scale = (space.spec.boundary == Boundary::Periodic ? 2.0 * M_PI : M_PI) / L;
  if (family == "zero") return Derivation::zero(space);
  if (family == "constant") {
    if (j.at("value").is_array()) {
      const auto v = j.at("value").get<std::vector<double>>();
      return Derivation::from_axis_functions(
          space, [v](double, double) { return v[0]; },
          [v](double, double) { return v.size() > 1 ? v[1] : 0.0; });
    }
    const double c = j.at("value").get<double>();
    return Derivation::from_axis_functions(
        space, [c](double, double) { return c; },
        space.spec.dimension == 2
            ? std::function<double(double, double)>([c](double, double) { return c; })
            : nullptr);
  }
  if (family == "sine")
    return Derivation::from_axis_functions(
        space,
        [=](double x, double) { return amp * std::sin(mode * scale * (x - a)); },
        space.spec.dimension == 2
            ? std::function<double(double, double)>([](double, double) { return 0.0; })
            : nullptr);
  if (family == "gradient") {
    const auto v = j.at("potential").get<std::vector<double>>();
    return Derivation::gradient(space,
                                Eigen::Map<const Field>(v.data(), v.size()));
  }
  if (family == "gradient-sine") {
    Field V(space.node_count());
    for (int i = 0; i < space.node_count(); ++i)
      V[i] = amp * std::sin(mode * scale * (space.node_coord(i, 0) - a));
    return Derivation::gradient(space, V);
  }
  if (family == "rotation")
    return Derivation::from_stream_function(space, [=](double x, double y) {
      return amp * std::sin(scale * (x - a)) *
             std::sin(scale * (y - space.spec.axis_min[1]));
    });
  if (family == "sobolev") {
    const double p = j.value("exponent", 0.6);
    return Derivation::from_axis_functions(
        space,
        [=](double x, double) {
          const double sv = std::sin(scale * (x - a));
          return amp * std::copysign(std::pow(std::abs(sv), p), sv);
        },
        space.spec.dimension == 2
            ? std::function<double(double, double)>([](double, double) { return 0.0; })
            : nullptr);
  }
  throw std::invalid_argument("unknown derivation family: " + family);
}

}  // namespace gfl
