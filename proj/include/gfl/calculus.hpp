#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "gfl/space.hpp"

namespace gfl {

// Carre du champ Gamma(f,g) = (Delta(fg) - f Delta g - g Delta f)/2.
// Equivalently (1/2m_i) sum_e c_e (f_j - f_i)(g_j - g_i): bilinear, symmetric
// and pointwise Cauchy-Schwarz.
Field gamma(const Space& space, const Field& f, const Field& g);
Field gamma(const Space& space, const Field& f);

// Antisymmetric edge velocities, one array per axis aligned with
// Space::edges. The discrete model of a vector field.
struct EdgeVelocity {
  std::array<Eigen::ArrayXd, 2> axis;
};

// A derivation f -> df(b). Stored as an edge velocity field v (possibly
// time-dependent) with an optional node weight u, acting as
//   df(b)_i = u_i/(2 m_i) sum_e c_e (h v_e) (f_j - f_i).
// The divergence is the exact m-weighted adjoint of this action, so
// integral df(b) dm = -integral f div b dm holds to round-off. Gradient
// derivations (v = gradient difference of V) act exactly as Gamma(V, .) and
// have divergence exactly Delta V.
class Derivation {
 public:
  static Derivation zero(const Space& space);
  static Derivation from_edge_velocity(const Space& space, EdgeVelocity v);
  // Node-wise coefficients per axis; edge values by midpoint average.
  static Derivation from_node_coefficients(const Space& space,
                                           const std::array<Field, 2>& coeff);
  static Derivation from_node_coefficients(const Space& space, const Field& bx);
  // Axis velocity functions sampled at edge midpoints.
  static Derivation from_axis_functions(
      const Space& space,
      const std::function<double(double, double)>& vx,
      const std::function<double(double, double)>& vy = nullptr);
  static Derivation gradient(const Space& space, const Field& V);
  // 2D divergence-free field from a stream function sampled on the dual grid;
  // exactly divergence-free when the space is a flat torus.
  static Derivation from_stream_function(
      const Space& space, const std::function<double(double, double)>& psi);
  static Derivation time_dependent(
      const Space& space, const std::function<EdgeVelocity(double)>& v_of_t);

  Field apply(const Field& f, double t = 0.0) const;
  Field divergence(double t = 0.0) const;
  Derivation scaled_by(const Field& u) const;

  EdgeVelocity velocity(double t = 0.0) const;
  // Per-axis node velocity (adjacent-edge average times weight).
  std::array<Field, 2> node_velocity(double t = 0.0) const;
  Field node_speed(double t = 0.0) const;  // |b|
  double max_speed(double t = 0.0) const;

  bool is_time_dependent() const { return bool(time_vel_); }
  bool has_potential() const { return bool(potential_); }
  const Field& potential_field() const { return *potential_; }
  const Field& weight() const { return weight_; }
  const Space& space() const { return *space_; }

 private:
  Derivation() = default;
  const Space* space_ = nullptr;
  EdgeVelocity vel_;
  std::function<EdgeVelocity(double)> time_vel_;
  Field weight_;
  std::optional<Field> potential_;
};

// Probe fields with ||sqrt(Gamma(f))||_inf normalized to 1: trig/Hermite-type
// modes plus heat-regularized white noise. The discrete stand-in for a dense
// test class of Lipschitz functions.
struct ProbeFamily {
  std::vector<Field> probes;
  uint64_t seed = 0;
};

std::vector<Field> smooth_probes(const Space& space, int count = 16);
ProbeFamily make_probe_family(const Space& space, uint64_t seed = 20240811u,
                              int n_smooth = 16, int n_noise = 16,
                              double heat_reg = 0.05);

// Pointwise modulus |b| and dual modulus |b|_* = sup over probes of
// |df(b)| / sqrt(Gamma(f)).
std::pair<Field, Field> modulus(const Space& space, const Derivation& b,
                                const ProbeFamily& probes, double t = 0.0);

struct SmoothMap {
  std::function<double(const Eigen::ArrayXd&)> value;
  std::function<Eigen::ArrayXd(const Eigen::ArrayXd&)> grad;
};

// L2(m) norm of d Phi(f1..fn)(b) - sum_i dPhi_i(f) df_i(b).
double chain_rule_defect(const Space& space, const Derivation& b,
                         const SmoothMap& map, const std::vector<Field>& fields,
                         double t = 0.0);

// -(1/2) integral [df(b) Delta g + dg(b) Delta f - (div b) Gamma(f,g)] dm.
double deformation_pairing(const Space& space, const Derivation& b,
                           const Field& f, const Field& g, double t = 0.0);

struct DeformationReport {
  double estimate = 0.0;  // lower bound for ||D^sym b||_{r,s} over the probes
  double r = 0, s = 0, q = 0;
  int pairs_used = 0;
};

DeformationReport deformation_norm_estimate(const Space& space,
                                            const Derivation& b, double r,
                                            double s,
                                            const ProbeFamily& probes,
                                            double t = 0.0);

// H[V](f,g) = [Gamma(f,Gamma(V,g)) + Gamma(g,Gamma(V,f)) - Gamma(V,Gamma(f,g))]/2.
Field hessian(const Space& space, const Field& V, const Field& f,
              const Field& g);

// Named analytic derivation families from JSON, or raw coefficient arrays.
Derivation derivation_from_json(const Space& space, const nlohmann::json& j);

}  // namespace gfl
