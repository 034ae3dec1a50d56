#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"

namespace gfl {

// Real values on the nodes of a Space. Fields are plain Eigen arrays; the
// owning Space is always passed alongside.
using Field = Eigen::ArrayXd;

enum class Boundary { Periodic, Neumann };

// Discrete carrier of a weighted metric measure space: a uniform grid on a
// torus (periodic) or a box (Neumann, cell-centered).
struct GridSpec {
  int dimension = 1;
  std::array<double, 2> axis_min{0.0, 0.0};
  std::array<double, 2> axis_len{2.0 * M_PI, 2.0 * M_PI};
  int nodes_per_axis = 0;
  Boundary boundary = Boundary::Periodic;

  static GridSpec torus(double period, int n);
  static GridSpec torus2d(double period, int n);
  static GridSpec interval(double a, double b, int n);
  static GridSpec square(double a, double b, int n);

  void validate() const;
  int node_count() const;
  double h(int axis) const;
  double cell_volume() const;
};

struct Spectrum {
  Eigen::VectorXd values;   // eigenvalues of the generator, ascending
  Eigen::MatrixXd vectors;  // m-orthonormal eigenvectors as columns
};

// Grid edges along one axis, with flux-form conductances
// c_e = exp(-V(midpoint)) * h^(d-2), midpoint potential by node average.
struct EdgeList {
  std::vector<int> from, to;
  Eigen::ArrayXd conductance;
};

// Immutable weighted space (X, d, m) with generator
// (Delta f)_i = (1/m_i) sum_e c_e (f_j - f_i) and spectral heat semigroup.
class Space {
 public:
  GridSpec spec;
  Field potential;                         // V at nodes
  Field measure;                           // m_i = exp(-V_i) * h^d
  double total_mass = 0.0;
  Eigen::SparseMatrix<double> generator;   // self-adjoint in <.,.>_m
  std::array<EdgeList, 2> edges;

  int node_count() const { return int(measure.size()); }
  double h(int axis = 0) const { return spec.h(axis); }
  int axis_nodes() const { return spec.nodes_per_axis; }

  int node_index(int i, int j = 0) const {
    return spec.dimension == 1 ? i : j * spec.nodes_per_axis + i;
  }
  double node_coord(int idx, int axis) const;
  Field coords(int axis) const;

  // Spectral data, computed once on first use and cached.
  const Spectrum& spectrum() const;
  bool has_spectrum() const { return bool(*spectrum_); }

  double integrate(const Field& f) const;  // sum_i m_i f_i, compensated

  // Wraps or clamps a point into the domain along one axis.
  double wrap(double x, int axis) const;
  // Shortest domain distance along one axis (geodesic on the torus).
  double axis_distance(double x, double y, int axis) const;

 private:
  friend bool load_eigendata(const Space&, const std::filesystem::path&);
  mutable std::shared_ptr<std::unique_ptr<Spectrum>> spectrum_ =
      std::make_shared<std::unique_ptr<Spectrum>>();
  mutable std::shared_ptr<std::mutex> spectrum_mutex_ =
      std::make_shared<std::mutex>();
};

Space build_space(const GridSpec& spec, const Field& potential,
                  bool eager_spectrum = true);
Space build_space(const GridSpec& spec,
                  const std::function<double(double, double)>& potential,
                  bool eager_spectrum = true);

Field laplacian(const Space& space, const Field& f);
Field apply_semigroup(const Space& space, const Field& f, double t);

// m-weighted L^p norm, p in [1, inf].
double lp_norm(const Space& space, const Field& f, double p);
// L^p + L^q norm as the infimum over threshold splits, by golden section in
// the split level.
double lp_sum_norm(const Space& space, const Field& f, double p, double q);

struct AnalyticityReport {
  double c_estimate = 0.0;      // sup over probes, t of t ||Delta P_t f||_p / ||f||_p
  double log_bound_margin = 0.0;  // worst relative excess over the log bound
  bool log_bound_ok = false;
};

// Estimates the analyticity constant c^Delta_p on a t ladder in (0,1) and
// checks the semigroup difference log bound with the estimated constant.
AnalyticityReport analyticity_constant(const Space& space, double p,
                                       const std::vector<double>& t_ladder);
AnalyticityReport analyticity_constant(const Space& space, double p,
                                       const std::vector<double>& t_ladder,
                                       const std::vector<Field>& probes);

// Versioned JSON manifest plus flat binary eigendata sidecar keyed by the
// manifest hash.
nlohmann::json space_manifest(const Space& space);
std::string manifest_hash(const nlohmann::json& manifest);
std::filesystem::path save_eigendata(const Space& space,
                                     const std::filesystem::path& dir);
bool load_eigendata(const Space& space, const std::filesystem::path& dir);

}  // namespace gfl
