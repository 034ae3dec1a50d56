#pragma once

#include <ostream>

#include "gfl/calculus.hpp"

namespace gfl {

// How the transport term div(u b) is discretized.
//  Adjoint: exact m-adjoint of f -> df(b); centered, second order, mass exact.
//  Upwind:  donor-cell fluxes; first order, monotone with theta = 1.
enum class Transport { Adjoint, Upwind };

struct CEScheme {
  double theta = 0.5;   // implicitness of the step, in [0, 1]
  double sigma = 0.0;   // viscosity
  double dt = 0.0;      // time step, required > 0 (snapped to divide T)
  Transport transport = Transport::Adjoint;
  int checkpoint_stride = 1;  // store every k-th field
};

struct CESolution {
  const Space* space = nullptr;
  CEScheme scheme;           // with the actually used dt
  double T = 0.0;
  std::vector<double> times;        // checkpoint times (always 0 and T)
  std::vector<Field> fields;        // checkpoint fields
  std::vector<double> mass_trace;   // per step, including t = 0
  std::vector<double> l2_trace;
  double mass_drift = 0.0;          // max |mass_t - mass_0| / integral |u0| dm
  double min_value = 0.0;           // min over all steps and nodes

  const Field& initial() const { return fields.front(); }
  const Field& final() const { return fields.back(); }
};

// Sparse matrix of u -> div(u b_t).
Eigen::SparseMatrix<double> transport_matrix(const Space& space,
                                             const Derivation& b, double t,
                                             Transport transport);

// Theta-scheme solve of  d/dt u + div(u b_t) = sigma * Delta u,  u(0) = u0.
// Transport and diffusion share the same theta; one sparse solve per step
// (factorized once when b is autonomous). Mass is conserved identically.
// Throws std::invalid_argument on CFL violation (dt * max|b| / h > 0.5 with
// theta < 1) with a suggested dt in the message.
CESolution solve_viscous_ce(const Space& space, const Derivation& b,
                            const Field& u0, double T, const CEScheme& scheme);

struct ViscosityTable {
  std::vector<double> sigmas;       // descending ladder
  std::vector<double> differences;  // L1 gap at t = T between successive runs
  double order = 0.0;               // empirical order in sigma
  bool monotone = true;             // false if differences jump by > 5%
  CESolution limit;                 // run at the smallest sigma
};

ViscosityTable vanishing_viscosity(const Space& space, const Derivation& b,
                                   const Field& u0,
                                   const std::vector<double>& sigmas, double T,
                                   CEScheme base);

// Convex entropy beta with beta(0) = 0, its one-sided derivative, and
// L_beta(z) = z beta'(z) - beta(z) >= 0.
struct EntropyFamily {
  std::string name;
  std::function<double(double)> beta;
  std::function<double(double)> dbeta;     // one-sided derivative
  std::function<double(double)> legendre;  // z dbeta(z) - beta(z)
};

EntropyFamily entropy_identity();
EntropyFamily entropy_square();
EntropyFamily entropy_power_plus(double r);  // beta(z) = (z^+)^r, r >= 1
EntropyFamily entropy_positive_part();
// beta_n: equals beta on [-n, n], extended linearly outside.
EntropyFamily truncate(const EntropyFamily& family, double n);
// Samples L_beta on a z grid and reports the most negative value found.
double legendre_min(const EntropyFamily& family, double lo, double hi,
                    int samples = 2001);

struct EntropyReport {
  std::vector<double> trace;    // integral beta(u_t) dm at checkpoints
  double worst_residual = 0.0;  // excess of d/dt trace over the dissipation bound
  double tolerance = 0.0;
  bool ok = false;
};

// Checks d/dt integral beta(u_t) dm <= integral L_beta(u_t) (div b)^- dm with
// centered time differences; needs checkpoint_stride = 1.
EntropyReport entropy_trace(const CESolution& sol, const EntropyFamily& family,
                            const Derivation& b);

struct AprioriReport {
  double r = 2.0;
  double worst_margin = 0.0;  // max relative excess over the bound (<= 0 passes)
  double worst_time = 0.0;
  bool ok = false;
};

// sup_t ||u_t^pm||_r <= (1 + 10(dt + h^2)) ||u0^pm||_r
//                       * exp((1 - 1/r) int_0^t ||(div b_s)^-||_inf ds).
AprioriReport apriori_check(const CESolution& sol, const Derivation& b,
                            double r);

// Worst defect of d/dt int u phi dm = int u dphi(b) dm + sigma int u Dphi dm
// over the checkpoints, relative to 5 (dt + h^2) scale.
double weak_residual(const CESolution& sol, const Derivation& b,
                     const Field& phi);

struct UniquenessReport {
  std::vector<double> levels;       // refinement factor 2^-k
  std::vector<double> differences;  // sup_t ||u1 - u2||_1 per level
  double order = 0.0;
  bool ok = false;  // differences negligible or vanishing at order >= 0.8
};

// Solves with both schemes while refining dt (and sigma) by halves and
// measures how fast the two runs merge.
UniquenessReport uniqueness_probe(const Space& space, const Derivation& b,
                                  const Field& u0, CEScheme first,
                                  CEScheme second, double T, int levels = 3);

// CSV: t, mass, l2, checkpointed sup norm.
void write_ce_csv(const CESolution& sol, std::ostream& os);

}  // namespace gfl
