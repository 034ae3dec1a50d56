#pragma once

#include <ostream>

#include "gfl/calculus.hpp"
#include "gfl/continuity.hpp"

namespace gfl {

struct FlowConfig {
  double ode_step = 1e-3;
  uint64_t seed = 1;
  int checkpoints = 9;   // stored sample times including 0 and T
  int store_stride = 0;  // if > 0, store every store_stride-th step instead
  int threads = 0;       // 0 = hardware concurrency
};

// Forward-integrated particle paths of a derivation's velocity field.
// Classic RK4 with bilinear interpolation of the per-axis node velocities;
// positions wrap on tori and reflect (and flag) on intervals. Every particle
// draws from its own counter-based stream, so ensembles are bit-reproducible
// for a fixed (seed, config) regardless of threading.
struct PathEnsemble {
  const Space* space = nullptr;
  double T = 0.0;
  double ode_step = 0.0;
  uint64_t seed = 0;
  std::vector<double> sample_times;       // shared by all particles
  std::vector<Eigen::ArrayXXd> positions; // one (n x dim) block per sample time
  std::vector<uint8_t> clamped;           // boundary-clamp flag per particle

  int size() const { return int(clamped.size()); }
  const Eigen::ArrayXXd& at(int k) const { return positions[size_t(k)]; }
};

// Initial points drawn from density * m by stratified inverse-CDF over cells
// (each particle owns a jittered quantile slice); density >= 0 with positive
// mass.
PathEnsemble integrate_flow(const Space& space, const Derivation& b,
                            const Field& density, int n, double T,
                            const FlowConfig& config);
// Same integrator from explicit starting points (n x dim).
PathEnsemble integrate_flow(const Space& space, const Derivation& b,
                            const Eigen::ArrayXXd& points, double T,
                            const FlowConfig& config);

// Exact W1 distance between an empirical point cloud and the measure
// density * m on a 1D space; on circles the optimal rotation shift is taken
// out via the weighted median of the CDF difference.
double wasserstein_1d(const Space& space, std::vector<double> points,
                      const Field& density);

// L1 distance between binned-empirical and reference densities after
// Gaussian smoothing at the given bandwidth (2D marginal comparison).
double smoothed_l1_distance(const Space& space, const Eigen::ArrayXXd& points,
                            const Field& density, double bandwidth);

struct FlowReport {
  std::vector<double> checkpoint_times;
  std::vector<double> marginal_errors;  // vs the transported density
  double worst_marginal = 0.0;
};

// Marginal comparison of the ensemble against a continuity-equation solution
// with the same initial density. Throws if the initial laws disagree beyond
// the sampling tolerance.
FlowReport superposition_check(const Space& space, const PathEnsemble& ensemble,
                               const CESolution& ce);

// For autonomous drifts: restart the flow from the mid-time checkpoint and
// compare at T; returns the max domain distance over particles.
double flow_semigroup_defect(const Space& space, const Derivation& b,
                             const PathEnsemble& ensemble);

struct CompressibilityReport {
  double estimate = 0.0;  // max_t max_i smoothed empirical density / m density
  double bandwidth = 0.0;
  double stat_tolerance = 0.0;  // Poisson error bar at the worst node
};

// Needs an ensemble whose initial law is m normalized; bandwidth >= h.
CompressibilityReport compressibility(const Space& space,
                                      const PathEnsemble& ensemble,
                                      double bandwidth);

struct SpeedStats {
  double median_rel = 0.0;
  double p90_rel = 0.0;
  int samples = 0;
};

// Finite-difference particle speeds against the interpolated dual modulus
// |b|_* from the probe family.
SpeedStats speed_identity_check(const Space& space, const PathEnsemble& ensemble,
                                const Derivation& b, const ProbeFamily& probes);

struct DissipationReport {
  double worst_residual = 0.0;    // energy identity defect per unit time
  double speed_median_rel = 0.0;  // |eta'| vs sqrt(Gamma V) at the particle
  double monotone_violation = 0.0;  // most negative increment of V along paths
};

// For ensembles of the gradient derivation of V: checks
// V(eta(t)) - V(eta(s)) = int_s^t Gamma(V)(eta(r)) dr by trapezoid sums.
DissipationReport dissipation_check(const Space& space,
                                    const PathEnsemble& ensemble,
                                    const Field& V);

struct BranchingReport {
  double max_gap = 0.0;           // worst pathwise domain distance
  double flagged_fraction = 0.0;  // particles with gap > gap_tol
};

// Integrates the same starting points under two configs and measures how far
// the trajectories split.
BranchingReport no_branching_check(const Space& space, const Derivation& b,
                                   const Eigen::ArrayXXd& points, double T,
                                   const FlowConfig& first,
                                   const FlowConfig& second, double gap_tol);

// CSV: particle id, t, coordinates.
void write_ensemble_csv(const PathEnsemble& ensemble, std::ostream& os);

}  // namespace gfl
