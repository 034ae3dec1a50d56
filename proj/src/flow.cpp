#include "gfl/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "gfl/numeric.hpp"
#include "gfl/rng.hpp"

namespace gfl {

namespace {

void parallel_for(int n, int threads, const std::function<void(int, int)>& fn) {
  int hw = threads > 0 ? threads : int(std::thread::hardware_concurrency());
  hw = std::max(1, std::min(hw, n));
  if (hw == 1 || n < 256) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  const int chunk = (n + hw - 1) / hw;
  for (int t = 0; t < hw; ++t) {
    const int lo = t * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back(fn, lo, hi);
  }
  for (auto& th : pool) th.join();
}

// Linear interpolation of a node field at an arbitrary point.
double interp(const Space& sp, const Field& vals, double x, double y) {
  const int N = sp.axis_nodes();
  const bool per = sp.spec.boundary == Boundary::Periodic;
  auto locate = [&](double c, int axis, int& i0, int& i1, double& f) {
    const double h = sp.h(axis);
    double s = (c - sp.spec.axis_min[axis]) / h - (per ? 0.0 : 0.5);
    if (per) {
      s -= std::floor(s / N) * N;
      i0 = int(s) % N;
      i1 = (i0 + 1) % N;
      f = s - std::floor(s);
    } else {
      s = std::clamp(s, 0.0, double(N - 1));
      i0 = std::min(int(s), N - 2);
      i1 = i0 + 1;
      f = s - i0;
    }
  };
  int i0, i1, j0 = 0, j1 = 0;
  double fx, fy = 0.0;
  locate(x, 0, i0, i1, fx);
  if (sp.spec.dimension == 1)
    return (1.0 - fx) * vals[i0] + fx * vals[i1];
  locate(y, 1, j0, j1, fy);
  return (1.0 - fy) * ((1.0 - fx) * vals[sp.node_index(i0, j0)] +
                       fx * vals[sp.node_index(i1, j0)]) +
         fy * ((1.0 - fx) * vals[sp.node_index(i0, j1)] +
               fx * vals[sp.node_index(i1, j1)]);
}

double domain_distance(const Space& sp, const Eigen::ArrayXXd& a,
                       const Eigen::ArrayXXd& b, int p, int q) {
  double acc = 0.0;
  for (int axis = 0; axis < sp.spec.dimension; ++axis) {
    const double d = sp.axis_distance(a(p, axis), b(q, axis), axis);
    acc += d * d;
  }
  return std::sqrt(acc);
}

// Brings a particle coordinate back into the domain; returns true if a
// reflecting clamp was applied (interval boundary touched).
bool confine(const Space& sp, int axis, double& c) {
  const double a = sp.spec.axis_min[axis], L = sp.spec.axis_len[axis];
  if (sp.spec.boundary == Boundary::Periodic) {
    c -= std::floor((c - a) / L) * L;
    return false;
  }
  bool clamped = false;
  while (c < a || c > a + L) {
    clamped = true;
    if (c < a) c = 2.0 * a - c;
    if (c > a + L) c = 2.0 * (a + L) - c;
  }
  return clamped;
}

Eigen::ArrayXXd sample_initial(const Space& sp, const Field& density, int n,
                               uint64_t seed) {
  if (density.size() != sp.node_count())
    throw std::invalid_argument("integrate_flow: density size mismatch");
  if (density.minCoeff() < 0.0)
    throw std::invalid_argument("integrate_flow: density must be nonnegative");
  const Field w = density * sp.measure;
  std::vector<double> cum(w.size());
  std::partial_sum(w.begin(), w.end(), cum.begin());
  if (!(cum.back() > 0.0))
    throw std::invalid_argument("integrate_flow: density has zero mass");

  const int dim = sp.spec.dimension;
  Eigen::ArrayXXd pts(n, dim);
  for (int p = 0; p < n; ++p) {
    RngStream rng(seed, uint64_t(p));
    // Stratified quantiles: particle p owns the slice [p, p+1)/n of the mass,
    // jittered by its own stream, so the empirical law is an inverse-CDF
    // transform with O(1/n) transport error instead of O(1/sqrt(n)).
    const double u = (double(p) + rng.next_double()) / double(n) * cum.back();
    const int cell = std::min<int>(
        int(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin()),
        int(cum.size()) - 1);
    const int i = cell % sp.axis_nodes();
    const int j = cell / sp.axis_nodes();
    const double lo = cell > 0 ? cum[size_t(cell) - 1] : 0.0;
    const double frac =
        w[cell] > 0.0 ? std::clamp((u - lo) / w[cell], 0.0, 1.0) : 0.5;
    double x = sp.node_coord(sp.node_index(i, j), 0) + sp.h(0) * (frac - 0.5);
    confine(sp, 0, x);
    pts(p, 0) = x;
    if (dim == 2) {
      double y = sp.node_coord(sp.node_index(i, j), 1) +
                 sp.h(1) * (rng.next_double() - 0.5);
      confine(sp, 1, y);
      pts(p, 1) = y;
    }
  }
  return pts;
}

// Gaussian smoothing of cell measures, separable per axis; kernels are
// renormalized at interval boundaries.
Field smooth_measure(const Space& sp, Field meas, double bandwidth) {
  const int N = sp.axis_nodes();
  const bool per = sp.spec.boundary == Boundary::Periodic;
  for (int axis = 0; axis < sp.spec.dimension; ++axis) {
    const double h = sp.h(axis);
    const int K = std::max(1, int(std::ceil(3.0 * bandwidth / h)));
    Eigen::ArrayXd g(2 * K + 1);
    for (int k = -K; k <= K; ++k)
      g[k + K] = std::exp(-0.5 * std::pow(k * h / bandwidth, 2));
    Field out = Field::Zero(meas.size());
    const int rows = sp.spec.dimension == 1 ? 1 : N;
    for (int j = 0; j < rows; ++j)
      for (int i = 0; i < N; ++i) {
        double acc = 0.0, wsum = 0.0;
        for (int k = -K; k <= K; ++k) {
          int ii = axis == 0 ? i + k : i;
          int jj = axis == 0 ? j : j + k;
          int& c = axis == 0 ? ii : jj;
          if (per)
            c = (c % N + N) % N;
          else if (c < 0 || c >= N)
            continue;
          acc += g[k + K] * meas[sp.node_index(ii, jj)];
          wsum += g[k + K];
        }
        out[sp.node_index(i, j)] = acc / wsum;
      }
    meas = out;
  }
  return meas;
}

Field bin_points(const Space& sp, const Eigen::ArrayXXd& pts) {
  Field counts = Field::Zero(sp.node_count());
  const int N = sp.axis_nodes();
  const bool per = sp.spec.boundary == Boundary::Periodic;
  for (int p = 0; p < pts.rows(); ++p) {
    int idx[2] = {0, 0};
    for (int axis = 0; axis < sp.spec.dimension; ++axis) {
      const double h = sp.h(axis);
      double s = (pts(p, axis) - sp.spec.axis_min[axis]) / h + (per ? 0.5 : 0.0);
      int i = int(std::floor(s));
      i = per ? ((i % N) + N) % N : std::clamp(i, 0, N - 1);
      idx[axis] = i;
    }
    counts[sp.node_index(idx[0], idx[1])] += 1.0;
  }
  return counts / double(pts.rows());
}

}  // namespace

PathEnsemble integrate_flow(const Space& space, const Derivation& b,
                            const Eigen::ArrayXXd& points, double T,
                            const FlowConfig& config) {
  if (!(config.ode_step > 0.0) || !(T > 0.0))
    throw std::invalid_argument("integrate_flow: need ode_step > 0 and T > 0");
  if (points.cols() != space.spec.dimension)
    throw std::invalid_argument("integrate_flow: point dimension mismatch");
  const int n = int(points.rows());
  const long steps = std::max<long>(1, std::lround(T / config.ode_step));
  const double dt = T / double(steps);

  // Node-velocity fields at all half-step times (one entry when autonomous).
  const bool autonomous = !b.is_time_dependent();
  std::vector<std::array<Field, 2>> vel;
  if (autonomous) {
    vel.push_back(b.node_velocity(0.0));
  } else {
    vel.reserve(2 * steps + 1);
    for (long j = 0; j <= 2 * steps; ++j)
      vel.push_back(b.node_velocity(0.5 * dt * double(j)));
  }
  auto nv = [&](long half_step) -> const std::array<Field, 2>& {
    return autonomous ? vel[0] : vel[size_t(half_step)];
  };

  long stride;
  if (config.store_stride > 0)
    stride = config.store_stride;
  else
    stride = std::max<long>(1, steps / std::max(1, config.checkpoints - 1));

  PathEnsemble ens;
  ens.space = &space;
  ens.T = T;
  ens.ode_step = dt;
  ens.seed = config.seed;
  ens.clamped.assign(n, 0);
  ens.sample_times.push_back(0.0);
  ens.positions.push_back(points);
  std::vector<long> stored_steps{0};
  for (long k = stride; k < steps; k += stride) stored_steps.push_back(k);
  stored_steps.push_back(steps);
  for (size_t s = 1; s < stored_steps.size(); ++s) {
    ens.sample_times.push_back(double(stored_steps[s]) * dt);
    ens.positions.emplace_back(n, space.spec.dimension);
  }

  const int dim = space.spec.dimension;
  parallel_for(n, config.threads, [&](int lo, int hi) {
    std::array<double, 2> x, k1, k2, k3, k4, tmp;
    for (int p = lo; p < hi; ++p) {
      for (int a = 0; a < dim; ++a) x[a] = points(p, a);
      bool flag = false;
      size_t next_store = 1;
      for (long k = 0; k < steps; ++k) {
        const auto& v0 = nv(2 * k);
        const auto& vh = nv(2 * k + 1);
        const auto& v1 = nv(2 * k + 2);
        auto eval = [&](const std::array<Field, 2>& v,
                        const std::array<double, 2>& at,
                        std::array<double, 2>& out) {
          for (int a = 0; a < dim; ++a)
            out[a] = interp(space, v[a], at[0], dim == 2 ? at[1] : 0.0);
        };
        eval(v0, x, k1);
        for (int a = 0; a < dim; ++a) tmp[a] = x[a] + 0.5 * dt * k1[a];
        eval(vh, tmp, k2);
        for (int a = 0; a < dim; ++a) tmp[a] = x[a] + 0.5 * dt * k2[a];
        eval(vh, tmp, k3);
        for (int a = 0; a < dim; ++a) tmp[a] = x[a] + dt * k3[a];
        eval(v1, tmp, k4);
        for (int a = 0; a < dim; ++a) {
          x[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
          flag |= confine(space, a, x[a]);
        }
        if (next_store < stored_steps.size() &&
            k + 1 == stored_steps[next_store]) {
          for (int a = 0; a < dim; ++a)
            ens.positions[next_store](p, a) = x[a];
          ++next_store;
        }
      }
      ens.clamped[p] = flag ? 1 : 0;
    }
  });
  return ens;
}

PathEnsemble integrate_flow(const Space& space, const Derivation& b,
                            const Field& density, int n, double T,
                            const FlowConfig& config) {
  if (n <= 0) throw std::invalid_argument("integrate_flow: need n > 0");
  return integrate_flow(space, b, sample_initial(space, density, n, config.seed),
                        T, config);
}

double wasserstein_1d(const Space& space, std::vector<double> points,
                      const Field& density) {
  if (space.spec.dimension != 1)
    throw std::invalid_argument("wasserstein_1d: 1D spaces only");
  const int n = int(points.size());
  if (n == 0) throw std::invalid_argument("wasserstein_1d: empty point set");
  std::sort(points.begin(), points.end());
  const Field w = (density.max(0.0) * space.measure);
  const double mass = w.sum();
  const double a = space.spec.axis_min[0], L = space.spec.axis_len[0];
  const double h = space.h(0);
  const int N = space.axis_nodes();
  const bool per = space.spec.boundary == Boundary::Periodic;

  // Reference CDF: piecewise linear, each cell [center - h/2, center + h/2]
  // carrying weight w_i / mass.
  std::vector<double> cum(N + 1, 0.0);
  for (int i = 0; i < N; ++i) cum[i + 1] = cum[i] + w[i] / mass;
  auto ref_cdf = [&](double x) {
    // Cell layout: periodic grids have node 0 at the left edge, so the first
    // half-cell wraps; fold x into the cell-aligned frame.
    double s = (x - a) / h + (per ? 0.5 : 0.0);
    if (s <= 0.0) return 0.0;
    if (s >= N) return 1.0;
    const int i = std::min(int(s), N - 1);
    return cum[i] + (s - i) * (cum[i + 1] - cum[i]);
  };

  const int M = 32768;
  const double dx = L / M;
  std::vector<double> diff(M);
  size_t ptr = 0;
  for (int j = 0; j < M; ++j) {
    const double x = a + (j + 0.5) * dx;
    while (ptr < points.size() && points[ptr] <= x) ++ptr;
    diff[j] = double(ptr) / n - ref_cdf(x);
  }
  if (per) {
    // Optimal rotation: subtract the median of the CDF difference.
    std::vector<double> sorted = diff;
    std::nth_element(sorted.begin(), sorted.begin() + M / 2, sorted.end());
    const double theta = sorted[M / 2];
    for (double& d : diff) d -= theta;
  }
  double w1 = 0.0;
  for (double d : diff) w1 += std::abs(d) * dx;
  return w1;
}

double smoothed_l1_distance(const Space& space, const Eigen::ArrayXXd& points,
                            const Field& density, double bandwidth) {
  if (bandwidth < space.h(0))
    throw std::invalid_argument("smoothed_l1_distance: bandwidth below h");
  Field emp = bin_points(space, points);
  Field ref = density.max(0.0) * space.measure;
  ref /= ref.sum();
  const Field d =
      smooth_measure(space, emp - ref, bandwidth);
  return d.abs().sum();
}

FlowReport superposition_check(const Space& space, const PathEnsemble& ensemble,
                               const CESolution& ce) {
  if (ce.space != &space || ensemble.space != &space)
    throw std::invalid_argument("superposition_check: mismatched spaces");
  const int n = ensemble.size();
  const double L = space.spec.axis_len[0];
  auto marginal = [&](const Eigen::ArrayXXd& pts, const Field& u) {
    if (space.spec.dimension == 1) {
      std::vector<double> xs(pts.col(0).begin(), pts.col(0).end());
      return wasserstein_1d(space, std::move(xs), u);
    }
    return smoothed_l1_distance(space, pts, u, 2.0 * space.h(0));
  };
  const double err0 = marginal(ensemble.positions.front(), ce.initial());
  const double tol0 =
      L * (20.0 / std::sqrt(double(n)) + 20.0 * space.h(0) * space.h(0));
  if (err0 > tol0)
    throw std::invalid_argument(
        "superposition_check: ensemble initial law does not match the "
        "transported initial datum");

  FlowReport rep;
  for (size_t k = 0; k < ensemble.sample_times.size(); ++k) {
    const double t = ensemble.sample_times[k];
    for (size_t j = 0; j < ce.times.size(); ++j) {
      if (std::abs(ce.times[j] - t) > 1e-9) continue;
      const double e = marginal(ensemble.positions[k], ce.fields[j]);
      rep.checkpoint_times.push_back(t);
      rep.marginal_errors.push_back(e);
      rep.worst_marginal = std::max(rep.worst_marginal, e);
      break;
    }
  }
  if (rep.checkpoint_times.empty())
    throw std::invalid_argument(
        "superposition_check: no shared checkpoint times");
  return rep;
}

double flow_semigroup_defect(const Space& space, const Derivation& b,
                             const PathEnsemble& ensemble) {
  if (b.is_time_dependent())
    throw std::invalid_argument(
        "flow_semigroup_defect: autonomous drifts only");
  const size_t mid = ensemble.sample_times.size() / 2;
  const double t_mid = ensemble.sample_times[mid];
  const double rest = ensemble.T - t_mid;
  if (!(rest > 0.0)) return 0.0;
  FlowConfig cfg;
  cfg.ode_step = ensemble.ode_step;
  cfg.checkpoints = 2;
  PathEnsemble restarted =
      integrate_flow(space, b, ensemble.positions[mid], rest, cfg);
  double worst = 0.0;
  for (int p = 0; p < ensemble.size(); ++p)
    worst = std::max(worst, domain_distance(space, restarted.positions.back(),
                                            ensemble.positions.back(), p, p));
  return worst;
}

CompressibilityReport compressibility(const Space& space,
                                      const PathEnsemble& ensemble,
                                      double bandwidth) {
  if (bandwidth < space.h(0))
    throw std::invalid_argument("compressibility: bandwidth below h");
  CompressibilityReport rep;
  rep.bandwidth = bandwidth;
  Field ref = smooth_measure(space, space.measure / space.total_mass, bandwidth);
  for (const auto& pts : ensemble.positions) {
    Field emp = smooth_measure(space, bin_points(space, pts), bandwidth);
    for (int i = 0; i < space.node_count(); ++i) {
      const double ratio = emp[i] / ref[i];
      if (ratio > rep.estimate) {
        rep.estimate = ratio;
        const double expected = ref[i] * ensemble.size();
        rep.stat_tolerance = 1.0 / std::sqrt(std::max(expected, 1.0));
      }
    }
  }
  return rep;
}

SpeedStats speed_identity_check(const Space& space, const PathEnsemble& ensemble,
                                const Derivation& b,
                                const ProbeFamily& probes) {
  const Field dual = modulus(space, b, probes).second;
  const double floor = 1e-9 * std::max(dual.maxCoeff(), 1.0);
  std::vector<double> rels;
  for (size_t k = 0; k + 1 < ensemble.sample_times.size(); ++k) {
    const double dtk =
        ensemble.sample_times[k + 1] - ensemble.sample_times[k];
    for (int p = 0; p < ensemble.size(); ++p) {
      const double speed = domain_distance(space, ensemble.positions[k + 1],
                                           ensemble.positions[k], p, p) /
                           dtk;
      const double expected =
          interp(space, dual, ensemble.positions[k](p, 0),
                 space.spec.dimension == 2 ? ensemble.positions[k](p, 1) : 0.0);
      rels.push_back(std::abs(speed - expected) / std::max(expected, floor));
    }
  }
  SpeedStats stats;
  stats.samples = int(rels.size());
  if (rels.empty()) return stats;
  std::sort(rels.begin(), rels.end());
  stats.median_rel = rels[rels.size() / 2];
  stats.p90_rel = rels[size_t(0.9 * double(rels.size() - 1))];
  return stats;
}

DissipationReport dissipation_check(const Space& space,
                                    const PathEnsemble& ensemble,
                                    const Field& V) {
  DissipationReport rep;
  const Field G = gamma(space, V);
  const Field rootG = G.max(0.0).sqrt();
  std::vector<double> speed_rels;
  const double floor = 1e-9 * std::max(rootG.maxCoeff(), 1.0);
  for (int p = 0; p < ensemble.size(); ++p) {
    double integral = 0.0, v0 = 0.0, prev_g = 0.0, prev_v = 0.0;
    for (size_t k = 0; k < ensemble.sample_times.size(); ++k) {
      const double x = ensemble.positions[k](p, 0);
      const double y =
          space.spec.dimension == 2 ? ensemble.positions[k](p, 1) : 0.0;
      const double g = interp(space, G, x, y);
      const double v = interp(space, V, x, y);
      if (k == 0) {
        v0 = v;
      } else {
        const double dtk =
            ensemble.sample_times[k] - ensemble.sample_times[k - 1];
        integral += 0.5 * (prev_g + g) * dtk;
        rep.monotone_violation = std::min(rep.monotone_violation, v - prev_v);
        const double speed = domain_distance(space, ensemble.positions[k],
                                             ensemble.positions[k - 1], p, p) /
                             dtk;
        const double expected = interp(space, rootG, x, y);
        speed_rels.push_back(std::abs(speed - expected) /
                             std::max(expected, floor));
      }
      prev_g = g;
      prev_v = v;
    }
    rep.worst_residual = std::max(rep.worst_residual,
                                  std::abs((prev_v - v0) - integral) / ensemble.T);
  }
  if (!speed_rels.empty()) {
    std::sort(speed_rels.begin(), speed_rels.end());
    rep.speed_median_rel = speed_rels[speed_rels.size() / 2];
  }
  return rep;
}

BranchingReport no_branching_check(const Space& space, const Derivation& b,
                                   const Eigen::ArrayXXd& points, double T,
                                   const FlowConfig& first,
                                   const FlowConfig& second, double gap_tol) {
  FlowConfig c1 = first, c2 = second;
  c1.store_stride = c2.store_stride = 0;
  c1.checkpoints = c2.checkpoints = 9;
  PathEnsemble e1 = integrate_flow(space, b, points, T, c1);
  PathEnsemble e2 = integrate_flow(space, b, points, T, c2);
  BranchingReport rep;
  int flagged = 0;
  const size_t common =
      std::min(e1.sample_times.size(), e2.sample_times.size());
  for (int p = 0; p < int(points.rows()); ++p) {
    double gap = 0.0;
    for (size_t k = 0; k < common; ++k)
      if (std::abs(e1.sample_times[k] - e2.sample_times[k]) < 1e-12)
        gap = std::max(gap, domain_distance(space, e1.positions[k],
                                            e2.positions[k], p, p));
    rep.max_gap = std::max(rep.max_gap, gap);
    if (gap > gap_tol) ++flagged;
  }
  rep.flagged_fraction = double(flagged) / double(points.rows());
  return rep;
}

void write_ensemble_csv(const PathEnsemble& ensemble, std::ostream& os) {
  const int dim = ensemble.space->spec.dimension;
  os << (dim == 2 ? "particle,t,x,y\n" : "particle,t,x\n");
  os.precision(17);
  for (int p = 0; p < ensemble.size(); ++p)
    for (size_t k = 0; k < ensemble.sample_times.size(); ++k) {
      os << p << ',' << ensemble.sample_times[k] << ','
         << ensemble.positions[k](p, 0);
      if (dim == 2) os << ',' << ensemble.positions[k](p, 1);
      os << '\n';
    }
}

}  // namespace gfl
