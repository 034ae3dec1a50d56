#include "gfl/space.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "gfl/numeric.hpp"

namespace gfl {

GridSpec GridSpec::torus(double period, int n) {
  GridSpec s;
  s.dimension = 1;
  s.axis_min = {0.0, 0.0};
  s.axis_len = {period, period};
  s.nodes_per_axis = n;
  s.boundary = Boundary::Periodic;
  s.validate();
  return s;
}

GridSpec GridSpec::torus2d(double period, int n) {
  GridSpec s = torus(period, n);
  s.dimension = 2;
  s.validate();
  return s;
}

GridSpec GridSpec::interval(double a, double b, int n) {
  GridSpec s;
  s.dimension = 1;
  s.axis_min = {a, a};
  s.axis_len = {b - a, b - a};
  s.nodes_per_axis = n;
  s.boundary = Boundary::Neumann;
  s.validate();
  return s;
}

GridSpec GridSpec::square(double a, double b, int n) {
  GridSpec s = interval(a, b, n);
  s.dimension = 2;
  s.validate();
  return s;
}

void GridSpec::validate() const {
  if (dimension != 1 && dimension != 2)
    throw std::invalid_argument("GridSpec: dimension must be 1 or 2");
  if (nodes_per_axis < 4)
    throw std::invalid_argument("GridSpec: need at least 4 nodes per axis");
  for (int a = 0; a < dimension; ++a)
    if (!(axis_len[a] > 0.0) || !std::isfinite(axis_len[a]))
      throw std::invalid_argument("GridSpec: axis length must be positive");
}

int GridSpec::node_count() const {
  return dimension == 1 ? nodes_per_axis : nodes_per_axis * nodes_per_axis;
}

double GridSpec::h(int axis) const { return axis_len[axis] / nodes_per_axis; }

double GridSpec::cell_volume() const {
  return dimension == 1 ? h(0) : h(0) * h(1);
}

double Space::node_coord(int idx, int axis) const {
  const int n = spec.nodes_per_axis;
  const int i = (spec.dimension == 1) ? idx : (axis == 0 ? idx % n : idx / n);
  const double offset = spec.boundary == Boundary::Periodic ? 0.0 : 0.5;
  return spec.axis_min[axis] + (i + offset) * h(axis);
}

Field Space::coords(int axis) const {
  Field x(node_count());
  for (int i = 0; i < node_count(); ++i) x[i] = node_coord(i, axis);
  return x;
}

double Space::integrate(const Field& f) const {
  return kahan_sum(measure * f);
}

double Space::wrap(double x, int axis) const {
  if (spec.boundary == Boundary::Periodic) {
    const double a = spec.axis_min[axis], L = spec.axis_len[axis];
    double y = std::fmod(x - a, L);
    if (y < 0) y += L;
    return a + y;
  }
  const double lo = spec.axis_min[axis];
  const double hi = spec.axis_min[axis] + spec.axis_len[axis];
  return std::clamp(x, lo, hi);
}

double Space::axis_distance(double x, double y, int axis) const {
  double d = std::abs(x - y);
  if (spec.boundary == Boundary::Periodic) {
    const double L = spec.axis_len[axis];
    d = std::fmod(d, L);
    d = std::min(d, L - d);
  }
  return d;
}

namespace {

void build_edges(Space& s) {
  const int n = s.spec.nodes_per_axis;
  const bool periodic = s.spec.boundary == Boundary::Periodic;
  const double vol = s.spec.cell_volume();
  for (int axis = 0; axis < s.spec.dimension; ++axis) {
    EdgeList& e = s.edges[axis];
    const double c_scale = vol / (s.h(axis) * s.h(axis));
    const int rows = s.spec.dimension == 1 ? 1 : n;
    std::vector<double> cond;
    for (int r = 0; r < rows; ++r) {
      const int last = periodic ? n : n - 1;
      for (int i = 0; i < last; ++i) {
        int from, to;
        if (axis == 0) {
          from = s.node_index(i, r);
          to = s.node_index((i + 1) % n, r);
        } else {
          from = s.node_index(r, i);
          to = s.node_index(r, (i + 1) % n);
        }
        e.from.push_back(from);
        e.to.push_back(to);
        cond.push_back(
            std::exp(-0.5 * (s.potential[from] + s.potential[to])) * c_scale);
      }
    }
    e.conductance = Eigen::Map<Eigen::ArrayXd>(cond.data(), cond.size());
  }
}

void build_generator(Space& s) {
  const int n = s.node_count();
  std::vector<Eigen::Triplet<double>> trip;
  for (int axis = 0; axis < s.spec.dimension; ++axis) {
    const EdgeList& e = s.edges[axis];
    for (size_t k = 0; k < e.from.size(); ++k) {
      const int i = e.from[k], j = e.to[k];
      const double c = e.conductance[k];
      trip.emplace_back(i, j, c / s.measure[i]);
      trip.emplace_back(i, i, -c / s.measure[i]);
      trip.emplace_back(j, i, c / s.measure[j]);
      trip.emplace_back(j, j, -c / s.measure[j]);
    }
  }
  s.generator.resize(n, n);
  s.generator.setFromTriplets(trip.begin(), trip.end());
  s.generator.makeCompressed();
}

void compute_spectrum(const Space& s, std::unique_ptr<Spectrum>& out) {
  const int n = s.node_count();
  const Eigen::ArrayXd sqm = s.measure.sqrt();
  Eigen::MatrixXd S = Eigen::MatrixXd(s.generator);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) S(i, j) *= sqm[i] / sqm[j];
  S = 0.5 * (S + S.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  if (es.info() != Eigen::Success)
    throw std::runtime_error(
        "spectral decomposition failed (n=" + std::to_string(n) +
        ", |S|_max=" + std::to_string(S.cwiseAbs().maxCoeff()) + ")");
  auto spec = std::make_unique<Spectrum>();
  spec->values = es.eigenvalues();
  spec->vectors = es.eigenvectors();
  for (int i = 0; i < n; ++i) spec->vectors.row(i) /= sqm[i];
  out = std::move(spec);
}

}  // namespace

const Spectrum& Space::spectrum() const {
  std::lock_guard<std::mutex> lock(*spectrum_mutex_);
  if (!*spectrum_) compute_spectrum(*this, *spectrum_);
  return **spectrum_;
}

Space build_space(const GridSpec& spec, const Field& potential,
                  bool eager_spectrum) {
  spec.validate();
  if (potential.size() != spec.node_count())
    throw std::invalid_argument("build_space: potential size mismatch");
  if (!potential.isFinite().all())
    throw std::invalid_argument("build_space: potential has non-finite values");

  Space s;
  s.spec = spec;
  s.potential = potential;
  s.measure = (-potential).exp() * spec.cell_volume();
  s.total_mass = kahan_sum(s.measure);
  build_edges(s);
  build_generator(s);
  if (eager_spectrum) s.spectrum();
  return s;
}

Space build_space(const GridSpec& spec,
                  const std::function<double(double, double)>& potential,
                  bool eager_spectrum) {
  spec.validate();
  Field v(spec.node_count());
  Space probe;  // only for coordinates
  probe.spec = spec;
  probe.measure = Field::Zero(spec.node_count());
  for (int i = 0; i < spec.node_count(); ++i)
    v[i] = potential(probe.node_coord(i, 0),
                     spec.dimension == 2 ? probe.node_coord(i, 1) : 0.0);
  return build_space(spec, v, eager_spectrum);
}

Field laplacian(const Space& space, const Field& f) {
  return (space.generator * f.matrix()).array();
}

Field apply_semigroup(const Space& space, const Field& f, double t) {
  if (t < 0) throw std::invalid_argument("apply_semigroup: t must be >= 0");
  if (t == 0) return f;
  const Spectrum& sp = space.spectrum();
  Eigen::VectorXd coeff = sp.vectors.transpose() * (space.measure * f).matrix();
  coeff.array() *= (sp.values.array() * t).exp();
  return (sp.vectors * coeff).array();
}

double lp_norm(const Space& space, const Field& f, double p) {
  if (p < 1) throw std::invalid_argument("lp_norm: p must be >= 1");
  if (std::isinf(p)) return f.size() ? f.abs().maxCoeff() : 0.0;
  return std::pow(kahan_sum(space.measure * f.abs().pow(p)), 1.0 / p);
}

double lp_sum_norm(const Space& space, const Field& f, double p, double q) {
  if (p < 1 || q < 1) throw std::invalid_argument("lp_sum_norm: p, q >= 1");
  const double fmax = f.size() ? f.abs().maxCoeff() : 0.0;
  if (fmax == 0.0) return 0.0;
  auto split_norm = [&](double lambda) {
    const Field big = (f.abs() > lambda).select(f, Field::Zero(f.size()));
    const Field small = (f.abs() > lambda).select(Field::Zero(f.size()), f);
    return lp_norm(space, big, p) + lp_norm(space, small, q);
  };
  return golden_section_minimize(split_norm, 0.0, fmax);
}

namespace {

std::vector<Field> default_analyticity_probes(const Space& space,
                                              double t_min) {
  const Spectrum& sp = space.spectrum();
  const int n = space.node_count();
  std::vector<Field> probes;
  // Eigenvector probes spread logarithmically over the part of the spectrum
  // whose optimal time 1/|lambda| falls inside the ladder.
  const double lo = 1.5, hi = std::max(2.0, 1.0 / t_min);
  for (int k = 0; k < 12; ++k) {
    const double target = lo * std::pow(hi / lo, k / 11.0);
    int best = -1;
    double best_gap = 1e300;
    for (int i = 0; i < n; ++i) {
      const double gap = std::abs(-sp.values[i] - target);
      if (gap < best_gap) { best_gap = gap; best = i; }
    }
    probes.push_back(sp.vectors.col(best).array());
  }
  // A couple of broadband probes.
  probes.push_back(space.coords(0).sin());
  probes.push_back((space.coords(0) * 3.0).cos() + 0.5 * space.coords(0).sin());
  return probes;
}

}  // namespace

AnalyticityReport analyticity_constant(const Space& space, double p,
                                       const std::vector<double>& t_ladder) {
  if (t_ladder.empty())
    throw std::invalid_argument("analyticity_constant: empty t ladder");
  const double t_min = *std::min_element(t_ladder.begin(), t_ladder.end());
  return analyticity_constant(space, p, t_ladder,
                              default_analyticity_probes(space, t_min));
}

AnalyticityReport analyticity_constant(const Space& space, double p,
                                       const std::vector<double>& t_ladder,
                                       const std::vector<Field>& probes) {
  if (t_ladder.empty())
    throw std::invalid_argument("analyticity_constant: empty t ladder");
  for (double t : t_ladder)
    if (!(t > 0.0 && t < 1.0))
      throw std::invalid_argument("analyticity_constant: ladder must be in (0,1)");

  AnalyticityReport report;
  const Spectrum& sp = space.spectrum();
  const Eigen::ArrayXd lam = sp.values.array();

  std::vector<Eigen::ArrayXd> coeffs;
  for (const Field& f : probes)
    coeffs.push_back(
        (sp.vectors.transpose() * (space.measure * f).matrix()).array());

  const bool spectral_l2 = (p == 2.0);
  for (size_t pi = 0; pi < probes.size(); ++pi) {
    const double fnorm = spectral_l2 ? std::sqrt(coeffs[pi].square().sum())
                                     : lp_norm(space, probes[pi], p);
    if (fnorm <= 0) continue;
    for (double t : t_ladder) {
      double num;
      if (spectral_l2) {
        num = std::sqrt(
            (coeffs[pi].square() * lam.square() * (2.0 * t * lam).exp()).sum());
      } else {
        num = lp_norm(space, laplacian(space, apply_semigroup(space, probes[pi], t)), p);
      }
      report.c_estimate = std::max(report.c_estimate, t * num / fnorm);
    }
  }

  // Semigroup difference log bound with the estimated constant, on a
  // subsampled set of (t, t') pairs from the ladder.
  std::vector<double> ts = t_ladder;
  std::sort(ts.begin(), ts.end());
  if (ts.size() > 24) {
    std::vector<double> sub;
    for (size_t k = 0; k < 24; ++k) sub.push_back(ts[k * (ts.size() - 1) / 23]);
    ts = sub;
  }
  double worst = -1e300;
  for (size_t pi = 0; pi < probes.size(); ++pi) {
    const double fnorm = spectral_l2 ? std::sqrt(coeffs[pi].square().sum())
                                     : lp_norm(space, probes[pi], p);
    if (fnorm <= 0) continue;
    for (double t : ts)
      for (double tp : ts) {
        if (!(tp < t)) continue;
        double diff;
        if (spectral_l2) {
          diff = std::sqrt((coeffs[pi].square() *
                            ((lam * t).exp() - (lam * (t - tp)).exp()).square())
                               .sum());
        } else {
          diff = lp_norm(space,
                         apply_semigroup(space, probes[pi], t) -
                             apply_semigroup(space, probes[pi], t - tp),
                         p);
        }
        const double bound =
            std::min(report.c_estimate * std::log1p(tp / (t - tp)), 2.0);
        worst = std::max(worst, diff / fnorm - bound);
      }
  }
  report.log_bound_margin = worst;
  report.log_bound_ok = worst <= 1e-9;
  return report;
}

namespace {

uint64_t fnv1a(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull) {
  const unsigned char* b = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= b[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

nlohmann::json space_manifest(const Space& space) {
  nlohmann::json j;
  j["format"] = "gfl-space";
  j["version"] = 1;
  j["spec"] = {
      {"dimension", space.spec.dimension},
      {"axis_min", {space.spec.axis_min[0], space.spec.axis_min[1]}},
      {"axis_len", {space.spec.axis_len[0], space.spec.axis_len[1]}},
      {"nodes_per_axis", space.spec.nodes_per_axis},
      {"boundary",
       space.spec.boundary == Boundary::Periodic ? "periodic" : "neumann"}};
  j["potential"] = std::vector<double>(
      space.potential.data(), space.potential.data() + space.potential.size());
  if (space.has_spectrum()) {
    const auto& v = space.spectrum().values;
    j["spectrum_checksum"] =
        fnv1a(v.data(), size_t(v.size()) * sizeof(double));
  }
  return j;
}

std::string manifest_hash(const nlohmann::json& manifest) {
  nlohmann::json key = manifest;
  key.erase("spectrum_checksum");
  const std::string dump = key.dump();
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                (unsigned long long)fnv1a(dump.data(), dump.size()));
  return std::string(buf);
}

static constexpr char kEigMagic[8] = {'G', 'F', 'L', 'E', 'I', 'G', '1', '\0'};

std::filesystem::path save_eigendata(const Space& space,
                                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / (manifest_hash(space_manifest(space)) + ".eig");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_eigendata: cannot write " + path.string());
  const Spectrum& sp = space.spectrum();
  const int64_t n = sp.values.size();
  out.write(kEigMagic, 8);
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(sp.values.data()), n * sizeof(double));
  out.write(reinterpret_cast<const char*>(sp.vectors.data()),
            n * n * sizeof(double));
  return path;
}

bool load_eigendata(const Space& space, const std::filesystem::path& dir) {
  const auto path = dir / (manifest_hash(space_manifest(space)) + ".eig");
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kEigMagic, 8) != 0) return false;
  int64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || n != space.node_count()) return false;
  auto spec = std::make_unique<Spectrum>();
  spec->values.resize(n);
  spec->vectors.resize(n, n);
  in.read(reinterpret_cast<char*>(spec->values.data()), n * sizeof(double));
  in.read(reinterpret_cast<char*>(spec->vectors.data()), n * n * sizeof(double));
  if (!in) return false;
  std::lock_guard<std::mutex> lock(*space.spectrum_mutex_);
  *space.spectrum_ = std::move(spec);
  return true;
}

}  // namespace gfl
