#include "recfno/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

namespace recfno {

namespace {

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

constexpr char kMagic[4] = {'R', 'F', 'N', 'O'};
constexpr std::uint32_t kDatasetVersion = 1;
constexpr double kWakeStep = 0.1157;  // frame spacing of generated wake sequences

Index cell(const GridSpec& g, Index i, Index j) { return i * g.n_x + j; }

double harmonic(double a, double b) { return 2.0 * a * b / (a + b); }

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Rng sample_rng(std::uint64_t seed, Index index) {
  // Equals the index-th split() of Rng(seed), computed directly.
  Rng r(seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(index));
  return Rng(r());
}

}  // namespace

std::string to_string(Task task) {
  switch (task) {
    case Task::Darcy: return "darcy";
    case Task::Heat: return "heat";
    case Task::Wake: return "wake";
    case Task::Import: return "import";
  }
  return "?";
}

Task parse_task(const std::string& name) {
  if (name == "darcy") return Task::Darcy;
  if (name == "heat") return Task::Heat;
  if (name == "wake") return Task::Wake;
  if (name == "import") return Task::Import;
  throw ConfigError("unknown task '" + name + "' (expected darcy, heat, wake or import)");
}

Extent task_extent(Task task) {
  switch (task) {
    case Task::Heat: return {0.0, 0.1, 0.0, 0.1};
    case Task::Wake: return {0.0, 8.0, 0.0, 8.0 * 64.0 / 96.0};
    default: return {0.0, 1.0, 0.0, 1.0};
  }
}

// ---- Darcy ----

Tensor sample_darcy_coeff(Rng& rng, const GridSpec& grid) {
  constexpr Index kMax = 16;
  constexpr Index K = 2 * kMax + 1;
  const double two_pi = 2.0 * std::numbers::pi;
  RowMatrixC coeff(K, K);
  for (Index a = 0; a < K; ++a) {
    for (Index b = 0; b < K; ++b) {
      const double ky = static_cast<double>(a - kMax), kx = static_cast<double>(b - kMax);
      const double amp = 1.0 / (two_pi * two_pi * (kx * kx + ky * ky) + 9.0);
      const double re = rng.normal(), im = rng.normal();
      coeff(a, b) = amp * Complex(re, im);
    }
  }
  RowMatrixC ey(grid.n_y, K), ex(K, grid.n_x);
  const double wy = grid.extent.y_max - grid.extent.y_min, wx = grid.extent.x_max - grid.extent.x_min;
  for (Index i = 0; i < grid.n_y; ++i) {
    const double s = (grid.y(i) - grid.extent.y_min) / wy;
    for (Index a = 0; a < K; ++a) ey(i, a) = std::polar(1.0, two_pi * static_cast<double>(a - kMax) * s);
  }
  for (Index j = 0; j < grid.n_x; ++j) {
    const double s = (grid.x(j) - grid.extent.x_min) / wx;
    for (Index b = 0; b < K; ++b) ex(b, j) = std::polar(1.0, two_pi * static_cast<double>(b - kMax) * s);
  }
  const RowMatrix g = (ey * coeff * ex).real();
  std::vector<double> sorted(g.data(), g.data() + g.size());
  const auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  const double threshold = *mid;
  Tensor::Array a(g.size());
  for (Index n = 0; n < g.size(); ++n) a[n] = g.data()[n] >= threshold ? 12.0 : 3.0;
  return Tensor({grid.n_y, grid.n_x}, std::move(a));
}

Tensor solve_darcy(const Tensor& a, const GridSpec& grid, double tolerance) {
  if (a.shape() != Shape{grid.n_y, grid.n_x}) throw ShapeError("solve_darcy: coefficient shape does not match grid");
  if (!(a.values() > 0.0).all()) throw ContractError("solve_darcy: coefficient must be positive");
  const Index n = grid.cells();
  const double rx = grid.dy() / grid.dx(), ry = grid.dx() / grid.dy();
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(5 * n));
  Eigen::VectorXd rhs = Eigen::VectorXd::Constant(n, grid.dx() * grid.dy());
  const auto& av = a.values();
  for (Index i = 0; i < grid.n_y; ++i) {
    for (Index j = 0; j < grid.n_x; ++j) {
      const Index p = cell(grid, i, j);
      double diag = 0.0;
      auto face = [&](Index ni, Index nj, double r) {
        if (ni < 0 || ni >= grid.n_y || nj < 0 || nj >= grid.n_x) {
          diag += 2.0 * av[p] * r;  // boundary face at half a cell
          return;
        }
        const Index q = cell(grid, ni, nj);
        const double t = harmonic(av[p], av[q]) * r;
        diag += t;
        trip.emplace_back(p, q, -t);
      };
      face(i, j - 1, rx);
      face(i, j + 1, rx);
      face(i - 1, j, ry);
      face(i + 1, j, ry);
      trip.emplace_back(p, p, diag);
    }
  }
  SparseMatrix A(n, n);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(tolerance);
  cg.setMaxIterations(std::max<Index>(1000, 40 * (grid.n_x + grid.n_y)));
  cg.compute(A);
  Eigen::VectorXd u = cg.solve(rhs);
  if (cg.info() != Eigen::Success) {
    throw SolverError("solve_darcy: conjugate gradients did not converge (" + std::to_string(cg.iterations()) +
                      " iterations, residual " + std::to_string(cg.error()) + ")");
  }
  return Tensor({grid.n_y, grid.n_x}, Tensor::Array(u.array()));
}

double center_value(const Tensor& u, const GridSpec& grid) {
  if (u.shape() != Shape{grid.n_y, grid.n_x}) throw ShapeError("center_value: field shape does not match grid");
  std::vector<Index> rows{grid.n_y / 2}, cols{grid.n_x / 2};
  if (grid.n_y % 2 == 0) rows.push_back(grid.n_y / 2 - 1);
  if (grid.n_x % 2 == 0) cols.push_back(grid.n_x / 2 - 1);
  double s = 0.0;
  for (Index i : rows)
    for (Index j : cols) s += u.values()[cell(grid, i, j)];
  return s / static_cast<double>(rows.size() * cols.size());
}

// ---- Heat ----

HeatInstance sample_heat_instance(Rng& rng, const HeatRanges& r, const Extent& extent) {
  HeatInstance inst;
  const Index count = rng.uniform_int(r.min_sources, r.max_sources);
  for (Index k = 0; k < count; ++k) {
    GaussianSource s;
    s.x = rng.uniform(extent.x_min, extent.x_max);
    s.y = rng.uniform(extent.y_min, extent.y_max);
    s.amplitude = rng.uniform(r.amplitude_lo, r.amplitude_hi);
    s.width = rng.uniform(r.width_lo, r.width_hi);
    inst.sources.push_back(s);
  }
  inst.u_sink = rng.uniform(r.sink_lo, r.sink_hi);
  return inst;
}

double heat_conductivity(double u) { return std::max(1e-3, 1.0 + 0.05 * (u - 298.0)); }

Tensor heat_source_field(const HeatInstance& inst, const GridSpec& grid) {
  Tensor f = Tensor::zeros({grid.n_y, grid.n_x});
  auto& fv = f.values_mut();
  for (const GaussianSource& s : inst.sources) {
    if (!(s.width > 0.0)) throw ContractError("heat: source width must be positive");
    const double inv = 1.0 / (2.0 * s.width * s.width);
    Eigen::ArrayXd gx(grid.n_x), gy(grid.n_y);
    for (Index j = 0; j < grid.n_x; ++j) gx[j] = std::exp(-(grid.x(j) - s.x) * (grid.x(j) - s.x) * inv);
    for (Index i = 0; i < grid.n_y; ++i) gy[i] = std::exp(-(grid.y(i) - s.y) * (grid.y(i) - s.y) * inv);
    for (Index i = 0; i < grid.n_y; ++i) fv.segment(i * grid.n_x, grid.n_x) += s.amplitude * gy[i] * gx;
  }
  return f;
}

std::vector<bool> heat_sink_cells(const HeatInstance& inst, const GridSpec& grid) {
  std::vector<bool> sink(static_cast<std::size_t>(grid.cells()), false);
  const double w = grid.extent.x_max - grid.extent.x_min;
  const double lo = grid.extent.x_min + inst.sink_lo * w, hi = grid.extent.x_min + inst.sink_hi * w;
  bool any = false;
  for (Index j = 0; j < grid.n_x; ++j) {
    if (grid.x(j) >= lo && grid.x(j) <= hi) {
      sink[static_cast<std::size_t>(cell(grid, 0, j))] = true;
      any = true;
    }
  }
  if (!any) throw ContractError("heat: sink segment contains no boundary cell");
  return sink;
}

Tensor solve_heat(const HeatInstance& inst, const GridSpec& grid, HeatSolveInfo* info) {
  constexpr int kMaxIterations = 100;
  constexpr double kTolerance = 1e-6;
  const std::vector<bool> sink = heat_sink_cells(inst, grid);
  const Tensor f = heat_source_field(inst, grid);
  const Index n = grid.cells();

  // Unknowns are the deviations w = u - u_sink on the non-sink cells.
  std::vector<Index> unknown(static_cast<std::size_t>(n), -1);
  Index m = 0;
  for (Index p = 0; p < n; ++p)
    if (!sink[static_cast<std::size_t>(p)]) unknown[static_cast<std::size_t>(p)] = m++;
  Eigen::VectorXd rhs(m);
  for (Index p = 0; p < n; ++p)
    if (unknown[static_cast<std::size_t>(p)] >= 0) rhs[unknown[static_cast<std::size_t>(p)]] = f.values()[p] * grid.dx() * grid.dy();

  const double rx = grid.dy() / grid.dx(), ry = grid.dx() / grid.dy();
  Eigen::VectorXd u = Eigen::VectorXd::Constant(n, inst.u_sink);
  Eigen::SimplicialLDLT<SparseMatrix> ldlt;
  std::vector<Triplet> trip;
  bool analysed = false;
  for (int it = 1; it <= kMaxIterations; ++it) {
    Eigen::VectorXd lam(n);
    for (Index p = 0; p < n; ++p) lam[p] = heat_conductivity(u[p]);
    trip.clear();
    for (Index i = 0; i < grid.n_y; ++i) {
      for (Index j = 0; j < grid.n_x; ++j) {
        const Index p = cell(grid, i, j);
        const Index row = unknown[static_cast<std::size_t>(p)];
        if (row < 0) continue;
        double diag = 0.0;
        auto face = [&](Index ni, Index nj, double r) {
          if (ni < 0 || ni >= grid.n_y || nj < 0 || nj >= grid.n_x) return;  // no flux
          const Index q = cell(grid, ni, nj);
          const double t = harmonic(lam[p], lam[q]) * r;
          diag += t;
          const Index col = unknown[static_cast<std::size_t>(q)];
          if (col >= 0) trip.emplace_back(row, col, -t);
        };
        face(i, j - 1, rx);
        face(i, j + 1, rx);
        face(i - 1, j, ry);
        face(i + 1, j, ry);
        trip.emplace_back(row, row, diag);
      }
    }
    SparseMatrix A(m, m);
    A.setFromTriplets(trip.begin(), trip.end());
    if (!analysed) {
      ldlt.analyzePattern(A);
      analysed = true;
    }
    ldlt.factorize(A);
    if (ldlt.info() != Eigen::Success) throw SolverError("solve_heat: factorisation failed");
    const Eigen::VectorXd w = ldlt.solve(rhs);
    double change = 0.0;
    for (Index p = 0; p < n; ++p) {
      const Index row = unknown[static_cast<std::size_t>(p)];
      const double next = row < 0 ? inst.u_sink : inst.u_sink + w[row];
      change = std::max(change, std::abs(next - u[p]));
      u[p] = next;
    }
    if (!u.allFinite()) throw SolverError("solve_heat: non-finite iterate");
    if (change < kTolerance) {
      if (info) *info = {it, change};
      return Tensor({grid.n_y, grid.n_x}, Tensor::Array(u.array()));
    }
  }
  throw SolverError("solve_heat: Picard iteration did not converge in " + std::to_string(kMaxIterations) +
                    " iterations");
}

// ---- Wake ----

Tensor synth_wake(double t, const GridSpec& grid, const WakeParams& wp) {
  const double lx = grid.extent.x_max - grid.extent.x_min;
  const double per_row = lx / wp.spacing;
  const auto count = static_cast<Index>(std::llround(per_row));
  if (count < 1 || std::abs(per_row - static_cast<double>(count)) > 1e-9 * per_row) {
    throw ConfigError("synth_wake: domain width must be a whole number of vortex spacings");
  }
  const double mid = 0.5 * (grid.extent.y_min + grid.extent.y_max);
  const double inv = 1.0 / (2.0 * wp.core * wp.core);
  const double peak = wp.circulation / (2.0 * std::numbers::pi * wp.core * wp.core);
  const double shift = std::fmod(wp.speed * t, wp.spacing);
  Tensor w = Tensor::zeros({grid.n_y, grid.n_x});
  auto& wv = w.values_mut();
  Eigen::ArrayXd gx(grid.n_x), gy(grid.n_y);
  // Pair k: a negative vortex above the centreline and a positive one half a spacing downstream,
  // mirrored below it. Both share the local row separation, so the pair integrates to zero.
  for (Index k = 0; k < count; ++k) {
    const double xk = std::fmod(shift + static_cast<double>(k) * wp.spacing, lx);
    const double half = 0.5 * wp.lateral * (1.0 + wp.wander * std::cos(2.0 * std::numbers::pi * xk / lx));
    for (int row = 0; row < 2; ++row) {
      const double sign = row == 0 ? -1.0 : 1.0;
      const double yc = row == 0 ? mid + half : mid - half;
      const double xc = grid.extent.x_min + std::fmod(xk + (row == 0 ? 0.0 : 0.5 * wp.spacing), lx);
      for (Index i = 0; i < grid.n_y; ++i) gy[i] = std::exp(-(grid.y(i) - yc) * (grid.y(i) - yc) * inv);
      for (Index j = 0; j < grid.n_x; ++j) {
        double s = 0.0;
        for (int image = -1; image <= 1; ++image) {
          const double d = grid.x(j) - xc - image * lx;
          s += std::exp(-d * d * inv);
        }
        gx[j] = s;
      }
      for (Index i = 0; i < grid.n_y; ++i) wv.segment(i * grid.n_x, grid.n_x) += sign * peak * gy[i] * gx;
    }
  }
  return w;
}

// ---- Sensors and noise ----

std::string to_string(Placement placement) { return placement == Placement::Uniform ? "uniform" : "random"; }

Placement parse_placement(const std::string& name) {
  if (name == "uniform") return Placement::Uniform;
  if (name == "random") return Placement::Random;
  throw ConfigError("unknown placement '" + name + "' (expected uniform or random)");
}

std::vector<Point> place_sensors(Index n, Placement placement, Rng& rng, const GridSpec& grid) {
  if (n < 1) throw ContractError("place_sensors: need at least one sensor");
  if (n > grid.cells()) throw ContractError("place_sensors: more sensors than grid cells");
  const Extent& e = grid.extent;
  std::vector<Point> pts;
  if (placement == Placement::Uniform) {
    const double aspect = (e.y_max - e.y_min) / (e.x_max - e.x_min);
    const Index rows = std::clamp<Index>(std::llround(std::sqrt(static_cast<double>(n) * aspect)), 1, n);
    for (Index r = 0; r < rows; ++r) {
      const Index in_row = n / rows + (r < n % rows ? 1 : 0);
      const double y = e.y_min + (static_cast<double>(r) + 0.5) / static_cast<double>(rows) * (e.y_max - e.y_min);
      for (Index c = 0; c < in_row; ++c) {
        const double x = e.x_min + (static_cast<double>(c) + 0.5) / static_cast<double>(in_row) * (e.x_max - e.x_min);
        pts.push_back({x, y});
      }
    }
    snap_sensors(pts, grid);  // throws on collisions
    return pts;
  }
  std::set<Index> used;
  while (static_cast<Index>(pts.size()) < n) {
    const Index c = rng.uniform_int(0, grid.cells() - 1);
    if (!used.insert(c).second) continue;
    pts.push_back({grid.x(c % grid.n_x), grid.y(c / grid.n_x)});
  }
  return pts;
}

ObservationSet observe(const Tensor& field, const GridSpec& grid, const std::vector<Point>& positions) {
  if (field.shape() != Shape{grid.n_y, grid.n_x}) throw ShapeError("observe: field shape does not match grid");
  const std::vector<Cell> cells = snap_sensors(positions, grid);
  std::vector<double> values;
  values.reserve(cells.size());
  for (const Cell& c : cells) values.push_back(field.values()[cell(grid, c.i, c.j)]);
  return make_observations(positions, std::move(values), grid);
}

double noise_std(const Eigen::Ref<const Eigen::ArrayXd>& x, double snr_db) {
  if (x.size() == 0) throw ContractError("add_noise: empty input");
  const double power = x.square().sum() / static_cast<double>(x.size());
  if (!(power > 0.0)) throw ContractError("add_noise: all-zero input leaves the noise scale undefined");
  return std::sqrt(power / (2.0 * std::pow(10.0, snr_db / 10.0)));
}

Tensor add_noise(const Tensor& x, double snr_db, Rng& rng) {
  const double s = noise_std(x.values(), snr_db);
  Tensor::Array v = x.values();
  for (Index i = 0; i < v.size(); ++i) v[i] += s * rng.normal();
  return Tensor(x.shape(), std::move(v));
}

std::vector<double> add_noise(const std::vector<double>& x, double snr_db, Rng& rng) {
  const double s = noise_std(Eigen::Map<const Eigen::ArrayXd>(x.data(), static_cast<Index>(x.size())), snr_db);
  std::vector<double> out = x;
  for (double& v : out) v += s * rng.normal();
  return out;
}

// ---- Datasets ----

const Split& FieldDataset::split(const std::string& name) const {
  for (const Split& s : splits)
    if (s.name == name) return s;
  throw ConfigError("dataset: no split named '" + name + "'");
}

void round_to_float(Tensor& t) {
  auto& v = t.values_mut();
  for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<float>(v[i]);
}

Tensor generate_field(Task task, const GridSpec& grid, std::uint64_t seed, Index index) {
  Rng rng = sample_rng(seed, index);
  Tensor u;
  switch (task) {
    case Task::Darcy: u = solve_darcy(sample_darcy_coeff(rng, grid), grid); break;
    case Task::Heat: u = solve_heat(sample_heat_instance(rng, {}, grid.extent), grid); break;
    case Task::Wake: {
      const double phase = Rng(seed).uniform();  // start of the sequence, shared by all frames
      const WakeParams wp;
      u = synth_wake((phase + kWakeStep * static_cast<double>(index)) * wp.period(), grid, wp);
      break;
    }
    case Task::Import: throw ConfigError("generate: the import task reads external snapshots instead");
  }
  round_to_float(u);
  return u;
}

std::vector<Split> default_splits(Index count) {
  if (count < 3) throw ConfigError("dataset: need at least 3 samples for train/val/test splits");
  const Index val = std::max<Index>(1, count / 7), test = std::max<Index>(1, count / 7);
  return {{"train", 0, count - val - test}, {"val", count - val - test, val}, {"test", count - test, test}};
}

FieldDataset generate_dataset(Task task, const GridSpec& grid, Index count, std::uint64_t seed) {
  FieldDataset ds;
  ds.task = task;
  ds.grid = grid;
  ds.seed = seed;
  ds.splits = default_splits(count);
  ds.fields.resize(static_cast<std::size_t>(count));
  for (Index k = 0; k < count; ++k) ds.fields[static_cast<std::size_t>(k)] = generate_field(task, grid, seed, k);
  return ds;
}

KeyValues read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  KeyValues kv;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError(path + ": malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

void write_key_values(const std::string& path, const KeyValues& kv) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
  if (!out) throw IoError("write failed for " + path);
}

namespace {

const std::string& required(const KeyValues& kv, const std::string& key, const std::string& path) {
  auto it = kv.find(key);
  if (it == kv.end()) throw IoError(path + ": missing key '" + key + "'");
  return it->second;
}

Index parse_count(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used != s.size() || v < 0) throw std::invalid_argument(what);
    return static_cast<Index>(v);
  } catch (const std::logic_error&) {
    throw IoError("manifest: bad " + what + " '" + s + "'");
  }
}

std::pair<Index, Index> parse_grid(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw IoError("manifest: bad grid '" + s + "' (expected HxW)");
  return {parse_count(s.substr(0, x), "grid"), parse_count(s.substr(x + 1), "grid")};
}

Extent parse_extent(const std::string& s) {
  Extent e;
  std::istringstream in(s);
  if (!(in >> e.x_min >> e.x_max >> e.y_min >> e.y_max)) throw IoError("manifest: bad extent '" + s + "'");
  return e;
}

std::vector<Split> parse_splits(const std::string& s, Index count) {
  std::vector<Split> out;
  std::istringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    const auto a = item.find(':'), b = item.rfind(':');
    if (a == std::string::npos || a == b) throw IoError("manifest: bad split '" + item + "'");
    out.push_back({item.substr(0, a), parse_count(item.substr(a + 1, b - a - 1), "split start"),
                   parse_count(item.substr(b + 1), "split count")});
  }
  Index next = 0;
  for (const Split& sp : out) {
    if (sp.start != next) throw IoError("manifest: splits must be contiguous and ordered");
    next += sp.count;
  }
  if (next != count) throw IoError("manifest: split counts sum to " + std::to_string(next) + ", not " + std::to_string(count));
  return out;
}

std::string format_splits(const std::vector<Split>& splits) {
  std::string s;
  for (const Split& sp : splits) {
    if (!s.empty()) s += ',';
    s += sp.name + ':' + std::to_string(sp.start) + ':' + std::to_string(sp.count);
  }
  return s;
}

std::vector<Tensor> read_grids(std::istream& in, Index count, Index n_y, Index n_x, const std::string& path) {
  std::vector<Tensor> fields;
  std::vector<float> buf(static_cast<std::size_t>(n_y * n_x));
  for (Index k = 0; k < count; ++k) {
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
      throw IoError(path + ": truncated at snapshot " + std::to_string(k));
    }
    Tensor::Array v(n_y * n_x);
    for (Index i = 0; i < v.size(); ++i) v[i] = buf[static_cast<std::size_t>(i)];
    fields.emplace_back(Shape{n_y, n_x}, std::move(v));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(path + ": trailing bytes after the declared snapshots");
  return fields;
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

}  // namespace

void write_dataset(const std::string& dir, const FieldDataset& ds) {
  std::filesystem::create_directories(dir);
  const std::string bin = dir + "/fields.bin";
  std::ofstream out(bin, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + bin + " for writing");
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kDatasetVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.grid.n_y));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.grid.n_x));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.fields.size()));
  std::vector<float> buf;
  for (const Tensor& f : ds.fields) {
    if (f.shape() != Shape{ds.grid.n_y, ds.grid.n_x}) throw ShapeError("write_dataset: snapshot shape does not match grid");
    buf.assign(f.values().begin(), f.values().end());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw IoError("write failed for " + bin);

  KeyValues kv = ds.extra;
  kv["format"] = "recfno-dataset";
  kv["version"] = std::to_string(kDatasetVersion);
  kv["task"] = to_string(ds.task);
  kv["generator.seed"] = std::to_string(ds.seed);
  kv["grid"] = std::to_string(ds.grid.n_y) + "x" + std::to_string(ds.grid.n_x);
  kv["extent"] = exact(ds.grid.extent.x_min) + " " + exact(ds.grid.extent.x_max) + " " + exact(ds.grid.extent.y_min) +
                 " " + exact(ds.grid.extent.y_max);
  kv["count"] = std::to_string(ds.fields.size());
  kv["splits"] = format_splits(ds.splits);
  write_key_values(dir + "/manifest.txt", kv);
}

namespace {

FieldDataset dataset_from_manifest(const KeyValues& kv, const std::string& path) {
  FieldDataset ds;
  const auto [n_y, n_x] = parse_grid(required(kv, "grid", path));
  auto ext = kv.find("extent");
  ds.grid = GridSpec(n_y, n_x, ext == kv.end() ? Extent{} : parse_extent(ext->second));
  auto task = kv.find("task");
  ds.task = task == kv.end() ? Task::Import : parse_task(task->second);
  auto seed = kv.find("generator.seed");
  ds.seed = seed == kv.end() ? 0 : static_cast<std::uint64_t>(parse_count(seed->second, "seed"));
  const Index count = parse_count(required(kv, "count", path), "count");
  auto splits = kv.find("splits");
  ds.splits = splits == kv.end() ? default_splits(count) : parse_splits(splits->second, count);
  static const std::set<std::string> reserved{"format", "version", "task", "generator.seed", "grid",
                                              "extent", "count",   "splits"};
  for (const auto& [k, v] : kv)
    if (!reserved.count(k)) ds.extra[k] = v;
  return ds;
}

}  // namespace

FieldDataset read_dataset(const std::string& dir) {
  const std::string mpath = dir + "/manifest.txt", bin = dir + "/fields.bin";
  const KeyValues kv = read_key_values(mpath);
  if (required(kv, "version", mpath) != std::to_string(kDatasetVersion)) {
    throw IoError(mpath + ": unsupported manifest version " + kv.at("version"));
  }
  FieldDataset ds = dataset_from_manifest(kv, mpath);
  const Index count = parse_count(kv.at("count"), "count");

  std::ifstream in(bin, std::ios::binary);
  if (!in) throw IoError("cannot open " + bin);
  char magic[4];
  std::uint32_t head[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw IoError(bin + ": bad magic");
  if (!in.read(reinterpret_cast<char*>(head), sizeof head)) throw IoError(bin + ": truncated header");
  if (head[0] != kDatasetVersion) throw IoError(bin + ": unsupported version " + std::to_string(head[0]));
  if (head[1] != ds.grid.n_y || head[2] != ds.grid.n_x) {
    throw ShapeError(bin + ": grids are " + std::to_string(head[1]) + "x" + std::to_string(head[2]) +
                     ", manifest declares " + kv.at("grid"));
  }
  if (head[3] != count) throw ShapeError(bin + ": holds " + std::to_string(head[3]) + " snapshots, manifest declares " + kv.at("count"));
  ds.fields = read_grids(in, count, ds.grid.n_y, ds.grid.n_x, bin);
  return ds;
}

FieldDataset import_raw(const std::string& raw_path, const std::string& manifest_path) {
  const KeyValues kv = read_key_values(manifest_path);
  FieldDataset ds = dataset_from_manifest(kv, manifest_path);
  ds.task = Task::Import;
  const Index count = parse_count(kv.at("count"), "count");
  std::ifstream in(raw_path, std::ios::binary);
  if (!in) throw IoError("cannot open " + raw_path);
  const auto bytes = std::filesystem::file_size(raw_path);
  const auto expected = static_cast<std::uintmax_t>(count * ds.grid.cells()) * sizeof(float);
  if (bytes != expected) {
    throw ShapeError(raw_path + ": " + std::to_string(bytes) + " bytes, expected " + std::to_string(expected) + " for " +
                     std::to_string(count) + " grids of " + kv.at("grid"));
  }
  ds.fields = read_grids(in, count, ds.grid.n_y, ds.grid.n_x, raw_path);
  return ds;
}

}  // namespace recfno
