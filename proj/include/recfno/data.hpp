#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recfno/grid.hpp"
#include "recfno/model.hpp"
#include "recfno/rng.hpp"

namespace recfno {

enum class Task { Darcy, Heat, Wake, Import };

std::string to_string(Task task);
Task parse_task(const std::string& name);

/// Physical domain used by each generator.
Extent task_extent(Task task);

// ---- Darcy: -div(a grad u) = 1, u = 0 on the boundary ----

/// Gaussian random field with covariance (-Lap + 9)^-2, synthesised from a fixed set of
/// low-frequency Fourier modes (so it is defined independently of the grid), evaluated at the cell
/// centres and thresholded at its median to {12, 3}.
Tensor sample_darcy_coeff(Rng& rng, const GridSpec& grid);

/// Cell-centred finite volumes with harmonic-mean face coefficients and the Dirichlet condition on
/// the boundary faces; conjugate gradients to relative residual `tolerance`. Returns [n_y, n_x].
Tensor solve_darcy(const Tensor& a, const GridSpec& grid, double tolerance = 1e-8);

/// Value at the domain centre: the mean of the cells touching it.
double center_value(const Tensor& u, const GridSpec& grid);

// ---- Nonlinear heat conduction: -div(lambda(u) grad u) = f ----

struct GaussianSource {
  double x = 0.0;
  double y = 0.0;
  double amplitude = 0.0;  ///< W/m^3
  double width = 0.0;      ///< standard deviation, m
};

struct HeatInstance {
  std::vector<GaussianSource> sources;
  double u_sink = 298.0;  ///< Dirichlet temperature on the sink, K
  double sink_lo = 0.4;   ///< sink segment on the bottom edge, as fractions of the width
  double sink_hi = 0.6;
};

struct HeatRanges {
  Index min_sources = 2;
  Index max_sources = 6;
  double amplitude_lo = 5.0e4;
  double amplitude_hi = 2.5e5;
  double width_lo = 0.005;
  double width_hi = 0.015;
  double sink_lo = 280.0;
  double sink_hi = 320.0;
};

HeatInstance sample_heat_instance(Rng& rng, const HeatRanges& ranges = {}, const Extent& extent = task_extent(Task::Heat));

/// lambda(u) = 1 + 0.05 (u - 298), clamped below at 1e-3.
double heat_conductivity(double u);

Tensor heat_source_field(const HeatInstance& inst, const GridSpec& grid);

/// Bottom-row cells whose centres lie on the sink segment; these hold u = u_sink.
std::vector<bool> heat_sink_cells(const HeatInstance& inst, const GridSpec& grid);

struct HeatSolveInfo {
  int iterations = 0;
  double last_change = 0.0;
};

/// Picard iteration on the cell-centred discretisation: no-flux faces everywhere except the sink
/// cells, which are fixed to u_sink. Stops when the max change between iterates is below 1e-6;
/// throws SolverError after 100 iterations.
Tensor solve_heat(const HeatInstance& inst, const GridSpec& grid, HeatSolveInfo* info = nullptr);

// ---- Wake surrogate ----

/// Staggered street of Gaussian vortices, periodic in x over the domain, advected at `speed`.
/// The upper row (y = mid + lateral/2) carries -circulation, the lower row +circulation.
struct WakeParams {
  double spacing = 8.0 / 3.0;  ///< streamwise distance between like-signed vortices
  double lateral = 1.0;        ///< row separation at the mean
  double wander = 0.5;         ///< relative change of the row separation along x, cos(2 pi x / L_x)
  double core = 0.5;
  double circulation = 1.0;
  double speed = 1.0;

  double period() const { return spacing / speed; }
};

Tensor synth_wake(double t, const GridSpec& grid, const WakeParams& params = {});

// ---- Sensors and noise ----

enum class Placement { Uniform, Random };

std::string to_string(Placement placement);
Placement parse_placement(const std::string& name);

/// Uniform: rows of points on a near-square lattice over the domain (row counts differ by at most
/// one); random: distinct cells drawn uniformly, placed at cell centres. Throws ContractError when n
/// is not in [1, cells] or the lattice collides after snapping.
std::vector<Point> place_sensors(Index n, Placement placement, Rng& rng, const GridSpec& grid);

/// Readings of `field` ([n_y, n_x]) at the snapped sensor cells.
ObservationSet observe(const Tensor& field, const GridSpec& grid, const std::vector<Point>& positions);

/// Standard deviation (|x|^2 / n / (2 * 10^(snr/10)))^0.5. Throws ContractError for all-zero x.
double noise_std(const Eigen::Ref<const Eigen::ArrayXd>& x, double snr_db);

Tensor add_noise(const Tensor& x, double snr_db, Rng& rng);
std::vector<double> add_noise(const std::vector<double>& x, double snr_db, Rng& rng);

// ---- Datasets ----

struct Split {
  std::string name;
  Index start = 0;
  Index count = 0;
};

struct FieldDataset {
  Task task = Task::Heat;
  GridSpec grid;
  std::uint64_t seed = 0;
  std::vector<Tensor> fields;  ///< each [n_y, n_x], values representable in float32
  std::vector<Split> splits;
  KeyValues extra;  ///< free-form manifest entries

  Index size() const { return static_cast<Index>(fields.size()); }
  const Split& split(const std::string& name) const;
};

/// Sample `index` of a generated dataset, evaluated on `grid` (any resolution of the same domain).
Tensor generate_field(Task task, const GridSpec& grid, std::uint64_t seed, Index index);

/// Splits of 5/7, 1/7, 1/7 (train, val, test) in generation order.
std::vector<Split> default_splits(Index count);

FieldDataset generate_dataset(Task task, const GridSpec& grid, Index count, std::uint64_t seed);

/// Writes `fields.bin` ("RFNO", u32 version, u32 n_y, u32 n_x, u32 count, float32 grids) and
/// `manifest.txt` into `dir`.
void write_dataset(const std::string& dir, const FieldDataset& ds);
FieldDataset read_dataset(const std::string& dir);

/// External snapshots: a headerless float32 stack plus a manifest giving grid and count.
FieldDataset import_raw(const std::string& raw_path, const std::string& manifest_path);

KeyValues read_key_values(const std::string& path);
void write_key_values(const std::string& path, const KeyValues& kv);

/// Rounds every value to float32 precision.
void round_to_float(Tensor& t);

}  // namespace recfno
