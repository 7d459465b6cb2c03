#pragma once

#include <vector>

#include "recfno/tensor.hpp"

namespace recfno {

/// Physical bounds of the rectangular domain.
struct Extent {
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;

  bool operator==(const Extent&) const = default;
};

/// Uniform cell-centred discretisation of the domain. Row i runs along y (row 0 at y_min),
/// column j along x; cell (i, j) has centre (x(j), y(i)).
struct GridSpec {
  Index n_y = 0;
  Index n_x = 0;
  Extent extent;

  GridSpec() = default;
  GridSpec(Index n_y, Index n_x, Extent extent = {});

  double dx() const { return (extent.x_max - extent.x_min) / static_cast<double>(n_x); }
  double dy() const { return (extent.y_max - extent.y_min) / static_cast<double>(n_y); }
  double x(Index j) const { return extent.x_min + (static_cast<double>(j) + 0.5) * dx(); }
  double y(Index i) const { return extent.y_min + (static_cast<double>(i) + 0.5) * dy(); }
  Index cells() const { return n_y * n_x; }

  /// Same domain with `factor` times as many cells along each axis.
  GridSpec refined(Index factor) const;

  bool contains(double px, double py) const;

  bool operator==(const GridSpec&) const = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

struct Cell {
  Index i = 0;
  Index j = 0;
  bool operator==(const Cell&) const = default;
};

/// Maps each position to the cell whose centre is nearest. A position exactly between two
/// centres goes to the lower index. Throws ContractError for positions outside the extent or
/// when two positions land in the same cell.
std::vector<Cell> snap_sensors(const std::vector<Point>& positions, const GridSpec& grid);

/// Sparse sensor readings {(x_k, y_k), o_k}.
struct ObservationSet {
  std::vector<Point> positions;
  std::vector<double> values;
  std::vector<Cell> cells;  ///< snapped on `grid`
  GridSpec grid;

  Index size() const { return static_cast<Index>(values.size()); }
};

/// "x y;x y;..." with round-trip precision, and its inverse (throws ConfigError).
std::string format_points(const std::vector<Point>& points);
std::vector<Point> parse_points(const std::string& text);

ObservationSet make_observations(std::vector<Point> positions, std::vector<double> values, const GridSpec& grid);

/// Cell-centre coordinates as [n_y, n_x] tensors normalised to [0, 1] across the extent.
Tensor normalized_x_coordinates(const GridSpec& grid);
Tensor normalized_y_coordinates(const GridSpec& grid);

}  // namespace recfno
