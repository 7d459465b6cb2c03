#include "recfno/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <string>

namespace recfno {

GridSpec::GridSpec(Index n_y_, Index n_x_, Extent extent_) : n_y(n_y_), n_x(n_x_), extent(extent_) {
  if (n_y < 2 || n_x < 2) throw ConfigError("grid: need at least 2 cells per axis");
  if (!(extent.x_max > extent.x_min) || !(extent.y_max > extent.y_min)) {
    throw ConfigError("grid: extent must have positive width and height");
  }
}

GridSpec GridSpec::refined(Index factor) const {
  if (factor < 1) throw ConfigError("grid: refinement factor must be >= 1");
  return GridSpec(n_y * factor, n_x * factor, extent);
}

bool GridSpec::contains(double px, double py) const {
  const double tol_x = 1e-12 * (extent.x_max - extent.x_min);
  const double tol_y = 1e-12 * (extent.y_max - extent.y_min);
  return px >= extent.x_min - tol_x && px <= extent.x_max + tol_x && py >= extent.y_min - tol_y &&
         py <= extent.y_max + tol_y;
}

namespace {

// Continuous index u of a coordinate (centres at integers); ties resolve downwards.
Index nearest_centre(double coord, double lo, double spacing, Index n) {
  const double u = (coord - lo) / spacing - 0.5;
  const auto k = static_cast<Index>(std::ceil(u - 0.5 - 1e-9));
  return std::clamp<Index>(k, 0, n - 1);
}

}  // namespace

std::vector<Cell> snap_sensors(const std::vector<Point>& positions, const GridSpec& grid) {
  std::vector<Cell> cells;
  cells.reserve(positions.size());
  std::set<std::pair<Index, Index>> seen;
  for (std::size_t k = 0; k < positions.size(); ++k) {
    const Point& p = positions[k];
    if (!grid.contains(p.x, p.y)) {
      throw ContractError("snap_sensors: sensor " + std::to_string(k) + " lies outside the grid extent");
    }
    Cell c{nearest_centre(p.y, grid.extent.y_min, grid.dy(), grid.n_y),
           nearest_centre(p.x, grid.extent.x_min, grid.dx(), grid.n_x)};
    if (!seen.emplace(c.i, c.j).second) {
      throw ContractError("snap_sensors: sensor " + std::to_string(k) + " collides with another sensor in cell (" +
                          std::to_string(c.i) + "," + std::to_string(c.j) + ")");
    }
    cells.push_back(c);
  }
  return cells;
}

std::string format_points(const std::vector<Point>& points) {
  std::string out;
  char buf[64];
  for (const Point& p : points) {
    std::snprintf(buf, sizeof buf, "%s%.17g %.17g", out.empty() ? "" : ";", p.x, p.y);
    out += buf;
  }
  return out;
}

std::vector<Point> parse_points(const std::string& text) {
  std::vector<Point> pts;
  std::istringstream in(text);
  for (std::string item; std::getline(in, item, ';');) {
    std::istringstream is(item);
    Point p;
    std::string rest;
    if (!(is >> p.x >> p.y) || (is >> rest)) throw ConfigError("bad point '" + item + "' (expected 'x y')");
    pts.push_back(p);
  }
  return pts;
}

ObservationSet make_observations(std::vector<Point> positions, std::vector<double> values, const GridSpec& grid) {
  if (positions.empty()) throw ContractError("observations: need at least one sensor");
  if (positions.size() != values.size()) throw ContractError("observations: positions/values length mismatch");
  ObservationSet obs;
  obs.cells = snap_sensors(positions, grid);
  obs.positions = std::move(positions);
  obs.values = std::move(values);
  obs.grid = grid;
  return obs;
}

Tensor normalized_x_coordinates(const GridSpec& grid) {
  Tensor t = Tensor::zeros({grid.n_y, grid.n_x});
  const double span = grid.extent.x_max - grid.extent.x_min;
  for (Index i = 0; i < grid.n_y; ++i)
    for (Index j = 0; j < grid.n_x; ++j) t.values_mut()[i * grid.n_x + j] = (grid.x(j) - grid.extent.x_min) / span;
  return t;
}

Tensor normalized_y_coordinates(const GridSpec& grid) {
  Tensor t = Tensor::zeros({grid.n_y, grid.n_x});
  const double span = grid.extent.y_max - grid.extent.y_min;
  for (Index i = 0; i < grid.n_y; ++i)
    for (Index j = 0; j < grid.n_x; ++j) t.values_mut()[i * grid.n_x + j] = (grid.y(i) - grid.extent.y_min) / span;
  return t;
}

}  // namespace recfno
