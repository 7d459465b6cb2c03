#include "recfno/embed.hpp"

#include <cmath>
#include <limits>

#include "recfno/ops.hpp"

namespace recfno {

std::string to_string(EmbeddingKind kind) {
  switch (kind) {
    case EmbeddingKind::Mask: return "mask";
    case EmbeddingKind::Voronoi: return "voronoi";
    case EmbeddingKind::Mlp: return "mlp";
  }
  return "unknown";
}

EmbeddingKind parse_embedding_kind(const std::string& name) {
  if (name == "mask") return EmbeddingKind::Mask;
  if (name == "voronoi") return EmbeddingKind::Voronoi;
  if (name == "mlp") return EmbeddingKind::Mlp;
  throw ConfigError("unknown embedding '" + name + "' (expected mask, voronoi or mlp)");
}

Index representation_channels(EmbeddingKind kind) {
  switch (kind) {
    case EmbeddingKind::Mask: return 3;
    case EmbeddingKind::Voronoi: return 4;
    case EmbeddingKind::Mlp: return 1;
  }
  return 0;
}

void EmbeddingConfig::validate() {
  if (n_e < 1) throw ConfigError("embedding: n_e must be >= 1");
  if (out_h < 1 || out_w < 1) throw ConfigError("embedding: output shape must be positive");
  if (kind == EmbeddingKind::Mlp) {
    if (n_sensors < 1) throw ConfigError("embedding: MLP needs at least one input");
    if (mlp_hidden < 1) throw ConfigError("embedding: MLP hidden width must be >= 1");
    if (map_h == 0) map_h = std::max<Index>(1, static_cast<Index>(std::lround(static_cast<double>(out_h) / 4.0)));
    if (map_w == 0) map_w = std::max<Index>(1, static_cast<Index>(std::lround(static_cast<double>(out_w) / 4.0)));
    if (map_h < 1 || map_w < 1) throw ConfigError("embedding: MLP map shape must be positive");
  }
}

void EmbeddingParams::append_to(ParameterList& list, const std::string& prefix) const {
  auto add = [&](const char* name, const Tensor& t) {
    if (t.defined()) list.push_back({prefix + name, t});
  };
  add("lift.weight", lift_weight);
  add("lift.bias", lift_bias);
  add("fc1.weight", fc1_weight);
  add("fc1.bias", fc1_bias);
  add("fc2.weight", fc2_weight);
  add("fc2.bias", fc2_bias);
  add("map.weight", map_weight);
  add("map.bias", map_bias);
  add("conv.weight", conv_weight);
  add("conv.bias", conv_bias);
}

namespace {

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual dense-layer default.
Tensor uniform_param(Shape shape, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t.values_mut()[i] = rng.uniform(-bound, bound);
  t.set_requires_grad(true);
  return t;
}

}  // namespace

EmbeddingParams init_embedding_params(const EmbeddingConfig& cfg, Rng& rng) {
  EmbeddingParams p;
  if (cfg.kind == EmbeddingKind::Mlp) {
    const Index n_map = cfg.map_h * cfg.map_w;
    p.fc1_weight = uniform_param({cfg.n_sensors, cfg.mlp_hidden}, cfg.n_sensors, rng);
    p.fc1_bias = uniform_param({cfg.mlp_hidden}, cfg.n_sensors, rng);
    p.fc2_weight = uniform_param({cfg.mlp_hidden, n_map}, cfg.mlp_hidden, rng);
    p.fc2_bias = uniform_param({n_map}, cfg.mlp_hidden, rng);
    p.map_weight = uniform_param({1, cfg.n_e}, 1, rng);
    p.map_bias = uniform_param({cfg.n_e}, 1, rng);
    p.conv_weight = uniform_param({3, 3, cfg.n_e, cfg.n_e}, 9 * cfg.n_e, rng);
    p.conv_bias = uniform_param({cfg.n_e}, 9 * cfg.n_e, rng);
  } else {
    const Index c = representation_channels(cfg.kind);
    p.lift_weight = uniform_param({c, cfg.n_e}, c, rng);
    p.lift_bias = uniform_param({cfg.n_e}, c, rng);
  }
  return p;
}

namespace {

void check_grid(const ObservationSet& obs) {
  if (obs.size() < 1) throw ContractError("embedding: need at least one sensor");
  if (obs.positions.size() != obs.values.size()) throw ContractError("embedding: positions/values mismatch");
}

void write_coordinates(Tensor& rep, const GridSpec& grid, Index first_channel) {
  const Index c = rep.dim(2);
  const Tensor xs = normalized_x_coordinates(grid);
  const Tensor ys = normalized_y_coordinates(grid);
  for (Index p = 0; p < grid.cells(); ++p) {
    rep.values_mut()[p * c + first_channel] = xs.values()[p];
    rep.values_mut()[p * c + first_channel + 1] = ys.values()[p];
  }
}

}  // namespace

Tensor mask_representation(const ObservationSet& obs, const GridSpec& grid) {
  check_grid(obs);
  const std::vector<Cell> cells = snap_sensors(obs.positions, grid);
  Tensor rep = Tensor::zeros({grid.n_y, grid.n_x, 3});
  for (std::size_t k = 0; k < cells.size(); ++k) rep.at(cells[k].i, cells[k].j, 0) = obs.values[k];
  write_coordinates(rep, grid, 1);
  return rep;
}

std::vector<Index> voronoi_assignment(const std::vector<Cell>& sensor_cells, const GridSpec& grid) {
  std::vector<Index> owner(static_cast<std::size_t>(grid.cells()));
  std::vector<double> sx(sensor_cells.size()), sy(sensor_cells.size());
  for (std::size_t k = 0; k < sensor_cells.size(); ++k) {
    sx[k] = grid.x(sensor_cells[k].j);
    sy[k] = grid.y(sensor_cells[k].i);
  }
  for (Index i = 0; i < grid.n_y; ++i) {
    const double cy = grid.y(i);
    for (Index j = 0; j < grid.n_x; ++j) {
      const double cx = grid.x(j);
      double best = std::numeric_limits<double>::infinity();
      Index best_k = 0;
      for (std::size_t k = 0; k < sx.size(); ++k) {
        const double d = (cx - sx[k]) * (cx - sx[k]) + (cy - sy[k]) * (cy - sy[k]);
        if (d < best) {
          best = d;
          best_k = static_cast<Index>(k);
        }
      }
      owner[static_cast<std::size_t>(i * grid.n_x + j)] = best_k;
    }
  }
  return owner;
}

Tensor voronoi_representation(const ObservationSet& obs, const GridSpec& grid) {
  check_grid(obs);
  const std::vector<Cell> cells = snap_sensors(obs.positions, grid);
  const std::vector<Index> owner = voronoi_assignment(cells, grid);
  Tensor rep = Tensor::zeros({grid.n_y, grid.n_x, 4});
  for (Index p = 0; p < grid.cells(); ++p) {
    rep.values_mut()[p * 4] = obs.values[static_cast<std::size_t>(owner[static_cast<std::size_t>(p)])];
  }
  for (const Cell& c : cells) rep.at(c.i, c.j, 1) = 1.0;
  write_coordinates(rep, grid, 2);
  return rep;
}

Tensor observation_features(const ObservationSet& obs, EmbeddingKind kind, const GridSpec& grid) {
  switch (kind) {
    case EmbeddingKind::Mask: return mask_representation(obs, grid);
    case EmbeddingKind::Voronoi: return voronoi_representation(obs, grid);
    case EmbeddingKind::Mlp: {
      check_grid(obs);
      Tensor::Array v(obs.size());
      for (Index k = 0; k < obs.size(); ++k) v[k] = obs.values[static_cast<std::size_t>(k)];
      return Tensor({obs.size()}, std::move(v));
    }
  }
  throw ConfigError("observation_features: unknown embedding kind");
}

Tensor embed_conv(const Tensor& representation, const Tensor& weight, const Tensor& bias) {
  return conv1x1(representation, weight, bias);
}

Tensor mlp_embedding(const Tensor& values, const EmbeddingConfig& cfg, const EmbeddingParams& params) {
  if (cfg.kind != EmbeddingKind::Mlp) throw ConfigError("mlp_embedding: configuration is not of MLP kind");
  if (values.rank() != 1 || values.dim(0) < 1) throw ShapeError("mlp_embedding: expected a non-empty value vector");
  const Index n_map = cfg.map_h * cfg.map_w;
  if (params.fc2_weight.dim(1) != n_map) {
    throw ConfigError("mlp_embedding: MLP output length " + std::to_string(params.fc2_weight.dim(1)) +
                      " differs from map size " + std::to_string(cfg.map_h) + "x" + std::to_string(cfg.map_w));
  }
  Tensor g = linear(gelu(linear(values, params.fc1_weight, params.fc1_bias)), params.fc2_weight, params.fc2_bias);
  Tensor e = conv1x1(reshape(g, {cfg.map_h, cfg.map_w, 1}), params.map_weight, params.map_bias);
  e = nearest_resize(e, 2 * cfg.map_h, 2 * cfg.map_w);
  e = conv3x3(e, params.conv_weight, params.conv_bias);
  return nearest_resize(e, cfg.out_h, cfg.out_w);
}

Tensor embed_features(const Tensor& features, const EmbeddingConfig& cfg, const EmbeddingParams& params) {
  if (cfg.kind == EmbeddingKind::Mlp) return mlp_embedding(features, cfg, params);
  if (features.rank() != 3 || features.dim(0) != cfg.out_h || features.dim(1) != cfg.out_w) {
    throw ShapeError("embedding: representation " + shape_string(features.shape()) + " does not match output " +
                     std::to_string(cfg.out_h) + "x" + std::to_string(cfg.out_w));
  }
  return embed_conv(features, params.lift_weight, params.lift_bias);
}

}  // namespace recfno
