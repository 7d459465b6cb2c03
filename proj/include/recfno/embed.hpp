#pragma once

#include <string>
#include <variant>
#include <vector>

#include "recfno/grid.hpp"
#include "recfno/rng.hpp"
#include "recfno/tensor.hpp"

namespace recfno {

enum class EmbeddingKind { Mask, Voronoi, Mlp };

std::string to_string(EmbeddingKind kind);
EmbeddingKind parse_embedding_kind(const std::string& name);

/// Channels of the sparse representation fed to the embedding's 1x1 lift (mask: 3, Voronoi: 4).
Index representation_channels(EmbeddingKind kind);

struct EmbeddingConfig {
  EmbeddingKind kind = EmbeddingKind::Voronoi;
  Index n_e = 32;          ///< output channels
  Index n_sensors = 1;     ///< MLP input length
  Index mlp_hidden = 128;
  Index map_h = 0;         ///< MLP map shape (h', w'); 0 selects round(n_y/4), round(n_x/4)
  Index map_w = 0;
  Index out_h = 0;         ///< (n_y, n_x) produced by the embedding
  Index out_w = 0;

  /// Fills defaulted map extents and checks invariants; throws ConfigError.
  void validate();
};

using Parameter = std::variant<Tensor, ComplexTensor>;

struct NamedParameter {
  std::string name;
  Parameter value;
};

using ParameterList = std::vector<NamedParameter>;

/// Learnable parameters of one embedding. Only the fields for the configured kind are defined.
struct EmbeddingParams {
  // mask / Voronoi: 1x1 lift of the sparse representation
  Tensor lift_weight;  // [c, n_e]
  Tensor lift_bias;    // [n_e]
  // MLP path
  Tensor fc1_weight;   // [n, hidden]
  Tensor fc1_bias;
  Tensor fc2_weight;   // [hidden, h' w']
  Tensor fc2_bias;
  Tensor map_weight;   // [1, n_e]
  Tensor map_bias;
  Tensor conv_weight;  // [3, 3, n_e, n_e]
  Tensor conv_bias;

  void append_to(ParameterList& list, const std::string& prefix) const;
};

EmbeddingParams init_embedding_params(const EmbeddingConfig& cfg, Rng& rng);

/// Zero-filled map with the observation values at sensor cells plus normalised coordinates: [n_y, n_x, 3].
Tensor mask_representation(const ObservationSet& obs, const GridSpec& grid);

/// Nearest-sensor image V, 0-1 sensor mask, and normalised coordinates: [n_y, n_x, 4].
/// Distances are Euclidean in physical coordinates between cell centres and the snapped sensor
/// centres; equidistant sensors resolve to the lowest index.
Tensor voronoi_representation(const ObservationSet& obs, const GridSpec& grid);

/// For each cell, index of the nearest sensor (the tessellation behind voronoi_representation).
std::vector<Index> voronoi_assignment(const std::vector<Cell>& sensor_cells, const GridSpec& grid);

/// The embedding's non-learned input for `grid`: a representation image for mask/Voronoi, or the raw
/// value vector [n] for the MLP path.
Tensor observation_features(const ObservationSet& obs, EmbeddingKind kind, const GridSpec& grid);

/// Learnable 1x1 lift of a mask/Voronoi representation to n_e channels.
Tensor embed_conv(const Tensor& representation, const Tensor& weight, const Tensor& bias);

/// linear -> GELU -> linear -> reshape (h', w', 1) -> 1x1 conv -> resize (2h', 2w') -> 3x3 conv ->
/// resize (out_h, out_w).
Tensor mlp_embedding(const Tensor& values, const EmbeddingConfig& cfg, const EmbeddingParams& params);

/// Embedding of precomputed features at an output resolution of (out_h, out_w).
Tensor embed_features(const Tensor& features, const EmbeddingConfig& cfg, const EmbeddingParams& params);

}  // namespace recfno
