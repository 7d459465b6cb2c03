#pragma once

#include <map>
#include <string>
#include <vector>

#include "recfno/embed.hpp"
#include "recfno/spectral.hpp"

namespace recfno {

using KeyValues = std::map<std::string, std::string>;

struct ModelConfig {
  EmbeddingConfig embedding;  ///< n_e, out_h, out_w are derived from the fields below
  Index n_y = 64;             ///< training resolution
  Index n_x = 64;
  Index layers = 4;
  Index width = 32;
  Index modes1 = 12;
  Index modes2 = 12;
  Index head_width = 0;  ///< 0 selects 4 * width

  /// Derives the embedding shape fields and checks invariants, including the mode limits at
  /// the training resolution. Throws ConfigError or ModeError.
  void validate();

  KeyValues to_key_values() const;
  static ModelConfig from_key_values(const KeyValues& kv);
};

/// Affine z-score maps for sensor readings and target fields, fitted on the training split.
struct Normalizer {
  double input_mean = 0.0;
  double input_std = 1.0;
  double target_mean = 0.0;
  double target_std = 1.0;

  double normalize_input(double v) const { return (v - input_mean) / input_std; }
  double normalize_target(double v) const { return (v - target_mean) / target_std; }
  double denormalize_target(double v) const { return v * target_std + target_mean; }

  void to_key_values(KeyValues& kv) const;
  static Normalizer from_key_values(const KeyValues& kv);
};

struct ModelParams {
  EmbeddingParams embedding;
  std::vector<FourierLayerParams> layers;
  Tensor head_weight1;  // [d_v, head]
  Tensor head_bias1;
  Tensor head_weight2;  // [head, 1]
  Tensor head_bias2;

  /// Every learnable tensor under a stable name, in a fixed order.
  ParameterList parameters() const;
};

ModelParams init_model(const ModelConfig& cfg, Rng& rng);

/// Embedding -> Fourier layers -> pointwise head on precomputed observation features, producing an
/// [out_h, out_w] field. Values are in the model's normalised units.
Tensor forward_features(const Tensor& features, const ModelConfig& cfg, const ModelParams& params, Index out_h,
                        Index out_w);

/// Reconstruction at the training resolution from observations already in normalised units.
Tensor recfno_forward(const ObservationSet& obs, const ModelConfig& cfg, const ModelParams& params);

/// Same parameters evaluated on the grid refined by `scale`; mask/Voronoi sensors re-snap on it.
Tensor superres_forward(const ObservationSet& obs, const ModelConfig& cfg, const ModelParams& params, Index scale);

/// A trained model with its normalisation, working in physical units.
struct Model {
  ModelConfig config;
  ModelParams params;
  Normalizer norm;
  Extent extent;
  std::vector<Point> sensors;  ///< layout the model was trained with (may be empty)

  GridSpec grid(Index scale = 1) const { return GridSpec(config.n_y * scale, config.n_x * scale, extent); }

  /// Field in physical units on the grid refined by `scale`; no tape is recorded.
  Tensor predict(const ObservationSet& obs, Index scale = 1) const;
};

/// Copy of `obs` with values mapped through normalize_input.
ObservationSet normalize_observations(const ObservationSet& obs, const Normalizer& norm);

/// Rounds every parameter to the nearest float32 value, so the float32 checkpoint holds it exactly.
void round_to_float(const ParameterList& params);

}  // namespace recfno
