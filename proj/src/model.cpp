#include "recfno/model.hpp"

#include <cmath>
#include <cstdio>

#include "recfno/ops.hpp"

namespace recfno {

namespace {

Index to_index(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError("model config: missing key '" + key + "'");
  try {
    std::size_t used = 0;
    const long long v = std::stoll(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return static_cast<Index>(v);
  } catch (const std::logic_error&) {
    throw ConfigError("model config: key '" + key + "' is not an integer: '" + it->second + "'");
  }
}

double to_double(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError("normalizer: missing key '" + key + "'");
  try {
    return std::stod(it->second);
  } catch (const std::logic_error&) {
    throw ConfigError("normalizer: key '" + key + "' is not a number: '" + it->second + "'");
  }
}

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void ModelConfig::validate() {
  if (layers < 1) throw ConfigError("model: need at least one Fourier layer");
  if (width < 1) throw ConfigError("model: width must be >= 1");
  if (head_width == 0) head_width = 4 * width;
  if (head_width < 1) throw ConfigError("model: head width must be >= 1");
  embedding.n_e = width;
  embedding.out_h = n_y;
  embedding.out_w = n_x;
  GridSpec(n_y, n_x);  // grid invariants
  check_mode_limits(n_y, n_x, modes1, modes2);
  embedding.validate();
}

KeyValues ModelConfig::to_key_values() const {
  return {{"model.embedding", to_string(embedding.kind)},
          {"model.sensors", std::to_string(embedding.n_sensors)},
          {"model.mlp_hidden", std::to_string(embedding.mlp_hidden)},
          {"model.map_h", std::to_string(embedding.map_h)},
          {"model.map_w", std::to_string(embedding.map_w)},
          {"model.n_y", std::to_string(n_y)},
          {"model.n_x", std::to_string(n_x)},
          {"model.layers", std::to_string(layers)},
          {"model.width", std::to_string(width)},
          {"model.modes1", std::to_string(modes1)},
          {"model.modes2", std::to_string(modes2)},
          {"model.head_width", std::to_string(head_width)}};
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
  ModelConfig cfg;
  auto it = kv.find("model.embedding");
  if (it == kv.end()) throw ConfigError("model config: missing key 'model.embedding'");
  cfg.embedding.kind = parse_embedding_kind(it->second);
  cfg.embedding.n_sensors = to_index(kv, "model.sensors");
  cfg.embedding.mlp_hidden = to_index(kv, "model.mlp_hidden");
  cfg.embedding.map_h = to_index(kv, "model.map_h");
  cfg.embedding.map_w = to_index(kv, "model.map_w");
  cfg.n_y = to_index(kv, "model.n_y");
  cfg.n_x = to_index(kv, "model.n_x");
  cfg.layers = to_index(kv, "model.layers");
  cfg.width = to_index(kv, "model.width");
  cfg.modes1 = to_index(kv, "model.modes1");
  cfg.modes2 = to_index(kv, "model.modes2");
  cfg.head_width = to_index(kv, "model.head_width");
  cfg.validate();
  return cfg;
}

void Normalizer::to_key_values(KeyValues& kv) const {
  kv["norm.input_mean"] = exact(input_mean);
  kv["norm.input_std"] = exact(input_std);
  kv["norm.target_mean"] = exact(target_mean);
  kv["norm.target_std"] = exact(target_std);
}

Normalizer Normalizer::from_key_values(const KeyValues& kv) {
  Normalizer n;
  n.input_mean = to_double(kv, "norm.input_mean");
  n.input_std = to_double(kv, "norm.input_std");
  n.target_mean = to_double(kv, "norm.target_mean");
  n.target_std = to_double(kv, "norm.target_std");
  if (!(n.input_std > 0.0) || !(n.target_std > 0.0)) throw ConfigError("normalizer: standard deviations must be > 0");
  return n;
}

ParameterList ModelParams::parameters() const {
  ParameterList list;
  embedding.append_to(list, "embed.");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    list.push_back({p + "spectral", layers[l].spectral_weight});
    list.push_back({p + "weight", layers[l].weight});
    list.push_back({p + "bias", layers[l].bias});
  }
  list.push_back({"head.weight1", head_weight1});
  list.push_back({"head.bias1", head_bias1});
  list.push_back({"head.weight2", head_weight2});
  list.push_back({"head.bias2", head_bias2});
  return list;
}

namespace {

Tensor uniform_param(Shape shape, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t.values_mut()[i] = rng.uniform(-bound, bound);
  t.set_requires_grad(true);
  return t;
}

}  // namespace

ModelParams init_model(const ModelConfig& cfg_in, Rng& rng) {
  ModelConfig cfg = cfg_in;
  cfg.validate();
  ModelParams p;
  p.embedding = init_embedding_params(cfg.embedding, rng);
  for (Index l = 0; l < cfg.layers; ++l) p.layers.push_back(init_fourier_layer(cfg.width, cfg.modes1, cfg.modes2, rng));
  p.head_weight1 = uniform_param({cfg.width, cfg.head_width}, cfg.width, rng);
  p.head_bias1 = uniform_param({cfg.head_width}, cfg.width, rng);
  p.head_weight2 = uniform_param({cfg.head_width, 1}, cfg.head_width, rng);
  p.head_bias2 = uniform_param({1}, cfg.head_width, rng);
  round_to_float(p.parameters());
  return p;
}

Tensor forward_features(const Tensor& features, const ModelConfig& cfg, const ModelParams& params, Index out_h,
                        Index out_w) {
  if (static_cast<Index>(params.layers.size()) != cfg.layers) {
    throw ShapeError("model: parameters hold " + std::to_string(params.layers.size()) + " layers, config expects " +
                     std::to_string(cfg.layers));
  }
  EmbeddingConfig ecfg = cfg.embedding;
  ecfg.out_h = out_h;
  ecfg.out_w = out_w;
  Tensor v = embed_features(features, ecfg, params.embedding);
  for (const FourierLayerParams& layer : params.layers) v = fourier_layer(v, layer);
  Tensor y = conv1x1(gelu(conv1x1(v, params.head_weight1, params.head_bias1)), params.head_weight2, params.head_bias2);
  return reshape(y, {out_h, out_w});
}

Tensor recfno_forward(const ObservationSet& obs, const ModelConfig& cfg, const ModelParams& params) {
  return superres_forward(obs, cfg, params, 1);
}

Tensor superres_forward(const ObservationSet& obs, const ModelConfig& cfg, const ModelParams& params, Index scale) {
  if (scale < 1) throw ConfigError("superres: scale must be an integer >= 1");
  const Index h = cfg.n_y * scale, w = cfg.n_x * scale;
  check_mode_limits(h, w, cfg.modes1, cfg.modes2);
  const GridSpec grid(h, w, obs.grid.extent);
  return forward_features(observation_features(obs, cfg.embedding.kind, grid), cfg, params, h, w);
}

ObservationSet normalize_observations(const ObservationSet& obs, const Normalizer& norm) {
  ObservationSet out = obs;
  for (double& v : out.values) v = norm.normalize_input(v);
  return out;
}

Tensor Model::predict(const ObservationSet& obs, Index scale) const {
  NoGradGuard guard;
  ObservationSet local = normalize_observations(obs, norm);
  local.grid = GridSpec(config.n_y, config.n_x, extent);
  Tensor y = superres_forward(local, config, params, scale);
  Tensor::Array v = y.values() * norm.target_std + norm.target_mean;
  return Tensor::wrap(y.shape(), std::move(v));
}

void round_to_float(const ParameterList& params) {
  for (const NamedParameter& p : params) {
    std::visit(
        [](auto t) {
          auto& v = t.values_mut();
          using S = typename decltype(t)::scalar_type;
          for (Index i = 0; i < v.size(); ++i) {
            if constexpr (std::is_same_v<S, Complex>) {
              v[i] = Complex(static_cast<float>(v[i].real()), static_cast<float>(v[i].imag()));
            } else {
              v[i] = static_cast<float>(v[i]);
            }
          }
        },
        p.value);
  }
}

}  // namespace recfno
