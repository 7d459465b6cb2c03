#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "recfno/checkpoint.hpp"
#include "recfno/gradcheck.hpp"
#include "recfno/model.hpp"
#include "recfno/ops.hpp"
#include "test_util.hpp"

using namespace recfno;

namespace {

ModelConfig small_config(EmbeddingKind kind, Index n = 8, Index sensors = 3) {
  ModelConfig cfg;
  cfg.embedding.kind = kind;
  cfg.embedding.n_sensors = sensors;
  cfg.embedding.mlp_hidden = 6;
  cfg.n_y = n;
  cfg.n_x = n;
  cfg.layers = 2;
  cfg.width = 3;
  cfg.modes1 = 2;
  cfg.modes2 = 3;
  cfg.validate();
  return cfg;
}

ObservationSet sample_obs(const GridSpec& grid, Rng& rng) {
  return make_observations({{0.2, 0.3}, {0.7, 0.6}, {0.45, 0.9}}, {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)},
                           grid);
}

void zero_all(const ParameterList& params) {
  for (const NamedParameter& p : params) std::visit([](auto t) { t.values_mut().setZero(); }, p.value);
}

bool has_nonzero_grad(const Parameter& p) {
  return std::visit([](const auto& t) { return t.has_grad() && (t.grad().abs() > 0.0).any(); }, p);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("recfno_test_" + name)).string();
}

}  // namespace

TEST_CASE("model config validation") {
  ModelConfig cfg;
  cfg.validate();
  CHECK(cfg.head_width == 4 * cfg.width);
  CHECK(cfg.embedding.n_e == cfg.width);
  CHECK(cfg.embedding.out_h == 64);

  ModelConfig bad = cfg;
  bad.modes1 = 40;
  CHECK_THROWS_AS(bad.validate(), ModeError);
  bad = cfg;
  bad.layers = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  const ModelConfig back = ModelConfig::from_key_values(cfg.to_key_values());
  CHECK(back.to_key_values() == cfg.to_key_values());
  KeyValues kv = cfg.to_key_values();
  kv["model.width"] = "wide";
  CHECK_THROWS_AS(ModelConfig::from_key_values(kv), ConfigError);
}

TEST_CASE("zero parameters give the constant head bias") {
  const ModelConfig cfg = small_config(EmbeddingKind::Voronoi);
  Rng rng(1);
  ModelParams p = init_model(cfg, rng);
  zero_all(p.parameters());
  p.head_bias2.values_mut()[0] = 0.375;
  const Tensor y = recfno_forward(sample_obs(GridSpec(8, 8), rng), cfg, p);
  CHECK(y.shape() == Shape{8, 8});
  CHECK((y.values() == 0.375).all());
}

TEST_CASE("all embeddings give the same output shape") {
  Rng rng(2);
  for (EmbeddingKind kind : {EmbeddingKind::Mask, EmbeddingKind::Voronoi, EmbeddingKind::Mlp}) {
    ModelConfig cfg = small_config(kind, 16);
    cfg.n_x = 12;
    cfg.validate();
    const ModelParams p = init_model(cfg, rng);
    const GridSpec grid(16, 12);
    const Tensor y = recfno_forward(sample_obs(grid, rng), cfg, p);
    CHECK(y.shape() == Shape{16, 12});
    CHECK(y.values().allFinite());
  }
}

TEST_CASE("every parameter group receives gradient") {
  Rng rng(3);
  for (EmbeddingKind kind : {EmbeddingKind::Mask, EmbeddingKind::Voronoi, EmbeddingKind::Mlp}) {
    const ModelConfig cfg = small_config(kind);
    const ModelParams p = init_model(cfg, rng);
    const Tensor target = testutil::random_tensor({8, 8}, rng);
    backward(mean(abs(sub(recfno_forward(sample_obs(GridSpec(8, 8), rng), cfg, p), target))));
    for (const NamedParameter& np : p.parameters()) {
      INFO(to_string(kind), " ", np.name);
      CHECK(has_nonzero_grad(np.value));
    }
  }
}

TEST_CASE("full model gradient check") {
  Rng rng(4);
  for (EmbeddingKind kind : {EmbeddingKind::Voronoi, EmbeddingKind::Mlp}) {
    const ModelConfig cfg = small_config(kind);
    const ModelParams p = init_model(cfg, rng);
    const ObservationSet obs = sample_obs(GridSpec(8, 8), rng);
    const Tensor probe = testutil::random_tensor({8, 8}, rng);
    auto loss = [&](const ModelParams& q) { return sum(mul(recfno_forward(obs, cfg, q), probe)); };

    CHECK(grad_check<Tensor>(
              [&](const Tensor& t) {
                ModelParams q = p;
                q.head_weight1 = t;
                return loss(q);
              },
              p.head_weight1) < 1e-4);
    CHECK(grad_check<ComplexTensor>(
              [&](const ComplexTensor& t) {
                ModelParams q = p;
                q.layers[0].spectral_weight = t;
                return loss(q);
              },
              p.layers[0].spectral_weight) < 1e-4);
    CHECK(grad_check<Tensor>(
              [&](const Tensor& t) {
                ModelParams q = p;
                q.layers[1].weight = t;
                return loss(q);
              },
              p.layers[1].weight) < 1e-4);
    const Tensor& first = kind == EmbeddingKind::Mlp ? p.embedding.fc1_weight : p.embedding.lift_weight;
    CHECK(grad_check<Tensor>(
              [&](const Tensor& t) {
                ModelParams q = p;
                (kind == EmbeddingKind::Mlp ? q.embedding.fc1_weight : q.embedding.lift_weight) = t;
                return loss(q);
              },
              first) < 1e-4);
  }
}

TEST_CASE("layer stacking matches manual composition") {
  const ModelConfig cfg = small_config(EmbeddingKind::Mask);
  Rng rng(5);
  const ModelParams p = init_model(cfg, rng);
  const ObservationSet obs = sample_obs(GridSpec(8, 8), rng);
  NoGradGuard guard;
  Tensor v = embed_features(observation_features(obs, cfg.embedding.kind, GridSpec(8, 8)), cfg.embedding, p.embedding);
  v = fourier_layer(fourier_layer(v, p.layers[0]), p.layers[1]);
  const Tensor manual = reshape(conv1x1(gelu(conv1x1(v, p.head_weight1, p.head_bias1)), p.head_weight2, p.head_bias2), {8, 8});
  CHECK((manual.values() == recfno_forward(obs, cfg, p).values()).all());
}

TEST_CASE("super-resolution forward") {
  Rng rng(6);
  for (EmbeddingKind kind : {EmbeddingKind::Mask, EmbeddingKind::Voronoi, EmbeddingKind::Mlp}) {
    const ModelConfig cfg = small_config(kind);
    const ModelParams p = init_model(cfg, rng);
    const ObservationSet obs = sample_obs(GridSpec(8, 8), rng);
    NoGradGuard guard;
    CHECK((superres_forward(obs, cfg, p, 1).values() == recfno_forward(obs, cfg, p).values()).all());
    const Tensor fine = superres_forward(obs, cfg, p, 2);
    CHECK(fine.shape() == Shape{16, 16});
    CHECK(fine.values().allFinite());
  }
  // A model whose output ignores the input stays constant at any scale.
  const ModelConfig cfg = small_config(EmbeddingKind::Voronoi);
  ModelParams p = init_model(cfg, rng);
  zero_all(p.parameters());
  p.head_bias2.values_mut()[0] = -1.25;
  const Tensor fine = superres_forward(sample_obs(GridSpec(8, 8), rng), cfg, p, 2);
  CHECK((fine.values() == -1.25).all());
  CHECK_THROWS_AS(superres_forward(sample_obs(GridSpec(8, 8), rng), cfg, p, 0), ConfigError);
}

TEST_CASE("model prediction applies the normaliser") {
  const ModelConfig cfg = small_config(EmbeddingKind::Voronoi);
  Rng rng(7);
  Model m;
  m.config = cfg;
  m.params = init_model(cfg, rng);
  m.norm = {10.0, 2.0, 300.0, 5.0};
  m.extent = {0.0, 1.0, 0.0, 1.0};
  const ObservationSet obs = sample_obs(m.grid(), rng);
  const Tensor y = m.predict(obs);
  const Tensor z = recfno_forward(normalize_observations(obs, m.norm), cfg, m.params);
  CHECK(testutil::max_abs_diff(y.values(), z.values() * 5.0 + 300.0) < 1e-12);
  CHECK(m.predict(obs, 2).shape() == Shape{16, 16});
}

TEST_CASE("parameters are float32 representable after init") {
  Rng rng(8);
  const ModelParams p = init_model(small_config(EmbeddingKind::Mlp), rng);
  for (const NamedParameter& np : p.parameters()) {
    std::visit(
        [](const auto& t) {
          for (Index i = 0; i < t.size(); ++i) {
            const auto v = t.values()[i];
            if constexpr (std::is_same_v<std::decay_t<decltype(v)>, Complex>) {
              CHECK(static_cast<double>(static_cast<float>(v.real())) == v.real());
              CHECK(static_cast<double>(static_cast<float>(v.imag())) == v.imag());
            } else {
              CHECK(static_cast<double>(static_cast<float>(v)) == v);
            }
          }
        },
        np.value);
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(9);
  for (EmbeddingKind kind : {EmbeddingKind::Mask, EmbeddingKind::Voronoi, EmbeddingKind::Mlp}) {
    Model m;
    m.config = small_config(kind);
    m.params = init_model(m.config, rng);
    m.norm = {0.1, 1.7, 301.25, 12.5};
    m.extent = {0.0, 0.1, 0.0, 0.1};
    const std::string path = temp_path("ckpt.bin");
    save_model(path, m);
    const Model back = load_model(path);
    CHECK(back.config.to_key_values() == m.config.to_key_values());
    CHECK(back.norm.target_mean == m.norm.target_mean);
    CHECK(back.norm.input_std == m.norm.input_std);
    CHECK(back.extent == m.extent);
    const ParameterList a = m.params.parameters(), b = back.params.parameters();
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      std::visit(
          [&](const auto& ta) {
            const auto& tb = std::get<std::decay_t<decltype(ta)>>(b[k].value);
            CHECK(ta.shape() == tb.shape());
            CHECK((ta.values() == tb.values()).all());
          },
          a[k].value);
    }
    const GridSpec grid(8, 8, m.extent);
    const ObservationSet obs = make_observations({{0.02, 0.03}, {0.07, 0.06}, {0.045, 0.09}}, {300.0, 310.0, 305.0}, grid);
    CHECK((m.predict(obs).values() == back.predict(obs).values()).all());
    std::filesystem::remove(path);
  }
}

TEST_CASE("checkpoint errors") {
  Rng rng(10);
  Model m;
  m.config = small_config(EmbeddingKind::Voronoi);
  m.params = init_model(m.config, rng);
  const std::string path = temp_path("ckpt_err.bin");
  save_model(path, m);

  Checkpoint ck = read_checkpoint(path);
  ck.meta["model.width"] = "4";  // parameters still hold width 3
  write_checkpoint(path, ck);
  CHECK_THROWS_AS(load_model(path), IoError);

  ck = model_checkpoint(m);
  ck.meta["kind"] = "pod-mlp";
  write_checkpoint(path, ck);
  CHECK_THROWS_AS(load_model(path), IoError);

  save_model(path, m);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const std::uint32_t version = 7;
    f.write(reinterpret_cast<const char*>(&version), 4);
  }
  CHECK_THROWS_AS(read_checkpoint(path), IoError);

  save_model(path, m);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
  CHECK_THROWS_AS(read_checkpoint(path), IoError);
  CHECK_THROWS_AS(read_checkpoint(temp_path("missing.bin")), IoError);
  std::filesystem::remove(path);

  ParameterList target = m.params.parameters();
  ParameterList source = m.params.parameters();
  source[0].name = "other";
  CHECK_THROWS_AS(assign_parameters(target, source), IoError);
}
