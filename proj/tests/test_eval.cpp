#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "doctest.h"
#include "recfno/eval.hpp"
#include "test_util.hpp"

using namespace recfno;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("recfno_test_" + name)).string();
}

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ExperimentSpec tiny_spec() {
  ExperimentSpec spec;
  spec.model.layers = 1;
  spec.model.width = 3;
  spec.model.modes1 = spec.model.modes2 = 2;
  spec.model.embedding.mlp_hidden = 4;
  spec.train.epochs = 1;
  spec.train.batch_size = 4;
  spec.baseline.hidden = 4;
  spec.sensors = 4;
  return spec;
}

}  // namespace

TEST_CASE("mae and max_ae oracles") {
  const Tensor u = Tensor::wrap({2, 2}, (Tensor::Array(4) << 1.0, 2.0, 3.0, 4.0).finished());
  const Tensor p = Tensor::wrap({2, 2}, (Tensor::Array(4) << 1.5, 2.0, 1.0, 4.25).finished());
  CHECK(mae(u, p) == doctest::Approx(0.6875).epsilon(1e-15));
  CHECK(max_ae(u, p) == 2.0);
  CHECK(mae(u, u) == 0.0);
  CHECK(max_ae(u, u) == 0.0);
  CHECK(mae(u, p) <= max_ae(u, p));
  CHECK_THROWS_AS(mae(u, Tensor::zeros({4})), ShapeError);
  CHECK_THROWS_AS(max_ae(u, Tensor::zeros({2, 3})), ShapeError);
}

TEST_CASE("mae and max_ae properties on random fields") {
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    const Tensor a = testutil::random_tensor({5, 7}, rng), b = testutil::random_tensor({5, 7}, rng);
    CHECK(mae(a, b) == doctest::Approx(mae(b, a)).epsilon(1e-15));
    CHECK(mae(a, b) <= max_ae(a, b));
    const Tensor shifted = Tensor::wrap({5, 7}, a.values() + 0.3);
    CHECK(mae(a, shifted) == doctest::Approx(0.3).epsilon(1e-12));
  }
}

TEST_CASE("evaluate aggregates per-sample metrics") {
  const GridSpec grid(2, 2);
  const ObservationSet obs = make_observations({{0.25, 0.25}}, {0.0}, grid);
  const std::vector<Tensor> truths = {Tensor::constant({2, 2}, 1.0), Tensor::wrap({2, 2}, (Tensor::Array(4) << 0, 0, 0, 4).finished())};
  const MetricReport r = evaluate([](const ObservationSet&) { return Tensor::zeros({2, 2}); }, {obs, obs}, truths);
  CHECK(r.samples.size() == 2);
  CHECK(r.mae == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.max_ae == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(r.worst_ae == 4.0);
  CHECK_THROWS_AS(evaluate([](const ObservationSet&) { return Tensor::zeros({2, 2}); }, {obs}, truths), ContractError);
}

TEST_CASE("method and regime names") {
  for (Method m : {Method::Mask, Method::Voronoi, Method::Mlp, Method::PodMlp}) CHECK(parse_method(to_string(m)) == m);
  CHECK_THROWS_AS(parse_method("fno"), ConfigError);
  CHECK(parse_regime("both") == NoiseRegime::Both);
  CHECK(parse_regime("inputs-only") == NoiseRegime::InputsOnly);
  CHECK_THROWS_AS(parse_regime("labels"), ConfigError);
}

TEST_CASE("fingerprint is stable and sensitive") {
  KeyValues a{{"x", "1"}, {"y", "2"}};
  KeyValues b = a;
  CHECK(fingerprint(a) == fingerprint(b));
  CHECK(fingerprint(a).size() == 16);
  b["y"] = "3";
  CHECK(fingerprint(a) != fingerprint(b));
}

TEST_CASE("driver argument validation") {
  const FieldDataset ds = generate_dataset(Task::Darcy, GridSpec(8, 8), 7, 1);
  const ExperimentSpec spec = tiny_spec();
  CHECK_THROWS_AS(sensor_sweep(ds, {4, 9, 4}, {Method::Voronoi}, spec), ConfigError);
  CHECK_THROWS_AS(sensor_sweep(ds, {0}, {Method::Voronoi}, spec), ConfigError);
  CHECK_THROWS_AS(sensor_sweep(ds, {65}, {Method::Voronoi}, spec), ConfigError);
  CHECK_THROWS_AS(sensor_sweep(ds, {}, {Method::Voronoi}, spec), ConfigError);
  CHECK_THROWS_AS(mode_ablation(ds, {2, 5}, Method::Voronoi, spec), ModeError);
  CHECK_THROWS_AS(mode_ablation(ds, {2}, Method::PodMlp, spec), ConfigError);
  CHECK_THROWS_AS(noise_experiment(ds, {}, NoiseRegime::Both, {Method::Voronoi}, spec), ConfigError);
}

TEST_CASE("small sweep, noise and ablation runs produce complete reports") {
  const FieldDataset ds = generate_dataset(Task::Darcy, GridSpec(8, 8), 14, 3);
  const ExperimentSpec spec = tiny_spec();

  const ExperimentReport sweep = sensor_sweep(ds, {2, 4}, {Method::Voronoi, Method::PodMlp}, spec);
  REQUIRE(sweep.rows.size() == 4);
  CHECK(sweep.rows[0].sensors == 2);
  CHECK(sweep.rows[1].method == "pod-mlp");
  for (const ExperimentRow& r : sweep.rows) CHECK((std::isfinite(r.mae) && r.mae <= r.max_ae));
  ExperimentSpec parallel = spec;
  parallel.jobs = 3;
  const ExperimentReport again = sensor_sweep(ds, {2, 4}, {Method::Voronoi, Method::PodMlp}, parallel);
  for (std::size_t i = 0; i < 4; ++i) CHECK(again.rows[i].mae == sweep.rows[i].mae);

  const ExperimentReport noise = noise_experiment(ds, {20.0, 5.0}, NoiseRegime::InputsOnly, {Method::Mask}, spec);
  REQUIRE(noise.rows.size() == 3);
  CHECK(noise.rows[0].regime == "clean");
  CHECK(std::isinf(noise.rows[0].snr_db));
  CHECK(noise.rows[2].snr_db == 5.0);
  CHECK(noise.rows[2].regime == "inputs-only");

  const ExperimentReport both = noise_experiment(ds, {10.0}, NoiseRegime::Both, {Method::Mlp}, spec);
  CHECK(both.rows.size() == 2);
  CHECK(both.fingerprint != noise.fingerprint);

  const ExperimentReport abl = mode_ablation(ds, {1, 2}, Method::Voronoi, spec);
  REQUIRE(abl.rows.size() == 2);
  CHECK(abl.rows[1].modes == 2);

  const std::string csv = temp_path("sweep.csv");
  sweep.write_csv(csv);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "method,sensors,regime,snr_db,modes,scale,mae,max_ae,fingerprint");
  std::filesystem::remove(csv);
}

TEST_CASE("super-resolution evaluation") {
  const FieldDataset ds = generate_dataset(Task::Darcy, GridSpec(8, 8), 14, 3);
  const ExperimentSpec spec = tiny_spec();
  const auto sensors = sensor_layout(ds.grid, 4, spec);
  const SupervisedSet tr = make_supervised(ds, "train", sensors), va = make_supervised(ds, "val", sensors);
  const TrainedModel m = train_method(Method::Voronoi, tr, va, spec);
  const MetricReport r1 = superres_eval(m, ds, 1);
  const SupervisedSet te = make_supervised(ds, "test", sensors);
  const MetricReport direct = evaluate([&](const ObservationSet& o) { return m.predict(o); }, te.inputs, te.targets);
  CHECK(r1.mae == direct.mae);

  const std::string prefix = temp_path("sr");
  const MetricReport r2 = superres_eval(m, ds, 2, "test", prefix);
  CHECK(std::isfinite(r2.mae));
  CHECK(read_csv_grid(prefix + "_pred.csv").shape() == Shape{16, 16});
  for (const char* s : {"_truth.ppm", "_pred.ppm", "_error.pgm", "_truth.csv", "_pred.csv", "_error.csv"}) {
    CHECK(std::filesystem::exists(prefix + s));
    std::filesystem::remove(prefix + s);
  }
  CHECK_THROWS_AS(superres_eval(m, ds, 0), ConfigError);

  const TrainedModel pod = train_method(Method::PodMlp, tr, va, spec);
  CHECK_THROWS_AS(superres_eval(pod, ds, 2), ContractError);

  FieldDataset imported = ds;
  imported.task = Task::Import;
  CHECK_THROWS_AS(superres_eval(m, imported, 2), ConfigError);
}

TEST_CASE("csv grid round trip is bit exact") {
  Rng rng(9);
  Tensor f = testutil::random_tensor({3, 5}, rng, -1e6, 1e6);
  f.values_mut()[0] = 1e-300;
  f.values_mut()[1] = -0.1;
  const std::string path = temp_path("grid.csv");
  write_csv_grid(path, f);
  const Tensor back = read_csv_grid(path);
  CHECK(back.shape() == f.shape());
  CHECK((back.values() == f.values()).all());
  std::filesystem::remove(path);

  std::ofstream(path) << "1,2\n3\n";
  CHECK_THROWS_AS(read_csv_grid(path), ShapeError);
  std::ofstream(path) << "1,x\n";
  CHECK_THROWS_AS(read_csv_grid(path), IoError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_csv_grid(path), IoError);
}

TEST_CASE("raster export") {
  const std::string pgm = temp_path("c.pgm");
  write_pgm(pgm, Tensor::constant({2, 3}, 5.0), 5.0, 5.0);
  std::vector<unsigned char> bytes = read_bytes(pgm);
  const std::string header = "P5\n3 2\n255\n";
  REQUIRE(bytes.size() == header.size() + 6);
  for (std::size_t i = header.size(); i < bytes.size(); ++i) CHECK(bytes[i] == 0);

  // Row 0 (bottom) is written last; lo -> 0, hi -> 255.
  write_pgm(pgm, Tensor::wrap({2, 1}, (Tensor::Array(2) << 0.0, 1.0).finished()), 0.0, 1.0);
  bytes = read_bytes(pgm);
  CHECK(bytes[bytes.size() - 2] == 255);
  CHECK(bytes[bytes.size() - 1] == 0);
  std::filesystem::remove(pgm);

  const std::string ppm = temp_path("c.ppm");
  write_ppm(ppm, Tensor::zeros({2, 2}), 0.0, 0.0, {Cell{0, 1}});
  bytes = read_bytes(ppm);
  const std::string ph = "P6\n2 2\n255\n";
  REQUIRE(bytes.size() == ph.size() + 12);
  // Bottom row is the second image row; its second pixel is the marked sensor.
  CHECK(bytes[ph.size() + 9] == 255);
  CHECK(bytes[ph.size() + 10] == 255);
  CHECK(bytes[ph.size() + 11] == 255);
  CHECK(bytes[ph.size() + 0] != 255);
  std::filesystem::remove(ppm);
  CHECK_THROWS_AS(write_pgm(pgm, Tensor::zeros({4}), 0, 1), ShapeError);
}
