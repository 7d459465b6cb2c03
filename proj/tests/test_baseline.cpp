#include <cmath>
#include <filesystem>

#include <Eigen/SVD>

#include "doctest.h"
#include "recfno/baseline.hpp"
#include "test_util.hpp"

using namespace recfno;

namespace {

std::vector<Tensor> random_snapshots(Index m, Index n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> out;
  for (Index k = 0; k < m; ++k) out.push_back(testutil::random_tensor({n, n}, rng));
  return out;
}

// Mean 2 plus two fixed patterns; three sensors determine the coefficients.
SupervisedSet linear_set(Index count, std::uint64_t seed) {
  const Index n = 8;
  const GridSpec grid(n, n);
  const std::vector<Point> sensors = {{0.1, 0.1}, {0.9, 0.6}, {0.5, 0.5}};
  Rng rng(seed);
  SupervisedSet set;
  for (Index k = 0; k < count; ++k) {
    const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
    Tensor f = Tensor::zeros({n, n});
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        const double x = (j + 0.5) / n, y = (i + 0.5) / n;
        f.values_mut()[i * n + j] = 2.0 + a * x + b * y * y;
      }
    ObservationSet obs = make_observations(sensors, std::vector<double>(sensors.size(), 0.0), grid);
    for (std::size_t s = 0; s < sensors.size(); ++s) obs.values[s] = f.values()[obs.cells[s].i * n + obs.cells[s].j];
    set.inputs.push_back(obs);
    set.targets.push_back(f);
  }
  return set;
}

}  // namespace

TEST_CASE("energy rank") {
  Eigen::VectorXd s(4);
  s << 10.0, 1.0, 0.5, 0.0;
  CHECK(pod_energy_rank(s, 0.99) == 2);
  CHECK(pod_energy_rank(s, 0.5) == 1);
  CHECK(pod_energy_rank(s, 1.0) == 3);
  CHECK(pod_energy_rank(s, 0.99, 1) == 1);
  CHECK(pod_energy_rank(Eigen::VectorXd::Zero(3)) == 0);
}

TEST_CASE("single snapshot has rank zero and reproduces itself") {
  Rng rng(1);
  const Tensor u = testutil::random_tensor({6, 5}, rng);
  const PodBasis b = pod_fit({u}, GridSpec(6, 5));
  CHECK(b.rank() == 0);
  CHECK(testutil::max_abs_diff(pod_reconstruct(b, Eigen::VectorXd()).values(), u.values()) < 1e-15);
}

TEST_CASE("u and -u give a zero mean and one mode along u") {
  Rng rng(2);
  const Tensor u = testutil::random_tensor({4, 4}, rng);
  const Tensor neg = Tensor::wrap({4, 4}, -u.values());
  const PodBasis b = pod_fit({u, neg}, GridSpec(4, 4));
  REQUIRE(b.rank() == 1);
  CHECK(b.mean.values().abs().maxCoeff() < 1e-15);
  const double norm = u.values().matrix().norm();
  CHECK(b.singular[0] == doctest::Approx(std::sqrt(2.0) * norm).epsilon(1e-12));
  const double cosine = std::abs(b.modes.row(0).dot(u.values().matrix().transpose())) / norm;
  CHECK(cosine == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("basis agrees with a dense SVD of the centred snapshots") {
  const Index m = 50, n = 16;
  const auto snaps = random_snapshots(m, n, 3);
  const PodBasis b = pod_fit(snaps, GridSpec(n, n), 20);

  Eigen::MatrixXd X(m, n * n);
  for (Index k = 0; k < m; ++k) X.row(k) = snaps[static_cast<std::size_t>(k)].values().matrix().transpose();
  const Eigen::RowVectorXd mean = X.colwise().mean();
  X.rowwise() -= mean;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinV);

  CHECK(testutil::max_abs_diff(b.mean.values(), mean.transpose().array()) < 1e-14);
  for (Index i = 0; i < 20; ++i) {
    CHECK(std::abs(b.singular[i] - svd.singularValues()[i]) < 1e-8 * svd.singularValues()[0]);
    const Eigen::VectorXd v = svd.matrixV().col(i);
    const double sign = v.dot(b.modes.row(i).transpose()) < 0 ? -1.0 : 1.0;
    CHECK((b.modes.row(i).transpose() - sign * v).cwiseAbs().maxCoeff() < 1e-8);
  }
  const Eigen::MatrixXd gram = b.modes * b.modes.transpose();
  CHECK((gram - Eigen::MatrixXd::Identity(20, 20)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("projection and reconstruction") {
  const Index m = 12, n = 5;
  const auto snaps = random_snapshots(m, n, 4);
  const GridSpec grid(n, n);
  // With all m - 1 informative directions kept, every training snapshot is reproduced.
  const PodBasis full = pod_fit(snaps, grid, m - 1);
  for (const Tensor& s : snaps) CHECK(testutil::max_abs_diff(pod_reconstruct(full, pod_project(full, s)).values(), s.values()) < 1e-10);
  CHECK(testutil::max_abs_diff(pod_reconstruct(full, Eigen::VectorXd::Zero(m - 1)).values(), full.mean.values()) == 0.0);

  // The rank-m basis has one zero mode (centring removes a direction).
  const PodBasis all = pod_fit(snaps, grid, m);
  CHECK(all.singular[m - 1] == 0.0);
  CHECK(all.modes.row(m - 1).isZero(0.0));

  // Training residual never grows with rank.
  double prev = std::numeric_limits<double>::infinity();
  for (Index r = 0; r < m; ++r) {
    const PodBasis b = pod_fit(snaps, grid, r);
    double res = 0.0;
    for (const Tensor& s : snaps) res += (pod_reconstruct(b, pod_project(b, s)).values() - s.values()).square().sum();
    CHECK(res <= prev * (1 + 1e-12));
    prev = res;
  }
  CHECK(prev < 1e-18);

  CHECK_THROWS_AS(pod_fit(snaps, grid, m + 1), ConfigError);
  CHECK_THROWS_AS(pod_project(full, Tensor::zeros({n, n + 1})), ShapeError);
  CHECK_THROWS_AS(pod_reconstruct(full, Eigen::VectorXd::Zero(2)), ShapeError);
}

TEST_CASE("constant dataset: mean-field predictor with zero error") {
  SupervisedSet set = linear_set(6, 1);
  for (auto& t : set.targets) t = Tensor::constant(t.shape(), 3.5);
  for (auto& o : set.inputs) std::fill(o.values.begin(), o.values.end(), 3.5);
  TrainConfig tc;
  tc.epochs = 3;
  const PodMlpResult r = train_podmlp(set, set, tc);
  CHECK(r.model.basis.rank() == 0);
  CHECK(r.best_val_mae == 0.0);
  CHECK(r.model.parameters().empty());
  CHECK((r.model.predict(set.inputs[0]).values() == 3.5).all());
}

TEST_CASE("linear data is learned to small error") {
  const SupervisedSet tr = linear_set(64, 1), va = linear_set(16, 2);
  TrainConfig tc;
  tc.epochs = 400;
  tc.batch_size = 8;
  tc.lr0 = 1e-2;
  tc.gamma = 0.99;
  const PodMlpResult r = train_podmlp(tr, va, tc, PodMlpConfig{32, -1});
  CHECK(r.model.basis.rank() == 2);
  CHECK(r.best_val_mae < 2e-3);  // 0.1 % of the typical field value
}

TEST_CASE("pod-mlp refuses super-resolution and foreign grids") {
  const SupervisedSet tr = linear_set(8, 1);
  TrainConfig tc;
  tc.epochs = 1;
  const PodMlpResult r = train_podmlp(tr, tr, tc, PodMlpConfig{8, -1});
  CHECK_THROWS_AS(r.model.predict(tr.inputs[0], 2), ContractError);
  const ObservationSet other = make_observations(tr.inputs[0].positions, tr.inputs[0].values, GridSpec(16, 16));
  CHECK_THROWS_AS(r.model.predict(other), ContractError);
  ObservationSet short_obs = tr.inputs[0];
  short_obs.values.pop_back();
  short_obs.positions.pop_back();
  CHECK_THROWS_AS(r.model.predict(short_obs), ShapeError);
}

TEST_CASE("pod-mlp training is deterministic and keeps the best epoch") {
  const SupervisedSet tr = linear_set(16, 1), va = linear_set(4, 2);
  TrainConfig tc;
  tc.epochs = 6;
  tc.lr0 = 1e-3;
  const PodMlpResult a = train_podmlp(tr, va, tc, PodMlpConfig{16, -1});
  const PodMlpResult b = train_podmlp(tr, va, tc, PodMlpConfig{16, -1});
  for (std::size_t e = 0; e < a.history.size(); ++e) CHECK(a.history[e].val_mae == b.history[e].val_mae);
  double best = a.history[0].val_mae;
  for (const EpochRecord& rec : a.history) best = std::min(best, rec.val_mae);
  CHECK(a.best_val_mae == best);
  double mae = 0.0;
  for (Index k = 0; k < va.size(); ++k)
    mae += (a.model.predict(va.inputs[static_cast<std::size_t>(k)]).values() - va.targets[static_cast<std::size_t>(k)].values()).abs().mean();
  CHECK(mae / static_cast<double>(va.size()) == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("pod-mlp checkpoint round trip") {
  const SupervisedSet tr = linear_set(16, 1), va = linear_set(4, 2);
  TrainConfig tc;
  tc.epochs = 2;
  const PodMlpResult r = train_podmlp(tr, va, tc, PodMlpConfig{16, -1});
  const std::string path = (std::filesystem::temp_directory_path() / "recfno_test_pod.ckpt").string();
  write_checkpoint(path, podmlp_checkpoint(r.model));
  const PodMlp back = podmlp_from_checkpoint(read_checkpoint(path));
  CHECK(back.basis.rank() == r.model.basis.rank());
  CHECK(back.sensors == r.model.sensors);
  CHECK(back.coeff_scale == r.model.coeff_scale);
  const Tensor p0 = r.model.predict(va.inputs[0]), p1 = back.predict(va.inputs[0]);
  CHECK(testutil::max_abs_diff(p0.values(), p1.values()) < 1e-6 * (1.0 + p0.values().abs().maxCoeff()));
  std::filesystem::remove(path);

  Checkpoint wrong = podmlp_checkpoint(r.model);
  wrong.meta["kind"] = "recfno";
  CHECK_THROWS_AS(podmlp_from_checkpoint(wrong), IoError);
}
