#include "recfno/baseline.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "recfno/ops.hpp"

namespace recfno {

namespace {

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Tensor uniform_param(Shape shape, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape));
  for (Index i = 0; i < t.size(); ++i) t.values_mut()[i] = static_cast<float>(rng.uniform(-bound, bound));
  t.set_requires_grad(true);
  return t;
}

Eigen::Map<const Eigen::VectorXd> flat(const Tensor& t) {
  return Eigen::Map<const Eigen::VectorXd>(t.values().data(), t.size());
}

// Normalised sensor values of a batch as [B, 1, n].
Tensor batch_inputs(const std::vector<const ObservationSet*>& obs, double mean, double sd) {
  const Index n = obs[0]->size();
  Tensor::Array v(static_cast<Index>(obs.size()) * n);
  for (std::size_t b = 0; b < obs.size(); ++b)
    for (Index k = 0; k < n; ++k) v[static_cast<Index>(b) * n + k] = (obs[b]->values[static_cast<std::size_t>(k)] - mean) / sd;
  return Tensor::wrap({static_cast<Index>(obs.size()), 1, n}, std::move(v));
}

Tensor mlp_forward(const PodMlp& m, const Tensor& x) {
  const Tensor h1 = gelu(conv1x1(x, m.w1, m.b1));
  const Tensor h2 = gelu(conv1x1(h1, m.w2, m.b2));
  return conv1x1(h2, m.w3, m.b3);
}

double parse_double(const KeyValues& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw IoError("pod checkpoint: missing key '" + key + "'");
  return std::stod(it->second);
}

}  // namespace

Tensor PodBasis::mode(Index i) const {
  if (i < 0 || i >= rank()) throw ContractError("pod: mode index out of range");
  return Tensor({grid.n_y, grid.n_x}, Tensor::Array(modes.row(i).transpose().array()));
}

Index pod_energy_rank(const Eigen::VectorXd& singular, double energy, Index cap) {
  const double total = singular.squaredNorm();
  if (!(total > 0.0)) return 0;
  double acc = 0.0;
  Index r = 0;
  while (r < singular.size() && acc < energy * total) {
    acc += singular[r] * singular[r];
    ++r;
  }
  return std::min(r, cap);
}

PodBasis pod_fit(const std::vector<Tensor>& snapshots, const GridSpec& grid, Index r) {
  const Index m = static_cast<Index>(snapshots.size());
  const Index cells = grid.cells();
  if (m < 1) throw ConfigError("pod: need at least one snapshot");
  if (r > std::min(m, cells)) {
    throw ConfigError("pod: rank " + std::to_string(r) + " exceeds min(snapshots, cells) = " +
                      std::to_string(std::min(m, cells)));
  }
  RowMatrix X(m, cells);
  for (Index k = 0; k < m; ++k) {
    const Tensor& s = snapshots[static_cast<std::size_t>(k)];
    if (s.shape() != Shape{grid.n_y, grid.n_x}) throw ShapeError("pod: snapshot shape does not match grid");
    X.row(k) = flat(s).transpose();
  }
  PodBasis basis;
  basis.grid = grid;
  const Eigen::RowVectorXd mean = X.colwise().mean();
  basis.mean = Tensor({grid.n_y, grid.n_x}, Tensor::Array(mean.transpose().array()));
  X.rowwise() -= mean;

  const Eigen::MatrixXd gram = X * X.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::VectorXd lambda = eig.eigenvalues().reverse();
  const Eigen::MatrixXd vecs = eig.eigenvectors().rowwise().reverse();
  const double floor = 64.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(m) *
                       std::max(0.0, lambda.size() ? lambda[0] : 0.0);
  Eigen::VectorXd sigma(m);
  for (Index i = 0; i < m; ++i) sigma[i] = lambda[i] > floor ? std::sqrt(lambda[i]) : 0.0;

  if (r < 0) r = pod_energy_rank(sigma, 0.99, std::min<Index>(64, m));
  basis.singular = sigma.head(r);
  basis.modes = RowMatrix::Zero(r, cells);
  for (Index i = 0; i < r; ++i) {
    if (sigma[i] == 0.0) continue;
    basis.modes.row(i) = (X.transpose() * vecs.col(i)).transpose() / sigma[i];
  }
  return basis;
}

Eigen::VectorXd pod_project(const PodBasis& basis, const Tensor& field) {
  if (field.shape() != Shape{basis.grid.n_y, basis.grid.n_x}) throw ShapeError("pod_project: field shape does not match basis");
  return basis.modes * (flat(field) - flat(basis.mean));
}

Tensor pod_reconstruct(const PodBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& c) {
  if (c.size() != basis.rank()) {
    throw ShapeError("pod_reconstruct: " + std::to_string(c.size()) + " coefficients for rank " + std::to_string(basis.rank()));
  }
  Eigen::VectorXd u = flat(basis.mean);
  if (basis.rank() > 0) u += basis.modes.transpose() * c;
  return Tensor({basis.grid.n_y, basis.grid.n_x}, Tensor::Array(u.array()));
}

ParameterList PodMlp::parameters() const {
  if (basis.rank() == 0) return {};
  return {{"mlp.w1", w1}, {"mlp.b1", b1}, {"mlp.w2", w2}, {"mlp.b2", b2}, {"mlp.w3", w3}, {"mlp.b3", b3}};
}

Eigen::VectorXd PodMlp::predict_coefficients(const ObservationSet& obs) const {
  if (obs.size() != static_cast<Index>(sensors.size())) throw ShapeError("pod-mlp: wrong number of observations");
  if (basis.rank() == 0) return Eigen::VectorXd();
  NoGradGuard guard;
  const Tensor y = mlp_forward(*this, batch_inputs({&obs}, input_mean, input_std));
  return Eigen::Map<const Eigen::VectorXd>(y.values().data(), y.size()) * coeff_scale;
}

Tensor PodMlp::predict(const ObservationSet& obs, Index scale) const {
  if (scale != 1) {
    throw ContractError("pod-mlp: POD modes are tied to the training grid; super-resolution (scale " +
                        std::to_string(scale) + ") is not available");
  }
  if (!(obs.grid == basis.grid)) throw ContractError("pod-mlp: observations are not on the training grid");
  return pod_reconstruct(basis, predict_coefficients(obs));
}

PodMlpResult train_podmlp(const SupervisedSet& train, const SupervisedSet& val, const TrainConfig& tc,
                          const PodMlpConfig& pc) {
  tc.validate();
  train.validate();
  val.validate();
  if (pc.hidden < 1) throw ConfigError("pod-mlp: hidden width must be >= 1");
  const GridSpec grid = train.inputs[0].grid;

  PodMlpResult result;
  PodMlp& best = result.model;
  PodMlp model;
  model.basis = pod_fit(train.targets, grid, pc.rank);
  model.sensors = train.inputs[0].positions;
  model.hidden = pc.hidden;
  const Normalizer stats = fit_normalizer(train);
  model.input_mean = stats.input_mean;
  model.input_std = stats.input_std;
  const Index r = model.basis.rank();
  const Index n = train.inputs[0].size();

  // Scaled target coefficients.
  std::vector<Eigen::VectorXd> coeffs;
  double ss = 0.0;
  for (const Tensor& t : train.targets) {
    coeffs.push_back(pod_project(model.basis, t));
    ss += coeffs.back().squaredNorm();
  }
  const double rms = r > 0 ? std::sqrt(ss / static_cast<double>(r * train.size())) : 0.0;
  model.coeff_scale = rms > 0.0 ? rms : 1.0;

  auto evaluate = [&](const PodMlp& m, EpochRecord& rec) {
    double mae = 0.0, maxae = 0.0, l1 = 0.0;
    for (Index k = 0; k < val.size(); ++k) {
      const ObservationSet& o = val.inputs[static_cast<std::size_t>(k)];
      const Eigen::VectorXd c = m.predict_coefficients(o);
      const Tensor& target = val.targets[static_cast<std::size_t>(k)];
      if (r > 0) l1 += ((c - pod_project(m.basis, target)) / m.coeff_scale).cwiseAbs().mean();
      const Tensor::Array err = (pod_reconstruct(m.basis, c).values() - target.values()).abs();
      mae += err.mean();
      maxae += err.maxCoeff();
    }
    const double nv = static_cast<double>(val.size());
    rec.val_l1 = l1 / nv;
    rec.val_mae = mae / nv;
    rec.val_maxae = maxae / nv;
  };

  if (r == 0) {
    // Nothing varies: the mean field is the prediction.
    best = model;
    EpochRecord rec;
    evaluate(best, rec);
    result.best_val_mae = rec.val_mae;
    result.best_epoch = 0;
    return result;
  }

  Rng init_rng(tc.seed);
  model.w1 = uniform_param({n, pc.hidden}, n, init_rng);
  model.b1 = uniform_param({pc.hidden}, n, init_rng);
  model.w2 = uniform_param({pc.hidden, pc.hidden}, pc.hidden, init_rng);
  model.b2 = uniform_param({pc.hidden}, pc.hidden, init_rng);
  model.w3 = uniform_param({pc.hidden, r}, pc.hidden, init_rng);
  model.b3 = uniform_param({r}, pc.hidden, init_rng);
  Rng order_rng(tc.seed ^ 0x5851f42d4c957f2dULL);
  Adam adam(model.parameters(), Adam::Options{0.9, 0.999, 1e-8, true});

  auto keep = [&](const EpochRecord& rec) {
    if (result.best_epoch < 0 || rec.val_mae < result.best_val_mae) {
      result.best_epoch = rec.epoch;
      result.best_val_mae = rec.val_mae;
      best = model;
      best.w1 = model.w1.clone(), best.b1 = model.b1.clone(), best.w2 = model.w2.clone();
      best.b2 = model.b2.clone(), best.w3 = model.w3.clone(), best.b3 = model.b3.clone();
    }
  };
  if (tc.epochs == 0) {
    EpochRecord rec;
    rec.lr = tc.lr0;
    evaluate(model, rec);
    keep(rec);
    return result;
  }

  const Index count = train.size();
  for (Index epoch = 0; epoch < tc.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr_at(epoch, tc);
    const std::vector<Index> order = epoch_order(count, order_rng);
    double total = 0.0;
    for (Index start = 0; start < count; start += tc.batch_size) {
      const Index stop = std::min(count, start + tc.batch_size);
      std::vector<const ObservationSet*> batch;
      Tensor::Array target((stop - start) * r);
      for (Index b = start; b < stop; ++b) {
        const std::size_t k = static_cast<std::size_t>(order[static_cast<std::size_t>(b)]);
        batch.push_back(&train.inputs[k]);
        target.segment((b - start) * r, r) = coeffs[k].array() / model.coeff_scale;
      }
      adam.zero_grad();
      const Tensor pred = mlp_forward(model, batch_inputs(batch, model.input_mean, model.input_std));
      const Tensor loss = l1_loss(pred, Tensor::wrap(pred.shape(), std::move(target)));
      const double value = loss.item();
      if (!std::isfinite(value)) throw NumericError("pod-mlp: non-finite loss at epoch " + std::to_string(epoch + 1));
      total += value * static_cast<double>(stop - start);
      backward(loss);
      adam.step(rec.lr);
    }
    rec.train_l1 = total / static_cast<double>(count);
    evaluate(model, rec);
    result.history.push_back(rec);
    keep(rec);
  }
  return result;
}

Checkpoint podmlp_checkpoint(const PodMlp& m) {
  Checkpoint ck;
  ck.meta["kind"] = "pod-mlp";
  ck.meta["pod.rank"] = std::to_string(m.basis.rank());
  ck.meta["pod.hidden"] = std::to_string(m.hidden);
  ck.meta["pod.input_mean"] = exact(m.input_mean);
  ck.meta["pod.input_std"] = exact(m.input_std);
  ck.meta["pod.coeff_scale"] = exact(m.coeff_scale);
  ck.meta["grid"] = std::to_string(m.basis.grid.n_y) + "x" + std::to_string(m.basis.grid.n_x);
  const Extent& e = m.basis.grid.extent;
  ck.meta["grid.extent"] = exact(e.x_min) + " " + exact(e.x_max) + " " + exact(e.y_min) + " " + exact(e.y_max);
  ck.meta["sensors"] = format_points(m.sensors);
  ck.tensors.push_back({"pod.mean", m.basis.mean});
  const Index r = m.basis.rank();
  if (r > 0) {
    ck.tensors.push_back({"pod.modes", Tensor({r, m.basis.grid.n_y, m.basis.grid.n_x},
                                              Tensor::Array(Eigen::Map<const Eigen::ArrayXd>(m.basis.modes.data(), m.basis.modes.size())))});
    ck.tensors.push_back({"pod.singular", Tensor({r}, Tensor::Array(m.basis.singular.array()))});
  }
  for (const NamedParameter& p : m.parameters()) ck.tensors.push_back(p);
  return ck;
}

PodMlp podmlp_from_checkpoint(const Checkpoint& ck) {
  auto kind = ck.meta.find("kind");
  if (kind == ck.meta.end() || kind->second != "pod-mlp") throw IoError("checkpoint: not a POD-MLP model");
  PodMlp m;
  const Index r = static_cast<Index>(parse_double(ck.meta, "pod.rank"));
  m.hidden = static_cast<Index>(parse_double(ck.meta, "pod.hidden"));
  m.input_mean = parse_double(ck.meta, "pod.input_mean");
  m.input_std = parse_double(ck.meta, "pod.input_std");
  m.coeff_scale = parse_double(ck.meta, "pod.coeff_scale");
  const std::string& g = ck.meta.at("grid");
  const auto x = g.find('x');
  Extent e;
  std::istringstream es(ck.meta.at("grid.extent"));
  es >> e.x_min >> e.x_max >> e.y_min >> e.y_max;
  m.basis.grid = GridSpec(std::stoll(g.substr(0, x)), std::stoll(g.substr(x + 1)), e);
  m.sensors = parse_points(ck.meta.at("sensors"));
  m.basis.mean = std::get<Tensor>(ck.find("pod.mean"));
  if (r > 0) {
    const Tensor& modes = std::get<Tensor>(ck.find("pod.modes"));
    m.basis.modes = Eigen::Map<const RowMatrix>(modes.values().data(), r, m.basis.grid.cells());
    m.basis.singular = std::get<Tensor>(ck.find("pod.singular")).values().matrix();
    m.w1 = std::get<Tensor>(ck.find("mlp.w1"));
    m.b1 = std::get<Tensor>(ck.find("mlp.b1"));
    m.w2 = std::get<Tensor>(ck.find("mlp.w2"));
    m.b2 = std::get<Tensor>(ck.find("mlp.b2"));
    m.w3 = std::get<Tensor>(ck.find("mlp.w3"));
    m.b3 = std::get<Tensor>(ck.find("mlp.b3"));
    const Index n = static_cast<Index>(m.sensors.size());
    if (m.w1.shape() != Shape{n, m.hidden} || m.w3.shape() != Shape{m.hidden, r}) {
      throw IoError("pod checkpoint: MLP shapes do not match rank/hidden/sensors");
    }
  } else {
    m.basis.modes = RowMatrix(0, m.basis.grid.cells());
    m.basis.singular = Eigen::VectorXd();
  }
  return m;
}

}  // namespace recfno
