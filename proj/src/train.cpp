#include "recfno/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "recfno/checkpoint.hpp"
#include "recfno/ops.hpp"

namespace recfno {

namespace {

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const KeyValues& kv, const std::string& key, T fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t used = 0;
    T v;
    if constexpr (std::is_floating_point_v<T>) {
      v = std::stod(it->second, &used);
    } else if constexpr (std::is_unsigned_v<T>) {
      v = std::stoull(it->second, &used);
    } else {
      v = static_cast<T>(std::stoll(it->second, &used));
    }
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::logic_error&) {
    throw ConfigError("train config: bad value for '" + key + "': '" + it->second + "'");
  }
}

// Real view of a parameter's values or gradient (complex entries as interleaved re/im).
template <typename Array>
Eigen::Map<Eigen::ArrayXd> real_view(Array& a) {
  using S = typename Array::Scalar;
  constexpr Index f = std::is_same_v<S, Complex> ? 2 : 1;
  return Eigen::Map<Eigen::ArrayXd>(reinterpret_cast<double*>(a.data()), a.size() * f);
}

}  // namespace

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("l1_loss: shapes " + shape_string(pred.shape()) + " and " + shape_string(target.shape()) + " differ");
  }
  return mean(abs(sub(pred, target)));
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (!(lr0 >= 0.0) || !std::isfinite(lr0)) throw ConfigError("train: learning rate must be finite and >= 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("train: decay factor must lie in (0, 1]");
}

KeyValues TrainConfig::to_key_values() const {
  return {{"train.epochs", std::to_string(epochs)}, {"train.batch", std::to_string(batch_size)},
          {"train.lr0", exact(lr0)},               {"train.gamma", exact(gamma)},
          {"train.seed", std::to_string(seed)}};
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  TrainConfig c;
  c.epochs = parse_number<Index>(kv, "train.epochs", c.epochs);
  c.batch_size = parse_number<Index>(kv, "train.batch", c.batch_size);
  c.lr0 = parse_number<double>(kv, "train.lr0", c.lr0);
  c.gamma = parse_number<double>(kv, "train.gamma", c.gamma);
  c.seed = parse_number<std::uint64_t>(kv, "train.seed", c.seed);
  c.validate();
  return c;
}

double lr_at(Index epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw ContractError("lr_at: epoch must be >= 0");
  return cfg.lr0 * std::pow(cfg.gamma, static_cast<double>(epoch));
}

Adam::Adam(ParameterList params, Options options) : params_(std::move(params)), opt_(options) {
  for (const NamedParameter& p : params_) {
    const Index n = std::visit([](auto t) { return real_view(t.values_mut()).size(); }, p.value);
    m_.push_back(Eigen::ArrayXd::Zero(n));
    v_.push_back(Eigen::ArrayXd::Zero(n));
  }
}

void Adam::zero_grad() const {
  for (const NamedParameter& p : params_) std::visit([](const auto& t) { t.zero_grad(); }, p.value);
}

void Adam::step(double lr) {
  // Screen every gradient first so a failure leaves parameters and moments untouched.
  for (const NamedParameter& p : params_) {
    const bool finite = std::visit(
        [](auto t) { return !t.has_grad() || real_view(t.grad_mut()).allFinite(); }, p.value);
    if (!finite) {
      throw NumericError("adam: non-finite gradient in parameter '" + p.name + "' at step " + std::to_string(steps_ + 1));
    }
  }
  ++steps_;
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    std::visit(
        [&](auto t) {
          auto x = real_view(t.values_mut());
          Eigen::ArrayXd& m = m_[k];
          Eigen::ArrayXd& v = v_[k];
          if (t.has_grad()) {
            auto g = real_view(t.grad_mut());
            m = opt_.beta1 * m + (1.0 - opt_.beta1) * g;
            v = opt_.beta2 * v + (1.0 - opt_.beta2) * g.square();
          } else {
            m *= opt_.beta1;
            v *= opt_.beta2;
          }
          x -= lr * (m / c1) / ((v / c2).sqrt() + opt_.eps);
          if (opt_.round_to_float) x = x.template cast<float>().template cast<double>();
        },
        params_[k].value);
  }
}

std::vector<Index> epoch_order(Index n, Rng& rng) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  for (Index i = n - 1; i > 0; --i) std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(rng.uniform_int(0, i))]);
  return order;
}

void SupervisedSet::validate() const {
  if (inputs.size() != targets.size()) throw ContractError("dataset: inputs and targets differ in length");
  if (inputs.empty()) throw ContractError("dataset: empty split");
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    if (targets[k].shape() != Shape{inputs[k].grid.n_y, inputs[k].grid.n_x}) {
      throw ShapeError("dataset: target " + std::to_string(k) + " does not match its observation grid");
    }
    if (inputs[k].positions != inputs[0].positions) throw ContractError("dataset: sensor layout differs between samples");
  }
}

Normalizer fit_normalizer(const SupervisedSet& train) {
  train.validate();
  double s = 0.0, s2 = 0.0, n = 0.0;
  for (const ObservationSet& o : train.inputs)
    for (double v : o.values) {
      s += v;
      n += 1.0;
    }
  Normalizer norm;
  norm.input_mean = s / n;
  for (const ObservationSet& o : train.inputs)
    for (double v : o.values) s2 += (v - norm.input_mean) * (v - norm.input_mean);
  norm.input_std = std::sqrt(s2 / n);

  s = 0.0, n = 0.0;
  for (const Tensor& t : train.targets) {
    s += t.values().sum();
    n += static_cast<double>(t.size());
  }
  norm.target_mean = s / n;
  s2 = 0.0;
  for (const Tensor& t : train.targets) s2 += (t.values() - norm.target_mean).square().sum();
  norm.target_std = std::sqrt(s2 / n);
  // Constant data keeps a unit scale rather than dividing by zero.
  if (!(norm.input_std > 1e-12 * std::max(1.0, std::abs(norm.input_mean)))) norm.input_std = 1.0;
  if (!(norm.target_std > 1e-12 * std::max(1.0, std::abs(norm.target_mean)))) norm.target_std = 1.0;
  return norm;
}

namespace {

struct Prepared {
  std::vector<Tensor> features;
  std::vector<Tensor> targets;  // normalised
};

Prepared prepare(const SupervisedSet& set, const ModelConfig& cfg, const Normalizer& norm) {
  Prepared p;
  NoGradGuard guard;
  for (Index k = 0; k < set.size(); ++k) {
    const ObservationSet obs = normalize_observations(set.inputs[static_cast<std::size_t>(k)], norm);
    p.features.push_back(observation_features(obs, cfg.embedding.kind, obs.grid));
    const Tensor& t = set.targets[static_cast<std::size_t>(k)];
    p.targets.push_back(Tensor::wrap(t.shape(), (t.values() - norm.target_mean) / norm.target_std));
  }
  return p;
}

void save_atomically(const std::string& path, const Model& model) {
  const std::string tmp = path + ".tmp";
  save_model(tmp, model);
  std::filesystem::rename(tmp, path);
}

Model snapshot(const Model& m) {
  Model copy = m;
  Rng rng(0);
  copy.params = init_model(m.config, rng);
  const ParameterList dst = copy.params.parameters(), src = m.params.parameters();
  for (std::size_t k = 0; k < dst.size(); ++k) {
    std::visit([&](auto d) { d.values_mut() = std::get<decltype(d)>(src[k].value).values(); }, dst[k].value);
  }
  return copy;
}

}  // namespace

TrainResult train_recfno(const ModelConfig& cfg_in, const SupervisedSet& train, const SupervisedSet& val,
                         const TrainConfig& tc) {
  tc.validate();
  train.validate();
  val.validate();
  ModelConfig cfg = cfg_in;
  cfg.embedding.n_sensors = train.inputs[0].size();
  cfg.validate();
  const GridSpec& grid = train.inputs[0].grid;
  if (grid.n_y != cfg.n_y || grid.n_x != cfg.n_x) throw ShapeError("train: data grid does not match the model resolution");
  if (val.inputs[0].positions != train.inputs[0].positions) throw ContractError("train: validation sensor layout differs");

  Model model;
  model.config = cfg;
  model.norm = fit_normalizer(train);
  model.extent = grid.extent;
  model.sensors = train.inputs[0].positions;
  Rng init_rng(tc.seed);
  model.params = init_model(cfg, init_rng);
  Rng order_rng(tc.seed ^ 0x5851f42d4c957f2dULL);

  const Prepared tr = prepare(train, cfg, model.norm);
  const Prepared va = prepare(val, cfg, model.norm);
  const ParameterList params = model.params.parameters();
  Adam adam(params, Adam::Options{0.9, 0.999, 1e-8, true});

  TrainResult result;
  auto validate_epoch = [&](EpochRecord& rec) {
    NoGradGuard guard;
    double l1 = 0.0, mae = 0.0, maxae = 0.0;
    for (std::size_t k = 0; k < va.features.size(); ++k) {
      const Tensor pred = forward_features(va.features[k], cfg, model.params, cfg.n_y, cfg.n_x);
      l1 += (pred.values() - va.targets[k].values()).abs().mean();
      const Tensor::Array err = (pred.values() * model.norm.target_std + model.norm.target_mean - val.targets[k].values()).abs();
      mae += err.mean();
      maxae += err.maxCoeff();
    }
    const double n = static_cast<double>(va.features.size());
    rec.val_l1 = l1 / n;
    rec.val_mae = mae / n;
    rec.val_maxae = maxae / n;
  };
  auto consider = [&](const EpochRecord& rec) {
    if (result.best_epoch < 0 || rec.val_mae < result.best_val_mae) {
      result.best_epoch = rec.epoch;
      result.best_val_mae = rec.val_mae;
      result.model = snapshot(model);
      if (!tc.checkpoint_path.empty()) save_atomically(tc.checkpoint_path, result.model);
    }
  };

  if (tc.epochs == 0) {
    EpochRecord rec;
    rec.lr = tc.lr0;
    validate_epoch(rec);
    consider(rec);
    return result;
  }

  const Index n = train.size();
  for (Index epoch = 0; epoch < tc.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr_at(epoch, tc);
    const std::vector<Index> order = epoch_order(n, order_rng);
    double total = 0.0;
    for (Index start = 0; start < n; start += tc.batch_size) {
      const Index stop = std::min(n, start + tc.batch_size);
      adam.zero_grad();
      for (Index b = start; b < stop; ++b) {
        const std::size_t k = static_cast<std::size_t>(order[static_cast<std::size_t>(b)]);
        const Tensor loss = l1_loss(forward_features(tr.features[k], cfg, model.params, cfg.n_y, cfg.n_x), tr.targets[k]);
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                             (tc.checkpoint_path.empty() ? "" : "; last good model kept in " + tc.checkpoint_path));
        }
        total += value;
        backward(scale(loss, 1.0 / static_cast<double>(stop - start)));
      }
      adam.step(rec.lr);
    }
    rec.train_l1 = total / static_cast<double>(n);
    validate_epoch(rec);
    result.history.push_back(rec);
    consider(rec);
  }
  return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "epoch,lr,train_l1,val_l1,val_mae,val_maxae\n";
  char buf[256];
  for (const EpochRecord& r : history) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g\n", static_cast<long long>(r.epoch), r.lr,
                  r.train_l1, r.val_l1, r.val_mae, r.val_maxae);
    out << buf;
  }
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace recfno
