#include "recfno/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

namespace recfno {

namespace {

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                     " differ");
  }
}

// Runs fn(0..n-1) with up to `jobs` concurrent workers; results keep their index order.
template <typename T, typename Fn>
std::vector<T> run_points(std::size_t n, int jobs, Fn fn) {
  std::vector<T> out(n);
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  std::size_t next = 0;
  while (next < n) {
    std::vector<std::future<T>> running;
    const std::size_t stop = std::min(n, next + static_cast<std::size_t>(jobs));
    for (std::size_t i = next; i < stop; ++i) running.push_back(std::async(std::launch::async, fn, i));
    for (std::size_t i = next; i < stop; ++i) out[i] = running[i - next].get();
    next = stop;
  }
  return out;
}

std::string join(const std::vector<Index>& v) {
  std::string s;
  for (Index x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}


ExperimentSpec for_dataset(ExperimentSpec spec, const FieldDataset& ds) {
  spec.model.n_y = ds.grid.n_y;
  spec.model.n_x = ds.grid.n_x;
  return spec;
}

ExperimentRow row_from(const TrainedModel& m, Index sensors, const MetricReport& r) {
  ExperimentRow row;
  row.method = to_string(m.method);
  row.sensors = sensors;
  row.mae = r.mae;
  row.max_ae = r.max_ae;
  return row;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  Rng r(seed ^ (a * 0x9e3779b97f4a7c15ULL) ^ (b * 0xc2b2ae3d27d4eb4fULL));
  return r();
}

}  // namespace

KeyValues dataset_keys(const FieldDataset& ds) {
  return {{"data.task", to_string(ds.task)},
          {"data.seed", std::to_string(ds.seed)},
          {"data.grid", std::to_string(ds.grid.n_y) + "x" + std::to_string(ds.grid.n_x)},
          {"data.count", std::to_string(ds.size())}};
}

double mae(const Tensor& u, const Tensor& u_p) {
  check_same_shape(u, u_p, "mae");
  return (u.values() - u_p.values()).abs().sum() / static_cast<double>(u.size());
}

double max_ae(const Tensor& u, const Tensor& u_p) {
  check_same_shape(u, u_p, "max_ae");
  return (u.values() - u_p.values()).abs().maxCoeff();
}

MetricReport evaluate(const Predictor& predict, const std::vector<ObservationSet>& inputs,
                      const std::vector<Tensor>& truths) {
  if (inputs.size() != truths.size() || inputs.empty()) throw ContractError("evaluate: need matching, non-empty inputs and truths");
  MetricReport r;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor pred = predict(inputs[k]);
    SampleMetrics s{mae(truths[k], pred), max_ae(truths[k], pred)};
    r.samples.push_back(s);
    r.mae += s.mae;
    r.max_ae += s.max_ae;
    r.worst_ae = std::max(r.worst_ae, s.max_ae);
  }
  r.mae /= static_cast<double>(inputs.size());
  r.max_ae /= static_cast<double>(inputs.size());
  return r;
}

SupervisedSet make_supervised(const FieldDataset& ds, const std::string& split, const std::vector<Point>& sensors) {
  const Split& s = ds.split(split);
  SupervisedSet out;
  for (Index k = s.start; k < s.start + s.count; ++k) {
    const Tensor& f = ds.fields[static_cast<std::size_t>(k)];
    out.inputs.push_back(observe(f, ds.grid, sensors));
    out.targets.push_back(f);
  }
  return out;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::Mask: return "mask";
    case Method::Voronoi: return "voronoi";
    case Method::Mlp: return "mlp";
    case Method::PodMlp: return "pod-mlp";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "mask") return Method::Mask;
  if (name == "voronoi") return Method::Voronoi;
  if (name == "mlp") return Method::Mlp;
  if (name == "pod-mlp" || name == "pod") return Method::PodMlp;
  throw ConfigError("unknown method '" + name + "' (expected mask, voronoi, mlp or pod-mlp)");
}

KeyValues ExperimentSpec::to_key_values() const {
  KeyValues kv = model.to_key_values();
  for (const auto& [k, v] : train.to_key_values()) kv[k] = v;
  kv["baseline.hidden"] = std::to_string(baseline.hidden);
  kv["baseline.rank"] = std::to_string(baseline.rank);
  kv["sensors.count"] = std::to_string(sensors);
  kv["sensors.placement"] = to_string(placement);
  kv["sensors.seed"] = std::to_string(sensor_seed);
  return kv;
}

std::string fingerprint(const KeyValues& kv) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [k, v] : kv) {
    for (char c : k + "=" + v + "\n") {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

Tensor TrainedModel::predict(const ObservationSet& obs, Index scale) const {
  if (pod) return pod->predict(obs, scale);
  if (recfno) return recfno->predict(obs, scale);
  throw ContractError("trained model is empty");
}

TrainedModel train_method(Method method, const SupervisedSet& train, const SupervisedSet& val, const ExperimentSpec& spec) {
  TrainedModel out;
  out.method = method;
  if (method == Method::PodMlp) {
    PodMlpResult r = train_podmlp(train, val, spec.train, spec.baseline);
    out.pod = std::make_shared<const PodMlp>(std::move(r.model));
    out.history = std::move(r.history);
    out.best_epoch = r.best_epoch;
    return out;
  }
  ModelConfig cfg = spec.model;
  cfg.embedding.kind = method == Method::Mask ? EmbeddingKind::Mask
                       : method == Method::Mlp ? EmbeddingKind::Mlp
                                               : EmbeddingKind::Voronoi;
  cfg.n_y = train.inputs.at(0).grid.n_y;
  cfg.n_x = train.inputs.at(0).grid.n_x;
  TrainResult r = train_recfno(cfg, train, val, spec.train);
  out.recfno = std::make_shared<const Model>(std::move(r.model));
  out.history = std::move(r.history);
  out.best_epoch = r.best_epoch;
  return out;
}

std::vector<Point> sensor_layout(const GridSpec& grid, Index count, const ExperimentSpec& spec) {
  Rng rng(spec.sensor_seed);
  return place_sensors(count, spec.placement, rng, grid);
}

void ExperimentReport::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "method,sensors,regime,snr_db,modes,scale,mae,max_ae,fingerprint\n";
  for (const ExperimentRow& r : rows) {
    out << r.method << ',' << r.sensors << ',' << r.regime << ',' << (std::isinf(r.snr_db) ? "inf" : exact(r.snr_db)) << ','
        << r.modes << ',' << r.scale << ',' << exact(r.mae) << ',' << exact(r.max_ae) << ',' << fingerprint << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

ExperimentReport sensor_sweep(const FieldDataset& ds, const std::vector<Index>& counts, const std::vector<Method>& methods,
                              const ExperimentSpec& spec_in) {
  if (counts.empty() || methods.empty()) throw ConfigError("sensor_sweep: need at least one count and one method");
  if (std::set<Index>(counts.begin(), counts.end()).size() != counts.size()) {
    throw ConfigError("sensor_sweep: duplicate sensor counts in " + join(counts));
  }
  for (Index c : counts)
    if (c < 1 || c > ds.grid.cells()) throw ConfigError("sensor_sweep: count " + std::to_string(c) + " is infeasible on the grid");
  const ExperimentSpec spec = for_dataset(spec_in, ds);

  struct Point2 {
    Index count;
    Method method;
  };
  std::vector<Point2> points;
  for (Index c : counts)
    for (Method m : methods) points.push_back({c, m});
  ExperimentReport report;
  report.rows = run_points<ExperimentRow>(points.size(), spec.jobs, [&](std::size_t i) {
    const auto sensors = sensor_layout(ds.grid, points[i].count, spec);
    const SupervisedSet tr = make_supervised(ds, "train", sensors), va = make_supervised(ds, "val", sensors),
                        te = make_supervised(ds, "test", sensors);
    const TrainedModel m = train_method(points[i].method, tr, va, spec);
    const MetricReport r = evaluate([&](const ObservationSet& o) { return m.predict(o); }, te.inputs, te.targets);
    ExperimentRow row = row_from(m, points[i].count, r);
    row.modes = points[i].method == Method::PodMlp ? 0 : spec.model.modes1;
    return row;
  });
  report.config = spec.to_key_values();
  for (const auto& [k, v] : dataset_keys(ds)) report.config[k] = v;
  report.config["driver"] = "sensor_sweep";
  report.config["sweep.counts"] = join(counts);
  report.fingerprint = fingerprint(report.config);
  return report;
}

NoiseRegime parse_regime(const std::string& name) {
  if (name == "both") return NoiseRegime::Both;
  if (name == "inputs-only") return NoiseRegime::InputsOnly;
  throw ConfigError("unknown noise regime '" + name + "' (expected both or inputs-only)");
}

std::string to_string(NoiseRegime r) { return r == NoiseRegime::Both ? "both" : "inputs-only"; }

namespace {

SupervisedSet noisy(const SupervisedSet& s, double snr, bool labels, Rng& rng) {
  SupervisedSet out = s;
  for (std::size_t k = 0; k < out.inputs.size(); ++k) {
    out.inputs[k].values = add_noise(s.inputs[k].values, snr, rng);
    if (labels) out.targets[k] = add_noise(s.targets[k], snr, rng);
  }
  return out;
}

}  // namespace

ExperimentReport noise_experiment(const FieldDataset& ds, const std::vector<double>& snrs, NoiseRegime regime,
                                  const std::vector<Method>& methods, const ExperimentSpec& spec_in) {
  if (snrs.empty() || methods.empty()) throw ConfigError("noise_experiment: need at least one SNR and one method");
  const ExperimentSpec spec = for_dataset(spec_in, ds);
  const auto sensors = sensor_layout(ds.grid, spec.sensors, spec);
  const SupervisedSet tr = make_supervised(ds, "train", sensors), va = make_supervised(ds, "val", sensors),
                      te = make_supervised(ds, "test", sensors);

  // Point 0 of each method is the clean run; the rest follow the SNR list.
  const std::size_t per = snrs.size() + 1;
  const bool both = regime == NoiseRegime::Both;
  std::vector<TrainedModel> clean;
  if (!both) {
    clean = run_points<TrainedModel>(methods.size(), spec.jobs,
                                     [&](std::size_t i) { return train_method(methods[i], tr, va, spec); });
  }
  ExperimentReport report;
  report.rows = run_points<ExperimentRow>(methods.size() * per, spec.jobs, [&](std::size_t i) {
    const std::size_t mi = i / per, si = i % per;
    const double snr = si == 0 ? std::numeric_limits<double>::infinity() : snrs[si - 1];
    Rng rng(mix_seed(spec.train.seed, 0x6e6f697365ULL, si));
    TrainedModel model;
    if (both) {
      model = si == 0 ? train_method(methods[mi], tr, va, spec)
                      : train_method(methods[mi], noisy(tr, snr, true, rng), noisy(va, snr, true, rng), spec);
    } else {
      model = clean[mi];
    }
    const SupervisedSet test_in = si == 0 ? te : noisy(te, snr, false, rng);
    const MetricReport r = evaluate([&](const ObservationSet& o) { return model.predict(o); }, test_in.inputs, te.targets);
    ExperimentRow row = row_from(model, spec.sensors, r);
    row.regime = si == 0 ? "clean" : to_string(regime);
    row.snr_db = snr;
    row.modes = methods[mi] == Method::PodMlp ? 0 : spec.model.modes1;
    return row;
  });
  report.config = spec.to_key_values();
  for (const auto& [k, v] : dataset_keys(ds)) report.config[k] = v;
  report.config["driver"] = "noise_experiment";
  report.config["noise.regime"] = to_string(regime);
  std::string list;
  for (double s : snrs) list += (list.empty() ? "" : ",") + exact(s);
  report.config["noise.snr_db"] = list;
  report.fingerprint = fingerprint(report.config);
  return report;
}

MetricReport superres_eval(const TrainedModel& model, const FieldDataset& ds, Index scale, const std::string& split,
                           const std::string& export_prefix) {
  if (scale < 1) throw ConfigError("superres: scale must be an integer >= 1");
  if (scale > 1 && ds.task == Task::Import) {
    throw ConfigError("superres: imported snapshots have no generator, so no fine-grid truth is available");
  }
  const std::vector<Point>& sensors = model.pod ? model.pod->sensors : model.recfno->sensors;
  const GridSpec fine = ds.grid.refined(scale);
  const Split& s = ds.split(split);
  std::vector<ObservationSet> inputs;
  std::vector<Tensor> truths;
  for (Index k = s.start; k < s.start + s.count; ++k) {
    Tensor truth = scale == 1 ? ds.fields[static_cast<std::size_t>(k)] : generate_field(ds.task, fine, ds.seed, k);
    inputs.push_back(observe(truth, fine, sensors));
    truths.push_back(std::move(truth));
  }
  MetricReport r = evaluate([&](const ObservationSet& o) { return model.predict(o, scale); }, inputs, truths);
  if (!export_prefix.empty()) export_fields(export_prefix, truths[0], model.predict(inputs[0], scale), inputs[0].cells);
  return r;
}

ExperimentReport mode_ablation(const FieldDataset& ds, const std::vector<Index>& modes, Method method,
                               const ExperimentSpec& spec_in) {
  if (modes.empty()) throw ConfigError("mode_ablation: empty mode list");
  if (method == Method::PodMlp) throw ConfigError("mode_ablation: POD-MLP has no Fourier modes");
  for (Index k : modes) check_mode_limits(ds.grid.n_y, ds.grid.n_x, k, k);
  const ExperimentSpec spec = for_dataset(spec_in, ds);
  const auto sensors = sensor_layout(ds.grid, spec.sensors, spec);
  const SupervisedSet tr = make_supervised(ds, "train", sensors), va = make_supervised(ds, "val", sensors),
                      te = make_supervised(ds, "test", sensors);
  ExperimentReport report;
  report.rows = run_points<ExperimentRow>(modes.size(), spec.jobs, [&](std::size_t i) {
    ExperimentSpec local = spec;
    local.model.modes1 = local.model.modes2 = modes[i];
    const TrainedModel m = train_method(method, tr, va, local);
    const MetricReport r = evaluate([&](const ObservationSet& o) { return m.predict(o); }, te.inputs, te.targets);
    ExperimentRow row = row_from(m, spec.sensors, r);
    row.modes = modes[i];
    return row;
  });
  report.config = spec.to_key_values();
  for (const auto& [k, v] : dataset_keys(ds)) report.config[k] = v;
  report.config["driver"] = "mode_ablation";
  report.config["ablation.modes"] = join(modes);
  report.config["ablation.method"] = to_string(method);
  report.fingerprint = fingerprint(report.config);
  return report;
}

// ---- Export ----

void write_csv_grid(const std::string& path, const Tensor& field) {
  if (field.rank() != 2) throw ShapeError("write_csv_grid: expected an [n_y, n_x] field");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (Index i = 0; i < field.dim(0); ++i) {
    for (Index j = 0; j < field.dim(1); ++j) out << (j ? "," : "") << exact(field.values()[i * field.dim(1) + j]);
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

Tensor read_csv_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<double> values;
  Index rows = 0, cols = -1;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Index c = 0;
    for (std::string cell; std::getline(ls, cell, ',');) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::logic_error&) {
        throw IoError(path + ": bad number '" + cell + "'");
      }
      ++c;
    }
    if (cols >= 0 && c != cols) throw ShapeError(path + ": ragged rows");
    cols = c;
    ++rows;
  }
  if (rows == 0) throw IoError(path + ": empty grid");
  return Tensor({rows, cols}, Eigen::Map<Tensor::Array>(values.data(), static_cast<Index>(values.size())));
}

namespace {

double unit(double v, double lo, double hi) { return hi > lo ? std::clamp((v - lo) / (hi - lo), 0.0, 1.0) : 0.0; }

// Piecewise-linear dark-blue -> cyan -> yellow -> red map.
void colour(double t, unsigned char rgb[3]) {
  static const double stops[5][3] = {{0.05, 0.05, 0.35}, {0.0, 0.55, 0.85}, {0.2, 0.8, 0.5}, {0.95, 0.85, 0.1}, {0.75, 0.05, 0.05}};
  const double x = t * 4.0;
  const int k = std::min(3, static_cast<int>(x));
  const double f = x - k;
  for (int c = 0; c < 3; ++c) rgb[c] = static_cast<unsigned char>(std::lround(255.0 * ((1 - f) * stops[k][c] + f * stops[k + 1][c])));
}

}  // namespace

void write_pgm(const std::string& path, const Tensor& field, double lo, double hi) {
  if (field.rank() != 2) throw ShapeError("write_pgm: expected an [n_y, n_x] field");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const Index h = field.dim(0), w = field.dim(1);
  out << "P5\n" << w << ' ' << h << "\n255\n";
  for (Index i = h - 1; i >= 0; --i)
    for (Index j = 0; j < w; ++j) out.put(static_cast<char>(std::lround(255.0 * unit(field.values()[i * w + j], lo, hi))));
  if (!out) throw IoError("write failed for " + path);
}

void write_ppm(const std::string& path, const Tensor& field, double lo, double hi, const std::vector<Cell>& marks) {
  if (field.rank() != 2) throw ShapeError("write_ppm: expected an [n_y, n_x] field");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const Index h = field.dim(0), w = field.dim(1);
  std::vector<bool> marked(static_cast<std::size_t>(h * w), false);
  for (const Cell& c : marks)
    if (c.i >= 0 && c.i < h && c.j >= 0 && c.j < w) marked[static_cast<std::size_t>(c.i * w + c.j)] = true;
  out << "P6\n" << w << ' ' << h << "\n255\n";
  for (Index i = h - 1; i >= 0; --i) {
    for (Index j = 0; j < w; ++j) {
      unsigned char rgb[3] = {255, 255, 255};
      if (!marked[static_cast<std::size_t>(i * w + j)]) colour(unit(field.values()[i * w + j], lo, hi), rgb);
      out.write(reinterpret_cast<const char*>(rgb), 3);
    }
  }
  if (!out) throw IoError("write failed for " + path);
}

void export_fields(const std::string& prefix, const Tensor& truth, const Tensor& pred, const std::vector<Cell>& sensors) {
  check_same_shape(truth, pred, "export_fields");
  const double lo = std::min(truth.values().minCoeff(), pred.values().minCoeff());
  const double hi = std::max(truth.values().maxCoeff(), pred.values().maxCoeff());
  const Tensor err = Tensor::wrap(truth.shape(), (truth.values() - pred.values()).abs());
  write_ppm(prefix + "_truth.ppm", truth, lo, hi, sensors);
  write_ppm(prefix + "_pred.ppm", pred, lo, hi, sensors);
  write_pgm(prefix + "_error.pgm", err, 0.0, err.values().maxCoeff());
  write_csv_grid(prefix + "_truth.csv", truth);
  write_csv_grid(prefix + "_pred.csv", pred);
  write_csv_grid(prefix + "_error.csv", err);
}

}  // namespace recfno
