#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "recfno/baseline.hpp"
#include "recfno/data.hpp"
#include "recfno/train.hpp"

namespace recfno {

/// Sum of absolute errors over the point count.
double mae(const Tensor& u, const Tensor& u_p);
/// Largest absolute error.
double max_ae(const Tensor& u, const Tensor& u_p);

struct SampleMetrics {
  double mae = 0.0;
  double max_ae = 0.0;
};

struct MetricReport {
  double mae = 0.0;     ///< mean over samples
  double max_ae = 0.0;  ///< mean over samples of the per-sample maximum
  double worst_ae = 0.0;  ///< maximum over samples
  std::vector<SampleMetrics> samples;
  std::string fingerprint;
};

using Predictor = std::function<Tensor(const ObservationSet&)>;

MetricReport evaluate(const Predictor& predict, const std::vector<ObservationSet>& inputs,
                      const std::vector<Tensor>& truths);

/// Observations of `split` at `sensors` paired with the clean fields.
SupervisedSet make_supervised(const FieldDataset& ds, const std::string& split, const std::vector<Point>& sensors);

enum class Method { Mask, Voronoi, Mlp, PodMlp };

std::string to_string(Method m);
Method parse_method(const std::string& name);

/// Everything an experiment driver needs besides the data and the swept variable.
struct ExperimentSpec {
  ModelConfig model;  ///< n_y, n_x are taken from the dataset
  TrainConfig train;
  PodMlpConfig baseline;
  Index sensors = 25;
  Placement placement = Placement::Uniform;
  std::uint64_t sensor_seed = 0;
  int jobs = 1;  ///< independent sweep points evaluated concurrently

  KeyValues to_key_values() const;
};

/// Identity of a dataset for fingerprints: task, generator seed, grid and count.
KeyValues dataset_keys(const FieldDataset& ds);

/// FNV-1a over the canonical "key=value" lines.
std::string fingerprint(const KeyValues& kv);

/// A trained reconstruction model of any kind, in physical units.
struct TrainedModel {
  Method method = Method::Voronoi;
  std::shared_ptr<const Model> recfno;
  std::shared_ptr<const PodMlp> pod;
  std::vector<EpochRecord> history;
  Index best_epoch = -1;

  Tensor predict(const ObservationSet& obs, Index scale = 1) const;
};

TrainedModel train_method(Method method, const SupervisedSet& train, const SupervisedSet& val, const ExperimentSpec& spec);

std::vector<Point> sensor_layout(const GridSpec& grid, Index count, const ExperimentSpec& spec);

struct ExperimentRow {
  std::string method;
  Index sensors = 0;
  std::string regime = "clean";
  double snr_db = std::numeric_limits<double>::infinity();
  Index modes = 0;
  Index scale = 1;
  double mae = 0.0;
  double max_ae = 0.0;
};

struct ExperimentReport {
  std::vector<ExperimentRow> rows;
  KeyValues config;
  std::string fingerprint;

  void write_csv(const std::string& path) const;
};

/// Trains every method at every sensor count and reports test metrics. Throws ConfigError on
/// duplicate or infeasible counts.
ExperimentReport sensor_sweep(const FieldDataset& ds, const std::vector<Index>& counts, const std::vector<Method>& methods,
                              const ExperimentSpec& spec);

enum class NoiseRegime { Both, InputsOnly };
NoiseRegime parse_regime(const std::string& name);
std::string to_string(NoiseRegime r);

/// Both: training inputs and labels and the test inputs are noisy; inputs-only: clean training,
/// noisy test inputs. Metrics are against the clean test fields. A clean row is always included.
ExperimentReport noise_experiment(const FieldDataset& ds, const std::vector<double>& snrs, NoiseRegime regime,
                                  const std::vector<Method>& methods, const ExperimentSpec& spec);

/// Test metrics of `model` at `scale` times its training resolution against truth regenerated on
/// the fine grid by the dataset's generator. Throws ConfigError when the dataset has no generator.
/// Writes field/error rasters of the first test sample under `export_prefix` when non-empty.
MetricReport superres_eval(const TrainedModel& model, const FieldDataset& ds, Index scale,
                           const std::string& split = "test", const std::string& export_prefix = "");

/// Trains one RecFNO per mode count (k1 = k2 = k). Throws ModeError before training when any k
/// exceeds the grid limits.
ExperimentReport mode_ablation(const FieldDataset& ds, const std::vector<Index>& modes, Method method,
                               const ExperimentSpec& spec);

// ---- Export ----

void write_csv_grid(const std::string& path, const Tensor& field);
Tensor read_csv_grid(const std::string& path);

/// Grayscale raster with [lo, hi] mapped to [0, 255] (a constant field maps to 0). Row 0 of the
/// field (y_min) is written last so the image is upright.
void write_pgm(const std::string& path, const Tensor& field, double lo, double hi);

/// Colour-mapped raster; `marks` cells are drawn white.
void write_ppm(const std::string& path, const Tensor& field, double lo, double hi, const std::vector<Cell>& marks = {});

/// prefix_truth/prefix_pred (.ppm, .csv) on a shared colour range and prefix_error (.pgm, .csv).
void export_fields(const std::string& prefix, const Tensor& truth, const Tensor& pred, const std::vector<Cell>& sensors);

}  // namespace recfno
