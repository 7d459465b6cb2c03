#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recfno/model.hpp"

namespace recfno {

/// Mean absolute difference over all elements.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

struct TrainConfig {
  Index epochs = 100;  ///< 0 emits the initialised model
  Index batch_size = 8;
  double lr0 = 1e-3;
  double gamma = 0.97;  ///< multiplicative decay applied after each epoch
  std::uint64_t seed = 0;
  std::string checkpoint_path;  ///< best-validation model is written here as training proceeds

  void validate() const;
  KeyValues to_key_values() const;
  static TrainConfig from_key_values(const KeyValues& kv);
};

/// lr0 * gamma^epoch.
double lr_at(Index epoch, const TrainConfig& cfg);

/// Bias-corrected Adam over a parameter list. Complex tensors are updated as two independent real
/// components.
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool round_to_float = false;  ///< keep parameters float32-representable after each step
  };

  explicit Adam(ParameterList params) : Adam(std::move(params), Options{}) {}
  Adam(ParameterList params, Options options);

  /// One update from the accumulated gradients (a parameter with no gradient counts as zero).
  /// Throws NumericError naming the parameter when a gradient is not finite; nothing is updated then.
  void step(double lr);
  void zero_grad() const;

  Index steps() const { return steps_; }
  const std::vector<Eigen::ArrayXd>& first_moments() const { return m_; }
  const std::vector<Eigen::ArrayXd>& second_moments() const { return v_; }

 private:
  ParameterList params_;
  Options opt_;
  std::vector<Eigen::ArrayXd> m_;
  std::vector<Eigen::ArrayXd> v_;
  Index steps_ = 0;
};

/// Seeded permutation of [0, n) for one epoch (Fisher-Yates).
std::vector<Index> epoch_order(Index n, Rng& rng);

/// Observation sets (one layout shared by all samples) with target fields, in physical units.
struct SupervisedSet {
  std::vector<ObservationSet> inputs;
  std::vector<Tensor> targets;

  Index size() const { return static_cast<Index>(targets.size()); }
  void validate() const;
};

/// z-score statistics of sensor values and target cells over a training set.
Normalizer fit_normalizer(const SupervisedSet& train);

struct EpochRecord {
  Index epoch = 0;
  double lr = 0.0;
  double train_l1 = 0.0;  ///< normalised units
  double val_l1 = 0.0;    ///< normalised units
  double val_mae = 0.0;   ///< physical units, mean over samples
  double val_maxae = 0.0; ///< physical units, mean over samples of the per-sample maximum
};

struct TrainResult {
  Model model;  ///< parameters from the epoch with the lowest validation MAE
  std::vector<EpochRecord> history;
  Index best_epoch = -1;
  double best_val_mae = 0.0;
};

/// Seeded initialisation, shuffled minibatches with gradients summed over the batch, Adam with
/// per-epoch decay, and validation-based selection. Deterministic for a given (config, data, seed).
/// On a non-finite loss throws NumericError; the checkpoint file then still holds the last best model.
TrainResult train_recfno(const ModelConfig& cfg, const SupervisedSet& train, const SupervisedSet& val,
                         const TrainConfig& tc);

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history);

}  // namespace recfno
