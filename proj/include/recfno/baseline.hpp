#pragma once

#include <string>
#include <vector>

#include "recfno/checkpoint.hpp"
#include "recfno/train.hpp"

namespace recfno {

/// Mean field plus r orthonormal modes (rows of `modes`, each a flattened [n_y, n_x] field).
struct PodBasis {
  GridSpec grid;
  Tensor mean;                   // [n_y, n_x]
  RowMatrix modes;               // [r, n_y * n_x]
  Eigen::VectorXd singular;      // r values, nonincreasing

  Index rank() const { return modes.rows(); }
  /// Mode i as an [n_y, n_x] tensor.
  Tensor mode(Index i) const;
};

/// Smallest r whose cumulative squared singular values reach `energy` of the total, capped at
/// `cap`; 0 when every singular value is zero.
Index pod_energy_rank(const Eigen::VectorXd& singular, double energy = 0.99, Index cap = 64);

/// Method of snapshots: eigen-decomposition of the Gram matrix of the mean-centred snapshots.
/// `r` < 0 selects pod_energy_rank(..., 0.99, min(64, count)). Directions with a zero singular value
/// are returned as zero modes. Throws ConfigError when r exceeds min(count, cells).
PodBasis pod_fit(const std::vector<Tensor>& snapshots, const GridSpec& grid, Index r = -1);

Eigen::VectorXd pod_project(const PodBasis& basis, const Tensor& field);
Tensor pod_reconstruct(const PodBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& coefficients);

struct PodMlpConfig {
  Index hidden = 256;
  Index rank = -1;  ///< -1 selects the 99 % energy rule
};

/// Observations -> POD coefficients by an MLP (n -> hidden -> hidden -> r, GELU), composed with the
/// reconstruction. Works at the training resolution only.
struct PodMlp {
  PodBasis basis;
  std::vector<Point> sensors;
  Index hidden = 256;
  double input_mean = 0.0;
  double input_std = 1.0;
  double coeff_scale = 1.0;  ///< coefficients are regressed divided by this
  Tensor w1, b1, w2, b2, w3, b3;

  ParameterList parameters() const;
  Eigen::VectorXd predict_coefficients(const ObservationSet& obs) const;
  /// Throws ContractError when `scale` != 1: the modes exist only on the training grid.
  Tensor predict(const ObservationSet& obs, Index scale = 1) const;
};

struct PodMlpResult {
  PodMlp model;
  std::vector<EpochRecord> history;
  Index best_epoch = -1;
  double best_val_mae = 0.0;
};

/// Fits the basis on the training targets and trains the regressor with L1 on scaled coefficients,
/// using the same optimiser, schedule, batching and validation selection as train_recfno.
PodMlpResult train_podmlp(const SupervisedSet& train, const SupervisedSet& val, const TrainConfig& tc,
                          const PodMlpConfig& pc = {});

Checkpoint podmlp_checkpoint(const PodMlp& model);
PodMlp podmlp_from_checkpoint(const Checkpoint& ckpt);

}  // namespace recfno
