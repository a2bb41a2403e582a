#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include <Eigen/Core>

#include "dime/bpnp.hpp"
#include "dime/features.hpp"
#include "dime/mlp.hpp"

namespace dime {

enum class Optimizer { kAdam, kSgd };

std::string to_string(Optimizer o);
Optimizer parse_optimizer(const std::string& text);

struct TrainConfig {
  double learning_rate = 1e-4;
  Optimizer optimizer = Optimizer::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Decoupled weight decay applied with every step (0 disables).
  double weight_decay = 0.0;
  int epochs = 100;
  int batch_size = 8;
  std::uint64_t seed = 0;
  /// Σ of the reprojection loss; also used by the pose layer.
  Eigen::Matrix2d loss_covariance = Eigen::Matrix2d::Identity();
  /// Stop after this many epochs without a validation improvement; 0 never stops early.
  int patience = 0;
  double validation_fraction = 0.2;
  /// Fit per-channel input multipliers on the training features before the first step.
  bool fit_input_scaling = true;
  FeatureSet feature_set = FeatureSet::kA;
  /// Start the pose layer from the K_c pose instead of a fresh closed-form solve.
  bool warm_start = false;
  HessianMode hessian = HessianMode::kGaussNewton;
  /// Each sample is also presented with a random subset of this many points (0 disables).
  int augment_keep = 0;

  void validate() const;
};

struct TrainSample {
  CorrespondenceSet corrs;
  IntrinsicsD kc;
  std::optional<IntrinsicsD> k_true;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  /// Mean over validation frames of Avg(e) under the predicted intrinsics.
  double val_avg_e = 0.0;
  int skipped = 0;
  bool aborted = false;
};

struct TrainResult {
  MlpModel model;
  std::vector<EpochStats> curve;
  int best_epoch = 0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

/// Feature vector, forward pass, pose layer and loss for one sample, with the
/// gradient of the per-point mean loss with respect to the flat parameters.
struct SampleGradient {
  double loss = 0.0;
  Eigen::VectorXd params;
  Eigen::Vector4d grad_k = Eigen::Vector4d::Zero();
  IntrinsicsD k;
  PoseD pose;
};

SampleGradient sample_gradient(const MlpModel& model, const Eigen::VectorXd& y, const TrainSample& sample,
                               const TrainConfig& cfg, const std::optional<PoseD>& init = std::nullopt);

/// Per-point mean loss after re-solving the pose layer; no gradients.
double sample_loss(const MlpModel& model, const Eigen::VectorXd& y, const TrainSample& sample,
                   const TrainConfig& cfg, const std::optional<PoseD>& init = std::nullopt);

/// Trains a copy of `init` and returns the epoch with the best validation
/// Avg(e) (training loss when there is no validation split). Epoch 0 is the
/// starting model.
TrainResult train(const MlpModel& init, const std::vector<TrainSample>& data, const GridConfig& grid,
                  const TrainConfig& cfg, std::ostream* log = nullptr);

/// K_c plus the predicted correction.
IntrinsicsD infer_k(const MlpModel& model, const IntrinsicsD& kc, const CorrespondenceSet& corrs,
                    const GridConfig& grid);

/// epoch,train_loss,val_avg_e,skipped
void write_curve_csv(const std::vector<EpochStats>& curve, std::ostream& out);

}  // namespace dime
