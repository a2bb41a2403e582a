#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dime/features.hpp"

namespace dime {

enum class Activation { kTanh, kRelu, kIdentity };

std::string to_string(Activation a);
Activation parse_activation(const std::string& text);

/// Fully connected perceptron y -> dK. The default configuration (tanh, no
/// biases) maps the zero feature vector to exactly zero.
struct MlpModel {
  std::vector<int> layer_dims;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Activation activation = Activation::kTanh;
  bool use_bias = false;
  /// Per-channel input multipliers, repeated over every grid cell.
  Vector5d channel_scale = Vector5d::Ones();
  /// Channels not in this set are zeroed before the first layer.
  FeatureSet feature_set = FeatureSet::kA;

  int input_size() const { return layer_dims.front(); }
  int output_size() const { return layer_dims.back(); }
  int layer_count() const { return static_cast<int>(weights.size()); }
  /// channel_scale with masked channels zeroed.
  Vector5d input_multipliers() const;

  Eigen::Index parameter_count() const;
  Eigen::VectorXd parameters() const;
  void set_parameters(const Eigen::VectorXd& params);

  /// Throws InvalidDims for inconsistent shapes.
  void validate() const;
};

struct MlpConfig {
  std::vector<int> hidden = {256, 64};
  Activation activation = Activation::kTanh;
  bool use_bias = false;
};

/// Fan-in scaled uniform initialization, U(-sqrt(3 / fan_in), sqrt(3 / fan_in)).
/// Bit-identical for equal seeds.
MlpModel mlp_init(const std::vector<int>& layer_dims, std::uint64_t seed,
                  Activation activation = Activation::kTanh, bool use_bias = false);

/// The dK head for a given grid: [5 u v, hidden..., 4].
MlpModel mlp_init(const GridConfig& grid, const MlpConfig& cfg, std::uint64_t seed);

struct MlpCache {
  /// layer_inputs[l] is the input of weight layer l; layer_inputs[0] is the scaled feature.
  std::vector<Eigen::VectorXd> layer_inputs;
  std::vector<Eigen::VectorXd> pre_activations;
};

Eigen::VectorXd mlp_forward(const MlpModel& model, const Eigen::VectorXd& y, MlpCache* cache = nullptr);

struct MlpGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  /// Gradient with respect to the raw (unscaled) feature vector.
  Eigen::VectorXd input;

  /// Same layout as MlpModel::parameters().
  Eigen::VectorXd flat(const MlpModel& model) const;
};

MlpGradients mlp_backward(const MlpModel& model, const MlpCache& cache, const Eigen::VectorXd& grad_output);

/// Versioned JSON container: dims, activation, bias flag, scaling, weights.
std::string model_to_json(const MlpModel& model);
MlpModel model_from_json(const std::string& text);
void save_model(const MlpModel& model, const std::string& path);
MlpModel load_model(const std::string& path);

inline constexpr int kModelFormatVersion = 1;

}  // namespace dime
