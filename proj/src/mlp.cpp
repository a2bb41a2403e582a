#include "dime/mlp.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "dime/error.hpp"

namespace dime {

using nlohmann::json;

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kIdentity: return "identity";
  }
  return "unknown";
}

Activation parse_activation(const std::string& text) {
  if (text == "tanh") return Activation::kTanh;
  if (text == "relu") return Activation::kRelu;
  if (text == "identity") return Activation::kIdentity;
  throw Error(ErrorCode::kInvalidArgument, "unknown activation '" + text + "'");
}

namespace {

Eigen::VectorXd activate(Activation a, const Eigen::VectorXd& z) {
  switch (a) {
    case Activation::kTanh: return z.array().tanh().matrix();
    case Activation::kRelu: return z.cwiseMax(0.0);
    case Activation::kIdentity: return z;
  }
  return z;
}

Eigen::VectorXd activation_slope(Activation a, const Eigen::VectorXd& z) {
  switch (a) {
    case Activation::kTanh: return (1.0 - z.array().tanh().square()).matrix();
    case Activation::kRelu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::kIdentity: return Eigen::VectorXd::Ones(z.size());
  }
  return Eigen::VectorXd::Ones(z.size());
}

// Uniform in [0, 1) from the top 53 bits; independent of the standard library's
// distribution implementation.
double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Eigen::VectorXd expanded_multipliers(const MlpModel& model) {
  const Vector5d m = model.input_multipliers();
  const int n = model.input_size();
  if (n % kChannels != 0) {
    if (m != Vector5d::Ones()) {
      throw Error(ErrorCode::kDimensionMismatch, "channel scaling needs an input size divisible by 5");
    }
    return Eigen::VectorXd::Ones(n);
  }
  return m.replicate(n / kChannels, 1);
}

}  // namespace

Vector5d MlpModel::input_multipliers() const {
  return channel_scale.cwiseProduct(channel_mask(feature_set));
}

void MlpModel::validate() const {
  if (layer_dims.size() < 2 || weights.size() + 1 != layer_dims.size() || biases.size() != weights.size()) {
    throw Error(ErrorCode::kInvalidDims, "layer count does not match layer_dims");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (layer_dims[l] < 1 || layer_dims[l + 1] < 1 || weights[l].rows() != layer_dims[l + 1] ||
        weights[l].cols() != layer_dims[l] || biases[l].size() != layer_dims[l + 1]) {
      throw Error(ErrorCode::kInvalidDims, "weight shape does not match layer_dims", l);
    }
  }
  if (!use_bias) {
    for (const auto& b : biases) {
      if (!b.isZero(0.0)) throw Error(ErrorCode::kInvalidDims, "bias-free model carries nonzero biases");
    }
  }
}

Eigen::Index MlpModel::parameter_count() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    n += weights[l].size();
    if (use_bias) n += biases[l].size();
  }
  return n;
}

Eigen::VectorXd MlpModel::parameters() const {
  Eigen::VectorXd p(parameter_count());
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    p.segment(at, weights[l].size()) = weights[l].reshaped();
    at += weights[l].size();
    if (use_bias) {
      p.segment(at, biases[l].size()) = biases[l];
      at += biases[l].size();
    }
  }
  return p;
}

void MlpModel::set_parameters(const Eigen::VectorXd& p) {
  if (p.size() != parameter_count()) {
    throw Error(ErrorCode::kDimensionMismatch, "parameter vector has the wrong length");
  }
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    weights[l].reshaped() = p.segment(at, weights[l].size());
    at += weights[l].size();
    if (use_bias) {
      biases[l] = p.segment(at, biases[l].size());
      at += biases[l].size();
    }
  }
}

Eigen::VectorXd MlpGradients::flat(const MlpModel& model) const {
  Eigen::VectorXd p(model.parameter_count());
  Eigen::Index at = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    p.segment(at, weights[l].size()) = weights[l].reshaped();
    at += weights[l].size();
    if (model.use_bias) {
      p.segment(at, biases[l].size()) = biases[l];
      at += biases[l].size();
    }
  }
  return p;
}

MlpModel mlp_init(const std::vector<int>& layer_dims, std::uint64_t seed, Activation activation, bool use_bias) {
  if (layer_dims.size() < 2) {
    throw Error(ErrorCode::kInvalidDims, "need at least an input and an output size");
  }
  for (int d : layer_dims) {
    if (d < 1) throw Error(ErrorCode::kInvalidDims, "layer sizes must be positive");
  }
  MlpModel m;
  m.layer_dims = layer_dims;
  m.activation = activation;
  m.use_bias = use_bias;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int fan_in = layer_dims[l];
    const double bound = std::sqrt(3.0 / fan_in);
    Eigen::MatrixXd w(layer_dims[l + 1], fan_in);
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      w.data()[i] = bound * (2.0 * unit_uniform(rng) - 1.0);
    }
    m.weights.push_back(std::move(w));
    m.biases.push_back(Eigen::VectorXd::Zero(layer_dims[l + 1]));
  }
  return m;
}

MlpModel mlp_init(const GridConfig& grid, const MlpConfig& cfg, std::uint64_t seed) {
  std::vector<int> dims = {grid.feature_size()};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(4);
  return mlp_init(dims, seed, cfg.activation, cfg.use_bias);
}

Eigen::VectorXd mlp_forward(const MlpModel& model, const Eigen::VectorXd& y, MlpCache* cache) {
  if (y.size() != model.input_size()) {
    throw Error(ErrorCode::kDimensionMismatch, "feature length " + std::to_string(y.size()) +
                                                   " does not match model input " +
                                                   std::to_string(model.input_size()));
  }
  Eigen::VectorXd x = y.cwiseProduct(expanded_multipliers(model));
  if (cache) {
    cache->layer_inputs.clear();
    cache->pre_activations.clear();
  }
  const int layers = model.layer_count();
  for (int l = 0; l < layers; ++l) {
    Eigen::VectorXd z = model.weights[l] * x;
    if (model.use_bias) z += model.biases[l];
    if (cache) {
      cache->layer_inputs.push_back(x);
      cache->pre_activations.push_back(z);
    }
    x = (l + 1 < layers) ? activate(model.activation, z) : z;
  }
  return x;
}

MlpGradients mlp_backward(const MlpModel& model, const MlpCache& cache, const Eigen::VectorXd& grad_output) {
  const int layers = model.layer_count();
  if (static_cast<int>(cache.layer_inputs.size()) != layers || grad_output.size() != model.output_size()) {
    throw Error(ErrorCode::kDimensionMismatch, "cache or output gradient does not match the model");
  }
  MlpGradients g;
  g.weights.resize(layers);
  g.biases.resize(layers);
  Eigen::VectorXd delta = grad_output;
  Eigen::VectorXd grad_x;
  for (int l = layers - 1; l >= 0; --l) {
    g.weights[l].noalias() = delta * cache.layer_inputs[l].transpose();
    g.biases[l] = model.use_bias ? delta : Eigen::VectorXd::Zero(delta.size());
    grad_x.noalias() = model.weights[l].transpose() * delta;
    if (l > 0) {
      delta = grad_x.cwiseProduct(activation_slope(model.activation, cache.pre_activations[l - 1]));
    }
  }
  g.input = grad_x.cwiseProduct(expanded_multipliers(model));
  return g;
}

std::string model_to_json(const MlpModel& model) {
  model.validate();
  json j;
  j["format"] = "dime-mlp";
  j["version"] = kModelFormatVersion;
  j["layer_dims"] = model.layer_dims;
  j["activation"] = to_string(model.activation);
  j["use_bias"] = model.use_bias;
  j["feature_set"] = std::string(1, to_char(model.feature_set));
  j["channel_scale"] = std::vector<double>(model.channel_scale.data(), model.channel_scale.data() + 5);
  json layers = json::array();
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const Eigen::MatrixXd& w = model.weights[l];
    std::vector<double> row_major;
    row_major.reserve(w.size());
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) row_major.push_back(w(r, c));
    }
    json layer;
    layer["rows"] = w.rows();
    layer["cols"] = w.cols();
    layer["weights"] = std::move(row_major);
    layer["bias"] = std::vector<double>(model.biases[l].data(), model.biases[l].data() + model.biases[l].size());
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  return j.dump(1);
}

MlpModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParseError, e.what(), e.byte);
  }
  try {
    if (j.at("format").get<std::string>() != "dime-mlp") {
      throw Error(ErrorCode::kParseError, "not a model file");
    }
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw Error(ErrorCode::kVersionMismatch, "unsupported model version " + j.at("version").dump());
    }
    MlpModel m;
    m.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    m.activation = parse_activation(j.at("activation").get<std::string>());
    m.use_bias = j.at("use_bias").get<bool>();
    m.feature_set = parse_feature_set(j.at("feature_set").get<std::string>());
    const auto scale = j.at("channel_scale").get<std::vector<double>>();
    if (scale.size() != 5) throw Error(ErrorCode::kParseError, "channel_scale needs 5 entries");
    m.channel_scale = Eigen::Map<const Vector5d>(scale.data());
    for (const auto& layer : j.at("layers")) {
      const auto rows = layer.at("rows").get<Eigen::Index>();
      const auto cols = layer.at("cols").get<Eigen::Index>();
      const auto w = layer.at("weights").get<std::vector<double>>();
      const auto b = layer.at("bias").get<std::vector<double>>();
      if (rows < 1 || cols < 1 || static_cast<Eigen::Index>(w.size()) != rows * cols ||
          static_cast<Eigen::Index>(b.size()) != rows) {
        throw Error(ErrorCode::kParseError, "layer shape does not match its data");
      }
      m.weights.push_back(Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          w.data(), rows, cols));
      m.biases.push_back(Eigen::Map<const Eigen::VectorXd>(b.data(), rows));
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, e.what());
  }
}

void save_model(const MlpModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << model_to_json(model) << '\n';
}

MlpModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace dime
