#include "dime/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>

#include "dime/error.hpp"
#include "dime/simulator.hpp"

namespace dime {

std::string to_string(Optimizer o) {
  return o == Optimizer::kAdam ? "adam" : "sgd";
}

Optimizer parse_optimizer(const std::string& text) {
  if (text == "adam") return Optimizer::kAdam;
  if (text == "sgd") return Optimizer::kSgd;
  throw Error(ErrorCode::kInvalidArgument, "optimizer must be adam or sgd, got '" + text + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::kInvalidArgument, "learning rate must be positive");
  }
  if (batch_size < 1) throw Error(ErrorCode::kInvalidArgument, "batch size must be at least 1");
  if (epochs < 0 || patience < 0 || augment_keep < 0 || !(weight_decay >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "epochs, patience, augment_keep and weight_decay must be non-negative");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "Adam moments must lie in [0, 1) with positive epsilon");
  }
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "validation fraction must lie in [0, 1)");
  }
  PnpConfig pnp;
  pnp.pixel_covariance = loss_covariance;
  pnp.validate();
}

namespace {

PnpConfig pnp_config(const TrainConfig& cfg) {
  PnpConfig pnp;
  pnp.pixel_covariance = cfg.loss_covariance;
  return pnp;
}

IntrinsicsD corrected(const IntrinsicsD& kc, const Eigen::VectorXd& delta) {
  const IntrinsicsD k = kc + Eigen::Vector4d(delta);
  if (!k.valid()) {
    throw Error(ErrorCode::kInvalidArgument, "predicted focal length is not positive");
  }
  return k;
}

class ParameterOptimizer {
 public:
  ParameterOptimizer(const TrainConfig& cfg, Eigen::Index n)
      : cfg_(cfg), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
    if (cfg_.weight_decay > 0.0) params *= 1.0 - cfg_.learning_rate * cfg_.weight_decay;
    if (cfg_.optimizer == Optimizer::kSgd) {
      params -= cfg_.learning_rate * grad;
      return;
    }
    ++t_;
    m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
    v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
    params.array() -= cfg_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.epsilon);
  }

 private:
  const TrainConfig& cfg_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  int t_ = 0;
};

double validation_error(const MlpModel& model, const std::vector<TrainSample>& data,
                        const std::vector<Eigen::VectorXd>& features, const std::vector<std::size_t>& indices,
                        const PnpConfig& pnp) {
  double sum = 0.0;
  int used = 0;
  for (std::size_t i : indices) {
    try {
      const IntrinsicsD k = corrected(data[i].kc, mlp_forward(model, features[i]));
      const PoseD pose = solve_pnp(k, data[i].corrs, pnp).pose;
      sum += reprojection_errors(k, pose, data[i].corrs, pnp).mean;
      ++used;
    } catch (const Error&) {
    }
  }
  return used ? sum / used : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

SampleGradient sample_gradient(const MlpModel& model, const Eigen::VectorXd& y, const TrainSample& sample,
                               const TrainConfig& cfg, const std::optional<PoseD>& init) {
  const PnpConfig pnp = pnp_config(cfg);
  MlpCache cache;
  SampleGradient out;
  out.k = corrected(sample.kc, mlp_forward(model, y, &cache));
  out.pose = bpnp_forward(out.k, sample.corrs, pnp, init).pose;
  const auto loss = loss_reprojection(out.k, out.pose, sample.corrs, cfg.loss_covariance);
  const double n = static_cast<double>(sample.corrs.size());
  out.loss = loss.value / n;
  out.grad_k = (loss.grad_k + bpnp_backward(out.k, sample.corrs, out.pose, loss.grad_pose, pnp, cfg.hessian)) / n;
  out.params = mlp_backward(model, cache, out.grad_k).flat(model);
  return out;
}

double sample_loss(const MlpModel& model, const Eigen::VectorXd& y, const TrainSample& sample,
                   const TrainConfig& cfg, const std::optional<PoseD>& init) {
  const PnpConfig pnp = pnp_config(cfg);
  const IntrinsicsD k = corrected(sample.kc, mlp_forward(model, y));
  const PoseD pose = solve_pnp(k, sample.corrs, pnp, init).pose;
  return loss_reprojection(k, pose, sample.corrs, cfg.loss_covariance).value /
         static_cast<double>(sample.corrs.size());
}

TrainResult train(const MlpModel& init, const std::vector<TrainSample>& data, const GridConfig& grid,
                  const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  init.validate();
  if (data.empty()) throw Error(ErrorCode::kInvalidArgument, "training set is empty");
  if (init.input_size() != grid.feature_size() || init.output_size() != 4) {
    throw Error(ErrorCode::kDimensionMismatch, "model dimensions do not match the grid");
  }
  const PnpConfig pnp = pnp_config(cfg);

  TrainResult result;
  {
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(cfg.seed, 0));
    std::shuffle(order.begin(), order.end(), rng);
    auto n_val = static_cast<std::size_t>(std::lround(cfg.validation_fraction * static_cast<double>(data.size())));
    n_val = std::min(n_val, data.size() - 1);
    result.val_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    result.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(result.val_indices.begin(), result.val_indices.end());
    std::sort(result.train_indices.begin(), result.train_indices.end());
  }

  std::vector<Eigen::VectorXd> features(data.size());
  std::vector<std::optional<PoseD>> warm(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].corrs.size() < 6) {
      throw Error(ErrorCode::kInvalidArgument, "sample needs at least 6 correspondences", i);
    }
    try {
      features[i] = make_feature(data[i].kc, data[i].corrs, grid);
      if (cfg.warm_start) warm[i] = solve_pnp(data[i].kc, data[i].corrs, pnp).pose;
    } catch (const Error& e) {
      throw Error(e.code(), std::string("sample ") + std::to_string(i) + ": " + e.what(), i);
    }
  }

  MlpModel model = init;
  model.feature_set = cfg.feature_set;
  if (cfg.fit_input_scaling) {
    std::vector<Eigen::VectorXd> train_features;
    for (std::size_t i : result.train_indices) train_features.push_back(features[i]);
    model.channel_scale = fit_channel_scale(train_features);
  }

  const bool have_val = !result.val_indices.empty();
  auto mean_train_loss = [&](const MlpModel& m) {
    double sum = 0.0;
    int used = 0;
    for (std::size_t i : result.train_indices) {
      try {
        sum += sample_loss(m, features[i], data[i], cfg, warm[i]);
        ++used;
      } catch (const Error&) {
      }
    }
    return used ? sum / used : std::numeric_limits<double>::quiet_NaN();
  };

  EpochStats first;
  first.train_loss = mean_train_loss(model);
  first.val_avg_e = have_val ? validation_error(model, data, features, result.val_indices, pnp) : first.train_loss;
  result.curve.push_back(first);
  result.model = model;
  double best = first.val_avg_e;
  int since_best = 0;

  auto write_log = [&](const EpochStats& s) {
    if (!log) return;
    *log << "epoch " << s.epoch << " loss " << std::setprecision(6) << s.train_loss << " val_avg_e " << s.val_avg_e
         << " skipped " << s.skipped << (s.aborted ? " aborted" : "") << '\n';
  };
  write_log(first);

  ParameterOptimizer optimizer(cfg, model.parameter_count());
  Eigen::VectorXd params = model.parameters();
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> order = result.train_indices;
    std::shuffle(order.begin(), order.end(), rng);

    const Eigen::VectorXd epoch_start = params;
    EpochStats stats;
    stats.epoch = epoch;
    double loss_sum = 0.0;
    int loss_count = 0;
    for (std::size_t begin = 0; begin < order.size() && !stats.aborted; begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.size());
      int used = 0;
      auto accumulate = [&](const Eigen::VectorXd& y, const TrainSample& s, const std::optional<PoseD>& start,
                            std::size_t index) {
        try {
          const SampleGradient g = sample_gradient(model, y, s, cfg, start);
          if (!std::isfinite(g.loss) || !g.params.allFinite()) {
            stats.aborted = true;
            return;
          }
          grad += g.params;
          loss_sum += g.loss;
          ++loss_count;
          ++used;
        } catch (const Error& e) {
          ++stats.skipped;
          if (log) *log << "  skip sample " << index << ": " << e.what() << '\n';
        }
      };
      for (std::size_t b = begin; b < end && !stats.aborted; ++b) {
        const std::size_t i = order[b];
        accumulate(features[i], data[i], warm[i], i);
        const int n = static_cast<int>(data[i].corrs.size());
        if (cfg.augment_keep > 0 && n > cfg.augment_keep) {
          TrainSample reduced = data[i];
          reduced.corrs = drop_points(data[i].corrs, cfg.augment_keep, rng);
          accumulate(make_feature(reduced.kc, reduced.corrs, grid), reduced, warm[i], i);
        }
      }
      if (stats.aborted) break;
      if (used > 0) {
        optimizer.step(params, grad / used);
        model.set_parameters(params);
      }
    }

    if (stats.aborted) {
      params = epoch_start;
      model.set_parameters(params);
      stats.train_loss = std::numeric_limits<double>::quiet_NaN();
    } else {
      stats.train_loss = loss_count ? loss_sum / loss_count : std::numeric_limits<double>::quiet_NaN();
    }
    stats.val_avg_e =
        have_val ? validation_error(model, data, features, result.val_indices, pnp) : stats.train_loss;
    result.curve.push_back(stats);
    write_log(stats);

    if (std::isfinite(stats.val_avg_e) && !(stats.val_avg_e >= best)) {
      best = stats.val_avg_e;
      result.model = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

IntrinsicsD infer_k(const MlpModel& model, const IntrinsicsD& kc, const CorrespondenceSet& corrs,
                    const GridConfig& grid) {
  if (corrs.empty()) throw Error(ErrorCode::kInvalidArgument, "no correspondences");
  if (model.input_size() != grid.feature_size()) {
    throw Error(ErrorCode::kDimensionMismatch, "model input does not match grid " + grid.to_string());
  }
  return corrected(kc, mlp_forward(model, make_feature(kc, corrs, grid)));
}

void write_curve_csv(const std::vector<EpochStats>& curve, std::ostream& out) {
  out << "epoch,train_loss,val_avg_e,skipped\n";
  out << std::setprecision(17);
  for (const auto& s : curve) {
    out << s.epoch << ',' << s.train_loss << ',' << s.val_avg_e << ',' << s.skipped << '\n';
  }
}

}  // namespace dime
