#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "dime/error.hpp"
#include "dime/simulator.hpp"
#include "dime/train.hpp"

namespace dime {
namespace {

struct Dataset {
  IntrinsicsD kc;
  std::vector<TrainSample> samples;
};

Dataset simulate(int n, const SimConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dataset d;
  d.kc = average_intrinsics(cfg.nominal, cfg.manifold, cfg.prior_samples, rng);
  const RigSpec rig = RigSpec::standard();
  for (int i = 0; i < n; ++i) {
    const SimFrame f = sample_frame(rig, d.kc, cfg, rng);
    d.samples.push_back({f.corrs, d.kc, f.k_true});
  }
  return d;
}

SimConfig tilt_only() {
  SimConfig cfg;
  cfg.manifold.shift_max = 0.0;
  return cfg;
}

double mean_error(const MlpModel& model, const std::vector<TrainSample>& data, const GridConfig& grid) {
  double sum = 0.0;
  for (const auto& s : data) {
    const IntrinsicsD k = infer_k(model, s.kc, s.corrs, grid);
    sum += reprojection_errors(k, solve_pnp(k, s.corrs).pose, s.corrs).mean;
  }
  return sum / static_cast<double>(data.size());
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), Error);
  };
  bad([](TrainConfig& c) { c.learning_rate = 0.0; });
  bad([](TrainConfig& c) { c.learning_rate = std::nan(""); });
  bad([](TrainConfig& c) { c.batch_size = 0; });
  bad([](TrainConfig& c) { c.epochs = -1; });
  bad([](TrainConfig& c) { c.beta1 = 1.0; });
  bad([](TrainConfig& c) { c.validation_fraction = 1.0; });
  bad([](TrainConfig& c) { c.loss_covariance << 1, 2, 2, 1; });
  EXPECT_EQ(parse_optimizer("sgd"), Optimizer::kSgd);
  EXPECT_EQ(parse_optimizer(to_string(Optimizer::kAdam)), Optimizer::kAdam);
  EXPECT_THROW(parse_optimizer("rmsprop"), Error);
}

TEST(Train, RejectsBadDatasets) {
  const GridConfig grid;
  const MlpModel model = mlp_init(grid, MlpConfig{}, 1);
  EXPECT_THROW(train(model, {}, grid, TrainConfig{}), Error);
  Dataset d = simulate(5, SimConfig{}, 1);
  d.samples[3].corrs.resize(5);
  try {
    train(model, d.samples, grid, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
    EXPECT_EQ(e.index(), std::optional<std::size_t>(3));
  }
  EXPECT_THROW(train(mlp_init(GridConfig::parse("12x9"), MlpConfig{}, 1), simulate(3, SimConfig{}, 2).samples, grid,
                     TrainConfig{}),
               Error);
}

TEST(Train, SplitIsEightyTwentyAndSeeded) {
  const Dataset d = simulate(20, SimConfig{}, 3);
  const GridConfig grid;
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto a = train(mlp_init(grid, MlpConfig{}, 1), d.samples, grid, cfg);
  EXPECT_EQ(a.val_indices.size(), 4u);
  EXPECT_EQ(a.train_indices.size(), 16u);
  std::vector<std::size_t> all = a.train_indices;
  all.insert(all.end(), a.val_indices.begin(), a.val_indices.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
  const auto b = train(mlp_init(grid, MlpConfig{}, 1), d.samples, grid, cfg);
  EXPECT_EQ(a.val_indices, b.val_indices);
  cfg.seed = 1;
  EXPECT_NE(a.val_indices, train(mlp_init(grid, MlpConfig{}, 1), d.samples, grid, cfg).val_indices);
}

TEST(Train, IdentityManifoldLeavesValidationErrorUnchanged) {
  SimConfig sim;
  sim.manifold.tilt_max = 0.0;
  sim.manifold.shift_max = 0.0;
  const Dataset d = simulate(60, sim, 4);
  for (const auto& s : d.samples) EXPECT_EQ(s.k_true->vector(), d.kc.vector());
  const GridConfig grid;
  TrainConfig cfg;
  cfg.epochs = 20;
  const auto result = train(mlp_init(grid, MlpConfig{}, 2), d.samples, grid, cfg);
  const double start = result.curve.front().val_avg_e;
  for (const auto& s : result.curve) EXPECT_LE(s.val_avg_e, 1.05 * start + 1e-9) << s.epoch;
  EXPECT_LE(result.curve[result.best_epoch].val_avg_e, start);
}

TEST(Train, ValidationErrorDecreasesOverFirstTenEpochs) {
  const Dataset d = simulate(200, tilt_only(), 5);
  const GridConfig grid;
  TrainConfig cfg;
  cfg.epochs = 10;
  const auto result = train(mlp_init(grid, MlpConfig{}, 3), d.samples, grid, cfg);
  ASSERT_EQ(result.curve.size(), 11u);
  for (int e = 1; e <= 10; ++e) {
    EXPECT_LT(result.curve[e].val_avg_e, result.curve[e - 1].val_avg_e) << e;
    EXPECT_EQ(result.curve[e].skipped, 0);
  }
  EXPECT_EQ(result.best_epoch, 10);
}

TEST(Train, EndToEndParameterGradientMatchesFiniteDifferences) {
  const Dataset d = simulate(40, SimConfig{}, 6);
  const GridConfig grid;
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.learning_rate = 1e-3;
  const MlpModel trained = train(mlp_init(grid, MlpConfig{}, 4), d.samples, grid, cfg).model;

  std::mt19937_64 rng(7);
  int checked = 0;
  int passed = 0;
  for (int s = 0; s < 5; ++s) {
    const TrainSample& sample = d.samples[s];
    const Eigen::VectorXd y = make_feature(sample.kc, sample.corrs, grid);
    const SampleGradient g = sample_gradient(trained, y, sample, cfg);
    const double scale = g.params.cwiseAbs().maxCoeff();
    std::uniform_int_distribution<Eigen::Index> pick(0, g.params.size() - 1);
    const Eigen::VectorXd base = trained.parameters();
    for (int probe = 0; probe < 20; ++probe) {
      // Bias the draw toward parameters that influence the output.
      Eigen::Index j = pick(rng);
      for (int tries = 0; tries < 50 && std::abs(g.params[j]) < 1e-3 * scale; ++tries) j = pick(rng);
      const double h = 1e-5 * std::max(1.0, std::abs(base[j]));
      MlpModel up = trained;
      MlpModel down = trained;
      Eigen::VectorXd p = base;
      p[j] += h;
      up.set_parameters(p);
      p[j] = base[j] - h;
      down.set_parameters(p);
      const double fd = (sample_loss(up, y, sample, cfg, g.pose) - sample_loss(down, y, sample, cfg, g.pose)) / (2 * h);
      ++checked;
      if (std::abs(fd - g.params[j]) < 1e-3 * std::max(std::abs(fd), 1e-3 * scale)) ++passed;
    }
  }
  EXPECT_GE(passed, checked * 95 / 100) << passed << " of " << checked;
}

TEST(Train, DeterministicForFixedSeed) {
  const Dataset d = simulate(30, SimConfig{}, 8);
  const GridConfig grid;
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.learning_rate = 1e-3;
  cfg.augment_keep = 64;
  const auto a = train(mlp_init(grid, MlpConfig{}, 5), d.samples, grid, cfg);
  const auto b = train(mlp_init(grid, MlpConfig{}, 5), d.samples, grid, cfg);
  EXPECT_EQ(a.model.parameters(), b.model.parameters());
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    EXPECT_EQ(a.curve[i].train_loss, b.curve[i].train_loss);
    EXPECT_EQ(a.curve[i].val_avg_e, b.curve[i].val_avg_e);
  }
}

TEST(Train, SampleOrderOnlyPerturbsResultSlightly) {
  const Dataset d = simulate(120, SimConfig{}, 9);
  const Dataset held_out = simulate(30, SimConfig{}, 10);
  const GridConfig grid;
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 4;
  cfg.validation_fraction = 0.0;
  std::vector<TrainSample> shuffled = d.samples;
  std::mt19937_64 rng(11);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const MlpModel init = mlp_init(grid, MlpConfig{}, 6);
  const double a = mean_error(train(init, d.samples, grid, cfg).model, held_out.samples, grid);
  const double b = mean_error(train(init, shuffled, grid, cfg).model, held_out.samples, grid);
  EXPECT_LT(std::abs(a - b), 0.02 * std::max(a, b)) << a << " " << b;
}

TEST(Train, EarlyStoppingHonoursPatience) {
  const Dataset d = simulate(20, SimConfig{}, 12);
  const GridConfig grid;
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.learning_rate = 0.5;
  cfg.patience = 3;
  const auto result = train(mlp_init(grid, MlpConfig{}, 7), d.samples, grid, cfg);
  EXPECT_LT(result.curve.size(), 201u);
  EXPECT_EQ(static_cast<int>(result.curve.size()) - 1, result.best_epoch + cfg.patience);
}

TEST(InferK, ZeroDiscrepancyFrameGivesPrior) {
  SimConfig sim;
  sim.manifold.tilt_max = 0.0;
  sim.manifold.shift_max = 0.0;
  const Dataset d = simulate(1, sim, 13);
  const GridConfig grid;
  MlpModel model = mlp_init(grid, MlpConfig{}, 8);
  model.feature_set = FeatureSet::kB;
  const IntrinsicsD k = infer_k(model, d.kc, d.samples[0].corrs, grid);
  EXPECT_EQ(k.vector(), d.kc.vector());
  EXPECT_THROW(infer_k(model, d.kc, {}, grid), Error);
  EXPECT_THROW(infer_k(model, d.kc, d.samples[0].corrs, GridConfig::parse("16x12")), Error);
}

TEST(InferK, TrainedModelMovesTowardTruthAndIsDeterministic) {
  const Dataset d = simulate(200, SimConfig{}, 14);
  const Dataset held_out = simulate(50, SimConfig{}, 15);
  const GridConfig grid;
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 4;
  const MlpModel model = train(mlp_init(grid, MlpConfig{}, 9), d.samples, grid, cfg).model;
  double predicted = 0.0;
  double prior = 0.0;
  for (const auto& s : held_out.samples) {
    const IntrinsicsD k = infer_k(model, s.kc, s.corrs, grid);
    EXPECT_EQ(k.vector(), infer_k(model, s.kc, s.corrs, grid).vector());
    predicted += (k.vector() - s.k_true->vector()).squaredNorm();
    prior += (s.kc.vector() - s.k_true->vector()).squaredNorm();
  }
  EXPECT_LT(std::sqrt(predicted), std::sqrt(prior));
}

TEST(WriteCurveCsv, Format) {
  std::vector<EpochStats> curve(2);
  curve[0].train_loss = 1.5;
  curve[0].val_avg_e = 0.25;
  curve[1].epoch = 1;
  curve[1].train_loss = 0.1;
  curve[1].val_avg_e = 0.2;
  curve[1].skipped = 3;
  std::ostringstream out;
  write_curve_csv(curve, out);
  EXPECT_EQ(out.str(), "epoch,train_loss,val_avg_e,skipped\n0,1.5,0.25,0\n1,0.10000000000000001,0.20000000000000001,3\n");
}

}  // namespace
}  // namespace dime
