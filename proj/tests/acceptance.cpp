// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "dime/bpnp.hpp"
#include "dime/dataset.hpp"
#include "dime/evaluate.hpp"
#include "dime/train.hpp"
#include "test_util.hpp"

namespace {

using namespace dime;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Shared protocol: 200 training frames, 50 held-out frames, 8x6 grid, no validation split.
struct Protocol {
  Dataset train_set;
  Dataset test_set;
  GridConfig grid;
  TrainConfig train_cfg;

  Protocol() {
    SimulateRequest req;
    req.frames = 200;
    req.seed = 2024;
    train_set = simulate_dataset(req);
    req.frames = 50;
    req.seed = 2025;
    test_set = simulate_dataset(req);
    train_cfg.learning_rate = 3e-3;
    train_cfg.batch_size = 4;
    train_cfg.epochs = 200;
    train_cfg.seed = 1;
    train_cfg.validation_fraction = 0.0;
  }

  MlpModel fit(FeatureSet set) const {
    TrainConfig cfg = train_cfg;
    cfg.feature_set = set;
    return train(mlp_init(grid, MlpConfig{}, 7), train_set.samples(), grid, cfg).model;
  }

  EvalReport score(const MlpModel& model, int keep = 0, double sigma_2d = 0.0, double sigma_3d = 0.0) const {
    EvalConfig cfg;
    cfg.grid = grid;
    cfg.keep = keep;
    cfg.sigma_2d = sigma_2d;
    cfg.sigma_3d = sigma_3d;
    cfg.seed = 11;
    return evaluate(model, test_set, cfg);
  }
};

Outcome geometry_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1);
  double worst_rot = 0.0, worst_trans = 0.0, worst_err = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto scene = testing::random_scene(rng, 6 + static_cast<int>(rng() % 315));
    const PoseD pose = solve_pnp(scene.k, scene.corrs).pose;
    worst_rot = std::max(worst_rot, rotation_distance(pose, scene.pose));
    worst_trans = std::max(worst_trans, testing::translation_distance(pose, scene.pose));
    worst_err = std::max(worst_err, reprojection_errors(scene.k, pose, scene.corrs).mean);
  }
  const double t = seconds_since(t0);
  return {worst_rot < 1e-6 && worst_trans < 1e-6 && worst_err < 1e-8 && t < 30.0,
          "max rot " + fmt("%.2e", worst_rot) + " rad, max trans " + fmt("%.2e", worst_trans) + " mm, max Avg(e) " +
              fmt("%.2e", worst_err) + " px, " + fmt("%.1f", t) + " s"};
}

double mlp_fd_error(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  MlpModel m = mlp_init({20, 12, 8, 4}, rng());
  for (int c = 0; c < 5; ++c) m.channel_scale[c] = 0.1 + std::abs(n(rng));
  Eigen::VectorXd y(20), w(4);
  for (auto& v : y) v = n(rng);
  for (auto& v : w) v = n(rng);
  MlpCache cache;
  mlp_forward(m, y, &cache);
  const Eigen::VectorXd analytic = mlp_backward(m, cache, w).flat(m);
  Eigen::VectorXd p = m.parameters();
  MlpModel probe = m;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + 1e-5;
    probe.set_parameters(p);
    const double up = w.dot(mlp_forward(probe, y));
    p[i] = saved - 1e-5;
    probe.set_parameters(p);
    const double down = w.dot(mlp_forward(probe, y));
    p[i] = saved;
    worst = std::max(worst, std::abs((up - down) / 2e-5 - analytic[i]) / std::max(1.0, std::abs(analytic[i])));
  }
  return worst;
}

// Total derivative of a downstream loss that uses a different covariance than
// the pose solve, checked against re-solving PnP at K +/- 1e-4.
bool bpnp_probe(std::mt19937_64& rng) {
  auto scene = testing::random_scene(rng, 60);
  testing::add_pixel_noise(scene.corrs, 2.0, rng);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  Eigen::Matrix2d a;
  a << 1 + u(rng), u(rng), u(rng), 1 + u(rng);
  const Eigen::Matrix2d cov = a * a.transpose() + 0.2 * Eigen::Matrix2d::Identity();
  const double n = static_cast<double>(scene.corrs.size());
  const PoseD pose = bpnp_forward(scene.k, scene.corrs).pose;
  const auto loss = loss_reprojection(scene.k, pose, scene.corrs, cov);
  const Eigen::Vector4d analytic =
      (loss.grad_k + bpnp_backward(scene.k, scene.corrs, pose, loss.grad_pose, PnpConfig{}, HessianMode::kExact)) / n;
  auto total = [&](const Eigen::Vector4d& dk) {
    const IntrinsicsD k = scene.k + dk;
    const PoseD p = solve_pnp(k, scene.corrs, PnpConfig{}, pose).pose;
    return loss_reprojection(k, p, scene.corrs, cov).value / n;
  };
  Eigen::Vector4d fd;
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector4d e = 1e-4 * Eigen::Vector4d::Unit(i);
    fd[i] = (total(e) - total(-e)) / 2e-4;
  }
  return (fd - analytic).norm() < 1e-3 * fd.norm();
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) worst = std::max(worst, mlp_fd_error(rng));
  int passed = 0;
  for (int i = 0; i < 200; ++i) passed += bpnp_probe(rng) ? 1 : 0;
  const double t = seconds_since(t0);
  return {worst < 1e-5 && passed >= 190 && t < 300.0, "MLP max rel err " + fmt("%.2e", worst) + ", BPnP " +
                                                          std::to_string(passed) + "/200 probes within 1e-3, " +
                                                          fmt("%.1f", t) + " s"};
}

Outcome zero_input(const std::vector<const MlpModel*>& trained) {
  const GridConfig grid;
  const Eigen::VectorXd empty = flatten(gridify({}, grid));
  bool ok = empty.size() == grid.feature_size() && empty.isZero(0.0);
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ok = ok && mlp_forward(mlp_init(grid, MlpConfig{}, seed), empty).isZero(0.0);
    ++checked;
  }
  for (const MlpModel* m : trained) {
    ok = ok && mlp_forward(*m, empty).isZero(0.0);
    ++checked;
  }
  return {ok, std::to_string(checked) + " models map the empty grid to exactly zero"};
}

Outcome reproduction(const Protocol& p, const MlpModel& model, double seconds) {
  const EvalReport full = p.score(model);
  const EvalReport sparse = p.score(model, 64);
  const double r320 = full.rho.value_or(-1.0);
  const double r64 = sparse.rho.value_or(-1.0);
  return {r320 >= 0.85 && r64 >= 0.55 && seconds < 900.0,
          "rho@320 " + fmt("%.4f", r320) + " (Avg(e_c) " + fmt("%.3f", full.avg_ec) + ", Avg(e) " +
              fmt("%.3f", full.avg_e) + ", Avg(e*) " + fmt("%.2e", full.avg_estar) + "), rho@64 " + fmt("%.4f", r64) +
              ", train+eval " + fmt("%.1f", seconds) + " s"};
}

Outcome noise_robustness(const Protocol& p, const MlpModel& model) {
  const EvalReport r = p.score(model, 0, 3.0, 0.1);
  const double value = r.rho.value_or(-1.0);
  return {value >= 0.80, "rho " + fmt("%.4f", value) + " (Avg(e_c) " + fmt("%.3f", r.avg_ec) + ", Avg(e) " +
                             fmt("%.3f", r.avg_e) + ", Avg(e*) " + fmt("%.3f", r.avg_estar) + ")"};
}

Outcome feature_ablation(const Protocol& p, const MlpModel& model_a) {
  std::vector<double> e(5);
  e[0] = p.score(model_a).avg_e;
  const FeatureSet sets[] = {FeatureSet::kA, FeatureSet::kB, FeatureSet::kC, FeatureSet::kD, FeatureSet::kE};
  for (int i = 1; i < 5; ++i) e[i] = p.score(p.fit(sets[i])).avg_e;
  bool ok = e[4] >= 2.0 * e[0];
  for (int i = 1; i < 4; ++i) ok = ok && e[i] >= e[0] && e[i] <= e[4];
  return {ok, "Avg(e) A " + fmt("%.3f", e[0]) + ", B " + fmt("%.3f", e[1]) + ", C " + fmt("%.3f", e[2]) + ", D " +
                  fmt("%.3f", e[3]) + ", E " + fmt("%.3f", e[4])};
}

// Counts occupied cells directly from pixel coordinates.
int brute_force_occupied(const CorrespondenceSet& corrs, const GridConfig& g) {
  const double cw = static_cast<double>(g.image_width) / g.cols;
  const double ch = static_cast<double>(g.image_height) / g.rows;
  std::vector<bool> hit(static_cast<std::size_t>(g.cols * g.rows), false);
  for (const auto& c : corrs) {
    const int col = std::min(g.cols - 1, static_cast<int>(std::floor(c.pixel.x() / cw)));
    const int row = std::min(g.rows - 1, static_cast<int>(std::floor(c.pixel.y() / ch)));
    hit[static_cast<std::size_t>(row * g.cols + col)] = true;
  }
  int n = 0;
  for (bool h : hit) n += h ? 1 : 0;
  return n;
}

Outcome metric_identities() {
  const double computed = rho(3.44, 0.68, 0.45);
  bool ok = std::abs(computed - 0.923) <= 5e-4 && std::abs(computed - 0.917) <= 0.015 &&
            std::abs(computed - 0.922) <= 0.015;
  SimulateRequest req;
  req.frames = 10;
  req.seed = 77;
  const Dataset d = simulate_dataset(req);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int matched = 0;
  for (int i = 0; i < 100; ++i) {
    const GridConfig grid = GridConfig::parse(i % 3 == 0 ? "16x12" : i % 3 == 1 ? "12x9" : "8x6");
    const CorrespondenceSet& before = d.frames[i % 10].corrs;
    const CorrespondenceSet after = i % 2 == 0 ? empty_cells(before, grid, u(rng), rng)
                                               : drop_points(before, 1 + static_cast<int>(rng() % 320), rng);
    const auto map_before = gridify(build_point_features(d.header.kc, before), grid);
    const auto map_after = gridify(build_point_features(d.header.kc, after), grid);
    const Occupancy occ = occupancy_metrics(map_before, map_after, grid);
    const int nb = brute_force_occupied(before, grid);
    const int na = brute_force_occupied(after, grid);
    const double gamma = static_cast<double>(nb) / grid.cell_count();
    const double eta = static_cast<double>(nb - na) / nb;
    if (std::abs(occ.gamma - gamma) < 1e-12 && std::abs(occ.eta - eta) < 1e-12) ++matched;
  }
  ok = ok && matched == 100;
  return {ok, "rho(3.44, 0.68, 0.45) = " + fmt("%.5f", computed) + ", eta/gamma matched " + std::to_string(matched) +
                  "/100"};
}

Outcome determinism(const Protocol& p, const MlpModel& first) {
  const std::string a = report_to_json(p.score(first));
  const std::string b = report_to_json(p.score(p.fit(FeatureSet::kA)));
  return {a == b, a == b ? "identical reports (" + std::to_string(a.size()) + " bytes)" : "reports differ"};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << name << ": " << o.detail
              << std::endl;
  };

  report(1, "geometry oracle", geometry_oracle);
  report(2, "gradient suite", gradient_suite);

  const Protocol protocol;
  const auto t0 = Clock::now();
  const MlpModel model_a = protocol.fit(FeatureSet::kA);
  const double train_seconds = seconds_since(t0);

  report(3, "zero-input invariant", [&] { return zero_input({&model_a}); });
  report(4, "synthetic reproduction", [&] {
    const auto t1 = Clock::now();
    protocol.score(model_a);
    return reproduction(protocol, model_a, train_seconds + seconds_since(t1));
  });
  report(5, "noise robustness", [&] { return noise_robustness(protocol, model_a); });
  report(6, "feature ablation", [&] { return feature_ablation(protocol, model_a); });
  report(7, "metric identities", metric_identities);
  report(8, "determinism", [&] { return determinism(protocol, model_a); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " of 8 criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
