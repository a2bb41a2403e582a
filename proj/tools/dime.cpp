#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dime/dataset.hpp"
#include "dime/error.hpp"
#include "dime/evaluate.hpp"
#include "dime/train.hpp"

namespace {

using namespace dime;

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct GridOption {
  std::string text = "8x6";
  GridConfig get(const Dataset& d) const { return GridConfig::parse(text, d.header.image_width, d.header.image_height); }
};

struct TrainOptions {
  std::string grid = "8x6";
  int epochs = 100;
  std::uint64_t seed = 0;
  std::string feature_mask = "A";
  double learning_rate = 1e-4;
  int batch_size = 8;
  std::string optimizer = "adam";
  int patience = 0;
  double weight_decay = 0.0;
  int augment_keep = 0;
  std::string hessian = "gn";
  bool warm_start = false;
  std::vector<int> hidden = {256, 64};
  std::uint64_t model_seed = 0;

  void add_to(CLI::App* app) {
    app->add_option("--grid", grid, "Grid as COLSxROWS")->capture_default_str();
    app->add_option("--epochs", epochs, "Training epochs")->capture_default_str()->check(CLI::NonNegativeNumber);
    app->add_option("--seed", seed, "Split and shuffle seed")->capture_default_str();
    app->add_option("--feature-mask", feature_mask, "Feature set A-E")
        ->capture_default_str()
        ->check(CLI::IsMember({"A", "B", "C", "D", "E"}));
    app->add_option("--lr", learning_rate, "Learning rate")->capture_default_str();
    app->add_option("--batch", batch_size, "Frames per step")->capture_default_str();
    app->add_option("--optimizer", optimizer, "adam or sgd")
        ->capture_default_str()
        ->check(CLI::IsMember({"adam", "sgd"}));
    app->add_option("--patience", patience, "Early-stop patience (0 never stops)")->capture_default_str();
    app->add_option("--weight-decay", weight_decay, "Decoupled weight decay")->capture_default_str();
    app->add_option("--augment-keep", augment_keep, "Extra random-subset copy per sample (0 disables)")
        ->capture_default_str();
    app->add_option("--hessian", hessian, "Pose Hessian for the implicit gradient")
        ->capture_default_str()
        ->check(CLI::IsMember({"gn", "exact"}));
    app->add_flag("--warm-start", warm_start, "Start the pose layer from the K_c pose");
    app->add_option("--hidden", hidden, "Hidden layer widths")->capture_default_str();
    app->add_option("--model-seed", model_seed, "Weight initialization seed")->capture_default_str();
  }

  TrainConfig config() const {
    TrainConfig c;
    c.epochs = epochs;
    c.seed = seed;
    c.feature_set = parse_feature_set(feature_mask);
    c.learning_rate = learning_rate;
    c.batch_size = batch_size;
    c.optimizer = parse_optimizer(optimizer);
    c.patience = patience;
    c.weight_decay = weight_decay;
    c.augment_keep = augment_keep;
    c.hessian = hessian == "exact" ? HessianMode::kExact : HessianMode::kGaussNewton;
    c.warm_start = warm_start;
    c.validate();
    return c;
  }

  MlpConfig mlp() const {
    MlpConfig m;
    m.hidden = hidden;
    return m;
  }
};

struct PerturbOptions {
  double noise_2d = 0.0;
  double noise_3d = 0.0;
  int keep = 0;
  double drop_eta = 0.0;
  std::uint64_t seed = 0;

  void add_to(CLI::App* app) {
    app->add_option("--noise-2d", noise_2d, "Pixel noise std (px)")->capture_default_str();
    app->add_option("--noise-3d", noise_3d, "3D point noise std (mm)")->capture_default_str();
    app->add_option("--keep", keep, "Correspondences kept per frame (0 keeps all)")->capture_default_str();
    app->add_option("--drop-eta", drop_eta, "Fraction of occupied cells emptied")->capture_default_str();
    app->add_option("--seed", seed, "Perturbation seed")->capture_default_str();
  }

  EvalConfig config(const GridConfig& grid) const {
    EvalConfig c;
    c.grid = grid;
    c.sigma_2d = noise_2d;
    c.sigma_3d = noise_3d;
    c.keep = keep;
    c.drop_eta = drop_eta;
    c.seed = seed;
    c.validate();
    return c;
  }
};

std::string with_extension(const std::string& path, const std::string& ext) {
  return std::filesystem::path(path).replace_extension(ext).string();
}

template <typename Fn>
void write_stream(const std::string& path, Fn fn) {
  std::ostringstream out;
  fn(out);
  write_text_file(path, out.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OIS-aware intrinsics correction: simulate, train, infer, eval, ablate"};
  app.set_config("--config", "", "TOML config file with the same keys as the flags");
  app.require_subcommand(1);

  SimulateRequest sim;
  std::string sim_out;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic rig dataset");
  simulate->add_option("--frames", sim.frames, "Number of frames")->capture_default_str();
  simulate->add_option("--seed", sim.seed, "Master seed")->capture_default_str();
  simulate->add_option("--noise-2d", sim.sigma_2d, "Pixel noise std (px)")->capture_default_str();
  simulate->add_option("--noise-3d", sim.sigma_3d, "3D point noise std (mm)")->capture_default_str();
  simulate->add_option("--keep", sim.keep, "Correspondences kept per frame (0 keeps all)")->capture_default_str();
  simulate->add_option("--shell-min", sim.sim.shell_min, "Closest camera distance (mm)")->capture_default_str();
  simulate->add_option("--shell-max", sim.sim.shell_max, "Farthest camera distance (mm)")->capture_default_str();
  simulate->add_option("--view-cone", sim.sim.view_cone, "Viewing cone half-angle (rad)")->capture_default_str();
  simulate->add_option("--tilt-max", sim.sim.manifold.tilt_max, "Lens tilt bound (rad)")->capture_default_str();
  simulate->add_option("--shift-max", sim.sim.manifold.shift_max, "Lens shift bound (mm)")->capture_default_str();
  simulate->add_option("--gain", sim.sim.manifold.gain, "Tilt to principal point gain")->capture_default_str();
  simulate->add_option("--out", sim_out, "Dataset file to write")->required();

  TrainOptions train_opts;
  std::string train_data, train_out, train_curve;
  auto* train_cmd = app.add_subcommand("train", "Train the correction network");
  train_opts.add_to(train_cmd);
  train_cmd->add_option("--data", train_data, "Training dataset")->required();
  train_cmd->add_option("--out", train_out, "Model file to write")->required();
  train_cmd->add_option("--curve", train_curve, "Training curve CSV (default: model path with .csv)");

  GridOption infer_grid;
  std::string infer_model, infer_data, infer_out;
  auto* infer = app.add_subcommand("infer", "Predict corrected intrinsics per frame");
  infer->add_option("--model", infer_model, "Model file")->required();
  infer->add_option("--data", infer_data, "Dataset")->required();
  infer->add_option("--grid", infer_grid.text, "Grid as COLSxROWS")->capture_default_str();
  infer->add_option("--out", infer_out, "JSON file with the predictions");

  GridOption eval_grid;
  PerturbOptions eval_perturb;
  std::string eval_model, eval_data, eval_out;
  auto* eval = app.add_subcommand("eval", "Score a model against K_c and per-frame K*");
  eval->add_option("--model", eval_model, "Model file")->required();
  eval->add_option("--data", eval_data, "Dataset")->required();
  eval->add_option("--grid", eval_grid.text, "Grid as COLSxROWS")->capture_default_str();
  eval_perturb.add_to(eval);
  eval->add_option("--out", eval_out, "Report JSON; a CSV is written next to it");

  TrainOptions ablate_train;
  PerturbOptions ablate_perturb;
  std::string ablate_train_data, ablate_test_data, ablate_out;
  std::vector<std::string> ablate_grids = {"16x12", "12x9", "8x6"};
  std::vector<double> ablate_etas = {0.0, 0.2, 0.4, 0.6, 0.8};
  std::vector<std::string> ablate_sets = {"A", "B", "C", "D", "E"};
  auto* ablate = app.add_subcommand("ablate", "Grid/occupancy and feature-set sweeps");
  ablate->add_option("--train-data", ablate_train_data, "Training dataset")->required();
  ablate->add_option("--test-data", ablate_test_data, "Held-out dataset")->required();
  ablate->add_option("--epochs", ablate_train.epochs, "Training epochs")->capture_default_str();
  ablate->add_option("--lr", ablate_train.learning_rate, "Learning rate")->capture_default_str();
  ablate->add_option("--batch", ablate_train.batch_size, "Frames per step")->capture_default_str();
  ablate->add_option("--seed", ablate_train.seed, "Training and perturbation seed")->capture_default_str();
  ablate->add_option("--model-seed", ablate_train.model_seed, "Weight initialization seed")->capture_default_str();
  ablate->add_option("--noise-2d", ablate_perturb.noise_2d, "Pixel noise std at test time (px)")->capture_default_str();
  ablate->add_option("--noise-3d", ablate_perturb.noise_3d, "3D noise std at test time (mm)")->capture_default_str();
  ablate->add_option("--grids", ablate_grids, "Grids of the occupancy sweep")->capture_default_str();
  ablate->add_option("--etas", ablate_etas, "Emptied-cell ratios")->capture_default_str();
  ablate->add_option("--feature-masks", ablate_sets, "Feature sets of the feature sweep")->capture_default_str();
  ablate->add_option("--grid", ablate_train.grid, "Grid of the feature sweep")->capture_default_str();
  ablate->add_option("--out", ablate_out, "Report JSON; a CSV is written next to it");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*simulate) {
      const Dataset d = simulate_dataset(sim);
      write_dataset(d, sim_out);
      std::cout << "wrote " << d.frames.size() << " frames to " << sim_out << "\nK_c " << std::setprecision(10)
                << d.header.kc.fx << ' ' << d.header.kc.fy << ' ' << d.header.kc.cx << ' ' << d.header.kc.cy
                << "\nrig " << d.header.rig_hash << '\n';
    } else if (*train_cmd) {
      const Dataset d = read_dataset(train_data);
      const GridConfig grid = GridConfig::parse(train_opts.grid, d.header.image_width, d.header.image_height);
      const TrainConfig cfg = train_opts.config();
      const TrainResult result =
          train(mlp_init(grid, train_opts.mlp(), train_opts.model_seed), d.samples(), grid, cfg, &std::cout);
      save_model(result.model, train_out);
      const std::string curve = train_curve.empty() ? with_extension(train_out, ".csv") : train_curve;
      write_stream(curve, [&](std::ostream& out) { write_curve_csv(result.curve, out); });
      std::cout << "best epoch " << result.best_epoch << " val_avg_e " << result.curve[result.best_epoch].val_avg_e
                << "\nwrote " << train_out << " and " << curve << '\n';
    } else if (*infer) {
      const MlpModel model = load_model(infer_model);
      const Dataset d = read_dataset(infer_data);
      const GridConfig grid = infer_grid.get(d);
      nlohmann::ordered_json frames = nlohmann::ordered_json::array();
      std::cout << std::fixed << std::setprecision(4);
      std::cout << std::setw(7) << "frame" << std::setw(12) << "fx" << std::setw(12) << "fy" << std::setw(12) << "cx"
                << std::setw(12) << "cy" << '\n';
      for (std::size_t i = 0; i < d.frames.size(); ++i) {
        const IntrinsicsD k = infer_k(model, d.header.kc, d.frames[i].corrs, grid);
        std::cout << std::setw(7) << i << std::setw(12) << k.fx << std::setw(12) << k.fy << std::setw(12) << k.cx
                  << std::setw(12) << k.cy << '\n';
        frames.push_back({{"index", i}, {"k_hat", {k.fx, k.fy, k.cx, k.cy}}});
      }
      if (!infer_out.empty()) {
        const nlohmann::ordered_json j = {{"format", "dime-infer"}, {"grid", grid.to_string()}, {"frames", frames}};
        write_text_file(infer_out, j.dump(1) + "\n");
      }
    } else if (*eval) {
      const MlpModel model = load_model(eval_model);
      const Dataset d = read_dataset(eval_data);
      const EvalReport report = evaluate(model, d, eval_perturb.config(eval_grid.get(d)));
      print_report_table(report, std::cout);
      if (!eval_out.empty()) {
        write_text_file(eval_out, report_to_json(report) + "\n");
        write_stream(with_extension(eval_out, ".csv"), [&](std::ostream& out) { write_report_csv(report, out); });
      }
      if (!report.rho) {
        std::cerr << "no usable baseline: Avg(e_c) does not exceed Avg(e*)\n";
        return kExitNumerical;
      }
    } else if (*ablate) {
      const Dataset train_set = read_dataset(ablate_train_data);
      const Dataset test_set = read_dataset(ablate_test_data);
      AblationConfig cfg;
      for (const auto& g : ablate_grids) {
        cfg.grids.push_back(GridConfig::parse(g, train_set.header.image_width, train_set.header.image_height));
      }
      cfg.etas = ablate_etas;
      cfg.feature_sets.clear();
      for (const auto& s : ablate_sets) cfg.feature_sets.push_back(parse_feature_set(s));
      cfg.feature_grid =
          GridConfig::parse(ablate_train.grid, train_set.header.image_width, train_set.header.image_height);
      cfg.train = ablate_train.config();
      cfg.mlp = ablate_train.mlp();
      cfg.model_seed = ablate_train.model_seed;
      ablate_perturb.seed = ablate_train.seed;
      cfg.eval = ablate_perturb.config(cfg.feature_grid);
      const AblationReport report = run_ablation(train_set, test_set, cfg, &std::cerr);
      print_ablation_table(report, std::cout);
      if (!ablate_out.empty()) {
        write_text_file(ablate_out, ablation_to_json(report) + "\n");
        write_stream(with_extension(ablate_out, ".csv"), [&](std::ostream& out) { write_ablation_csv(report, out); });
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_numerical() ? kExitNumerical : kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
