#include "dime/evaluate.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "dime/error.hpp"

namespace dime {

using nlohmann::ordered_json;

double rho(double avg_ec, double avg_e, double avg_estar) {
  if (!(avg_ec > avg_estar + 1e-12)) {
    throw Error(ErrorCode::kDegenerateBaseline, "Avg(e_c) must exceed Avg(e*)");
  }
  return (avg_ec - avg_e) / (avg_ec - avg_estar);
}

void EvalConfig::validate() const {
  grid.validate();
  pnp.validate();
  if (!(sigma_2d >= 0.0) || !(sigma_3d >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "noise sigmas must be non-negative");
  if (keep < 0) throw Error(ErrorCode::kInvalidKeep, "keep must be non-negative");
  if (!(drop_eta >= 0.0 && drop_eta <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "drop eta must lie in [0, 1]");
}

namespace {

FrameReport evaluate_frame(const MlpModel& model, const IntrinsicsD& kc, const DatasetFrame& frame, std::size_t index,
                           const EvalConfig& cfg) {
  std::mt19937_64 rng(derive_seed(cfg.seed, index));
  CorrespondenceSet corrs = frame.corrs;
  if (cfg.sigma_2d > 0.0 || cfg.sigma_3d > 0.0) {
    SimFrame f;
    f.corrs = std::move(corrs);
    corrs = inject_noise(f, cfg.sigma_2d, cfg.sigma_3d, rng).corrs;
  }
  if (cfg.keep > 0 && cfg.keep != static_cast<int>(corrs.size())) corrs = drop_points(corrs, cfg.keep, rng);

  FrameReport r;
  r.index = index;
  const GridFeatureMap before = gridify(build_point_features(kc, corrs), cfg.grid);
  if (cfg.drop_eta > 0.0) corrs = empty_cells(corrs, cfg.grid, cfg.drop_eta, rng);
  const GridFeatureMap after = gridify(build_point_features(kc, corrs), cfg.grid);
  const Occupancy occ = occupancy_metrics(before, after, cfg.grid);
  r.gamma = occ.gamma;
  r.eta = occ.eta;
  r.points = static_cast<int>(corrs.size());

  const PoseD pose_c = solve_pnp(kc, corrs, cfg.pnp).pose;
  r.avg_ec = reprojection_errors(kc, pose_c, corrs).mean;
  r.k_hat = infer_k(model, kc, corrs, cfg.grid);
  if (!r.k_hat.valid()) throw Error(ErrorCode::kInvalidArgument, "predicted focal length is not positive");
  r.avg_e = reprojection_errors(r.k_hat, solve_pnp(r.k_hat, corrs, cfg.pnp).pose, corrs).mean;
  const MleSolution mle = mle_refine_intrinsics(kc, corrs, cfg.pnp);
  r.k_star = mle.k;
  r.avg_estar = reprojection_errors(mle.k, mle.pose, corrs).mean;
  try {
    r.rho = rho(r.avg_ec, r.avg_e, r.avg_estar);
  } catch (const Error&) {
  }
  return r;
}

std::optional<double> optional_rho(double ec, double e, double estar) {
  try {
    return rho(ec, e, estar);
  } catch (const Error&) {
    return std::nullopt;
  }
}

ordered_json config_json(const EvalConfig& c) {
  return {{"grid", c.grid.to_string()}, {"sigma_2d", c.sigma_2d}, {"sigma_3d", c.sigma_3d},
          {"keep", c.keep},             {"drop_eta", c.drop_eta}, {"seed", c.seed}};
}

ordered_json optional_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

ordered_json aggregate_json(const EvalReport& r) {
  return {{"frames", r.frames.size()}, {"skipped", r.skipped},  {"avg_ec", r.avg_ec},
          {"avg_e", r.avg_e},          {"avg_estar", r.avg_estar}, {"rho", optional_json(r.rho)},
          {"rho_flagged", r.rho_flagged()}, {"gamma", r.gamma}, {"eta", r.eta}};
}

std::string csv_value(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream s;
  s << std::setprecision(17) << *v;
  return s.str();
}

}  // namespace

EvalReport evaluate(const MlpModel& model, const Dataset& data, const EvalConfig& cfg) {
  cfg.validate();
  model.validate();
  data.validate();
  if (model.input_size() != cfg.grid.feature_size() || model.output_size() != 4) {
    throw Error(ErrorCode::kDimensionMismatch, "model does not match grid " + cfg.grid.to_string());
  }
  EvalReport report;
  report.config = cfg;
  for (std::size_t i = 0; i < data.frames.size(); ++i) {
    try {
      report.frames.push_back(evaluate_frame(model, data.header.kc, data.frames[i], i, cfg));
    } catch (const Error& e) {
      ++report.skipped;
      report.skip_reasons.push_back("frame " + std::to_string(i) + ": " + e.what());
    }
  }
  if (report.frames.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    report.avg_ec = report.avg_e = report.avg_estar = report.gamma = report.eta = nan;
    return report;
  }
  for (const auto& f : report.frames) {
    report.avg_ec += f.avg_ec;
    report.avg_e += f.avg_e;
    report.avg_estar += f.avg_estar;
    report.gamma += f.gamma;
    report.eta += f.eta;
  }
  const double n = static_cast<double>(report.frames.size());
  report.avg_ec /= n;
  report.avg_e /= n;
  report.avg_estar /= n;
  report.gamma /= n;
  report.eta /= n;
  report.rho = optional_rho(report.avg_ec, report.avg_e, report.avg_estar);
  return report;
}

std::string report_to_json(const EvalReport& report) {
  ordered_json frames = ordered_json::array();
  for (const auto& f : report.frames) {
    frames.push_back({{"index", f.index},
                      {"points", f.points},
                      {"avg_ec", f.avg_ec},
                      {"avg_e", f.avg_e},
                      {"avg_estar", f.avg_estar},
                      {"rho", optional_json(f.rho)},
                      {"gamma", f.gamma},
                      {"eta", f.eta},
                      {"k_hat", {f.k_hat.fx, f.k_hat.fy, f.k_hat.cx, f.k_hat.cy}},
                      {"k_star", {f.k_star.fx, f.k_star.fy, f.k_star.cx, f.k_star.cy}}});
  }
  ordered_json j = {{"format", "dime-eval"},
                    {"config", config_json(report.config)},
                    {"aggregate", aggregate_json(report)},
                    {"frames", std::move(frames)},
                    {"skip_reasons", report.skip_reasons}};
  return j.dump(1);
}

void write_report_csv(const EvalReport& report, std::ostream& out) {
  out << "frame,points,avg_ec,avg_e,avg_estar,rho,gamma,eta\n";
  out << std::setprecision(17);
  for (const auto& f : report.frames) {
    out << f.index << ',' << f.points << ',' << f.avg_ec << ',' << f.avg_e << ',' << f.avg_estar << ','
        << csv_value(f.rho) << ',' << f.gamma << ',' << f.eta << '\n';
  }
  out << "all,," << report.avg_ec << ',' << report.avg_e << ',' << report.avg_estar << ',' << csv_value(report.rho)
      << ',' << report.gamma << ',' << report.eta << '\n';
}

void print_report_table(const EvalReport& report, std::ostream& out) {
  const auto flags = out.flags();
  out << std::fixed << std::setprecision(4);
  out << std::setw(7) << "frame" << std::setw(8) << "points" << std::setw(10) << "Avg(e_c)" << std::setw(10)
      << "Avg(e)" << std::setw(10) << "Avg(e*)" << std::setw(10) << "rho" << '\n';
  auto rho_text = [](const std::optional<double>& r) {
    if (!r) return std::string("n/a");
    std::ostringstream s;
    s << std::fixed << std::setprecision(4) << *r;
    return s.str();
  };
  for (const auto& f : report.frames) {
    out << std::setw(7) << f.index << std::setw(8) << f.points << std::setw(10) << f.avg_ec << std::setw(10) << f.avg_e
        << std::setw(10) << f.avg_estar << std::setw(10) << rho_text(f.rho) << '\n';
  }
  out << std::setw(7) << "all" << std::setw(8) << "" << std::setw(10) << report.avg_ec << std::setw(10) << report.avg_e
      << std::setw(10) << report.avg_estar << std::setw(10) << rho_text(report.rho)
      << (report.rho_flagged() ? "  (outside [0, 1])" : "") << '\n';
  out << "gamma " << report.gamma << "  eta " << report.eta << "  skipped " << report.skipped << '\n';
  for (const auto& reason : report.skip_reasons) out << "  skipped " << reason << '\n';
  out.flags(flags);
}

AblationConfig AblationConfig::standard() {
  AblationConfig cfg;
  cfg.grids = {GridConfig::parse("16x12"), GridConfig::parse("12x9"), GridConfig::parse("8x6")};
  return cfg;
}

AblationReport run_ablation(const Dataset& train_data, const Dataset& test_data, const AblationConfig& cfg,
                            std::ostream* log) {
  train_data.validate();
  test_data.validate();
  const std::vector<TrainSample> samples = train_data.samples();
  std::map<std::pair<std::string, char>, std::optional<MlpModel>> models;
  std::map<std::pair<std::string, char>, std::string> gaps;

  auto model_for = [&](const GridConfig& grid, FeatureSet set) -> const std::optional<MlpModel>& {
    const auto key = std::make_pair(grid.to_string(), to_char(set));
    auto it = models.find(key);
    if (it != models.end()) return it->second;
    if (log) *log << "training " << key.first << " feature set " << key.second << '\n';
    std::optional<MlpModel> model;
    try {
      TrainConfig tc = cfg.train;
      tc.feature_set = set;
      model = train(mlp_init(grid, cfg.mlp, cfg.model_seed), samples, grid, tc).model;
    } catch (const Error& e) {
      gaps[key] = e.what();
    }
    return models.emplace(key, std::move(model)).first->second;
  };

  AblationReport report;
  auto add_row = [&](const std::string& sweep, const GridConfig& grid, double eta, FeatureSet set) {
    AblationRow row;
    row.sweep = sweep;
    row.grid = grid;
    row.eta = eta;
    row.feature_set = set;
    const auto& model = model_for(grid, set);
    if (!model) {
      row.gap = "no model: " + gaps[{grid.to_string(), to_char(set)}];
    } else {
      EvalConfig ec = cfg.eval;
      ec.grid = grid;
      ec.drop_eta = eta;
      try {
        row.report = evaluate(*model, test_data, ec);
      } catch (const Error& e) {
        row.gap = e.what();
      }
    }
    if (log) *log << sweep << ' ' << grid.to_string() << " eta " << eta << " set " << to_char(set) << " done\n";
    report.rows.push_back(std::move(row));
  };
  for (const auto& grid : cfg.grids) {
    for (double eta : cfg.etas) add_row("grid", grid, eta, FeatureSet::kA);
  }
  for (FeatureSet set : cfg.feature_sets) add_row("feature", cfg.feature_grid, 0.0, set);
  return report;
}

std::string ablation_to_json(const AblationReport& report) {
  ordered_json rows = ordered_json::array();
  for (const auto& r : report.rows) {
    ordered_json row = {{"sweep", r.sweep},
                        {"grid", r.grid.to_string()},
                        {"eta", r.eta},
                        {"feature_set", std::string(1, to_char(r.feature_set))}};
    if (r.report) {
      row["result"] = aggregate_json(*r.report);
    } else {
      row["gap"] = r.gap;
    }
    rows.push_back(std::move(row));
  }
  return ordered_json({{"format", "dime-ablation"}, {"rows", std::move(rows)}}).dump(1);
}

void write_ablation_csv(const AblationReport& report, std::ostream& out) {
  out << "sweep,grid,eta,feature_set,avg_ec,avg_e,avg_estar,rho,gamma,measured_eta,skipped,gap\n";
  out << std::setprecision(17);
  for (const auto& r : report.rows) {
    out << r.sweep << ',' << r.grid.to_string() << ',' << r.eta << ',' << to_char(r.feature_set) << ',';
    if (r.report) {
      const EvalReport& e = *r.report;
      out << e.avg_ec << ',' << e.avg_e << ',' << e.avg_estar << ',' << csv_value(e.rho) << ',' << e.gamma << ','
          << e.eta << ',' << e.skipped << ",\n";
    } else {
      out << ",,,,,,,\"" << r.gap << "\"\n";
    }
  }
}

void print_ablation_table(const AblationReport& report, std::ostream& out) {
  const auto flags = out.flags();
  out << std::fixed << std::setprecision(4);
  out << std::setw(8) << "sweep" << std::setw(7) << "grid" << std::setw(6) << "eta" << std::setw(5) << "set"
      << std::setw(10) << "Avg(e_c)" << std::setw(10) << "Avg(e)" << std::setw(10) << "Avg(e*)" << std::setw(9)
      << "rho" << std::setw(8) << "gamma" << '\n';
  for (const auto& r : report.rows) {
    out << std::setw(8) << r.sweep << std::setw(7) << r.grid.to_string() << std::setw(6) << std::setprecision(1)
        << r.eta << std::setprecision(4) << std::setw(5) << to_char(r.feature_set);
    if (r.report) {
      const EvalReport& e = *r.report;
      out << std::setw(10) << e.avg_ec << std::setw(10) << e.avg_e << std::setw(10) << e.avg_estar << std::setw(9)
          << (e.rho ? *e.rho : std::numeric_limits<double>::quiet_NaN()) << std::setw(8) << e.gamma << '\n';
    } else {
      out << "  gap: " << r.gap << '\n';
    }
  }
  out.flags(flags);
}

}  // namespace dime
