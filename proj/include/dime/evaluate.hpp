#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dime/dataset.hpp"
#include "dime/mlp.hpp"

namespace dime {

/// Reprojection-error reduction ratio (ec - e) / (ec - e*). Not clamped.
/// Throws DegenerateBaseline when ec <= e* + 1e-12.
double rho(double avg_ec, double avg_e, double avg_estar);

struct EvalConfig {
  GridConfig grid;
  double sigma_2d = 0.0;
  double sigma_3d = 0.0;
  /// Correspondences kept per frame (0 keeps all).
  int keep = 0;
  /// Fraction of occupied cells emptied per frame.
  double drop_eta = 0.0;
  std::uint64_t seed = 0;
  PnpConfig pnp;

  void validate() const;
};

struct FrameReport {
  std::size_t index = 0;
  int points = 0;
  double avg_ec = 0.0;
  double avg_e = 0.0;
  double avg_estar = 0.0;
  /// Empty when the frame's baseline is degenerate.
  std::optional<double> rho;
  double gamma = 0.0;
  double eta = 0.0;
  IntrinsicsD k_hat;
  IntrinsicsD k_star;
};

struct EvalReport {
  EvalConfig config;
  std::vector<FrameReport> frames;
  double avg_ec = 0.0;
  double avg_e = 0.0;
  double avg_estar = 0.0;
  std::optional<double> rho;
  double gamma = 0.0;
  double eta = 0.0;
  int skipped = 0;
  std::vector<std::string> skip_reasons;

  /// Aggregate rho outside [0, 1].
  bool rho_flagged() const { return rho && (*rho < 0.0 || *rho > 1.0); }
};

/// Per frame: perturb (noise, keep, cell emptying), solve with K_c, infer and
/// re-solve with K-hat, refine K* jointly. Frames that fail are skipped.
EvalReport evaluate(const MlpModel& model, const Dataset& data, const EvalConfig& cfg);

std::string report_to_json(const EvalReport& report);
/// One row per frame then an "all" row.
void write_report_csv(const EvalReport& report, std::ostream& out);
void print_report_table(const EvalReport& report, std::ostream& out);

struct AblationConfig {
  std::vector<GridConfig> grids;
  std::vector<double> etas = {0.0, 0.2, 0.4, 0.6, 0.8};
  std::vector<FeatureSet> feature_sets = {FeatureSet::kA, FeatureSet::kB, FeatureSet::kC, FeatureSet::kD,
                                          FeatureSet::kE};
  /// Grid used for the feature-set sweep.
  GridConfig feature_grid;
  TrainConfig train;
  MlpConfig mlp;
  std::uint64_t model_seed = 0;
  EvalConfig eval;

  /// 16x12, 12x9 and 8x6.
  static AblationConfig standard();
};

struct AblationRow {
  std::string sweep;  // "grid" or "feature"
  GridConfig grid;
  double eta = 0.0;
  FeatureSet feature_set = FeatureSet::kA;
  /// Empty when the configuration has no model or could not be evaluated.
  std::optional<EvalReport> report;
  std::string gap;
};

struct AblationReport {
  std::vector<AblationRow> rows;
};

/// Trains one model per grid and per feature set on `train_data` and scores
/// them on `test_data`. Grid models are scored at every eta.
AblationReport run_ablation(const Dataset& train_data, const Dataset& test_data, const AblationConfig& cfg,
                            std::ostream* log = nullptr);

std::string ablation_to_json(const AblationReport& report);
void write_ablation_csv(const AblationReport& report, std::ostream& out);
void print_ablation_table(const AblationReport& report, std::ostream& out);

}  // namespace dime
