#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dime/types.hpp"

namespace dime {

using Vector5d = Eigen::Matrix<double, 5, 1>;

inline constexpr int kChannels = 5;

/// Per-correspondence discrepancy feature (dx, dy, X, Y, 1/Z) plus the pixel
/// that decides its grid cell.
struct PointFeature {
  Eigen::Vector2d pmd = Eigen::Vector2d::Zero();
  double x3d = 0.0;
  double y3d = 0.0;
  double inv_depth = 0.0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();

  Vector5d values() const {
    Vector5d v;
    v << pmd.x(), pmd.y(), x3d, y3d, inv_depth;
    return v;
  }
};

/// Regular grid over the image. `cols` x `rows` matches the usual "8x6"
/// notation, i.e. 504 px square cells on a 4032x3024 image.
struct GridConfig {
  int cols = 8;
  int rows = 6;
  int image_width = 4032;
  int image_height = 3024;

  int cell_count() const { return cols * rows; }
  int feature_size() const { return kChannels * cols * rows; }
  void validate() const;
  /// Parses "CxR", e.g. "8x6".
  static GridConfig parse(const std::string& text, int image_width = 4032, int image_height = 3024);
  std::string to_string() const;
  /// Row-major cell index of a pixel, or nullopt when the pixel is outside
  /// [0, width] x [0, height]. Cells are half-open except on the far image edge.
  std::optional<int> cell_of(const Eigen::Vector2d& pixel) const;
};

struct GridFeatureMap {
  GridConfig grid;
  /// Row-major over (row, col); empty cells hold nullopt.
  std::vector<std::optional<Vector5d>> cells;
  std::vector<int> counts;

  int occupied() const;
};

/// Projection model discrepancy: K_c applied to (X/Z, Y/Z, 1) minus the
/// observed pixel. The 3D point is already in the K_c camera frame.
Eigen::Vector2d compute_pmd(const IntrinsicsD& kc, const CorrespondenceD& corr);

std::vector<PointFeature> build_point_features(const IntrinsicsD& kc, const CorrespondenceSet& corrs);

/// Averages the point features per cell. Members of a cell are summed in a
/// canonical order so the result does not depend on input order.
GridFeatureMap gridify(const std::vector<PointFeature>& features, const GridConfig& grid);

/// Row-major concatenation of the cells, five channels each, zeros for empty cells.
Eigen::VectorXd flatten(const GridFeatureMap& map);

/// flatten(gridify(build_point_features(kc, corrs))).
Eigen::VectorXd make_feature(const IntrinsicsD& kc, const CorrespondenceSet& corrs, const GridConfig& grid);

struct Occupancy {
  double gamma = 0.0;  // occupied fraction of cells before removal
  double eta = 0.0;    // fraction of the occupied cells that were emptied
};

Occupancy occupancy_metrics(const GridFeatureMap& before, const GridFeatureMap& after, const GridConfig& grid);

/// Empties round(eta * m_p) uniformly chosen occupied cells by dropping every
/// correspondence that falls in them. Relative order of survivors is kept.
CorrespondenceSet empty_cells(const CorrespondenceSet& corrs, const GridConfig& grid, double eta,
                              std::mt19937_64& rng);

/// Channel subsets: A all, B PMD, C PMD + 1/Z, D PMD + X,Y, E X,Y,1/Z.
enum class FeatureSet { kA, kB, kC, kD, kE };

FeatureSet parse_feature_set(const std::string& text);
char to_char(FeatureSet set);
Vector5d channel_mask(FeatureSet set);

/// Per-channel multipliers 1 / RMS over occupied cells. No offset is applied,
/// so zero features stay zero. Channels that are identically zero get 1.
Vector5d fit_channel_scale(const std::vector<Eigen::VectorXd>& features);

/// Multiplies channel c of every cell by scale[c].
Eigen::VectorXd scale_channels(const Eigen::VectorXd& y, const Vector5d& scale);

}  // namespace dime
