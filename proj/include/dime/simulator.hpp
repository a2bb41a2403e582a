#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dime/geometry.hpp"

namespace dime {

/// Four planar checkerboards on distinct planes. Vertices are expressed in the
/// rig frame (mm); the rig faces a camera on its -z side.
struct RigSpec {
  int board_rows = 8;  // inner vertices along the board's y axis
  int board_cols = 10;  // inner vertices along the board's x axis
  double cell_size = 22.0;
  /// board frame -> rig frame
  std::vector<PoseD> board_poses;

  static RigSpec standard();
  std::vector<Eigen::Vector3d> vertices() const;
  int vertex_count() const { return static_cast<int>(board_poses.size()) * board_rows * board_cols; }
  /// Stable hex digest of the layout.
  std::string hash() const;
};

/// Latent lens actuation: two tilts (rad) and an axial shift (mm).
struct LensState {
  Eigen::Vector2d tilt = Eigen::Vector2d::Zero();
  double shift_z = 0.0;
};

/// Parameters of the synthetic lens-state -> intrinsics map
///   cx = cx0 + gain fx0 tan(tilt_y),  cy = cy0 + gain fy0 tan(tilt_x),
///   fx = fx0 (1 + shift_z / z0),      fy = fy0 (1 + shift_z / z0).
struct ManifoldConfig {
  double tilt_max = 0.0175;  // ~1 degree
  double shift_max = 0.008;
  double gain = 2.8;
  double z0 = 4.0;
};

Intrinsics<double> k_manifold(const IntrinsicsD& kc, const LensState& lens, const ManifoldConfig& mcfg);

/// Upper bound on |dK| / |d lens| over the admissible lens box.
double manifold_lipschitz(const IntrinsicsD& kc, const ManifoldConfig& mcfg);

LensState sample_lens(const ManifoldConfig& mcfg, std::mt19937_64& rng);

/// Prior intrinsics as the mean of k_manifold(nominal, .) over random lens states.
IntrinsicsD average_intrinsics(const IntrinsicsD& nominal, const ManifoldConfig& mcfg, int samples,
                               std::mt19937_64& rng);

struct SimConfig {
  int image_width = 4032;
  int image_height = 3024;
  IntrinsicsD nominal{3000.0, 3000.0, 2016.0, 1512.0};
  ManifoldConfig manifold;
  double shell_min = 400.0;
  double shell_max = 800.0;
  /// Half-angle of the cone of viewing directions around the rig axis (rad).
  double view_cone = 0.25;
  double look_at_jitter = 40.0;
  double roll_max = 0.15;
  /// Keep every projected vertex at least this far from the image border (px).
  double border_margin = 20.0;
  int max_retries = 1000;
  int prior_samples = 1000;
  /// Seed of the lens draws averaged into K_c; datasets sharing it share K_c.
  std::uint64_t prior_seed = 0;
};

struct NoiseRecord {
  double sigma_2d = 0.0;
  double sigma_3d = 0.0;
  /// Number of correspondences kept after dropping; 0 means none dropped.
  int keep = 0;

  bool operator==(const NoiseRecord&) const = default;
};

struct SimFrame {
  /// Pixels with their 3D points in the K_c camera frame {C0}.
  CorrespondenceSet corrs;
  IntrinsicsD k_true;
  IntrinsicsD kc;
  LensState lens;
  /// rig -> true camera
  PoseD camera_pose;
  /// {C0} -> true camera; noiseless pixels are project(k_true, c0_to_camera, X).
  PoseD c0_to_camera;
  NoiseRecord noise;
};

SimFrame sample_frame(const RigSpec& rig, const IntrinsicsD& kc, const SimConfig& cfg, std::mt19937_64& rng);

/// Same as sample_frame with an explicit lens state.
SimFrame sample_frame(const RigSpec& rig, const IntrinsicsD& kc, const SimConfig& cfg, const LensState& lens,
                      std::mt19937_64& rng);

SimFrame inject_noise(const SimFrame& frame, double sigma_2d, double sigma_3d, std::mt19937_64& rng);

SimFrame drop_points(const SimFrame& frame, int keep, std::mt19937_64& rng);

/// Uniform subset without replacement, order preserved.
CorrespondenceSet drop_points(const CorrespondenceSet& corrs, int keep, std::mt19937_64& rng);

/// Independent per-frame stream seeds derived from one master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace dime
