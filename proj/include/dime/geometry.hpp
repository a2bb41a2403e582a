#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "dime/error.hpp"
#include "dime/types.hpp"

namespace dime {

/// Camera-frame points closer than this (mm) are rejected as behind the camera.
inline constexpr double kMinDepth = 1e-6;

/// Projects a point already expressed in the camera frame.
template <typename Scalar>
Vector2<Scalar> project_camera(const Intrinsics<Scalar>& k, const Vector3<Scalar>& p) {
  if (!(p.z() > Scalar(kMinDepth))) {
    throw Error(ErrorCode::kNonPositiveDepth, "point has non-positive depth");
  }
  const Scalar inv_z = Scalar(1) / p.z();
  return Vector2<Scalar>(k.fx * p.x() * inv_z + k.cx, k.fy * p.y() * inv_z + k.cy);
}

/// Pinhole projection x = lambda K [R|t] X with lambda = 1 / depth.
template <typename Scalar>
Vector2<Scalar> project(const Intrinsics<Scalar>& k, const Pose<Scalar>& pose,
                        const Vector3<Scalar>& point) {
  return project_camera(k, Vector3<Scalar>(pose * point));
}

struct PnpConfig {
  Eigen::Matrix2d pixel_covariance = Eigen::Matrix2d::Identity();
  int max_iterations = 100;
  double convergence_tol = 1e-10;
  double damping_init = 1e-3;

  /// Throws InvalidArgument unless the covariance is SPD and the budgets are positive.
  void validate() const;
  /// W with W^T W = inverse(pixel_covariance).
  Eigen::Matrix2d whitening() const;
};

struct ReprojectionErrors {
  std::vector<double> per_point;
  double mean = 0.0;
};

/// Per-point Mahalanobis reprojection error. NonPositiveDepth carries the
/// offending correspondence index.
ReprojectionErrors reprojection_errors(const IntrinsicsD& k, const PoseD& pose,
                                       const CorrespondenceSet& corrs, const PnpConfig& cfg = {});

/// Whitened residual of one correspondence and its Jacobians with respect to
/// the left pose perturbation (w, v) and the intrinsics (fx, fy, cx, cy).
struct PointLinearization {
  Eigen::Vector2d residual;
  Eigen::Matrix<double, 2, 6> d_pose;
  Eigen::Matrix<double, 2, 4> d_k;
  Eigen::Vector3d camera_point;
};

PointLinearization linearize(const IntrinsicsD& k, const PoseD& pose, const CorrespondenceD& c,
                             const Eigen::Matrix2d& whitening);

struct PnpSolution {
  PoseD pose;
  int iterations = 0;
  /// Sum of squared Mahalanobis residuals at pose.
  double cost = 0.0;
  /// Cost after every accepted step, starting with the initial cost.
  std::vector<double> cost_history;
};

/// EPnP closed-form pose. Needs >= 6 correspondences whose 3D points are not
/// coplanar.
PoseD epnp(const IntrinsicsD& k, const CorrespondenceSet& corrs);

/// Minimizes the Mahalanobis reprojection error over the 6 pose DoF with
/// Levenberg-Marquardt. Without an initial pose the solver starts from EPnP.
///
/// Throws DegenerateConfiguration for too few points or rank-deficient normal
/// equations and NotConvergedError (carrying the best pose) when the iteration
/// budget runs out.
PnpSolution solve_pnp(const IntrinsicsD& k, const CorrespondenceSet& corrs, const PnpConfig& cfg = {},
                      const std::optional<PoseD>& init = std::nullopt);

struct MleSolution {
  IntrinsicsD k;
  PoseD pose;
  double mean_error = 0.0;
  int iterations = 0;
};

/// Joint refinement of intrinsics and pose (10 DoF) starting from k_init and
/// the pose solve_pnp finds for it.
MleSolution mle_refine_intrinsics(const IntrinsicsD& k_init, const CorrespondenceSet& corrs,
                                  const PnpConfig& cfg = {});

}  // namespace dime
