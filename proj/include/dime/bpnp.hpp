#pragma once

#include <optional>

#include <Eigen/Core>

#include "dime/geometry.hpp"

namespace dime {

/// Which pose Hessian the implicit derivative uses. Gauss-Newton drops the
/// residual-weighted second derivatives; both agree at zero-residual optima.
enum class HessianMode { kGaussNewton, kExact };

/// Required bound on the gradient of the per-point mean PnP objective before
/// the implicit function theorem is applied.
inline constexpr double kStationarityTol = 1e-6;

struct ReprojectionLoss {
  /// Sum over points of the squared Mahalanobis reprojection error.
  double value = 0.0;
  Eigen::Vector4d grad_k = Eigen::Vector4d::Zero();
  /// Gradient in left-perturbation tangent coordinates (w, v).
  Vector6d grad_pose = Vector6d::Zero();
};

ReprojectionLoss loss_reprojection(const IntrinsicsD& k, const PoseD& pose, const CorrespondenceSet& corrs,
                                   const Eigen::Matrix2d& covariance = Eigen::Matrix2d::Identity());

/// Pose layer forward pass. Identical to solve_pnp; the returned solution is
/// the cache that bpnp_backward expects.
PnpSolution bpnp_forward(const IntrinsicsD& k, const CorrespondenceSet& corrs, const PnpConfig& cfg = {},
                         const std::optional<PoseD>& init = std::nullopt);

/// Second-order blocks of the PnP objective (sum of squared whitened
/// residuals) at a pose: gradient and Hessian in the pose, and the mixed
/// pose/intrinsics block.
struct PnpCurvature {
  Vector6d grad_pose = Vector6d::Zero();
  Eigen::Matrix<double, 6, 6> pose_pose = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 4> pose_k = Eigen::Matrix<double, 6, 4>::Zero();
};

PnpCurvature pnp_curvature(const IntrinsicsD& k, const PoseD& pose, const CorrespondenceSet& corrs,
                           const PnpConfig& cfg, HessianMode mode);

/// Pulls a pose gradient back to the intrinsics through the PnP optimum:
/// grad_k = -(d2L/dpose dK)^T H^-1 grad_pose.
///
/// Throws InvalidArgument if pose_star is not stationary (see
/// kStationarityTol) and SingularHessian when the pose Hessian has a scaled
/// condition number above 1e12.
Eigen::Vector4d bpnp_backward(const IntrinsicsD& k, const CorrespondenceSet& corrs, const PoseD& pose_star,
                              const Vector6d& grad_pose, const PnpConfig& cfg = {},
                              HessianMode mode = HessianMode::kGaussNewton);

/// Mean-over-points stationarity measure used by bpnp_backward.
double stationarity(const IntrinsicsD& k, const CorrespondenceSet& corrs, const PoseD& pose,
                    const PnpConfig& cfg = {});

}  // namespace dime
