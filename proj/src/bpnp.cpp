#include "dime/bpnp.hpp"

#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace dime {

ReprojectionLoss loss_reprojection(const IntrinsicsD& k, const PoseD& pose, const CorrespondenceSet& corrs,
                                   const Eigen::Matrix2d& covariance) {
  PnpConfig cfg;
  cfg.pixel_covariance = covariance;
  cfg.validate();
  const Eigen::Matrix2d w = cfg.whitening();
  ReprojectionLoss loss;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    PointLinearization lin;
    try {
      lin = linearize(k, pose, corrs[i], w);
    } catch (const Error& e) {
      throw Error(e.code(), "point behind camera", i);
    }
    loss.value += lin.residual.squaredNorm();
    loss.grad_k += 2.0 * lin.d_k.transpose() * lin.residual;
    loss.grad_pose += 2.0 * lin.d_pose.transpose() * lin.residual;
  }
  return loss;
}

PnpSolution bpnp_forward(const IntrinsicsD& k, const CorrespondenceSet& corrs, const PnpConfig& cfg,
                         const std::optional<PoseD>& init) {
  return solve_pnp(k, corrs, cfg, init);
}

PnpCurvature pnp_curvature(const IntrinsicsD& k, const PoseD& pose, const CorrespondenceSet& corrs,
                           const PnpConfig& cfg, HessianMode mode) {
  cfg.validate();
  const Eigen::Matrix2d w = cfg.whitening();
  PnpCurvature out;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    PointLinearization lin;
    try {
      lin = linearize(k, pose, corrs[i], w);
    } catch (const Error& e) {
      throw Error(e.code(), "point behind camera", i);
    }
    out.grad_pose += 2.0 * lin.d_pose.transpose() * lin.residual;
    out.pose_pose += 2.0 * lin.d_pose.transpose() * lin.d_pose;
    out.pose_k += 2.0 * lin.d_pose.transpose() * lin.d_k;
    if (mode == HessianMode::kGaussNewton) continue;

    // Residual-weighted second derivatives of the unwhitened projection.
    const Eigen::Vector2d s = w.transpose() * lin.residual;
    const Eigen::Vector3d& p = lin.camera_point;
    const double iz = 1.0 / p.z();
    const double iz2 = iz * iz;

    Eigen::Matrix<double, 3, 6> dp;
    dp.leftCols<3>() = -hat<double>(p);
    dp.rightCols<3>() = Eigen::Matrix3d::Identity();

    Eigen::Matrix3d hu = Eigen::Matrix3d::Zero();
    hu(0, 2) = hu(2, 0) = -k.fx * iz2;
    hu(2, 2) = 2.0 * k.fx * p.x() * iz2 * iz;
    Eigen::Matrix3d hv = Eigen::Matrix3d::Zero();
    hv(1, 2) = hv(2, 1) = -k.fy * iz2;
    hv(2, 2) = 2.0 * k.fy * p.y() * iz2 * iz;
    const Eigen::Matrix3d hp = s.x() * hu + s.y() * hv;

    const Eigen::RowVector3d du(k.fx * iz, 0.0, -k.fx * p.x() * iz2);
    const Eigen::RowVector3d dv(0.0, k.fy * iz, -k.fy * p.y() * iz2);
    const Eigen::RowVector3d g = s.x() * du + s.y() * dv;

    Eigen::Matrix<double, 6, 6> second = dp.transpose() * hp * dp;
    // d2(Exp(w) p) / dw_a dw_b = (e_a^ e_b^ + e_b^ e_a^) p / 2.
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        const Eigen::Matrix3d ea = hat<double>(Eigen::Vector3d::Unit(a));
        const Eigen::Matrix3d eb = hat<double>(Eigen::Vector3d::Unit(b));
        second(a, b) += g.dot(0.5 * (ea * eb + eb * ea) * p);
      }
    }
    out.pose_pose += 2.0 * second;

    // d/dpose of dpi_u/dfx = X/Z and dpi_v/dfy = Y/Z.
    const Eigen::RowVector3d da(iz, 0.0, -p.x() * iz2);
    const Eigen::RowVector3d db(0.0, iz, -p.y() * iz2);
    out.pose_k.col(0) += 2.0 * s.x() * (da * dp).transpose();
    out.pose_k.col(1) += 2.0 * s.y() * (db * dp).transpose();
  }
  return out;
}

double stationarity(const IntrinsicsD& k, const CorrespondenceSet& corrs, const PoseD& pose, const PnpConfig& cfg) {
  if (corrs.empty()) return 0.0;
  const auto loss = loss_reprojection(k, pose, corrs, cfg.pixel_covariance);
  return loss.grad_pose.norm() / static_cast<double>(corrs.size());
}

Eigen::Vector4d bpnp_backward(const IntrinsicsD& k, const CorrespondenceSet& corrs, const PoseD& pose_star,
                              const Vector6d& grad_pose, const PnpConfig& cfg, HessianMode mode) {
  const PnpCurvature c = pnp_curvature(k, pose_star, corrs, cfg, mode);
  const double n = static_cast<double>(std::max<std::size_t>(corrs.size(), 1));
  if (!(c.grad_pose.norm() / n < kStationarityTol)) {
    throw Error(ErrorCode::kInvalidArgument, "pose is not a stationary point of the PnP objective");
  }
  if (grad_pose.isZero(0.0)) return Eigen::Vector4d::Zero();

  Vector6d d = c.pose_pose.diagonal();
  if ((d.array() <= 0.0).any()) {
    throw Error(ErrorCode::kSingularHessian, "pose Hessian has a non-positive diagonal");
  }
  d = d.cwiseSqrt().cwiseInverse();
  const Eigen::Matrix<double, 6, 6> scaled = d.asDiagonal() * c.pose_pose * d.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(scaled);
  const auto& ev = eig.eigenvalues();
  if (!(ev(0) > 0.0) || ev(5) / ev(0) > 1e12) {
    throw Error(ErrorCode::kSingularHessian, "pose Hessian is singular or indefinite");
  }
  // H^-1 g = D (D H D)^-1 D g
  const Vector6d scaled_rhs = d.cwiseProduct(grad_pose);
  const Vector6d solved =
      eig.eigenvectors() * (eig.eigenvectors().transpose() * scaled_rhs).cwiseQuotient(ev);
  const Vector6d h_inv_g = d.cwiseProduct(solved);
  return -c.pose_k.transpose() * h_inv_g;
}

}  // namespace dime
