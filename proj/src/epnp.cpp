// EPnP: express every 3D point as a barycentric combination of four control
// points, recover the control points in the camera frame from the null space
// of a 2n x 12 system, then align the two point clouds.

#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "dime/geometry.hpp"

namespace dime {
namespace {

using Matrix6x10 = Eigen::Matrix<double, 6, 10>;
using Vector6x1 = Eigen::Matrix<double, 6, 1>;
using Matrix12 = Eigen::Matrix<double, 12, 12>;

constexpr std::array<std::array<int, 2>, 6> kPairs = {{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

struct NullSpace {
  // basis[k] holds the four control points (stacked 12-vector) of null vector k,
  // k = 0 being the direction with the smallest singular value.
  std::array<Eigen::Matrix<double, 12, 1>, 4> basis;
};

Eigen::Vector3d control_point(const Eigen::Matrix<double, 12, 1>& v, int j) {
  return v.segment<3>(3 * j);
}

// Rows follow the beta product ordering
// [B11 B12 B22 B13 B23 B33 B14 B24 B34 B44].
Matrix6x10 distance_constraints(const NullSpace& ns) {
  Matrix6x10 l;
  for (int r = 0; r < 6; ++r) {
    std::array<Eigen::Vector3d, 4> dv;
    for (int k = 0; k < 4; ++k) {
      dv[k] = control_point(ns.basis[k], kPairs[r][0]) - control_point(ns.basis[k], kPairs[r][1]);
    }
    l(r, 0) = dv[0].dot(dv[0]);
    l(r, 1) = 2.0 * dv[0].dot(dv[1]);
    l(r, 2) = dv[1].dot(dv[1]);
    l(r, 3) = 2.0 * dv[0].dot(dv[2]);
    l(r, 4) = 2.0 * dv[1].dot(dv[2]);
    l(r, 5) = dv[2].dot(dv[2]);
    l(r, 6) = 2.0 * dv[0].dot(dv[3]);
    l(r, 7) = 2.0 * dv[1].dot(dv[3]);
    l(r, 8) = 2.0 * dv[2].dot(dv[3]);
    l(r, 9) = dv[3].dot(dv[3]);
  }
  return l;
}

template <int Cols>
Eigen::Matrix<double, Cols, 1> least_squares(const Eigen::Matrix<double, 6, Cols>& a, const Vector6x1& b) {
  return a.completeOrthogonalDecomposition().solve(b);
}

Eigen::Vector4d betas_from_one(const Matrix6x10& l, const Vector6x1& rho) {
  Eigen::Matrix<double, 6, 4> a;
  a << l.col(0), l.col(1), l.col(3), l.col(6);
  const Eigen::Vector4d b = least_squares<4>(a, rho);
  Eigen::Vector4d betas;
  const double s = b[0] < 0.0 ? -1.0 : 1.0;
  betas[0] = std::sqrt(std::abs(b[0]));
  if (betas[0] == 0.0) return Eigen::Vector4d::Zero();
  betas.tail<3>() = s * b.tail<3>() / betas[0];
  return betas;
}

Eigen::Vector4d betas_from_two(const Matrix6x10& l, const Vector6x1& rho) {
  const Eigen::Vector3d b = least_squares<3>(Eigen::Matrix<double, 6, 3>(l.leftCols<3>()), rho);
  Eigen::Vector4d betas = Eigen::Vector4d::Zero();
  if (b[0] < 0.0) {
    betas[0] = std::sqrt(-b[0]);
    betas[1] = b[2] < 0.0 ? std::sqrt(-b[2]) : 0.0;
  } else {
    betas[0] = std::sqrt(b[0]);
    betas[1] = b[2] > 0.0 ? std::sqrt(b[2]) : 0.0;
  }
  if (b[1] < 0.0) betas[0] = -betas[0];
  return betas;
}

Eigen::Vector4d betas_from_three(const Matrix6x10& l, const Vector6x1& rho) {
  const Eigen::Matrix<double, 5, 1> b = least_squares<5>(Eigen::Matrix<double, 6, 5>(l.leftCols<5>()), rho);
  Eigen::Vector4d betas = Eigen::Vector4d::Zero();
  if (b[0] < 0.0) {
    betas[0] = std::sqrt(-b[0]);
    betas[1] = b[2] < 0.0 ? std::sqrt(-b[2]) : 0.0;
  } else {
    betas[0] = std::sqrt(b[0]);
    betas[1] = b[2] > 0.0 ? std::sqrt(b[2]) : 0.0;
  }
  if (b[1] < 0.0) betas[0] = -betas[0];
  if (betas[0] != 0.0) betas[2] = b[3] / betas[0];
  return betas;
}

// Gauss-Newton on the six inter-control-point distance constraints.
void refine_betas(const Matrix6x10& l, const Vector6x1& rho, Eigen::Vector4d& betas) {
  for (int iter = 0; iter < 5; ++iter) {
    const Eigen::Vector4d& x = betas;
    Eigen::Matrix<double, 10, 1> products;
    products << x[0] * x[0], x[0] * x[1], x[1] * x[1], x[0] * x[2], x[1] * x[2], x[2] * x[2],
        x[0] * x[3], x[1] * x[3], x[2] * x[3], x[3] * x[3];
    Eigen::Matrix<double, 6, 4> jac;
    for (int r = 0; r < 6; ++r) {
      jac(r, 0) = 2 * l(r, 0) * x[0] + l(r, 1) * x[1] + l(r, 3) * x[2] + l(r, 6) * x[3];
      jac(r, 1) = l(r, 1) * x[0] + 2 * l(r, 2) * x[1] + l(r, 4) * x[2] + l(r, 7) * x[3];
      jac(r, 2) = l(r, 3) * x[0] + l(r, 4) * x[1] + 2 * l(r, 5) * x[2] + l(r, 8) * x[3];
      jac(r, 3) = l(r, 6) * x[0] + l(r, 7) * x[1] + l(r, 8) * x[2] + 2 * l(r, 9) * x[3];
    }
    const Vector6x1 residual = rho - l * products;
    const Eigen::Vector4d step = jac.colPivHouseholderQr().solve(residual);
    if (!step.allFinite()) return;
    betas += step;
  }
}

// Rigid alignment camera = R * world + t (no scale).
PoseD align(const std::vector<Eigen::Vector3d>& world, const std::vector<Eigen::Vector3d>& camera) {
  Eigen::Vector3d mw = Eigen::Vector3d::Zero();
  Eigen::Vector3d mc = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < world.size(); ++i) {
    mw += world[i];
    mc += camera[i];
  }
  mw /= static_cast<double>(world.size());
  mc /= static_cast<double>(world.size());
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < world.size(); ++i) {
    h += (camera[i] - mc) * (world[i] - mw).transpose();
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Eigen::Matrix3d r = svd.matrixU() * d * svd.matrixV().transpose();
  return PoseD(r, Eigen::Vector3d(mc - r * mw));
}

double total_error(const IntrinsicsD& k, const PoseD& pose, const CorrespondenceSet& corrs) {
  double sum = 0.0;
  for (const auto& c : corrs) {
    const Eigen::Vector3d p = pose * c.point;
    if (!(p.z() > kMinDepth)) return std::numeric_limits<double>::infinity();
    sum += (project_camera(k, p) - c.pixel).norm();
  }
  return sum;
}

}  // namespace

PoseD epnp(const IntrinsicsD& k, const CorrespondenceSet& corrs) {
  const std::size_t n = corrs.size();
  if (n < 6) {
    throw Error(ErrorCode::kDegenerateConfiguration, "EPnP needs at least 6 correspondences");
  }

  // Control points from the principal axes of the 3D points.
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& c : corrs) centroid += c.point;
  centroid /= static_cast<double>(n);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& c : corrs) {
    const Eigen::Vector3d d = c.point - centroid;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> pca(cov);
  const Eigen::Vector3d ev = pca.eigenvalues();
  if (!(ev(0) > 1e-10 * ev(2))) {
    throw Error(ErrorCode::kDegenerateConfiguration, "3D points are coplanar or collinear");
  }
  std::array<Eigen::Vector3d, 4> world_ctrl;
  world_ctrl[0] = centroid;
  Eigen::Matrix3d basis;
  for (int j = 0; j < 3; ++j) {
    basis.col(j) = std::sqrt(ev(2 - j)) * pca.eigenvectors().col(2 - j);
    world_ctrl[j + 1] = centroid + basis.col(j);
  }
  const Eigen::Matrix3d basis_inv = basis.inverse();

  std::vector<Eigen::Vector4d> alphas(n);
  Eigen::Matrix<double, Eigen::Dynamic, 12> m(2 * n, 12);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d a = basis_inv * (corrs[i].point - centroid);
    alphas[i] << 1.0 - a.sum(), a;
    const double u = corrs[i].pixel.x();
    const double v = corrs[i].pixel.y();
    for (int j = 0; j < 4; ++j) {
      const double aj = alphas[i][j];
      m(2 * i, 3 * j) = aj * k.fx;
      m(2 * i, 3 * j + 1) = 0.0;
      m(2 * i, 3 * j + 2) = aj * (k.cx - u);
      m(2 * i + 1, 3 * j) = 0.0;
      m(2 * i + 1, 3 * j + 1) = aj * k.fy;
      m(2 * i + 1, 3 * j + 2) = aj * (k.cy - v);
    }
  }
  const Matrix12 mtm = m.transpose() * m;
  Eigen::SelfAdjointEigenSolver<Matrix12> eig(mtm);
  NullSpace ns;
  for (int kk = 0; kk < 4; ++kk) ns.basis[kk] = eig.eigenvectors().col(kk);

  const Matrix6x10 l = distance_constraints(ns);
  Vector6x1 rho;
  for (int r = 0; r < 6; ++r) {
    rho(r) = (world_ctrl[kPairs[r][0]] - world_ctrl[kPairs[r][1]]).squaredNorm();
  }

  std::vector<Eigen::Vector3d> world(n);
  for (std::size_t i = 0; i < n; ++i) world[i] = corrs[i].point;

  double best_error = std::numeric_limits<double>::infinity();
  PoseD best;
  for (auto* estimate : {&betas_from_one, &betas_from_two, &betas_from_three}) {
    Eigen::Vector4d betas = estimate(l, rho);
    refine_betas(l, rho, betas);
    if (!betas.allFinite()) continue;

    Eigen::Matrix<double, 12, 1> ctrl = Eigen::Matrix<double, 12, 1>::Zero();
    for (int kk = 0; kk < 4; ++kk) ctrl += betas[kk] * ns.basis[kk];
    std::vector<Eigen::Vector3d> camera(n);
    double mean_depth = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      camera[i].setZero();
      for (int j = 0; j < 4; ++j) camera[i] += alphas[i][j] * control_point(ctrl, j);
      mean_depth += camera[i].z();
    }
    if (mean_depth < 0.0) {
      for (auto& p : camera) p = -p;
    }
    const PoseD pose = align(world, camera);
    const double err = total_error(k, pose, corrs);
    if (err < best_error) {
      best_error = err;
      best = pose;
    }
  }
  if (!std::isfinite(best_error)) {
    throw Error(ErrorCode::kDegenerateConfiguration, "EPnP found no pose with all points in front");
  }
  return best;
}

}  // namespace dime
