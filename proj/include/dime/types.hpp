#pragma once

#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace dime {

template <typename Scalar>
using Vector2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Vector4 = Eigen::Matrix<Scalar, 4, 1>;
template <typename Scalar>
using Vector6 = Eigen::Matrix<Scalar, 6, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;

using Vector6d = Vector6<double>;

/// 4-DoF pinhole intrinsics. Corrections (dK) use the same layout
/// (dfx, dfy, dcx, dcy) as a plain 4-vector.
template <typename Scalar>
struct Intrinsics {
  Scalar fx{1};
  Scalar fy{1};
  Scalar cx{0};
  Scalar cy{0};

  Matrix3<Scalar> matrix() const {
    Matrix3<Scalar> k;
    k << fx, Scalar(0), cx, Scalar(0), fy, cy, Scalar(0), Scalar(0), Scalar(1);
    return k;
  }

  Vector4<Scalar> vector() const { return Vector4<Scalar>(fx, fy, cx, cy); }

  static Intrinsics from_vector(const Vector4<Scalar>& v) {
    return Intrinsics{v[0], v[1], v[2], v[3]};
  }

  bool valid() const { return fx > Scalar(0) && fy > Scalar(0); }

  template <typename Other>
  Intrinsics<Other> cast() const {
    return Intrinsics<Other>{Other(fx), Other(fy), Other(cx), Other(cy)};
  }

  friend Intrinsics operator+(const Intrinsics& k, const Vector4<Scalar>& delta) {
    return from_vector(k.vector() + delta);
  }

  bool operator==(const Intrinsics&) const = default;
};

/// so(3) hat operator.
template <typename Scalar>
Matrix3<Scalar> hat(const Vector3<Scalar>& w) {
  Matrix3<Scalar> m;
  m << Scalar(0), -w.z(), w.y(), w.z(), Scalar(0), -w.x(), -w.y(), w.x(), Scalar(0);
  return m;
}

template <typename Scalar>
Eigen::Quaternion<Scalar> so3_exp(const Vector3<Scalar>& w) {
  using std::sqrt;
  const Scalar theta = w.norm();
  if (theta < Scalar(1e-12)) {
    Eigen::Quaternion<Scalar> q(Scalar(1), w.x() / Scalar(2), w.y() / Scalar(2), w.z() / Scalar(2));
    return q.normalized();
  }
  return Eigen::Quaternion<Scalar>(Eigen::AngleAxis<Scalar>(theta, w / theta));
}

template <typename Scalar>
Vector3<Scalar> so3_log(const Eigen::Quaternion<Scalar>& q) {
  Eigen::AngleAxis<Scalar> aa(q.normalized());
  Scalar angle = aa.angle();
  // AngleAxis reports angles in [0, 2pi); fold into [0, pi].
  if (angle > Scalar(EIGEN_PI)) {
    return -(Scalar(2 * EIGEN_PI) - angle) * aa.axis();
  }
  return angle * aa.axis();
}

/// Rigid transform p_cam = R * p_world + t.
///
/// Local updates are applied on the left: for xi = (w, v),
/// (R, t) <- (Exp(w) R, Exp(w) t + v). All pose gradients in this library are
/// expressed in these tangent coordinates.
template <typename Scalar>
class Pose {
 public:
  Pose() : rotation_(Eigen::Quaternion<Scalar>::Identity()), translation_(Vector3<Scalar>::Zero()) {}
  Pose(const Eigen::Quaternion<Scalar>& q, const Vector3<Scalar>& t)
      : rotation_(q.normalized()), translation_(t) {}
  Pose(const Matrix3<Scalar>& r, const Vector3<Scalar>& t)
      : rotation_(Eigen::Quaternion<Scalar>(r).normalized()), translation_(t) {}

  static Pose identity() { return Pose(); }

  const Eigen::Quaternion<Scalar>& quaternion() const { return rotation_; }
  Matrix3<Scalar> rotation() const { return rotation_.toRotationMatrix(); }
  const Vector3<Scalar>& translation() const { return translation_; }

  Vector3<Scalar> operator*(const Vector3<Scalar>& p) const { return rotation_ * p + translation_; }

  Pose operator*(const Pose& other) const {
    return Pose(rotation_ * other.rotation_, rotation_ * other.translation_ + translation_);
  }

  Pose inverse() const {
    const Eigen::Quaternion<Scalar> qi = rotation_.conjugate();
    return Pose(qi, -(qi * translation_));
  }

  Pose retract(const Vector6<Scalar>& xi) const {
    const Eigen::Quaternion<Scalar> dq = so3_exp<Scalar>(xi.template head<3>());
    return Pose(dq * rotation_, dq * translation_ + xi.template tail<3>());
  }

  template <typename Other>
  Pose<Other> cast() const {
    return Pose<Other>(rotation_.template cast<Other>(), translation_.template cast<Other>());
  }

 private:
  Eigen::Quaternion<Scalar> rotation_;
  Vector3<Scalar> translation_;
};

/// Geodesic angle between two rotations, in radians.
template <typename Scalar>
Scalar rotation_distance(const Pose<Scalar>& a, const Pose<Scalar>& b) {
  return a.quaternion().angularDistance(b.quaternion());
}

template <typename Scalar>
struct Correspondence {
  Vector2<Scalar> pixel = Vector2<Scalar>::Zero();
  Vector3<Scalar> point = Vector3<Scalar>::Zero();

  bool operator==(const Correspondence&) const = default;
};

using IntrinsicsD = Intrinsics<double>;
using PoseD = Pose<double>;
using CorrespondenceD = Correspondence<double>;
using CorrespondenceSet = std::vector<CorrespondenceD>;

}  // namespace dime
