#include "dime/geometry.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace dime {

void PnpConfig::validate() const {
  const Eigen::Matrix2d& s = pixel_covariance;
  if (!s.allFinite() || std::abs(s(0, 1) - s(1, 0)) > 1e-12 * (1.0 + s.norm()) || s(0, 0) <= 0.0 ||
      s.determinant() <= 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "pixel covariance must be symmetric positive definite");
  }
  if (max_iterations < 1 || !(convergence_tol > 0.0) || !(damping_init > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "solver budgets must be positive");
  }
}

Eigen::Matrix2d PnpConfig::whitening() const {
  const Eigen::Matrix2d lower = pixel_covariance.llt().matrixL();
  return lower.inverse();
}

ReprojectionErrors reprojection_errors(const IntrinsicsD& k, const PoseD& pose,
                                       const CorrespondenceSet& corrs, const PnpConfig& cfg) {
  cfg.validate();
  const Eigen::Matrix2d w = cfg.whitening();
  ReprojectionErrors out;
  out.per_point.reserve(corrs.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const Eigen::Vector3d p = pose * corrs[i].point;
    if (!(p.z() > kMinDepth)) {
      throw Error(ErrorCode::kNonPositiveDepth, "point behind camera", i);
    }
    const double e = (w * (project_camera(k, p) - corrs[i].pixel)).norm();
    out.per_point.push_back(e);
    sum += e;
  }
  out.mean = corrs.empty() ? 0.0 : sum / static_cast<double>(corrs.size());
  return out;
}

PointLinearization linearize(const IntrinsicsD& k, const PoseD& pose, const CorrespondenceD& c,
                             const Eigen::Matrix2d& whitening) {
  PointLinearization lin;
  const Eigen::Vector3d p = pose * c.point;
  lin.camera_point = p;
  const Eigen::Vector2d projected = project_camera(k, p);
  lin.residual = whitening * (projected - c.pixel);

  const double inv_z = 1.0 / p.z();
  const double a = p.x() * inv_z;
  const double b = p.y() * inv_z;
  Eigen::Matrix<double, 2, 3> d_point;
  d_point << k.fx * inv_z, 0.0, -k.fx * a * inv_z, 0.0, k.fy * inv_z, -k.fy * b * inv_z;

  Eigen::Matrix<double, 2, 6> d_pose;
  d_pose.leftCols<3>() = -d_point * hat<double>(p);
  d_pose.rightCols<3>() = d_point;
  lin.d_pose = whitening * d_pose;

  Eigen::Matrix<double, 2, 4> d_k;
  d_k << a, 0.0, 1.0, 0.0, 0.0, b, 0.0, 1.0;
  lin.d_k = whitening * d_k;
  return lin;
}

namespace {

constexpr double kMaxCondition = 1e12;

template <int N>
using NormalMatrix = Eigen::Matrix<double, N, N>;
template <int N>
using NormalVector = Eigen::Matrix<double, N, 1>;

/// Condition number of the normal matrix after symmetric Jacobi scaling, so that
/// unit choices (pixels vs. radians vs. millimetres) do not dominate.
template <int N>
double scaled_condition(const NormalMatrix<N>& jtj) {
  NormalVector<N> d = jtj.diagonal();
  if ((d.array() <= 0.0).any()) {
    return std::numeric_limits<double>::infinity();
  }
  d = d.cwiseSqrt().cwiseInverse();
  const NormalMatrix<N> scaled = d.asDiagonal() * jtj * d.asDiagonal();
  Eigen::SelfAdjointEigenSolver<NormalMatrix<N>> eig(scaled, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues()(0);
  const double hi = eig.eigenvalues()(N - 1);
  if (!(lo > 0.0)) {
    return std::numeric_limits<double>::infinity();
  }
  return hi / lo;
}

template <typename State>
struct LmOutcome {
  State state;
  int iterations = 0;
  double cost = 0.0;
  bool converged = false;
  std::vector<double> history;
};

/// Levenberg-Marquardt with Marquardt diagonal damping, x10 / /10 on reject /
/// accept. `build` fills J^T J and J^T r and returns the cost; `cost_of` may
/// throw for infeasible candidates, which counts as a rejection.
template <int N, typename State, typename Build, typename CostOf, typename Retract, typename Scale>
LmOutcome<State> levenberg_marquardt(State x, Build build, CostOf cost_of, Retract retract,
                                     Scale step_scale, const PnpConfig& cfg) {
  LmOutcome<State> out;
  NormalMatrix<N> jtj;
  NormalVector<N> jtr;
  double cost = build(x, jtj, jtr);
  out.history.push_back(cost);
  if (scaled_condition<N>(jtj) > kMaxCondition) {
    throw Error(ErrorCode::kDegenerateConfiguration, "rank-deficient normal equations");
  }
  double lambda = cfg.damping_init;
  auto damped_step = [&](const NormalMatrix<N>& h, const NormalVector<N>& g, double lam) {
    NormalMatrix<N> a = h;
    const double floor = 1e-12 * h.diagonal().maxCoeff();
    for (int i = 0; i < N; ++i) {
      a(i, i) += lam * std::max(h(i, i), floor);
    }
    const NormalVector<N> delta = a.ldlt().solve(-g);
    if (!delta.allFinite()) {
      throw Error(ErrorCode::kDegenerateConfiguration, "normal equations could not be solved");
    }
    return delta;
  };
  auto try_cost = [&](const State& s) {
    try {
      return cost_of(s);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kNonPositiveDepth) throw;
    }
    return std::numeric_limits<double>::infinity();
  };
  // Near the optimum the cost change drops below its rounding error, so a few
  // undamped steps are accepted while they shrink the gradient.
  auto polish = [&]() {
    for (int step = 0; step < 5; ++step) {
      const State candidate = retract(x, damped_step(jtj, jtr, 1e-15));
      if (!(try_cost(candidate) <= cost * (1.0 + 1e-12))) return;
      NormalMatrix<N> next_jtj;
      NormalVector<N> next_jtr;
      const double next_cost = build(candidate, next_jtj, next_jtr);
      if (!(next_jtr.norm() < jtr.norm())) return;
      x = candidate;
      cost = next_cost;
      jtj = next_jtj;
      jtr = next_jtr;
      out.history.push_back(cost);
    }
  };
  int iter = 0;
  bool converged = cost == 0.0;
  while (!converged && iter < cfg.max_iterations) {
    ++iter;
    const NormalVector<N> delta = damped_step(jtj, jtr, lambda);
    if (delta.norm() <= cfg.convergence_tol * step_scale(x)) {
      polish();
      converged = true;
      break;
    }
    const State candidate = retract(x, delta);
    const double candidate_cost = try_cost(candidate);
    if (candidate_cost < cost) {
      x = candidate;
      lambda = std::max(lambda / 10.0, 1e-15);
      cost = build(x, jtj, jtr);
      out.history.push_back(cost);
      if (cost == 0.0) converged = true;
    } else {
      lambda *= 10.0;
      // No representable step reduces the cost any further.
      if (lambda > 1e16) {
        polish();
        converged = true;
      }
    }
  }
  if (scaled_condition<N>(jtj) > kMaxCondition) {
    throw Error(ErrorCode::kDegenerateConfiguration, "rank-deficient normal equations at solution");
  }
  out.state = x;
  out.iterations = iter;
  out.cost = cost;
  out.converged = converged;
  return out;
}

double pose_cost(const IntrinsicsD& k, const PoseD& pose, const CorrespondenceSet& corrs,
                 const Eigen::Matrix2d& w) {
  double cost = 0.0;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const Eigen::Vector3d p = pose * corrs[i].point;
    if (!(p.z() > kMinDepth)) {
      throw Error(ErrorCode::kNonPositiveDepth, "point behind camera", i);
    }
    cost += (w * (project_camera(k, p) - corrs[i].pixel)).squaredNorm();
  }
  return cost;
}

struct JointState {
  IntrinsicsD k;
  PoseD pose;
};

}  // namespace

PnpSolution solve_pnp(const IntrinsicsD& k, const CorrespondenceSet& corrs, const PnpConfig& cfg,
                      const std::optional<PoseD>& init) {
  cfg.validate();
  if (!k.valid()) {
    throw Error(ErrorCode::kInvalidArgument, "focal lengths must be positive");
  }
  const std::size_t min_points = init ? 4 : 6;
  if (corrs.size() < min_points) {
    throw Error(ErrorCode::kDegenerateConfiguration, "too few correspondences for PnP");
  }
  const Eigen::Matrix2d w = cfg.whitening();
  const PoseD start = init ? *init : epnp(k, corrs);

  auto build = [&](const PoseD& pose, NormalMatrix<6>& jtj, NormalVector<6>& jtr) {
    jtj.setZero();
    jtr.setZero();
    double cost = 0.0;
    for (std::size_t i = 0; i < corrs.size(); ++i) {
      PointLinearization lin;
      try {
        lin = linearize(k, pose, corrs[i], w);
      } catch (const Error& e) {
        throw Error(e.code(), "point behind camera", i);
      }
      jtj.noalias() += lin.d_pose.transpose() * lin.d_pose;
      jtr.noalias() += lin.d_pose.transpose() * lin.residual;
      cost += lin.residual.squaredNorm();
    }
    return cost;
  };
  auto cost_of = [&](const PoseD& pose) { return pose_cost(k, pose, corrs, w); };
  auto retract = [](const PoseD& pose, const NormalVector<6>& d) { return pose.retract(d); };
  auto scale = [](const PoseD& pose) { return 1.0 + pose.translation().norm(); };

  auto lm = levenberg_marquardt<6>(start, build, cost_of, retract, scale, cfg);
  if (!lm.converged) {
    throw NotConvergedError(lm.state, lm.cost);
  }
  PnpSolution sol;
  sol.pose = lm.state;
  sol.iterations = lm.iterations;
  sol.cost = lm.cost;
  sol.cost_history = std::move(lm.history);
  return sol;
}

MleSolution mle_refine_intrinsics(const IntrinsicsD& k_init, const CorrespondenceSet& corrs,
                                  const PnpConfig& cfg) {
  cfg.validate();
  if (corrs.size() < 8) {
    throw Error(ErrorCode::kDegenerateConfiguration, "joint refinement needs at least 8 correspondences");
  }
  const Eigen::Matrix2d w = cfg.whitening();
  const PnpSolution pnp = solve_pnp(k_init, corrs, cfg);

  auto build = [&](const JointState& s, NormalMatrix<10>& jtj, NormalVector<10>& jtr) {
    jtj.setZero();
    jtr.setZero();
    double cost = 0.0;
    Eigen::Matrix<double, 2, 10> j;
    for (std::size_t i = 0; i < corrs.size(); ++i) {
      const PointLinearization lin = linearize(s.k, s.pose, corrs[i], w);
      j.leftCols<4>() = lin.d_k;
      j.rightCols<6>() = lin.d_pose;
      jtj.noalias() += j.transpose() * j;
      jtr.noalias() += j.transpose() * lin.residual;
      cost += lin.residual.squaredNorm();
    }
    return cost;
  };
  auto cost_of = [&](const JointState& s) {
    if (!s.k.valid()) return std::numeric_limits<double>::infinity();
    return pose_cost(s.k, s.pose, corrs, w);
  };
  auto retract = [](const JointState& s, const NormalVector<10>& d) {
    return JointState{s.k + Eigen::Vector4d(d.head<4>()), s.pose.retract(d.tail<6>())};
  };
  auto scale = [](const JointState& s) {
    return 1.0 + s.pose.translation().norm() + s.k.vector().norm();
  };

  auto lm = levenberg_marquardt<10>(JointState{k_init, pnp.pose}, build, cost_of, retract, scale, cfg);

  MleSolution sol;
  sol.k = lm.state.k;
  sol.pose = lm.state.pose;
  sol.iterations = lm.iterations;
  sol.mean_error = reprojection_errors(sol.k, sol.pose, corrs, cfg).mean;
  // Least squares does not order mean norms; never report worse than the start.
  const double start_mean = reprojection_errors(k_init, pnp.pose, corrs, cfg).mean;
  if (sol.mean_error > start_mean) {
    sol.k = k_init;
    sol.pose = pnp.pose;
    sol.mean_error = start_mean;
  }
  return sol;
}

}  // namespace dime
