#include "dime/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "dime/error.hpp"

namespace dime {
namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

PoseD board_pose(double angle_x, double angle_y, const Eigen::Vector3d& center) {
  const Eigen::Quaterniond q = Eigen::AngleAxisd(angle_y, Eigen::Vector3d::UnitY()) *
                               Eigen::AngleAxisd(angle_x, Eigen::Vector3d::UnitX());
  return PoseD(q, center);
}

}  // namespace

RigSpec RigSpec::standard() {
  RigSpec rig;
  constexpr double kDeg = EIGEN_PI / 180.0;
  // 2x2 layout; each board tilted about a different axis and set back by a
  // different amount so that no two share a plane.
  rig.board_poses = {
      board_pose(0.0, 20.0 * kDeg, Eigen::Vector3d(-110.0, -90.0, 0.0)),
      board_pose(0.0, -20.0 * kDeg, Eigen::Vector3d(110.0, -90.0, 25.0)),
      board_pose(15.0 * kDeg, 0.0, Eigen::Vector3d(-110.0, 90.0, 50.0)),
      board_pose(-15.0 * kDeg, 0.0, Eigen::Vector3d(110.0, 90.0, 75.0)),
  };
  return rig;
}

std::vector<Eigen::Vector3d> RigSpec::vertices() const {
  std::vector<Eigen::Vector3d> out;
  out.reserve(vertex_count());
  const double x0 = 0.5 * (board_cols - 1) * cell_size;
  const double y0 = 0.5 * (board_rows - 1) * cell_size;
  for (const auto& pose : board_poses) {
    for (int r = 0; r < board_rows; ++r) {
      for (int c = 0; c < board_cols; ++c) {
        out.push_back(pose * Eigen::Vector3d(c * cell_size - x0, r * cell_size - y0, 0.0));
      }
    }
  }
  return out;
}

std::string RigSpec::hash() const {
  // FNV-1a over the layout parameters.
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  feed(&board_rows, sizeof board_rows);
  feed(&board_cols, sizeof board_cols);
  feed(&cell_size, sizeof cell_size);
  for (const auto& p : board_poses) {
    feed(p.quaternion().coeffs().data(), 4 * sizeof(double));
    feed(p.translation().data(), 3 * sizeof(double));
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

IntrinsicsD k_manifold(const IntrinsicsD& kc, const LensState& lens, const ManifoldConfig& mcfg) {
  const double slack = 1e-12;
  if (std::abs(lens.tilt.x()) > mcfg.tilt_max + slack || std::abs(lens.tilt.y()) > mcfg.tilt_max + slack ||
      std::abs(lens.shift_z) > mcfg.shift_max + slack) {
    throw Error(ErrorCode::kOutOfRange, "lens state outside the configured box");
  }
  const double focal_scale = 1.0 + lens.shift_z / mcfg.z0;
  return IntrinsicsD{kc.fx * focal_scale, kc.fy * focal_scale,
                     kc.cx + mcfg.gain * kc.fx * std::tan(lens.tilt.y()),
                     kc.cy + mcfg.gain * kc.fy * std::tan(lens.tilt.x())};
}

double manifold_lipschitz(const IntrinsicsD& kc, const ManifoldConfig& mcfg) {
  const double sec2 = 1.0 / std::pow(std::cos(mcfg.tilt_max), 2);
  const double tilt_rate = mcfg.gain * std::max(kc.fx, kc.fy) * sec2;
  const double shift_rate = std::hypot(kc.fx, kc.fy) / mcfg.z0;
  return std::sqrt(2.0 * tilt_rate * tilt_rate + shift_rate * shift_rate);
}

LensState sample_lens(const ManifoldConfig& mcfg, std::mt19937_64& rng) {
  LensState lens;
  lens.tilt.x() = uniform(rng, -mcfg.tilt_max, mcfg.tilt_max);
  lens.tilt.y() = uniform(rng, -mcfg.tilt_max, mcfg.tilt_max);
  lens.shift_z = uniform(rng, -mcfg.shift_max, mcfg.shift_max);
  return lens;
}

IntrinsicsD average_intrinsics(const IntrinsicsD& nominal, const ManifoldConfig& mcfg, int samples,
                               std::mt19937_64& rng) {
  if (samples < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one sample");
  Eigen::Vector4d sum = Eigen::Vector4d::Zero();
  for (int i = 0; i < samples; ++i) {
    sum += k_manifold(nominal, sample_lens(mcfg, rng), mcfg).vector();
  }
  return IntrinsicsD::from_vector(sum / samples);
}

namespace {

PoseD look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, double roll) {
  const Eigen::Vector3d z = (target - eye).normalized();
  const Eigen::Vector3d x = Eigen::Vector3d::UnitY().cross(z).normalized();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  r = Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitZ()).toRotationMatrix() * r;
  return PoseD(r, Eigen::Vector3d(-r * eye));
}

bool all_visible(const IntrinsicsD& k, const PoseD& pose, const std::vector<Eigen::Vector3d>& pts,
                 const SimConfig& cfg) {
  for (const auto& x : pts) {
    const Eigen::Vector3d p = pose * x;
    if (!(p.z() > 1.0)) return false;
    const Eigen::Vector2d px = project_camera(k, p);
    if (px.x() < cfg.border_margin || px.x() > cfg.image_width - cfg.border_margin ||
        px.y() < cfg.border_margin || px.y() > cfg.image_height - cfg.border_margin) {
      return false;
    }
  }
  return true;
}

}  // namespace

SimFrame sample_frame(const RigSpec& rig, const IntrinsicsD& kc, const SimConfig& cfg, std::mt19937_64& rng) {
  const LensState lens = sample_lens(cfg.manifold, rng);
  return sample_frame(rig, kc, cfg, lens, rng);
}

SimFrame sample_frame(const RigSpec& rig, const IntrinsicsD& kc, const SimConfig& cfg, const LensState& lens,
                      std::mt19937_64& rng) {
  SimFrame frame;
  frame.kc = kc;
  frame.lens = lens;
  frame.k_true = k_manifold(kc, lens, cfg.manifold);
  const std::vector<Eigen::Vector3d> pts = rig.vertices();
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());

  bool found = false;
  for (int attempt = 0; attempt < cfg.max_retries && !found; ++attempt) {
    // Direction inside a cone around -z, radius on the shell.
    const double cos_max = std::cos(cfg.view_cone);
    const double cos_theta = uniform(rng, cos_max, 1.0);
    const double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
    const double phi = uniform(rng, 0.0, 2.0 * EIGEN_PI);
    const Eigen::Vector3d dir(sin_theta * std::cos(phi), sin_theta * std::sin(phi), -cos_theta);
    const double radius = uniform(rng, cfg.shell_min, cfg.shell_max);
    const Eigen::Vector3d jitter(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
    const double roll = uniform(rng, -cfg.roll_max, cfg.roll_max);
    const PoseD pose = look_at(centroid + radius * dir, centroid + cfg.look_at_jitter * jitter, roll);
    if (all_visible(frame.k_true, pose, pts, cfg)) {
      frame.camera_pose = pose;
      found = true;
    }
  }
  if (!found) {
    throw Error(ErrorCode::kRetryExhausted, "no camera pose keeps every vertex in view");
  }

  CorrespondenceSet world;
  world.reserve(pts.size());
  for (const auto& x : pts) world.push_back({project(frame.k_true, frame.camera_pose, x), x});

  // {C0} is the camera frame PnP reports when it assumes K_c.
  const PoseD world_to_c0 = solve_pnp(kc, world).pose;
  frame.c0_to_camera = frame.camera_pose * world_to_c0.inverse();
  frame.corrs.reserve(world.size());
  for (const auto& c : world) frame.corrs.push_back({c.pixel, world_to_c0 * c.point});
  return frame;
}

SimFrame inject_noise(const SimFrame& frame, double sigma_2d, double sigma_3d, std::mt19937_64& rng) {
  if (!(sigma_2d >= 0.0) || !(sigma_3d >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "noise levels must be non-negative");
  }
  SimFrame out = frame;
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& c : out.corrs) {
    for (int a = 0; a < 2; ++a) c.pixel[a] += sigma_2d * n(rng);
    for (int a = 0; a < 3; ++a) c.point[a] += sigma_3d * n(rng);
  }
  out.noise.sigma_2d = std::hypot(frame.noise.sigma_2d, sigma_2d);
  out.noise.sigma_3d = std::hypot(frame.noise.sigma_3d, sigma_3d);
  return out;
}

CorrespondenceSet drop_points(const CorrespondenceSet& corrs, int keep, std::mt19937_64& rng) {
  if (keep < 1 || keep > static_cast<int>(corrs.size())) {
    throw Error(ErrorCode::kInvalidKeep, "keep must lie in [1, " + std::to_string(corrs.size()) + "]");
  }
  // Partial Fisher-Yates over indices, then restore the original order.
  std::vector<std::size_t> idx(corrs.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < keep; ++i) {
    const std::size_t remaining = idx.size() - static_cast<std::size_t>(i);
    const std::size_t j = static_cast<std::size_t>(i) + static_cast<std::size_t>(rng() % remaining);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  CorrespondenceSet out;
  out.reserve(keep);
  for (std::size_t i : idx) out.push_back(corrs[i]);
  return out;
}

SimFrame drop_points(const SimFrame& frame, int keep, std::mt19937_64& rng) {
  SimFrame out = frame;
  out.corrs = drop_points(frame.corrs, keep, rng);
  out.noise.keep = keep;
  return out;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 of the pair.
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace dime
