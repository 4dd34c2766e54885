#include "ttlift/camera.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/SVD>

namespace ttlift {

CameraModel::CameraModel(const ProjectionMatrix& P) : P_(P) {
  if (!P.allFinite()) throw ContractError("camera: projection matrix must be finite");
  if (P.row(2).isZero(0.0)) throw ContractError("camera: last row of P is all zero");
}

CameraModel CameraModel::from_intrinsics(double focal_px, const Vec2& principal_point,
                                         const Eigen::Matrix3d& world_to_camera,
                                         const Vec3& center) {
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
  K(0, 0) = focal_px;
  K(1, 1) = focal_px;
  K(0, 2) = principal_point.x();
  K(1, 2) = principal_point.y();
  ProjectionMatrix Rt;
  Rt.leftCols<3>() = world_to_camera;
  Rt.col(3) = -world_to_camera * center;
  return CameraModel(K * Rt);
}

double CameraModel::depth(const Vec3& x) const {
  return P_.row(2).head<3>().dot(x) + P_(2, 3);
}

std::array<double, 12> CameraModel::to_row_major() const {
  std::array<double, 12> out{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) out[static_cast<std::size_t>(r * 4 + c)] = P_(r, c);
  return out;
}

CameraModel CameraModel::from_row_major(std::span<const double> values) {
  if (values.size() != 12) throw DataError("camera: expected 12 row-major values");
  ProjectionMatrix P;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) P(r, c) = values[static_cast<std::size_t>(r * 4 + c)];
  return CameraModel(P);
}

Vec2 project(const CameraModel& camera, const Vec3& x) {
  const Eigen::Vector3d h = camera.matrix() * x.homogeneous();
  if (!(h.z() > 0.0)) throw BehindCameraError("project: point is behind the camera");
  return h.hnormalized();
}

std::array<Vec3, kNumTableKeypoints> table_keypoints_3d(const TableGeometry& t) {
  const double hl = t.half_length();
  const double hw = t.half_width();
  const double z = t.surface_height;
  const double post = hw + t.net_overhang;
  const double top = z + t.net_height;
  return {{
      {-hl, -hw, z},
      {-hl, 0.0, z},
      {-hl, hw, z},
      {0.0, -hw, z},
      {0.0, hw, z},
      {hl, -hw, z},
      {hl, 0.0, z},
      {hl, hw, z},
      {0.0, -post, z},
      {0.0, post, z},
      {0.0, -post, top},
      {0.0, post, top},
      {0.0, 0.0, top},
  }};
}

std::size_t TableKeypointSet::available() const {
  return static_cast<std::size_t>(
      std::count_if(points.begin(), points.end(), [](const auto& p) { return p.has_value(); }));
}

double reprojection_error(const CameraModel& camera, const Correspondence& c) {
  if (!(camera.depth(c.world) > 0.0)) return std::numeric_limits<double>::infinity();
  return (project(camera, c.world) - c.image).norm();
}

namespace {

// True when the points lie on one plane, possibly except a single point. Such
// configurations leave the DLT system with a multi-dimensional null space.
bool planar_but_one(std::span<const Correspondence> corr) {
  const auto n = static_cast<Eigen::Index>(corr.size());
  Eigen::MatrixX3d pts(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) pts.row(i) = corr[static_cast<std::size_t>(i)].world;

  auto is_planar = [](const Eigen::MatrixX3d& m) {
    const Eigen::RowVector3d mean = m.colwise().mean();
    const Eigen::MatrixX3d centered = m.rowwise() - mean;
    const Eigen::Vector3d sv = Eigen::JacobiSVD<Eigen::MatrixX3d>(centered).singularValues();
    return sv(2) <= 1e-9 * std::max(sv(0), 1e-300);
  };

  if (is_planar(pts)) return true;
  for (Eigen::Index skip = 0; skip < n; ++skip) {
    Eigen::MatrixX3d rest(n - 1, 3);
    for (Eigen::Index i = 0, k = 0; i < n; ++i)
      if (i != skip) rest.row(k++) = pts.row(i);
    if (is_planar(rest)) return true;
  }
  return false;
}

}  // namespace

CameraModel dlt_calibrate(std::span<const Correspondence> corr) {
  const std::size_t n = corr.size();
  if (n < 6) throw CalibrationError("dlt_calibrate: need at least 6 correspondences");
  if (planar_but_one(corr))
    throw CalibrationError("dlt_calibrate: degenerate configuration (points nearly coplanar)");

  // Hartley normalization.
  Vec3 c3 = Vec3::Zero();
  Vec2 c2 = Vec2::Zero();
  for (const auto& c : corr) {
    c3 += c.world;
    c2 += c.image;
  }
  c3 /= static_cast<double>(n);
  c2 /= static_cast<double>(n);
  double d3 = 0.0;
  double d2 = 0.0;
  for (const auto& c : corr) {
    d3 += (c.world - c3).squaredNorm();
    d2 += (c.image - c2).squaredNorm();
  }
  const double s3 = std::sqrt(3.0) / std::sqrt(d3 / static_cast<double>(n));
  const double s2 = std::sqrt(2.0) / std::sqrt(d2 / static_cast<double>(n));
  if (!std::isfinite(s3) || !std::isfinite(s2))
    throw CalibrationError("dlt_calibrate: degenerate point spread");

  Eigen::Matrix4d T3 = Eigen::Matrix4d::Identity();
  T3.topLeftCorner<3, 3>() *= s3;
  T3.topRightCorner<3, 1>() = -s3 * c3;
  Eigen::Matrix3d T2 = Eigen::Matrix3d::Identity();
  T2.topLeftCorner<2, 2>() *= s2;
  T2.topRightCorner<2, 1>() = -s2 * c2;

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(2 * n), 12);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector4d X = T3 * corr[i].world.homogeneous();
    const Eigen::Vector3d x = T2 * corr[i].image.homogeneous();
    const auto r = static_cast<Eigen::Index>(2 * i);
    A.block<1, 4>(r, 0) = X.transpose();
    A.block<1, 4>(r, 8) = -x.x() * X.transpose();
    A.block<1, 4>(r + 1, 4) = X.transpose();
    A.block<1, 4>(r + 1, 8) = -x.y() * X.transpose();
  }

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(11);
  ProjectionMatrix Pn;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) Pn(r, c) = h(r * 4 + c);

  ProjectionMatrix P = T2.inverse() * Pn * T3;
  P /= P.norm();
  double depth_sum = 0.0;
  for (const auto& c : corr) depth_sum += P.row(2).head<3>().dot(c.world) + P(2, 3);
  if (depth_sum < 0.0) P = -P;
  if (!P.allFinite()) throw CalibrationError("dlt_calibrate: non-finite solution");
  return CameraModel(P);
}

RansacResult ransac_calibrate(std::span<const Correspondence> corr, double tau_px, int n_iters,
                              std::mt19937_64& rng) {
  const std::size_t n = corr.size();
  if (n < 6) throw CalibrationError("ransac_calibrate: need at least 6 correspondences");
  if (!(tau_px > 0.0)) throw ContractError("ransac_calibrate: tau_px must be > 0");

  auto score = [&](const CameraModel& cam, std::vector<bool>& mask) {
    std::size_t count = 0;
    double err_sum = 0.0;
    mask.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      const double e = reprojection_error(cam, corr[i]);
      if (e <= tau_px) {
        mask[i] = true;
        ++count;
        err_sum += e;
      }
    }
    return std::pair{count, err_sum};
  };

  auto fit_subset = [&](const std::vector<bool>& mask) {
    std::vector<Correspondence> subset;
    for (std::size_t i = 0; i < n; ++i)
      if (mask[i]) subset.push_back(corr[i]);
    return dlt_calibrate(subset);
  };

  std::vector<std::size_t> order(n);
  std::array<Correspondence, 6> sample;
  std::optional<CameraModel> best;
  std::vector<bool> best_mask;
  std::size_t best_count = 0;
  double best_err = std::numeric_limits<double>::infinity();
  std::vector<bool> mask;

  for (int it = 0; it < n_iters; ++it) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t k = 0; k < 6; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, n - 1);
      std::swap(order[k], order[pick(rng)]);
      sample[k] = corr[order[k]];
    }
    CameraModel hypothesis;
    try {
      hypothesis = dlt_calibrate(sample);
    } catch (const CalibrationError&) {
      continue;
    }
    const auto [count, err] = score(hypothesis, mask);
    if (count > best_count || (count == best_count && count > 0 && err < best_err)) {
      best = hypothesis;
      best_mask = mask;
      best_count = count;
      best_err = err;
    }
  }
  if (!best || best_count < 6)
    throw CalibrationError("ransac_calibrate: no consensus set with at least 6 points");

  // Refit on the consensus set until the mask is stable; (camera, mask) always
  // stay consistent with each other.
  CameraModel camera = *best;
  std::vector<bool> camera_mask = best_mask;
  for (int refine = 0; refine < 10; ++refine) {
    CameraModel refit;
    try {
      refit = fit_subset(camera_mask);
    } catch (const CalibrationError&) {
      break;
    }
    const auto [count, err] = score(refit, mask);
    (void)err;
    if (count < 6) break;
    const bool stable = mask == camera_mask;
    camera = refit;
    camera_mask = mask;
    if (stable) break;
  }
  return {camera, camera_mask};
}

}  // namespace ttlift
