#pragma once

#include <array>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ttlift/common.hpp"
#include "ttlift/table.hpp"

namespace ttlift {

using ProjectionMatrix = Eigen::Matrix<double, 3, 4>;

/// Pinhole camera given by a homogeneous 3x4 projection matrix (world m -> px).
class CameraModel {
public:
  CameraModel() = default;
  explicit CameraModel(const ProjectionMatrix& P);

  /// K [R | -R C] with R rows (right, down, forward).
  static CameraModel from_intrinsics(double focal_px, const Vec2& principal_point,
                                     const Eigen::Matrix3d& world_to_camera, const Vec3& center);

  const ProjectionMatrix& matrix() const { return P_; }

  /// Homogeneous depth (third coordinate of P x) of a world point.
  double depth(const Vec3& x) const;

  /// Row-major 12-number form used by the sample file schema.
  std::array<double, 12> to_row_major() const;
  static CameraModel from_row_major(std::span<const double> values);

private:
  ProjectionMatrix P_ = ProjectionMatrix::Zero();
};

/// Dehomogenized projection. Throws BehindCameraError if depth <= 0.
Vec2 project(const CameraModel& camera, const Vec3& x);

inline constexpr std::size_t kNumTableKeypoints = 13;

/// Keypoint indices. The surface points lie in the playing-surface plane; the
/// net posts' feet share that plane, the three net-top points are above it.
enum class TableKeypoint : std::size_t {
  kNearLeftCorner = 0,   // (-L/2, -W/2)
  kNearEndMid = 1,       // (-L/2, 0)
  kNearRightCorner = 2,  // (-L/2, +W/2)
  kNetSideLeft = 3,      // (0, -W/2), net plane meets side line
  kNetSideRight = 4,     // (0, +W/2)
  kFarLeftCorner = 5,    // (+L/2, -W/2)
  kFarEndMid = 6,        // (+L/2, 0)
  kFarRightCorner = 7,   // (+L/2, +W/2)
  kNetPostFootLeft = 8,  // (0, -W/2 - overhang)
  kNetPostFootRight = 9, // (0, +W/2 + overhang)
  kNetTopLeft = 10,      // (0, -W/2 - overhang, net top)
  kNetTopRight = 11,     // (0, +W/2 + overhang, net top)
  kNetTopCenter = 12,    // (0, 0, net top)
};

/// Canonical world positions of the 13 table keypoints, indexed by TableKeypoint.
std::array<Vec3, kNumTableKeypoints> table_keypoints_3d(const TableGeometry& table = {});

/// Up to 13 detected keypoints in pixels; unavailable entries are empty.
struct TableKeypointSet {
  std::array<std::optional<Vec2>, kNumTableKeypoints> points{};

  std::size_t available() const;
};

struct Correspondence {
  Vec3 world;
  Vec2 image;
};

/// Linear least-squares DLT with Hartley normalization. Needs >= 6
/// correspondences whose 3D points are not coplanar.
CameraModel dlt_calibrate(std::span<const Correspondence> corr);

struct RansacResult {
  CameraModel camera;
  std::vector<bool> inliers;
};

/// Minimal-sample (6 point) RANSAC around dlt_calibrate followed by a refit on
/// the best consensus set. Deterministic for a given generator state.
RansacResult ransac_calibrate(std::span<const Correspondence> corr, double tau_px, int n_iters,
                              std::mt19937_64& rng);

/// Pixel distance between project(camera, world) and image; +inf behind the camera.
double reprojection_error(const CameraModel& camera, const Correspondence& c);

}  // namespace ttlift
