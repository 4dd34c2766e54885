#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ttlift/camera.hpp"
#include "ttlift/common.hpp"

namespace ttlift {

inline constexpr double kDefaultHeatmapSigmaPx = 6.0;
inline constexpr double kDefaultMinConfidence = 0.1;
inline constexpr double kBallAgreementPx = 20.0;
inline constexpr double kKeypointAgreementPx = 10.0;
inline constexpr double kDefaultDbscanEpsPx = 5.0;

/// Confidence map; grid(row = y, col = x), pixel centers at integer coordinates.
struct Heatmap {
  Eigen::MatrixXd grid;

  int width() const { return static_cast<int>(grid.cols()); }
  int height() const { return static_cast<int>(grid.rows()); }
  double at(int x, int y) const { return grid(y, x); }
};

Heatmap gaussian_heatmap(const Vec2& center, double sigma_px = kDefaultHeatmapSigmaPx,
                         int width = 1920, int height = 1080);

struct Peak {
  Vec2 position;
  double confidence = 0.0;
};

/// Arg-max followed by a log-parabolic (Gaussian) least-squares fit on the
/// 5x5 neighbourhood; the refinement is clamped to +-1 px around the arg-max.
std::optional<Peak> extract_peak(const Heatmap& heatmap, double min_confidence = kDefaultMinConfidence);

/// Per-frame optional detections with timestamps.
struct DetectionTrack {
  std::vector<double> times_s;
  std::vector<std::optional<Vec2>> points;

  std::size_t size() const { return times_s.size(); }
  std::size_t detected() const;
};

/// Keeps a primary detection iff the auxiliary track also detects within
/// `threshold_px` (inclusive). Kept values are the primary's.
DetectionTrack agreement_filter(const DetectionTrack& primary, const DetectionTrack& auxiliary,
                                double threshold_px);

struct DbscanResult {
  static constexpr int kNoise = -1;
  std::vector<int> labels;                      // cluster index per point, or kNoise
  std::vector<std::vector<std::size_t>> clusters;  // member indices, cluster order = discovery order
  std::vector<std::size_t> noise;
};

/// Density-based clustering; points are visited in input order, a border
/// point joins the first cluster that reaches it.
DbscanResult dbscan(std::span<const Vec2> points, double eps_px, std::size_t min_pts);

/// max(4, 5% of the frame count).
std::size_t default_min_pts(std::size_t n_frames);

/// Per keypoint: DBSCAN over all frames' detections, result is the centroid of
/// the largest cluster (ties -> lower cluster index); no cluster -> unavailable.
/// Detections are sorted by coordinate first, so the result does not depend on
/// frame order.
TableKeypointSet consolidate_keypoints(std::span<const TableKeypointSet> per_frame, double eps_px,
                                       std::size_t min_pts);

}  // namespace ttlift
