#include "ttlift/perception.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include <Eigen/Dense>

namespace ttlift {

Heatmap gaussian_heatmap(const Vec2& center, double sigma_px, int width, int height) {
  if (!(sigma_px > 0.0)) throw ContractError("gaussian_heatmap: sigma must be > 0");
  if (width <= 0 || height <= 0) throw ContractError("gaussian_heatmap: empty size");
  Heatmap h;
  h.grid.resize(height, width);
  const double inv = 1.0 / (2.0 * sigma_px * sigma_px);
  const Eigen::ArrayXd gx =
      (-(Eigen::ArrayXd::LinSpaced(width, 0.0, width - 1.0) - center.x()).square() * inv).exp();
  const Eigen::ArrayXd gy =
      (-(Eigen::ArrayXd::LinSpaced(height, 0.0, height - 1.0) - center.y()).square() * inv).exp();
  h.grid = gy.matrix() * gx.matrix().transpose();
  return h;
}

std::optional<Peak> extract_peak(const Heatmap& heatmap, double min_confidence) {
  if (heatmap.grid.size() == 0) return std::nullopt;
  Eigen::Index row = 0;
  Eigen::Index col = 0;
  const double peak = heatmap.grid.maxCoeff(&row, &col);
  if (!std::isfinite(peak) || peak < min_confidence || !(peak > 0.0)) return std::nullopt;

  // ln h ~ a + b x + c y + d x^2 + e y^2 + f x y on the 5x5 window.
  constexpr int kHalf = 2;
  Eigen::Matrix<double, Eigen::Dynamic, 6> A(25, 6);
  Eigen::VectorXd rhs(25);
  int n = 0;
  const double floor_value = peak * 1e-12;
  for (int dy = -kHalf; dy <= kHalf; ++dy) {
    for (int dx = -kHalf; dx <= kHalf; ++dx) {
      const Eigen::Index y = row + dy;
      const Eigen::Index x = col + dx;
      if (y < 0 || x < 0 || y >= heatmap.grid.rows() || x >= heatmap.grid.cols()) continue;
      const double value = heatmap.grid(y, x);
      if (!(value > floor_value)) continue;
      A.row(n) << 1.0, dx, dy, dx * dx, dy * dy, dx * dy;
      rhs(n) = std::log(value);
      ++n;
    }
  }

  Vec2 offset = Vec2::Zero();
  if (n >= 6) {
    const Eigen::Matrix<double, 6, 1> coef =
        A.topRows(n).colPivHouseholderQr().solve(rhs.head(n));
    Eigen::Matrix2d hess;
    hess << 2.0 * coef(3), coef(5), coef(5), 2.0 * coef(4);
    const Vec2 grad(coef(1), coef(2));
    // Only a concave fit has a maximum.
    if (hess(0, 0) < 0.0 && hess.determinant() > 0.0) {
      offset = -hess.inverse() * grad;
      if (!offset.allFinite()) offset.setZero();
      offset = offset.cwiseMax(-1.0).cwiseMin(1.0);
    }
  }
  return Peak{Vec2(static_cast<double>(col), static_cast<double>(row)) + offset, peak};
}

std::size_t DetectionTrack::detected() const {
  return static_cast<std::size_t>(
      std::count_if(points.begin(), points.end(), [](const auto& p) { return p.has_value(); }));
}

DetectionTrack agreement_filter(const DetectionTrack& primary, const DetectionTrack& auxiliary,
                                double threshold_px) {
  if (primary.points.size() != primary.times_s.size() ||
      auxiliary.points.size() != auxiliary.times_s.size())
    throw ContractError("agreement_filter: track has mismatched lengths");
  if (primary.times_s != auxiliary.times_s)
    throw ContractError("agreement_filter: tracks do not share timestamps");
  if (!(threshold_px >= 0.0)) throw ContractError("agreement_filter: threshold must be >= 0");

  DetectionTrack out;
  out.times_s = primary.times_s;
  out.points.resize(primary.size());
  for (std::size_t i = 0; i < primary.size(); ++i) {
    const auto& p = primary.points[i];
    const auto& a = auxiliary.points[i];
    if (p && a && (*p - *a).norm() <= threshold_px) out.points[i] = *p;
  }
  return out;
}

DbscanResult dbscan(std::span<const Vec2> points, double eps_px, std::size_t min_pts) {
  if (!(eps_px > 0.0)) throw ContractError("dbscan: eps must be > 0");
  if (min_pts < 1) throw ContractError("dbscan: min_pts must be >= 1");

  constexpr int kUnvisited = -2;
  const std::size_t n = points.size();
  DbscanResult res;
  res.labels.assign(n, kUnvisited);
  const double eps2 = eps_px * eps_px;

  auto region = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n; ++j)
      if ((points[i] - points[j]).squaredNorm() <= eps2) out.push_back(j);
    return out;
  };

  for (std::size_t i = 0; i < n; ++i) {
    if (res.labels[i] != kUnvisited) continue;
    const std::vector<std::size_t> neighbours = region(i);
    if (neighbours.size() < min_pts) {
      res.labels[i] = DbscanResult::kNoise;
      continue;
    }
    const int cluster = static_cast<int>(res.clusters.size());
    res.clusters.emplace_back();
    res.labels[i] = cluster;
    std::deque<std::size_t> queue(neighbours.begin(), neighbours.end());
    while (!queue.empty()) {
      const std::size_t j = queue.front();
      queue.pop_front();
      if (res.labels[j] == DbscanResult::kNoise) res.labels[j] = cluster;
      if (res.labels[j] != kUnvisited) continue;
      res.labels[j] = cluster;
      const std::vector<std::size_t> nj = region(j);
      if (nj.size() >= min_pts) queue.insert(queue.end(), nj.begin(), nj.end());
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (res.labels[i] == DbscanResult::kNoise)
      res.noise.push_back(i);
    else
      res.clusters[static_cast<std::size_t>(res.labels[i])].push_back(i);
  }
  return res;
}

std::size_t default_min_pts(std::size_t n_frames) {
  return std::max<std::size_t>(4, static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(n_frames))));
}

TableKeypointSet consolidate_keypoints(std::span<const TableKeypointSet> per_frame, double eps_px,
                                       std::size_t min_pts) {
  TableKeypointSet out;
  for (std::size_t k = 0; k < kNumTableKeypoints; ++k) {
    std::vector<Vec2> detections;
    for (const auto& frame : per_frame)
      if (frame.points[k]) detections.push_back(*frame.points[k]);
    if (detections.empty()) continue;
    std::sort(detections.begin(), detections.end(), [](const Vec2& a, const Vec2& b) {
      return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });

    const DbscanResult res = dbscan(detections, eps_px, min_pts);
    const std::vector<std::size_t>* largest = nullptr;
    for (const auto& c : res.clusters)
      if (!largest || c.size() > largest->size()) largest = &c;
    if (!largest) continue;

    Vec2 centroid = Vec2::Zero();
    for (std::size_t idx : *largest) centroid += detections[idx];
    out.points[k] = centroid / static_cast<double>(largest->size());
  }
  return out;
}

}  // namespace ttlift
