#pragma once

#include <string>
#include <vector>

#include "ttlift/sample.hpp"

namespace ttlift {

struct OverlayStyle {
  double marker_radius_px = 4.0;
  std::string detection_color = "green";
  std::string keypoint_color = "red";
  std::string prediction_color = "blue";
};

/// SVG over the image rectangle: valid 2D detections (one circle each,
/// class "detection"), the 13 table keypoints reprojected through the sample
/// camera (class "keypoint"), and the predicted 3D trajectory reprojected
/// (class "prediction"). Points behind the camera are skipped.
std::string render_overlay_svg(const SynthSample& sample, const std::vector<Vec3>& predicted,
                               const OverlayStyle& style = {});

}  // namespace ttlift
