#include "ttlift/svg_plot.hpp"

#include <iomanip>
#include <sstream>

namespace ttlift {

namespace {

void circle(std::ostringstream& out, const Vec2& p, double r, const std::string& cls, const std::string& color) {
  out << "  <circle class=\"" << cls << "\" cx=\"" << p.x() << "\" cy=\"" << p.y() << "\" r=\"" << r
      << "\" fill=\"" << color << "\"/>\n";
}

}  // namespace

std::string render_overlay_svg(const SynthSample& sample, const std::vector<Vec3>& predicted,
                               const OverlayStyle& style) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(3);
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << sample.image_w << "\" height=\""
      << sample.image_h << "\" viewBox=\"0 0 " << sample.image_w << ' ' << sample.image_h << "\">\n";
  out << "  <rect x=\"0\" y=\"0\" width=\"" << sample.image_w << "\" height=\"" << sample.image_h
      << "\" fill=\"white\" stroke=\"black\"/>\n";

  for (const Vec3& k : table_keypoints_3d()) {
    if (sample.camera.depth(k) > 0.0)
      circle(out, project(sample.camera, k), style.marker_radius_px, "keypoint", style.keypoint_color);
  }
  for (std::size_t i = 0; i < sample.size(); ++i) {
    if (sample.ball_valid[i])
      circle(out, sample.ball2d_px[i], style.marker_radius_px, "detection", style.detection_color);
  }
  for (const Vec3& r : predicted) {
    if (sample.camera.depth(r) > 0.0)
      circle(out, project(sample.camera, r), 0.6 * style.marker_radius_px, "prediction", style.prediction_color);
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace ttlift
