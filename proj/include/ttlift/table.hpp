#pragma once

#include <cmath>

#include "ttlift/common.hpp"

namespace ttlift {

// World frame: origin on the floor directly below the table center, x along
// the long axis of the table, z up, y = z cross x. The playing surface lies at
// z = surface_height.
struct TableGeometry {
  double length = 2.74;
  double width = 1.525;
  double surface_height = 0.76;
  double net_height = 0.1525;
  double net_overhang = 0.1525;  // net posts stand this far outside the side lines

  double half_length() const { return 0.5 * length; }
  double half_width() const { return 0.5 * width; }

  bool inside_footprint(double x, double y) const {
    return std::abs(x) <= half_length() && std::abs(y) <= half_width();
  }
};

}  // namespace ttlift
