#pragma once

#include <vector>

#include "monoplot/camera.hpp"
#include "monoplot/dem.hpp"
#include "monoplot/image.hpp"

namespace monoplot::synthetic {

/// Axis-aligned plateau in pixel space, inclusive cell ranges.
struct Box {
  int col0, col1;
  int row0, row1;
  double height;
};

/// Three boxes of different footprints and heights on flat ground.
std::vector<Box> three_boxes(int size);

/// size x size cells of unit `cell`, north-up, ground at 0.
DemRaster box_dem(int size, double cell, const std::vector<Box>& boxes);
DemRaster three_box_dem(int size = 256, double cell = 1.0);

/// Oblique view of the three-box scene from the southwest.
CameraParams three_box_camera(const DemRaster& dem);

/// Shaded render of the DEM: Lambertian shading of each triangle with an
/// albedo that grows with elevation; empty pixels are black.
GrayImage render_photo(const CameraParams& cam, const DemRaster& dem, ImageSize size);

}  // namespace monoplot::synthetic
