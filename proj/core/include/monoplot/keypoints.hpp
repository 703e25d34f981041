#pragma once

#include <vector>

#include "monoplot/dem.hpp"
#include "monoplot/image.hpp"

namespace monoplot {

struct Keypoint {
  double u = 0.0;  // column, rightward
  double v = 0.0;  // row, downward
  double score = 0.0;
  bool selected = true;

  bool operator==(const Keypoint&) const = default;
};

struct DetectorConfig {
  int max_keypoints = 50;
  int fast_threshold = 20;
  double nms_radius = 8.0;
  double harris_k = 0.04;
  int grid_cells = 4;

  /// Throws InputError when a field is out of range.
  void validate() const;

  bool operator==(const DetectorConfig&) const = default;
};

/// A DEM keypoint paired with its georeferenced location.
struct DemGcp {
  Keypoint keypoint;
  WorldPoint world;

  bool operator==(const DemGcp&) const = default;
};

/// Pixels passing the FAST-9 segment test (at least 9 contiguous circle
/// pixels all brighter than I + t or all darker than I - t). Returned as
/// (col, row) in raster order.
std::vector<std::pair<int, int>> fast_candidates(const GrayImage& img, int threshold);

/// Harris corner response over a 7x7 Gaussian-weighted (sigma 1) window of
/// 3x3 Sobel gradients.
/// Border pixels where the window does not fit are 0.
std::vector<double> harris_response(const GrayImage& img, double k);

/// FAST-9 corners scored by the Harris response, refined to subpixel
/// precision, thinned by non-maximum suppression and spatial bucketing.
/// Sorted by descending score.
std::vector<Keypoint> detect_keypoints(const GrayImage& img, const DetectorConfig& cfg);

/// Keypoints on the DEM grayscale raster, georeferenced through the
/// geotransform and bilinear elevation. Keypoints on nodata are dropped.
std::vector<DemGcp> detect_dem_gcps(const DemRaster& dem, const DetectorConfig& cfg);

}  // namespace monoplot
