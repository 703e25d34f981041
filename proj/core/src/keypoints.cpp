#include "monoplot/keypoints.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "monoplot/error.hpp"

namespace monoplot {

void DetectorConfig::validate() const {
  if (max_keypoints < 1) throw InputError("max_keypoints must be >= 1");
  if (fast_threshold < 1 || fast_threshold > 128) {
    throw InputError("fast_threshold must be in [1, 128]");
  }
  if (!(nms_radius >= 1.0)) throw InputError("nms_radius must be >= 1");
  if (grid_cells < 1) throw InputError("grid_cells must be >= 1");
  if (!std::isfinite(harris_k)) throw InputError("harris_k must be finite");
}

namespace {

// Bresenham circle of radius 3, clockwise from 12 o'clock.
constexpr std::array<std::pair<int, int>, 16> kCircle = {{{0, -3},
                                                          {1, -3},
                                                          {2, -2},
                                                          {3, -1},
                                                          {3, 0},
                                                          {3, 1},
                                                          {2, 2},
                                                          {1, 3},
                                                          {0, 3},
                                                          {-1, 3},
                                                          {-2, 2},
                                                          {-3, 1},
                                                          {-3, 0},
                                                          {-3, -1},
                                                          {-2, -2},
                                                          {-1, -3}}};

constexpr int kArc = 9;
constexpr int kHarrisRadius = 3;   // 7x7 window
constexpr double kHarrisSigma = 1.0;
constexpr int kHarrisBorder = 4;   // window + Sobel
constexpr int kDetectBorder = 5;   // plus one for subpixel neighbours

bool segment_test(const GrayImage& img, int c, int r, int t) {
  const int center = img.at(c, r);
  std::array<int, 16> cls{};
  for (int i = 0; i < 16; ++i) {
    const int p = img.at(c + kCircle[i].first, r + kCircle[i].second);
    cls[i] = p > center + t ? 1 : (p < center - t ? -1 : 0);
  }
  for (int sign : {1, -1}) {
    int run = 0;
    for (int i = 0; i < 16 + kArc - 1; ++i) {
      if (cls[i % 16] == sign) {
        if (++run >= kArc) return true;
      } else {
        run = 0;
      }
    }
  }
  return false;
}

// Offset of the vertex of a parabola through (-1, a), (0, b), (1, c).
double parabola_peak(double a, double b, double c) {
  const double denom = a - 2.0 * b + c;
  if (!(denom < 0.0)) return 0.0;
  return std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
}

}  // namespace

std::vector<std::pair<int, int>> fast_candidates(const GrayImage& img, int threshold) {
  std::vector<std::pair<int, int>> out;
  for (int r = kDetectBorder; r < img.height - kDetectBorder; ++r) {
    for (int c = kDetectBorder; c < img.width - kDetectBorder; ++c) {
      if (segment_test(img, c, r, threshold)) out.emplace_back(c, r);
    }
  }
  return out;
}

std::vector<double> harris_response(const GrayImage& img, double k) {
  const int w = img.width;
  const int h = img.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<double> gxx(n, 0.0), gyy(n, 0.0), gxy(n, 0.0);
  // Sobel normalised to intensity fraction per pixel.
  constexpr double kNorm = 1.0 / (8.0 * 255.0);
  for (int r = 1; r < h - 1; ++r) {
    for (int c = 1; c < w - 1; ++c) {
      auto I = [&](int dc, int dr) { return static_cast<double>(img.at(c + dc, r + dr)); };
      const double gx = (I(1, -1) + 2 * I(1, 0) + I(1, 1) - I(-1, -1) - 2 * I(-1, 0) - I(-1, 1)) * kNorm;
      const double gy = (I(-1, 1) + 2 * I(0, 1) + I(1, 1) - I(-1, -1) - 2 * I(0, -1) - I(1, -1)) * kNorm;
      const std::size_t i = static_cast<std::size_t>(r) * w + c;
      gxx[i] = gx * gx;
      gyy[i] = gy * gy;
      gxy[i] = gx * gy;
    }
  }
  // Gaussian weights keep the response peak near the corner; a flat window
  // pulls it up to the window radius inside.
  std::array<double, 2 * kHarrisRadius + 1> wt{};
  for (int i = -kHarrisRadius; i <= kHarrisRadius; ++i) {
    wt[i + kHarrisRadius] = std::exp(-0.5 * i * i / (kHarrisSigma * kHarrisSigma));
  }
  std::vector<double> response(n, 0.0);
  for (int r = kHarrisBorder; r < h - kHarrisBorder; ++r) {
    for (int c = kHarrisBorder; c < w - kHarrisBorder; ++c) {
      double a = 0.0, b = 0.0, d = 0.0;
      for (int dr = -kHarrisRadius; dr <= kHarrisRadius; ++dr) {
        const std::size_t row = static_cast<std::size_t>(r + dr) * w;
        for (int dc = -kHarrisRadius; dc <= kHarrisRadius; ++dc) {
          const std::size_t i = row + c + dc;
          const double weight = wt[dr + kHarrisRadius] * wt[dc + kHarrisRadius];
          a += weight * gxx[i];
          b += weight * gyy[i];
          d += weight * gxy[i];
        }
      }
      response[static_cast<std::size_t>(r) * w + c] = a * b - d * d - k * (a + b) * (a + b);
    }
  }
  return response;
}

std::vector<Keypoint> detect_keypoints(const GrayImage& img, const DetectorConfig& cfg) {
  cfg.validate();
  if (img.width < 8 || img.height < 8) throw InputError("image must be at least 8x8");

  const auto candidates = fast_candidates(img, cfg.fast_threshold);
  if (candidates.empty()) return {};
  const auto response = harris_response(img, cfg.harris_k);
  const int w = img.width;
  auto R = [&](int c, int r) { return response[static_cast<std::size_t>(r) * w + c]; };

  struct Candidate {
    int col, row;
    double score;
  };
  std::vector<Candidate> scored;
  scored.reserve(candidates.size());
  for (auto [c, r] : candidates) {
    const double s = R(c, r);
    if (s > 0.0) scored.push_back({c, r, s});
  }
  // Raster order is already the tiebreak; stable_sort keeps it.
  std::stable_sort(scored.begin(), scored.end(),
                   [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

  const int grid = cfg.grid_cells;
  const int per_cell_cap =
      2 * static_cast<int>((cfg.max_keypoints + grid * grid - 1) / (grid * grid));
  std::vector<int> cell_count(static_cast<std::size_t>(grid) * grid, 0);
  const double r2 = cfg.nms_radius * cfg.nms_radius;

  std::vector<Keypoint> out;
  for (const auto& cand : scored) {
    if (static_cast<int>(out.size()) >= cfg.max_keypoints) break;
    const int c = cand.col;
    const int r = cand.row;
    const double u = c + parabola_peak(R(c - 1, r), R(c, r), R(c + 1, r));
    const double v = r + parabola_peak(R(c, r - 1), R(c, r), R(c, r + 1));

    const bool suppressed = std::any_of(out.begin(), out.end(), [&](const Keypoint& k) {
      const double du = k.u - u;
      const double dv = k.v - v;
      return du * du + dv * dv <= r2;
    });
    if (suppressed) continue;

    const int gx = std::min(grid - 1, static_cast<int>(u * grid / img.width));
    const int gy = std::min(grid - 1, static_cast<int>(v * grid / img.height));
    int& count = cell_count[static_cast<std::size_t>(gy) * grid + gx];
    if (count >= per_cell_cap) continue;
    ++count;
    out.push_back({u, v, cand.score, true});
  }
  return out;
}

std::vector<DemGcp> detect_dem_gcps(const DemRaster& dem, const DetectorConfig& cfg) {
  const GrayImage gray = dem_to_grayscale(dem);
  std::vector<DemGcp> out;
  for (const Keypoint& kp : detect_keypoints(gray, cfg)) {
    const Eigen::Vector2d xy = dem.pixel_to_world(kp.u, kp.v);
    const auto z = dem.sample_elevation(xy.x(), xy.y());
    if (!z) continue;
    out.push_back({kp, {xy.x(), xy.y(), *z}});
  }
  return out;
}

}  // namespace monoplot
