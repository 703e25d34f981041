#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "monoplot/error.hpp"
#include "monoplot/keypoints.hpp"
#include "monoplot/synthetic.hpp"
#include "monoplot_test/support.hpp"

namespace monoplot {
namespace {

GrayImage square_image(int size, int x0, int y0, int side) {
  GrayImage img(size, size, 0);
  for (int r = y0; r < y0 + side; ++r) {
    for (int c = x0; c < x0 + side; ++c) img.at(c, r) = 255;
  }
  return img;
}

GrayImage blobs(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pos(0, std::max(w, h)), side(6, 30), val(0, 255);
  GrayImage img(w, h, 60);
  for (int k = 0; k < 25; ++k) {
    const int x0 = pos(rng) % w, y0 = pos(rng) % h, s = side(rng);
    const auto v = static_cast<std::uint8_t>(val(rng));
    for (int r = y0; r < std::min(h, y0 + s); ++r) {
      for (int c = x0; c < std::min(w, x0 + s); ++c) img.at(c, r) = v;
    }
  }
  return img;
}

// FAST-9 written independently: every start offset, every 9-run checked.
bool fast_oracle(const GrayImage& img, int c, int r, int t) {
  static const int dx[16] = {0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3, -3, -3, -2, -1};
  static const int dy[16] = {-3, -3, -2, -1, 0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3};
  const int p = img.at(c, r);
  for (int start = 0; start < 16; ++start) {
    bool bright = true, dark = true;
    for (int k = 0; k < 9; ++k) {
      const int q = img.at(c + dx[(start + k) % 16], r + dy[(start + k) % 16]);
      bright = bright && q > p + t;
      dark = dark && q < p - t;
    }
    if (bright || dark) return true;
  }
  return false;
}

TEST(Fast, MatchesIndependentSegmentTest) {
  const GrayImage img = blobs(96, 80, 17);
  for (int t : {5, 20, 60}) {
    const auto got = fast_candidates(img, t);
    std::vector<std::pair<int, int>> want;
    for (int r = 3; r < img.height - 3; ++r) {
      for (int c = 3; c < img.width - 3; ++c) {
        if (fast_oracle(img, c, r, t)) want.emplace_back(c, r);
      }
    }
    std::sort(want.begin(), want.end(), [](auto a, auto b) { return std::tie(a.second, a.first) < std::tie(b.second, b.first); });
    // Implementations may skip a wider border; compare inside it.
    auto inner = [&](const std::vector<std::pair<int, int>>& v) {
      std::vector<std::pair<int, int>> out;
      for (auto p : v) {
        if (p.first >= 5 && p.second >= 5 && p.first < img.width - 5 && p.second < img.height - 5) out.push_back(p);
      }
      return out;
    };
    EXPECT_EQ(inner(got), inner(want)) << "threshold " << t;
  }
}

TEST(Fast, RaisingThresholdNeverAddsCandidates) {
  const GrayImage img = blobs(120, 90, 5);
  std::size_t prev = std::numeric_limits<std::size_t>::max();
  for (int t = 1; t <= 128; t += 7) {
    const std::size_t n = fast_candidates(img, t).size();
    EXPECT_LE(n, prev) << t;
    prev = n;
  }
}

TEST(Harris, FlatImageHasZeroResponse) {
  const auto resp = harris_response(GrayImage(20, 20, 77), 0.04);
  for (double v : resp) EXPECT_EQ(v, 0.0);
}

TEST(Harris, CornerBeatsEdgeBeatsFlat) {
  const GrayImage img = square_image(64, 20, 20, 24);
  const auto resp = harris_response(img, 0.04);
  auto at = [&](int c, int r) { return resp[static_cast<std::size_t>(r) * 64 + c]; };
  EXPECT_GT(at(20, 20), 0.0);
  EXPECT_LT(at(32, 20), 0.0);  // straight edge: one dominant eigenvalue
  EXPECT_EQ(at(32, 32), 0.0);
  EXPECT_EQ(at(0, 0), 0.0);
}

TEST(Detect, BlankImageGivesNothing) {
  EXPECT_TRUE(detect_keypoints(GrayImage(64, 64, 128), DetectorConfig{}).empty());
}

TEST(Detect, WhiteSquareGivesItsFourCorners) {
  const GrayImage img = square_image(100, 30, 35, 40);
  const auto kps = detect_keypoints(img, DetectorConfig{});
  ASSERT_EQ(kps.size(), 4u);
  // The square covers pixels 30..69 x 35..74; corners at the pixel-edge
  // boundaries lie within half a pixel of those indices.
  const std::array<Eigen::Vector2d, 4> corners = {
      Eigen::Vector2d(29.5, 34.5), Eigen::Vector2d(69.5, 34.5), Eigen::Vector2d(29.5, 74.5),
      Eigen::Vector2d(69.5, 74.5)};
  for (const auto& c : corners) {
    double best = 1e9;
    for (const auto& k : kps) best = std::min(best, (Eigen::Vector2d(k.u, k.v) - c).norm());
    EXPECT_LT(best, 2.0) << c.transpose();
  }
  for (const auto& k : kps) EXPECT_TRUE(k.selected);
}

TEST(Detect, OutputContract) {
  const GrayImage img = blobs(256, 200, 9);
  DetectorConfig cfg;
  cfg.max_keypoints = 40;
  cfg.nms_radius = 6;
  cfg.grid_cells = 3;
  const auto kps = detect_keypoints(img, cfg);
  ASSERT_FALSE(kps.empty());
  EXPECT_LE(kps.size(), 40u);
  for (std::size_t i = 1; i < kps.size(); ++i) EXPECT_GE(kps[i - 1].score, kps[i].score);
  for (std::size_t i = 0; i < kps.size(); ++i) {
    for (std::size_t j = i + 1; j < kps.size(); ++j) {
      EXPECT_GT(std::hypot(kps[i].u - kps[j].u, kps[i].v - kps[j].v), cfg.nms_radius);
    }
  }
  const int cap = 2 * static_cast<int>(std::ceil(40.0 / 9.0));
  std::map<std::pair<int, int>, int> per_cell;
  for (const auto& k : kps) {
    const int gx = std::min(2, static_cast<int>(k.u * 3 / img.width));
    const int gy = std::min(2, static_cast<int>(k.v * 3 / img.height));
    ++per_cell[{gx, gy}];
  }
  for (const auto& [cell, n] : per_cell) EXPECT_LE(n, cap);
}

TEST(Detect, Deterministic) {
  const GrayImage img = blobs(200, 160, 21);
  EXPECT_EQ(detect_keypoints(img, DetectorConfig{}), detect_keypoints(img, DetectorConfig{}));
}

TEST(Detect, IntegerShiftShiftsKeypoints) {
  const GrayImage base = blobs(160, 160, 33);
  const int du = 7, dv = 4;
  GrayImage shifted(base.width, base.height, 60);
  for (int r = 0; r < base.height; ++r) {
    for (int c = 0; c < base.width; ++c) {
      const int sc = c - du, sr = r - dv;
      if (sc >= 0 && sr >= 0) shifted.at(c, r) = base.at(sc, sr);
    }
  }
  DetectorConfig cfg;
  cfg.max_keypoints = 1000;
  cfg.grid_cells = 1;
  cfg.nms_radius = 1;
  const auto a = detect_keypoints(base, cfg);
  const auto b = detect_keypoints(shifted, cfg);
  int checked = 0;
  for (const auto& k : a) {
    // Keep keypoints whose support stays inside both images.
    if (k.u < 12 || k.v < 12 || k.u > base.width - 12 - du || k.v > base.height - 12 - dv) continue;
    const auto it = std::find_if(b.begin(), b.end(), [&](const Keypoint& q) {
      return std::abs(q.u - (k.u + du)) < 1e-9 && std::abs(q.v - (k.v + dv)) < 1e-9;
    });
    EXPECT_NE(it, b.end()) << k.u << "," << k.v;
    if (it != b.end()) EXPECT_DOUBLE_EQ(it->score, k.score);
    ++checked;
  }
  EXPECT_GT(checked, 10);
}

TEST(Detect, RejectsBadConfig) {
  DetectorConfig cfg;
  cfg.max_keypoints = 0;
  EXPECT_THROW(detect_keypoints(GrayImage(32, 32), cfg), InputError);
  cfg = {};
  cfg.nms_radius = 0;
  EXPECT_THROW(cfg.validate(), InputError);
  EXPECT_THROW(detect_keypoints(GrayImage(4, 4), DetectorConfig{}), InputError);
}

TEST(DemGcps, FlatDemHasNone) {
  GeoTransform gt;
  gt.y_geo_ul = 63;
  const DemRaster dem(64, 64, std::vector<double>(64 * 64, 5.0), gt);
  EXPECT_TRUE(detect_dem_gcps(dem, DetectorConfig{}).empty());
}

TEST(DemGcps, OneBoxCornersAreFoundAndGeoreferenced) {
  const synthetic::Box box{20, 43, 24, 51, 10.0};
  const DemRaster dem = synthetic::box_dem(72, 1.0, {box});
  const auto gcps = detect_dem_gcps(dem, DetectorConfig{});
  ASSERT_GE(gcps.size(), 4u);
  const std::array<Eigen::Vector2d, 4> corners = {
      Eigen::Vector2d(20, 24), Eigen::Vector2d(43, 24), Eigen::Vector2d(20, 51), Eigen::Vector2d(43, 51)};
  for (const auto& c : corners) {
    double best = 1e9;
    for (const auto& g : gcps) best = std::min(best, (Eigen::Vector2d(g.keypoint.u, g.keypoint.v) - c).norm());
    EXPECT_LT(best, 2.0) << c.transpose();
  }
  for (const auto& g : gcps) {
    EXPECT_GE(g.world.z, 0.0);
    EXPECT_LE(g.world.z, 10.0);
    const Eigen::Vector2d px = dem.world_to_pixel(g.world.x, g.world.y);
    EXPECT_NEAR(px.x(), g.keypoint.u, 1e-6);
    EXPECT_NEAR(px.y(), g.keypoint.v, 1e-6);
    EXPECT_NEAR(g.world.z, *dem.sample_elevation(g.world.x, g.world.y), 1e-12);
  }
}

TEST(DemGcps, ThreeBoxSceneYieldsDozens) {
  const DemRaster dem = synthetic::three_box_dem(256, 1.0);
  const auto gcps = detect_dem_gcps(dem, DetectorConfig{});
  EXPECT_GE(gcps.size(), 12u);
  EXPECT_LE(gcps.size(), 50u);
}

TEST(DemGcps, NodataKeypointsAreDropped) {
  const double nd = DemRaster::kDefaultNodata;
  std::vector<double> z(64 * 64, 0.0);
  for (int r = 20; r < 40; ++r) {
    for (int c = 20; c < 40; ++c) z[r * 64 + c] = 30.0;
  }
  for (int r = 0; r < 64; ++r) {
    for (int c = 0; c < 10; ++c) z[r * 64 + c] = nd;
  }
  GeoTransform gt;
  gt.y_geo_ul = 63;
  const DemRaster dem(64, 64, z, gt);
  for (const auto& g : detect_dem_gcps(dem, DetectorConfig{})) {
    EXPECT_TRUE(dem.sample_elevation(g.world.x, g.world.y).has_value());
    EXPECT_NE(g.world.z, nd);
  }
}

}  // namespace
}  // namespace monoplot
