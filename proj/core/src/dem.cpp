#include "monoplot/dem.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "monoplot/error.hpp"

namespace monoplot {

double GeoTransform::cell_size() const {
  const double w = std::hypot(p_width, col_rot);
  const double h = std::hypot(row_rot, p_height);
  return std::max(w, h);
}

DemRaster::DemRaster(int n_rows, int n_cols, std::vector<double> elevations,
                     GeoTransform transform, double nodata)
    : rows_(n_rows),
      cols_(n_cols),
      elevations_(std::move(elevations)),
      transform_(transform),
      nodata_(nodata) {
  if (rows_ < 2 || cols_ < 2) {
    throw InputError("DEM must have at least 2 rows and 2 columns");
  }
  if (elevations_.size() != static_cast<std::size_t>(rows_) * cols_) {
    throw InputError("DEM elevation count does not match rows x cols");
  }
  if (!transform_.invertible()) {
    throw InputError("DEM geotransform is not invertible");
  }
  for (double z : elevations_) {
    if (z == nodata_) continue;
    if (!std::isfinite(z)) throw InputError("DEM contains a non-finite elevation");
    if (!range_) {
      range_ = std::make_pair(z, z);
    } else {
      range_->first = std::min(range_->first, z);
      range_->second = std::max(range_->second, z);
    }
  }
}

std::optional<double> DemRaster::sample_pixel(double col, double row) const {
  if (!(col >= 0.0 && row >= 0.0 && col <= cols_ - 1 && row <= rows_ - 1)) {
    return std::nullopt;
  }
  int c0 = static_cast<int>(std::floor(col));
  int r0 = static_cast<int>(std::floor(row));
  c0 = std::min(c0, cols_ - 2);
  r0 = std::min(r0, rows_ - 2);
  const double fc = col - c0;
  const double fr = row - r0;

  const double z00 = at(r0, c0);
  const double z01 = at(r0, c0 + 1);
  const double z10 = at(r0 + 1, c0);
  const double z11 = at(r0 + 1, c0 + 1);
  // Only cells with nonzero weight count; a cell center stays exact next to nodata.
  auto bad = [this](double z, double weight) { return weight > 0.0 && z == nodata_; };
  if (bad(z00, (1.0 - fc) * (1.0 - fr)) || bad(z01, fc * (1.0 - fr)) || bad(z10, (1.0 - fc) * fr) ||
      bad(z11, fc * fr)) {
    return std::nullopt;
  }
  // Exact at cell centers and along cell-center lines.
  auto lerp = [](double a, double b, double t) {
    if (t == 0.0) return a;
    if (t == 1.0) return b;
    return a + t * (b - a);
  };
  return lerp(lerp(z00, z01, fc), lerp(z10, z11, fc), fr);
}

std::optional<double> DemRaster::sample_elevation(double x, double y) const {
  const Eigen::Vector2d px = world_to_pixel(x, y);
  return sample_pixel(px.x(), px.y());
}

GrayImage dem_to_grayscale(const DemRaster& dem) {
  const auto range = dem.elevation_range();
  if (!range) throw Error("empty DEM");
  const auto [lo, hi] = *range;
  GrayImage out(dem.cols(), dem.rows(), 0);
  if (hi == lo) return out;
  const double scale = 255.0 / (hi - lo);
  for (int r = 0; r < dem.rows(); ++r) {
    for (int c = 0; c < dem.cols(); ++c) {
      const double z = dem.at(r, c);
      if (dem.is_nodata_value(z)) continue;
      const double g = std::floor((z - lo) * scale + 0.5);
      out.at(c, r) = static_cast<std::uint8_t>(std::clamp(g, 0.0, 255.0));
    }
  }
  return out;
}

GrayImage dem_hillshade(const DemRaster& dem, double azimuth_deg, double altitude_deg) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  const double zenith = (90.0 - altitude_deg) * kDeg;
  // Convert compass azimuth to a math angle measured from +x.
  const double azimuth = (360.0 - azimuth_deg + 90.0) * kDeg;
  const GeoTransform& gt = dem.transform();
  const double dx = std::hypot(gt.p_width, gt.col_rot);
  const double dy = std::hypot(gt.row_rot, gt.p_height);

  GrayImage out(dem.cols(), dem.rows(), 0);
  for (int r = 0; r < dem.rows(); ++r) {
    for (int c = 0; c < dem.cols(); ++c) {
      if (dem.is_nodata(r, c)) continue;
      auto z = [&](int rr, int cc) {
        rr = std::clamp(rr, 0, dem.rows() - 1);
        cc = std::clamp(cc, 0, dem.cols() - 1);
        return dem.is_nodata(rr, cc) ? dem.at(r, c) : dem.at(rr, cc);
      };
      const double dzdx = (z(r, c + 1) - z(r, c - 1)) / (2.0 * dx);
      // Rows run southward for north-up rasters.
      const double dzdy = (z(r - 1, c) - z(r + 1, c)) / (2.0 * dy);
      const double slope = std::atan(std::hypot(dzdx, dzdy));
      const double aspect = std::atan2(dzdy, -dzdx);
      double shade = std::cos(zenith) * std::cos(slope) +
                     std::sin(zenith) * std::sin(slope) * std::cos(azimuth - aspect);
      shade = std::clamp(shade, 0.0, 1.0);
      out.at(c, r) = static_cast<std::uint8_t>(std::floor(shade * 255.0 + 0.5));
    }
  }
  return out;
}

std::filesystem::path geo_sidecar_path(const std::filesystem::path& asc_path) {
  auto p = asc_path;
  p.replace_extension(".geo.json");
  return p;
}

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return s;
}

bool parse_double(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

[[noreturn]] void fail(const std::filesystem::path& path, int line, const std::string& what) {
  throw InputError(path.string() + ":" + std::to_string(line) + ": " + what);
}

GeoTransform read_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    GeoTransform gt;
    gt.x_geo_ul = j.at("x_geo_ul").get<double>();
    gt.y_geo_ul = j.at("y_geo_ul").get<double>();
    gt.p_width = j.at("p_width").get<double>();
    gt.p_height = j.at("p_height").get<double>();
    gt.row_rot = j.value("row_rot", 0.0);
    gt.col_rot = j.value("col_rot", 0.0);
    return gt;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

DemRaster load_esri_ascii(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open DEM file " + path.string());

  int ncols = -1;
  int nrows = -1;
  std::optional<double> xll, yll, cellsize;
  bool center = false;
  double nodata = DemRaster::kDefaultNodata;

  std::string line;
  int line_no = 0;
  std::vector<double> values;
  bool in_data = false;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;

    if (!in_data && std::isalpha(static_cast<unsigned char>(first[0]))) {
      const std::string key = lower(first);
      std::string val_tok;
      if (!(ls >> val_tok)) fail(path, line_no, "header key '" + first + "' has no value");
      double v = 0.0;
      if (!parse_double(val_tok, v)) fail(path, line_no, "bad number '" + val_tok + "'");
      if (key == "ncols") {
        ncols = static_cast<int>(v);
      } else if (key == "nrows") {
        nrows = static_cast<int>(v);
      } else if (key == "xllcorner") {
        xll = v;
      } else if (key == "yllcorner") {
        yll = v;
      } else if (key == "xllcenter") {
        xll = v;
        center = true;
      } else if (key == "yllcenter") {
        yll = v;
        center = true;
      } else if (key == "cellsize") {
        cellsize = v;
      } else if (key == "nodata_value") {
        nodata = v;
      } else {
        fail(path, line_no, "unknown header key '" + first + "'");
      }
      continue;
    }

    if (!in_data) {
      if (ncols < 2 || nrows < 2 || !xll || !yll || !cellsize) {
        fail(path, line_no, "incomplete header (need ncols, nrows, xllcorner, yllcorner, cellsize)");
      }
      if (!(*cellsize > 0.0)) fail(path, line_no, "cellsize must be positive");
      values.reserve(static_cast<std::size_t>(ncols) * nrows);
      in_data = true;
    }

    std::string tok = first;
    do {
      double v = 0.0;
      if (!parse_double(tok, v)) fail(path, line_no, "bad elevation value '" + tok + "'");
      values.push_back(v);
    } while (ls >> tok);
  }

  if (!in_data) fail(path, line_no, "no elevation data");
  const std::size_t expected = static_cast<std::size_t>(ncols) * nrows;
  if (values.size() != expected) {
    fail(path, line_no,
         "expected " + std::to_string(expected) + " elevations, found " +
             std::to_string(values.size()));
  }

  GeoTransform gt;
  gt.x_geo_ul = *xll;
  gt.y_geo_ul = center ? *yll + (nrows - 1) * *cellsize : *yll + nrows * *cellsize;
  gt.p_width = *cellsize;
  gt.p_height = -*cellsize;
  gt.row_rot = 0.0;
  gt.col_rot = 0.0;

  const auto sidecar = geo_sidecar_path(path);
  if (std::filesystem::exists(sidecar)) gt = read_sidecar(sidecar);

  try {
    return DemRaster(nrows, ncols, std::move(values), gt, nodata);
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

void save_esri_ascii(const std::filesystem::path& path, const DemRaster& dem) {
  const GeoTransform& gt = dem.transform();
  const bool plain = gt.row_rot == 0.0 && gt.col_rot == 0.0 && gt.p_width > 0.0 &&
                     gt.p_height == -gt.p_width;
  {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    const double cell = plain ? gt.p_width : gt.cell_size();
    out << "ncols " << dem.cols() << "\n";
    out << "nrows " << dem.rows() << "\n";
    out << "xllcorner " << format_double(gt.x_geo_ul) << "\n";
    out << "yllcorner " << format_double(gt.y_geo_ul - dem.rows() * cell) << "\n";
    out << "cellsize " << format_double(cell) << "\n";
    out << "NODATA_value " << format_double(dem.nodata()) << "\n";
    for (int r = 0; r < dem.rows(); ++r) {
      for (int c = 0; c < dem.cols(); ++c) {
        if (c) out << ' ';
        out << format_double(dem.at(r, c));
      }
      out << '\n';
    }
  }
  const auto sidecar = geo_sidecar_path(path);
  if (!plain) {
    nlohmann::json j = {{"x_geo_ul", gt.x_geo_ul}, {"y_geo_ul", gt.y_geo_ul},
                        {"p_width", gt.p_width},   {"p_height", gt.p_height},
                        {"row_rot", gt.row_rot},   {"col_rot", gt.col_rot}};
    std::ofstream(sidecar) << j.dump(2) << "\n";
  } else if (std::filesystem::exists(sidecar)) {
    std::filesystem::remove(sidecar);
  }
}

}  // namespace monoplot
