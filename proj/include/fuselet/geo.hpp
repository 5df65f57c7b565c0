#pragma once
// Affine geographic grid shared by rasters, segmentation maps and masks.

#include <cstddef>
#include <string>

#include "fuselet/common.hpp"

namespace fuselet {

// North-up axis-aligned grid. origin is the outer corner of pixel (0,0):
// rows increase southward, columns eastward. pixel_width/pixel_height are
// positive degree (or generic unit) sizes.
struct GeoGrid {
  double origin_lon = 0.0;
  double origin_lat = 0.0;
  double pixel_width = 0.0;
  double pixel_height = 0.0;
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;

  void validate() const {
    if (n_rows == 0 || n_cols == 0)
      throw DataError("GeoGrid: empty grid (" + std::to_string(n_rows) + "x" +
                      std::to_string(n_cols) + ")");
    if (!(pixel_width > 0.0) || !(pixel_height > 0.0))
      throw DataError("GeoGrid: pixel sizes must be positive");
  }

  double lon_center(std::size_t col) const {
    return origin_lon + (static_cast<double>(col) + 0.5) * pixel_width;
  }
  double lat_center(std::size_t row) const {
    return origin_lat - (static_cast<double>(row) + 0.5) * pixel_height;
  }

  double lon_max() const {
    return origin_lon + static_cast<double>(n_cols) * pixel_width;
  }
  double lat_min() const {
    return origin_lat - static_cast<double>(n_rows) * pixel_height;
  }

  std::size_t size() const { return n_rows * n_cols; }

  bool operator==(const GeoGrid& o) const {
    return origin_lon == o.origin_lon && origin_lat == o.origin_lat &&
           pixel_width == o.pixel_width && pixel_height == o.pixel_height &&
           n_rows == o.n_rows && n_cols == o.n_cols;
  }
};

}  // namespace fuselet
