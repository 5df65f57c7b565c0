#pragma once
// Nearest-neighbor regridding and multi-raster collocation.

#include <algorithm>
#include <cmath>
#include <vector>

#include "fuselet/raster.hpp"

namespace fuselet {

namespace detail {

// Index of the source pixel whose center is nearest to coordinate `x` along
// one axis (positions origin + (i+0.5)*step). Equidistant ties resolve to the
// lower index. Returns -1 when the nearest center would fall outside [0, n).
inline std::ptrdiff_t nearest_index(double x, double origin, double step,
                                    std::size_t n) {
  double f = (x - origin) / step - 0.5;           // fractional index
  double idx = std::ceil(f - 0.5);                // ties toward lower index
  if (idx < 0.0 || idx >= static_cast<double>(n)) return -1;
  return static_cast<std::ptrdiff_t>(idx);
}

inline bool extents_overlap(const GeoGrid& a, const GeoGrid& b) {
  double lon0 = std::max(a.origin_lon, b.origin_lon);
  double lon1 = std::min(a.lon_max(), b.lon_max());
  double lat0 = std::max(a.lat_min(), b.lat_min());
  double lat1 = std::min(a.origin_lat, b.origin_lat);
  return lon0 < lon1 && lat0 < lat1;
}

}  // namespace detail

// Regrids `src` onto `target`. Each output pixel takes the value of the source
// pixel whose center is nearest its own center; output pixels are invalid when
// the source pixel is invalid or the target center falls outside the source
// extent. Errors when the two extents do not overlap at all.
inline Raster resample_nearest(const Raster& src, const GeoGrid& target,
                               int threads = 1) {
  src.check_consistent();
  target.validate();
  if (!detail::extents_overlap(src.grid, target))
    throw DataError("resample_nearest: source and target extents are disjoint");

  Raster out;
  out.grid = target;
  out.n_channels = src.n_channels;
  out.values.assign(src.n_channels * target.size(), 0.0f);
  out.valid.assign(target.size(), 0);
  out.channel_names = src.channel_names;

  const std::size_t src_plane = src.grid.size();
  const std::size_t dst_plane = target.size();

  // Column lookup is shared by every row.
  std::vector<std::ptrdiff_t> col_of(target.n_cols);
  for (std::size_t c = 0; c < target.n_cols; ++c)
    col_of[c] = detail::nearest_index(target.lon_center(c), src.grid.origin_lon,
                                      src.grid.pixel_width, src.grid.n_cols);

  parallel_for(target.n_rows, threads, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t r = r0; r < r1; ++r) {
      // latitude decreases with row index, so measure from the top edge
      std::ptrdiff_t sr = detail::nearest_index(
          -target.lat_center(r), -src.grid.origin_lat, src.grid.pixel_height,
          src.grid.n_rows);
      for (std::size_t c = 0; c < target.n_cols; ++c) {
        std::ptrdiff_t sc = col_of[c];
        if (sr < 0 || sc < 0) continue;
        std::size_t sp = static_cast<std::size_t>(sr) * src.grid.n_cols +
                         static_cast<std::size_t>(sc);
        std::size_t dp = r * target.n_cols + c;
        // values copy through even when masked so that regridding a raster
        // onto its own grid reproduces the buffers bit for bit
        out.valid[dp] = src.valid[sp];
        for (std::size_t ch = 0; ch < src.n_channels; ++ch)
          out.values[ch * dst_plane + dp] = src.values[ch * src_plane + sp];
      }
    }
  });
  return out;
}

// Stacks several rasters of the same area onto one common grid: the
// intersection of all extents at the coarsest (largest) pixel size among the
// inputs. Channels concatenate in input order; a pixel is valid only where
// every input contributed a valid value.
inline Raster collocate_stack(const std::vector<Raster>& inputs,
                              int threads = 1) {
  if (inputs.empty()) throw DataError("collocate_stack: no input rasters");
  for (const Raster& r : inputs) r.check_consistent();

  double lon0 = inputs[0].grid.origin_lon, lon1 = inputs[0].grid.lon_max();
  double lat1 = inputs[0].grid.origin_lat, lat0 = inputs[0].grid.lat_min();
  double pw = inputs[0].grid.pixel_width, ph = inputs[0].grid.pixel_height;
  for (const Raster& r : inputs) {
    lon0 = std::max(lon0, r.grid.origin_lon);
    lon1 = std::min(lon1, r.grid.lon_max());
    lat1 = std::min(lat1, r.grid.origin_lat);
    lat0 = std::max(lat0, r.grid.lat_min());
    pw = std::max(pw, r.grid.pixel_width);
    ph = std::max(ph, r.grid.pixel_height);
  }
  if (!(lon0 < lon1) || !(lat0 < lat1))
    throw DataError("collocate_stack: input extents have empty intersection");

  // Whole pixels that fit in the intersection; the epsilon absorbs the
  // round-off of extent arithmetic so a raster collocated with itself keeps
  // its own dimensions.
  GeoGrid grid;
  grid.origin_lon = lon0;
  grid.origin_lat = lat1;
  grid.pixel_width = pw;
  grid.pixel_height = ph;
  grid.n_cols = static_cast<std::size_t>(
      std::floor((lon1 - lon0) / pw + 1e-9));
  grid.n_rows = static_cast<std::size_t>(
      std::floor((lat1 - lat0) / ph + 1e-9));
  if (grid.n_cols == 0 || grid.n_rows == 0)
    throw DataError("collocate_stack: intersection smaller than one pixel");

  std::size_t total_channels = 0;
  for (const Raster& r : inputs) total_channels += r.n_channels;

  Raster out;
  out.grid = grid;
  out.n_channels = total_channels;
  out.values.assign(total_channels * grid.size(), 0.0f);
  out.valid.assign(grid.size(), 1);
  out.channel_names.reserve(total_channels);

  std::size_t ch_off = 0;
  for (const Raster& r : inputs) {
    Raster rr = resample_nearest(r, grid, threads);
    std::copy(rr.values.begin(), rr.values.end(),
              out.values.begin() + static_cast<std::ptrdiff_t>(ch_off * grid.size()));
    for (std::size_t p = 0; p < grid.size(); ++p)
      if (!rr.valid[p]) out.valid[p] = 0;
    for (const auto& name : rr.channel_names) out.channel_names.push_back(name);
    ch_off += rr.n_channels;
  }
  return out;
}

}  // namespace fuselet
