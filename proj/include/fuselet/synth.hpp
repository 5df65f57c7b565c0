#pragma once
// Deterministic synthetic scene generator: smoothed-noise background bands,
// compact hot blobs added to the thermal channels, elongated smoke bands added
// to the visible channels, exact half-amplitude truth masks, and small
// high-certainty label rectangles (inside the truth interiors) plus clean
// background rectangles for each class.
//
// Everything derives from one Rng(seed) stream with a fixed draw order:
//   1. per channel, n_rows*n_cols uniforms (row-major) for the noise field;
//   2. per fire: center row, center col, radius;
//   3. per plume: anchor draws (only when there are no fires), then per
//      placement attempt direction/length/widths until one fits;
//   4. per class, per background rectangle: side draws, then per attempt an
//      (row, col) position until one lands clear of both truth masks.
// Same spec therefore means bit-identical scene, truths and labels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fuselet/common.hpp"
#include "fuselet/polygons.hpp"
#include "fuselet/raster.hpp"

namespace fuselet {

struct SceneSpec {
  std::int64_t n_rows = 0;
  std::int64_t n_cols = 0;
  std::int64_t n_vis_channels = 4;
  std::int64_t n_thermal_channels = 2;
  std::int64_t n_fires = 0;
  std::int64_t n_plumes = 0;
  std::uint64_t seed = 0;
  double terrain_roughness = 0.3;  // peak-to-peak scale of the background
  double fire_intensity = 3.0;     // peak value added to thermal channels
  double smoke_opacity = 1.2;      // peak value added to visible channels

  void validate() const {
    if (n_rows < 32 || n_cols < 32)
      throw ConfigError("SceneSpec: n_rows/n_cols must be >= 32, got " +
                        std::to_string(n_rows) + "x" + std::to_string(n_cols));
    if (n_vis_channels < 0 || n_thermal_channels < 0 || n_fires < 0 ||
        n_plumes < 0)
      throw ConfigError("SceneSpec: channel/object counts must be >= 0");
    if (n_vis_channels + n_thermal_channels < 1)
      throw ConfigError("SceneSpec: need at least one channel");
    if (!std::isfinite(terrain_roughness) || terrain_roughness < 0.0)
      throw ConfigError("SceneSpec: terrain_roughness must be finite and >= 0");
    if (!std::isfinite(fire_intensity) || fire_intensity <= 0.0)
      throw ConfigError("SceneSpec: fire_intensity must be finite and > 0");
    if (!std::isfinite(smoke_opacity) || smoke_opacity <= 0.0)
      throw ConfigError("SceneSpec: smoke_opacity must be finite and > 0");
  }
};

struct SynthScene {
  Raster raster;      // n_vis_channels visible bands, then thermal bands
  Raster truth_fire;  // single channel, values in {0,1}
  Raster truth_smoke;
  std::vector<LabelPolygonSet> labels;  // fire/fire_background, smoke/...
};

namespace detail {

struct FireBlob {
  double cy = 0.0, cx = 0.0;  // center, pixel units
  double radius = 0.0;        // support radius; truth radius = radius/sqrt(2)
};

struct PlumeBand {
  double ay = 0.0, ax = 0.0;  // start of the axis segment
  double uy = 0.0, ux = 0.0;  // unit direction
  double length = 0.0;
  double w0 = 0.0, w1 = 0.0;  // half-width of the support at t=0 and t=1
};

// Truncated box blur: mean over the window clipped at the borders, so values
// stay inside the input range.
inline void box_blur_inplace(std::vector<double>& img, std::size_t rows,
                             std::size_t cols, std::size_t radius) {
  std::vector<double> tmp(img.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      std::size_t c0 = c >= radius ? c - radius : 0;
      std::size_t c1 = std::min(cols - 1, c + radius);
      double sum = 0.0;
      for (std::size_t cc = c0; cc <= c1; ++cc) sum += img[r * cols + cc];
      tmp[r * cols + c] = sum / static_cast<double>(c1 - c0 + 1);
    }
  }
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) {
      std::size_t r0 = r >= radius ? r - radius : 0;
      std::size_t r1 = std::min(rows - 1, r + radius);
      double sum = 0.0;
      for (std::size_t rr = r0; rr <= r1; ++rr) sum += tmp[rr * cols + c];
      img[r * cols + c] = sum / static_cast<double>(r1 - r0 + 1);
    }
  }
}

// Quadratic compact bump: peak 1 at the center, 0 at distance >= radius.
// Half amplitude exactly at distance radius/sqrt(2).
inline double bump(double d2, double radius) {
  double q = d2 / (radius * radius);
  return q >= 1.0 ? 0.0 : 1.0 - q;
}

inline double fire_field_at(const std::vector<FireBlob>& blobs, double py,
                            double px) {
  double best = 0.0;
  for (const auto& b : blobs) {
    double dy = py - b.cy, dx = px - b.cx;
    best = std::max(best, bump(dy * dy + dx * dx, b.radius));
  }
  return best;
}

inline double smoke_field_at(const std::vector<PlumeBand>& bands, double py,
                             double px) {
  double best = 0.0;
  for (const auto& p : bands) {
    double ry = py - p.ay, rx = px - p.ax;
    double t = (ry * p.uy + rx * p.ux) / p.length;
    t = std::clamp(t, 0.0, 1.0);
    double cy = p.ay + t * p.length * p.uy;
    double cx = p.ax + t * p.length * p.ux;
    double dy = py - cy, dx = px - cx;
    double w = p.w0 + (p.w1 - p.w0) * t;
    best = std::max(best, bump(dy * dy + dx * dx, w));
  }
  return best;
}

// Axis-aligned rectangle of whole pixels [r0..r1] x [c0..c1], corners snapped
// to cell boundaries so every covered pixel center is strictly interior.
inline Ring pixel_rect_ring(const GeoGrid& grid, std::size_t r0, std::size_t r1,
                            std::size_t c0, std::size_t c1) {
  double lon_w = grid.origin_lon + static_cast<double>(c0) * grid.pixel_width;
  double lon_e = grid.origin_lon + static_cast<double>(c1 + 1) * grid.pixel_width;
  double lat_n = grid.origin_lat - static_cast<double>(r0) * grid.pixel_height;
  double lat_s = grid.origin_lat - static_cast<double>(r1 + 1) * grid.pixel_height;
  return Ring{{lon_w, lat_n}, {lon_e, lat_n}, {lon_e, lat_s},
              {lon_w, lat_s}, {lon_w, lat_n}};
}

}  // namespace detail

inline SynthScene generate_scene(const SceneSpec& spec) {
  spec.validate();
  const std::size_t rows = static_cast<std::size_t>(spec.n_rows);
  const std::size_t cols = static_cast<std::size_t>(spec.n_cols);
  const std::size_t n_vis = static_cast<std::size_t>(spec.n_vis_channels);
  const std::size_t n_thermal = static_cast<std::size_t>(spec.n_thermal_channels);
  const std::size_t n_ch = n_vis + n_thermal;
  const double min_dim = static_cast<double>(std::min(rows, cols));

  GeoGrid grid;
  grid.origin_lon = -120.0;
  grid.origin_lat = 45.0;
  grid.pixel_width = 0.001;
  grid.pixel_height = 0.001;
  grid.n_rows = rows;
  grid.n_cols = cols;

  Rng rng(spec.seed);
  SynthScene scene;
  scene.raster = Raster::zeros(grid, n_ch);
  for (std::size_t ch = 0; ch < n_ch; ++ch)
    scene.raster.channel_names[ch] =
        ch < n_vis ? "vis_" + std::to_string(ch)
                   : "thermal_" + std::to_string(ch - n_vis);

  // 1. background: per-channel smoothed noise around 0.5
  for (std::size_t ch = 0; ch < n_ch; ++ch) {
    std::vector<double> field(rows * cols);
    for (double& v : field) v = rng.uniform();
    detail::box_blur_inplace(field, rows, cols, 2);
    detail::box_blur_inplace(field, rows, cols, 2);
    float* out = scene.raster.values.data() + ch * rows * cols;
    for (std::size_t i = 0; i < rows * cols; ++i)
      out[i] = static_cast<float>(0.5 +
                                  spec.terrain_roughness * (field[i] - 0.5));
  }

  // 2. fires: compact blobs, centers kept clear of the border
  std::vector<detail::FireBlob> fires;
  {
    const double r_lo = 4.5, r_hi = 6.5;
    const double margin = r_hi + 2.0;
    if (spec.n_fires > 0 && (min_dim - 2.0 * margin) < 1.0)
      throw DataError("generate_scene: grid too small to place fires");
    for (std::int64_t i = 0; i < spec.n_fires; ++i) {
      detail::FireBlob b;
      b.cy = margin + rng.uniform() * (static_cast<double>(rows) - 2.0 * margin);
      b.cx = margin + rng.uniform() * (static_cast<double>(cols) - 2.0 * margin);
      b.radius = r_lo + rng.uniform() * (r_hi - r_lo);
      fires.push_back(b);
    }
  }

  // 3. plumes: tapering bands anchored just inside a fire's truth disk so the
  // band head partially overlaps the fire, widening away from it
  std::vector<detail::PlumeBand> plumes;
  for (std::int64_t i = 0; i < spec.n_plumes; ++i) {
    double ay, ax;
    if (!fires.empty()) {
      const auto& f = fires[static_cast<std::size_t>(i) % fires.size()];
      ay = f.cy;
      ax = f.cx;
    } else {
      ay = 10.0 + rng.uniform() * (static_cast<double>(rows) - 20.0);
      ax = 10.0 + rng.uniform() * (static_cast<double>(cols) - 20.0);
    }
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      double theta = rng.uniform() * 2.0 * 3.14159265358979323846;
      double length = (0.22 + rng.uniform() * 0.10) * min_dim;
      double w0 = 2.6 + rng.uniform() * 0.6;
      double w1 = 4.5 + rng.uniform() * 1.5;
      detail::PlumeBand p;
      p.uy = std::sin(theta);
      p.ux = std::cos(theta);
      p.length = length;
      p.w0 = w0;
      p.w1 = w1;
      if (!fires.empty()) {
        // start 60% of the way out of the truth disk, heading outward
        const auto& f = fires[static_cast<std::size_t>(i) % fires.size()];
        double r_truth = f.radius / std::sqrt(2.0);
        p.ay = ay + 0.6 * r_truth * p.uy;
        p.ax = ax + 0.6 * r_truth * p.ux;
      } else {
        p.ay = ay;
        p.ax = ax;
      }
      double ey = p.ay + length * p.uy;
      double ex = p.ax + length * p.ux;
      double m = w1 + 2.0;
      if (ey >= m && ey <= static_cast<double>(rows) - m && ex >= m &&
          ex <= static_cast<double>(cols) - m) {
        plumes.push_back(p);
        placed = true;
      }
    }
    if (!placed)
      throw DataError("generate_scene: grid too small to place smoke plumes");
  }

  // 4. composite fields, channel updates and half-amplitude truth masks
  scene.truth_fire = make_mask(grid);
  scene.truth_smoke = make_mask(grid);
  std::vector<double> fire_field(rows * cols, 0.0);
  std::vector<double> smoke_field(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double py = static_cast<double>(r) + 0.5;
    for (std::size_t c = 0; c < cols; ++c) {
      double px = static_cast<double>(c) + 0.5;
      std::size_t i = r * cols + c;
      fire_field[i] = spec.fire_intensity * detail::fire_field_at(fires, py, px);
      smoke_field[i] = spec.smoke_opacity * detail::smoke_field_at(plumes, py, px);
      if (fires.size() > 0 && fire_field[i] >= 0.5 * spec.fire_intensity)
        scene.truth_fire.values[i] = 1.0f;
      if (plumes.size() > 0 && smoke_field[i] >= 0.5 * spec.smoke_opacity)
        scene.truth_smoke.values[i] = 1.0f;
    }
  }
  for (std::size_t ch = 0; ch < n_ch; ++ch) {
    float* out = scene.raster.values.data() + ch * rows * cols;
    const std::vector<double>& add = ch < n_vis ? smoke_field : fire_field;
    for (std::size_t i = 0; i < rows * cols; ++i)
      out[i] = static_cast<float>(out[i] + add[i]);
  }

  // 5. high-certainty class rectangles strictly inside the truth regions.
  // Candidate rectangles come from the analytic geometry; each is then
  // verified pixel-by-pixel against the field before being kept.
  auto verified_rect = [&](const std::vector<double>& field, double half_amp,
                           double cy, double cx, double h,
                           std::vector<Ring>& out) {
    if (h < 0.5) return false;
    // pixel (r, c) center is (r + 0.5, c + 0.5)
    double lo_r = cy - h - 0.5, hi_r = cy + h - 0.5;
    double lo_c = cx - h - 0.5, hi_c = cx + h - 0.5;
    std::int64_t r0 = static_cast<std::int64_t>(std::ceil(lo_r));
    std::int64_t r1 = static_cast<std::int64_t>(std::floor(hi_r));
    std::int64_t c0 = static_cast<std::int64_t>(std::ceil(lo_c));
    std::int64_t c1 = static_cast<std::int64_t>(std::floor(hi_c));
    if (r0 > r1 || c0 > c1 || r0 < 0 || c0 < 0 ||
        r1 >= static_cast<std::int64_t>(rows) ||
        c1 >= static_cast<std::int64_t>(cols))
      return false;
    for (std::int64_t r = r0; r <= r1; ++r)
      for (std::int64_t c = c0; c <= c1; ++c)
        if (field[static_cast<std::size_t>(r) * cols +
                  static_cast<std::size_t>(c)] < half_amp * (1.0 + 1e-9))
          return false;
    out.push_back(detail::pixel_rect_ring(grid, static_cast<std::size_t>(r0),
                                          static_cast<std::size_t>(r1),
                                          static_cast<std::size_t>(c0),
                                          static_cast<std::size_t>(c1)));
    return true;
  };

  std::vector<Ring> fire_rects, smoke_rects;
  for (const auto& f : fires) {
    double r_truth = f.radius / std::sqrt(2.0);
    double h = (r_truth - 1.2) / std::sqrt(2.0);
    verified_rect(fire_field, 0.5 * spec.fire_intensity, f.cy, f.cx, h,
                  fire_rects);
  }
  if (spec.n_fires > 0 && fire_rects.empty())
    throw DataError("generate_scene: could not inscribe fire label rectangles");
  for (const auto& p : plumes) {
    for (double t : {0.42, 0.62, 0.82}) {
      double cy = p.ay + t * p.length * p.uy;
      double cx = p.ax + t * p.length * p.ux;
      double w = p.w0 + (p.w1 - p.w0) * t;
      double h = (w / std::sqrt(2.0) - 1.2) / std::sqrt(2.0);
      verified_rect(smoke_field, 0.5 * spec.smoke_opacity, cy, cx, h,
                    smoke_rects);
    }
  }
  if (spec.n_plumes > 0 && smoke_rects.empty())
    throw DataError("generate_scene: could not inscribe smoke label rectangles");

  // 6. background rectangles: clear of BOTH truth masks with a 2-pixel guard
  // ring, so they never touch the class they contrast with (or its skirt)
  auto background_rects = [&](std::size_t want) {
    std::vector<Ring> out;
    for (std::size_t k = 0; k < want; ++k) {
      std::size_t side_r = 6 + static_cast<std::size_t>(rng.uniform() * 5.0);
      std::size_t side_c = 6 + static_cast<std::size_t>(rng.uniform() * 5.0);
      bool placed = false;
      for (int attempt = 0; attempt < 300 && !placed; ++attempt) {
        std::size_t r0 = static_cast<std::size_t>(
            rng.uniform() * static_cast<double>(rows - side_r));
        std::size_t c0 = static_cast<std::size_t>(
            rng.uniform() * static_cast<double>(cols - side_c));
        bool clean = true;
        std::size_t gr0 = r0 >= 2 ? r0 - 2 : 0;
        std::size_t gc0 = c0 >= 2 ? c0 - 2 : 0;
        std::size_t gr1 = std::min(rows - 1, r0 + side_r + 1);
        std::size_t gc1 = std::min(cols - 1, c0 + side_c + 1);
        for (std::size_t r = gr0; r <= gr1 && clean; ++r)
          for (std::size_t c = gc0; c <= gc1 && clean; ++c)
            if (scene.truth_fire.values[r * cols + c] != 0.0f ||
                scene.truth_smoke.values[r * cols + c] != 0.0f)
              clean = false;
        if (clean) {
          out.push_back(detail::pixel_rect_ring(grid, r0, r0 + side_r - 1, c0,
                                                c0 + side_c - 1));
          placed = true;
        }
      }
      if (!placed)
        throw DataError(
            "generate_scene: grid too crowded to place background labels");
    }
    return out;
  };

  if (!fire_rects.empty()) {
    scene.labels.push_back({"fire", fire_rects});
    scene.labels.push_back({"fire_background", background_rects(2)});
  }
  if (!smoke_rects.empty()) {
    scene.labels.push_back({"smoke", smoke_rects});
    scene.labels.push_back({"smoke_background", background_rects(2)});
  }
  return scene;
}

}  // namespace fuselet
