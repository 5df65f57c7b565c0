#pragma once

// Structural-similarity scoring between single-channel rasters, the
// detection-vs-reference difference map, and dataset-level report rows.
// Windows are fully interior (no padding) and any window touching an invalid
// pixel in either raster is skipped; the score is the plain mean of the
// retained windows.  All accumulation is sequential and double precision, so
// results are bit-stable across runs and thread counts.

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fuselet/envi.hpp"
#include "fuselet/raster.hpp"

namespace fuselet {

struct SsimConfig {
  enum class Window { Gaussian11, Uniform8 };
  Window window = Window::Gaussian11;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;  // L; masks are binary so 1 by default
};

namespace detail {

// normalized window weights and side length
inline std::vector<double> ssim_weights(SsimConfig::Window window,
                                        std::size_t& side) {
  if (window == SsimConfig::Window::Uniform8) {
    side = 8;
    return std::vector<double>(64, 1.0 / 64.0);
  }
  side = 11;
  const double sigma = 1.5;
  std::vector<double> w(side * side);
  double sum = 0.0;
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) {
      const double dr = static_cast<double>(r) - 5.0;
      const double dc = static_cast<double>(c) - 5.0;
      w[r * side + c] = std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
      sum += w[r * side + c];
    }
  for (double& x : w) x /= sum;
  return w;
}

}  // namespace detail

inline double ssim(const Raster& a, const Raster& b,
                   const SsimConfig& cfg = {}) {
  if (a.n_channels != 1 || b.n_channels != 1)
    throw DataError("ssim: expected single-channel rasters");
  if (!(a.grid == b.grid))
    throw DataError("ssim: rasters are not co-gridded");
  if (cfg.k1 <= 0 || cfg.k2 <= 0 || cfg.dynamic_range <= 0)
    throw ConfigError("ssim: K1, K2 and L must be positive");

  std::size_t side = 0;
  const std::vector<double> w = detail::ssim_weights(cfg.window, side);
  const std::size_t rows = a.grid.n_rows, cols = a.grid.n_cols;
  if (rows < side || cols < side)
    throw DataError("ssim: raster smaller than the comparison window");

  const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
  const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);

  double total = 0.0;
  std::size_t retained = 0;
  for (std::size_t top = 0; top + side <= rows; ++top)
    for (std::size_t left = 0; left + side <= cols; ++left) {
      bool usable = true;
      for (std::size_t r = 0; r < side && usable; ++r)
        for (std::size_t c = 0; c < side; ++c) {
          const std::size_t pix = (top + r) * cols + (left + c);
          if (!a.valid[pix] || !b.valid[pix]) {
            usable = false;
            break;
          }
        }
      if (!usable) continue;

      // weighted moments; the product terms share one code path so that
      // identical inputs give numerator == denominator bit for bit
      double mu_a = 0.0, mu_b = 0.0, raw_aa = 0.0, raw_bb = 0.0, raw_ab = 0.0;
      for (std::size_t r = 0; r < side; ++r)
        for (std::size_t c = 0; c < side; ++c) {
          const std::size_t pix = (top + r) * cols + (left + c);
          const double wv = w[r * side + c];
          const double av = a.values[pix], bv = b.values[pix];
          mu_a += wv * av;
          mu_b += wv * bv;
          raw_aa += wv * av * av;
          raw_bb += wv * bv * bv;
          raw_ab += wv * av * bv;
        }
      const double var_a = raw_aa - mu_a * mu_a;
      const double var_b = raw_bb - mu_b * mu_b;
      const double cov = raw_ab - mu_a * mu_b;
      const double numerator = (2.0 * (mu_a * mu_b) + c1) * (2.0 * cov + c2);
      const double denominator =
          (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
      total += numerator / denominator;
      ++retained;
    }
  if (retained == 0)
    throw DataError("ssim: no window avoids invalid pixels");
  return total / static_cast<double>(retained);
}

// +1 detection-only, -1 reference-only, 0 agreement; invalid where either is
inline LabelRaster difference_map(const Raster& detection,
                                  const Raster& reference) {
  if (detection.n_channels != 1 || reference.n_channels != 1)
    throw DataError("difference_map: expected single-channel masks");
  if (!(detection.grid == reference.grid))
    throw DataError("difference_map: masks are not co-gridded");
  LabelRaster out;
  out.grid = detection.grid;
  out.labels.assign(out.grid.size(), 0);
  out.valid.assign(out.grid.size(), 0);
  for (std::size_t pix = 0; pix < out.grid.size(); ++pix) {
    if (!detection.valid[pix] || !reference.valid[pix]) continue;
    out.valid[pix] = 1;
    const bool det = detection.values[pix] != 0.0f;
    const bool ref = reference.values[pix] != 0.0f;
    out.labels[pix] = det == ref ? 0 : det ? 1 : -1;
  }
  return out;
}

struct EvalPair {
  Raster detection;
  Raster reference;
  std::string dataset;
};

struct EvalRow {
  std::string dataset;
  std::uint64_t total_pixel_count = 0;  // jointly valid pixels
  double ssim = 0.0;                    // pixel-count-weighted mean
};

inline std::vector<EvalRow> evaluate_set(const std::vector<EvalPair>& pairs,
                                         const SsimConfig& cfg = {}) {
  if (pairs.empty()) throw DataError("evaluate_set: no detection pairs");
  std::map<std::string, std::pair<std::uint64_t, double>> agg;  // count, sum
  for (const EvalPair& pair : pairs) {
    if (!(pair.detection.grid == pair.reference.grid))
      throw DataError("evaluate_set: pair for dataset '" + pair.dataset +
                      "' is not co-gridded");
    std::uint64_t joint = 0;
    for (std::size_t pix = 0; pix < pair.detection.grid.size(); ++pix)
      if (pair.detection.valid[pix] && pair.reference.valid[pix]) ++joint;
    const double score = ssim(pair.detection, pair.reference, cfg);
    auto& [count, weighted] = agg[pair.dataset];
    count += joint;
    weighted += score * static_cast<double>(joint);
  }
  std::vector<EvalRow> rows;
  for (const auto& [dataset, acc] : agg) {
    EvalRow row;
    row.dataset = dataset;
    row.total_pixel_count = acc.first;
    row.ssim = acc.first > 0 ? acc.second / static_cast<double>(acc.first) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

inline std::string report_csv(const std::vector<EvalRow>& rows) {
  std::string out = "dataset,total_pixel_count,ssim\n";
  for (const EvalRow& row : rows) {
    out += row.dataset;
    out += ',';
    out += std::to_string(row.total_pixel_count);
    out += ',';
    out += detail::fmt_g17(row.ssim);
    out += '\n';
  }
  return out;
}

inline std::string report_text(const std::vector<EvalRow>& rows) {
  std::size_t name_width = std::string("dataset").size();
  for (const EvalRow& row : rows)
    name_width = std::max(name_width, row.dataset.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(name_width) + 2) << "dataset"
     << std::right << std::setw(18) << "total pixel count" << std::setw(10)
     << "ssim" << '\n';
  for (const EvalRow& row : rows) {
    os << std::left << std::setw(static_cast<int>(name_width) + 2)
       << row.dataset << std::right << std::setw(18) << row.total_pixel_count
       << std::setw(10) << std::fixed << std::setprecision(4) << row.ssim
       << '\n';
  }
  return os.str();
}

}  // namespace fuselet
