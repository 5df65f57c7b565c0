#pragma once
// Multi-channel raster with a joint validity mask.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fuselet/geo.hpp"

namespace fuselet {

// Channel-sequential storage (all of channel 0, then channel 1, ...), which is
// also the on-disk band-sequential payload order. The validity mask is joint
// across channels: values at invalid pixels carry no meaning and are never
// read by any consumer.
struct Raster {
  GeoGrid grid;
  std::size_t n_channels = 0;
  std::vector<float> values;         // [n_channels][n_rows][n_cols]
  std::vector<std::uint8_t> valid;   // [n_rows][n_cols], 0 or 1
  std::vector<std::string> channel_names;

  static Raster zeros(const GeoGrid& grid, std::size_t n_channels) {
    grid.validate();
    Raster r;
    r.grid = grid;
    r.n_channels = n_channels;
    r.values.assign(n_channels * grid.size(), 0.0f);
    r.valid.assign(grid.size(), 1);
    r.channel_names.resize(n_channels);
    for (std::size_t c = 0; c < n_channels; ++c)
      r.channel_names[c] = "ch" + std::to_string(c);
    return r;
  }

  std::size_t idx(std::size_t row, std::size_t col) const {
    return row * grid.n_cols + col;
  }
  float at(std::size_t ch, std::size_t row, std::size_t col) const {
    return values[ch * grid.size() + idx(row, col)];
  }
  float& at(std::size_t ch, std::size_t row, std::size_t col) {
    return values[ch * grid.size() + idx(row, col)];
  }
  bool is_valid(std::size_t row, std::size_t col) const {
    return valid[idx(row, col)] != 0;
  }
  void set_valid(std::size_t row, std::size_t col, bool v) {
    valid[idx(row, col)] = v ? 1 : 0;
  }

  void check_consistent() const {
    grid.validate();
    if (values.size() != n_channels * grid.size())
      throw DataError("Raster: value buffer size mismatch");
    if (valid.size() != grid.size())
      throw DataError("Raster: validity mask size mismatch");
  }

  std::size_t count_valid() const {
    std::size_t n = 0;
    for (auto v : valid) n += v ? 1 : 0;
    return n;
  }
};

// Binary masks are single-channel rasters with values restricted to {0,1}.
inline Raster make_mask(const GeoGrid& grid) { return Raster::zeros(grid, 1); }

inline bool mask_get(const Raster& m, std::size_t row, std::size_t col) {
  return m.at(0, row, col) != 0.0f;
}

inline void mask_set(Raster& m, std::size_t row, std::size_t col, bool on) {
  m.at(0, row, col) = on ? 1.0f : 0.0f;
}

}  // namespace fuselet
