#pragma once

// Detection-object shaping on binary masks: classic raster-scan border
// following (8-connected foreground), contour filling, and connected-
// component area filtering.  Filling recovers interiors as the complement of
// a 4-connected background flood from the frame, which coincides with the
// even-odd interior for the closed 8-connected borders the tracer emits and
// closes any interior holes, matching the intended object construction.

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "fuselet/raster.hpp"

namespace fuselet {

struct PixelRC {
  std::int32_t row = 0;
  std::int32_t col = 0;
  bool operator==(const PixelRC&) const = default;
};

struct Contour {
  enum class Kind { Outer, Hole };
  Kind kind = Kind::Outer;
  std::vector<PixelRC> points;  // closed 8-adjacent chain of border pixels
};

namespace detail {

// neighbor tables in clockwise order starting east, row axis pointing down
inline constexpr int kCwRow[8] = {0, 1, 1, 1, 0, -1, -1, -1};
inline constexpr int kCwCol[8] = {1, 1, 0, -1, -1, -1, 0, 1};

inline int direction_to(std::int32_t from_r, std::int32_t from_c,
                        std::int32_t to_r, std::int32_t to_c) {
  for (int d = 0; d < 8; ++d)
    if (from_r + kCwRow[d] == to_r && from_c + kCwCol[d] == to_c) return d;
  throw DataError("border following: pixels not adjacent");
}

}  // namespace detail

// Raster-scan border following over a binary mask.  Every 8-connected
// foreground component produces exactly one outer contour; borders of holes
// come out with kind = Hole.  Mask validity is ignored: tracing operates on
// the stored 0/1 values.
inline std::vector<Contour> trace_borders(const Raster& mask) {
  if (mask.n_channels != 1)
    throw DataError("trace_borders: expected a single-channel mask");
  const std::size_t rows = mask.grid.n_rows, cols = mask.grid.n_cols;
  // padded working image; 0 frame, foreground 1, borders get marked +/-NBD
  const std::size_t pr = rows + 2, pc = cols + 2;
  std::vector<std::int32_t> f(pr * pc, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      f[(r + 1) * pc + (c + 1)] = mask.values[r * cols + c] != 0.0f ? 1 : 0;
  auto at = [&](std::int32_t r, std::int32_t c) -> std::int32_t& {
    return f[static_cast<std::size_t>(r) * pc + static_cast<std::size_t>(c)];
  };

  std::vector<Contour> out;
  std::int32_t nbd = 1;  // the frame counts as border 1
  for (std::int32_t i = 1; i <= static_cast<std::int32_t>(rows); ++i) {
    for (std::int32_t j = 1; j <= static_cast<std::int32_t>(cols); ++j) {
      std::int32_t i2, j2;
      Contour::Kind kind;
      if (at(i, j) == 1 && at(i, j - 1) == 0) {
        kind = Contour::Kind::Outer;
        i2 = i;
        j2 = j - 1;
      } else if (at(i, j) >= 1 && at(i, j + 1) == 0) {
        kind = Contour::Kind::Hole;
        i2 = i;
        j2 = j + 1;
      } else {
        continue;
      }
      ++nbd;
      Contour contour;
      contour.kind = kind;

      // clockwise scan from (i2,j2) for a nonzero neighbor of (i,j)
      const int start_dir = detail::direction_to(i, j, i2, j2);
      int d = -1;
      for (int step = 1; step <= 8; ++step) {
        const int cand = (start_dir + step) % 8;
        if (at(i + detail::kCwRow[cand], j + detail::kCwCol[cand]) != 0) {
          d = cand;
          break;
        }
      }
      if (d < 0) {  // isolated pixel
        at(i, j) = -nbd;
        contour.points.push_back({i - 1, j - 1});
        out.push_back(std::move(contour));
        continue;
      }
      const std::int32_t i1 = i + detail::kCwRow[d], j1 = j + detail::kCwCol[d];
      std::int32_t pi2 = i1, pj2 = j1;  // previously examined pixel
      std::int32_t i3 = i, j3 = j;      // current border pixel
      while (true) {
        // counterclockwise from the element after (pi2,pj2) around (i3,j3)
        const int from = detail::direction_to(i3, j3, pi2, pj2);
        int d4 = -1;
        bool east_was_zero = false;
        for (int step = 1; step <= 8; ++step) {
          const int cand = (from - step % 8 + 8) % 8;
          const std::int32_t nr = i3 + detail::kCwRow[cand];
          const std::int32_t nc = j3 + detail::kCwCol[cand];
          if (at(nr, nc) != 0) {
            d4 = cand;
            break;
          }
          if (cand == 0) east_was_zero = true;  // east neighbor examined, zero
        }
        const std::int32_t i4 = i3 + detail::kCwRow[d4];
        const std::int32_t j4 = j3 + detail::kCwCol[d4];
        if (east_was_zero)
          at(i3, j3) = -nbd;
        else if (at(i3, j3) == 1)
          at(i3, j3) = nbd;
        contour.points.push_back({i3 - 1, j3 - 1});
        if (i4 == i && j4 == j && i3 == i1 && j3 == j1) break;
        pi2 = i3;
        pj2 = j3;
        i3 = i4;
        j3 = j4;
      }
      out.push_back(std::move(contour));
    }
  }
  return out;
}

// 4-connected background flood from the frame over pixels not blocked by
// `blocked`; returns reached flags (padded-coordinate free, plain row/col)
namespace detail {

inline std::vector<std::uint8_t> flood_from_frame(
    const std::vector<std::uint8_t>& blocked, std::size_t rows,
    std::size_t cols) {
  std::vector<std::uint8_t> reached(rows * cols, 0);
  std::deque<std::pair<std::int32_t, std::int32_t>> queue;
  auto push = [&](std::int32_t r, std::int32_t c) {
    if (r < 0 || c < 0 || r >= static_cast<std::int32_t>(rows) ||
        c >= static_cast<std::int32_t>(cols))
      return;
    const std::size_t pix = static_cast<std::size_t>(r) * cols + c;
    if (reached[pix] || blocked[pix]) return;
    reached[pix] = 1;
    queue.emplace_back(r, c);
  };
  for (std::size_t c = 0; c < cols; ++c) {
    push(0, static_cast<std::int32_t>(c));
    push(static_cast<std::int32_t>(rows) - 1, static_cast<std::int32_t>(c));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    push(static_cast<std::int32_t>(r), 0);
    push(static_cast<std::int32_t>(r), static_cast<std::int32_t>(cols) - 1);
  }
  while (!queue.empty()) {
    auto [r, c] = queue.front();
    queue.pop_front();
    push(r - 1, c);
    push(r + 1, c);
    push(r, c - 1);
    push(r, c + 1);
  }
  return reached;
}

}  // namespace detail

// Fill traced contours back into a solid mask on the given grid.  Outer
// contours bound the objects; anything the background flood cannot reach
// from the frame is inside.  Holes are closed by default; preserve_holes
// carves the interiors of hole contours back out.
inline Raster fill_contours(const std::vector<Contour>& contours,
                            const GeoGrid& grid, bool preserve_holes = false) {
  grid.validate();
  const std::size_t rows = grid.n_rows, cols = grid.n_cols;
  std::vector<std::uint8_t> outer(rows * cols, 0);
  std::vector<std::uint8_t> hole(rows * cols, 0);
  for (const Contour& contour : contours) {
    auto& layer = contour.kind == Contour::Kind::Outer ? outer : hole;
    for (const PixelRC& p : contour.points) {
      if (p.row < 0 || p.col < 0 || p.row >= static_cast<std::int32_t>(rows) ||
          p.col >= static_cast<std::int32_t>(cols))
        throw DataError("fill_contours: contour point outside the grid");
      layer[static_cast<std::size_t>(p.row) * cols + p.col] = 1;
    }
  }
  const std::vector<std::uint8_t> reached =
      detail::flood_from_frame(outer, rows, cols);
  Raster mask = make_mask(grid);
  for (std::size_t pix = 0; pix < rows * cols; ++pix)
    mask.values[pix] = reached[pix] ? 0.0f : 1.0f;
  if (preserve_holes) {
    // hole interiors: cells the flood cannot reach once hole borders block it,
    // minus the border pixels themselves (they belong to the foreground)
    const std::vector<std::uint8_t> hole_reached =
        detail::flood_from_frame(hole, rows, cols);
    for (std::size_t pix = 0; pix < rows * cols; ++pix)
      if (!hole_reached[pix] && !hole[pix]) mask.values[pix] = 0.0f;
  }
  return mask;
}

// drop 8-connected components whose pixel count falls outside [min, max]
inline Raster filter_by_area(const Raster& mask, std::size_t min_area,
                             std::optional<std::size_t> max_area = {}) {
  if (mask.n_channels != 1)
    throw DataError("filter_by_area: expected a single-channel mask");
  if (max_area && *max_area < min_area)
    throw ConfigError("filter_by_area: min_area exceeds max_area");
  const std::size_t rows = mask.grid.n_rows, cols = mask.grid.n_cols;
  Raster out = mask;
  std::vector<std::uint8_t> seen(rows * cols, 0);
  std::vector<std::size_t> component;
  for (std::size_t start = 0; start < rows * cols; ++start) {
    if (seen[start] || mask.values[start] == 0.0f) continue;
    component.clear();
    component.push_back(start);
    seen[start] = 1;
    for (std::size_t head = 0; head < component.size(); ++head) {
      const std::int32_t r = static_cast<std::int32_t>(component[head] / cols);
      const std::int32_t c = static_cast<std::int32_t>(component[head] % cols);
      for (int dr = -1; dr <= 1; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          const std::int32_t nr = r + dr, nc = c + dc;
          if (nr < 0 || nc < 0 || nr >= static_cast<std::int32_t>(rows) ||
              nc >= static_cast<std::int32_t>(cols))
            continue;
          const std::size_t pix = static_cast<std::size_t>(nr) * cols + nc;
          if (!seen[pix] && mask.values[pix] != 0.0f) {
            seen[pix] = 1;
            component.push_back(pix);
          }
        }
    }
    const bool keep = component.size() >= min_area &&
                      (!max_area || component.size() <= *max_area);
    if (!keep)
      for (std::size_t pix : component) out.values[pix] = 0.0f;
  }
  return out;
}

}  // namespace fuselet
