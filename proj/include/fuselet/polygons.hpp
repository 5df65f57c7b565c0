#pragma once
// Class-labelled polygon sets: GeoJSON IO and rasterization onto a grid by
// the even-odd rule applied to pixel centers.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuselet/raster.hpp"

namespace fuselet {

using LonLat = std::pair<double, double>;

// Closed vertex ring: first vertex equals last.
using Ring = std::vector<LonLat>;

// All polygons of one class. Membership is the union over rings, each ring
// tested with even-odd crossing counting (so self-intersecting rings behave
// deterministically).
struct LabelPolygonSet {
  std::string class_name;
  std::vector<Ring> rings;
};

namespace detail {

inline std::size_t distinct_vertex_count(const Ring& ring) {
  std::size_t n = ring.size();
  if (n >= 2 && ring.front() == ring.back()) --n;
  return n;
}

inline void validate_ring(const Ring& ring, const std::string& cls) {
  if (ring.size() < 4 || ring.front() != ring.back())
    throw DataError("polygon ring for class '" + cls +
                    "' must be closed (first vertex repeated last)");
  if (distinct_vertex_count(ring) < 3)
    throw DataError("degenerate polygon ring for class '" + cls +
                    "' (fewer than 3 distinct vertices)");
}

// Even-odd crossing count of a rightward ray from (lon, lat).
inline bool point_in_ring(const Ring& ring, double lon, double lat) {
  bool inside = false;
  std::size_t n = ring.size();
  if (n >= 2 && ring.front() == ring.back()) --n;  // drop the closing repeat
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    double xi = ring[i].first, yi = ring[i].second;
    double xj = ring[j].first, yj = ring[j].second;
    if ((yi > lat) != (yj > lat)) {
      double x_cross = xi + (lat - yi) * (xj - xi) / (yj - yi);
      if (lon < x_cross) inside = !inside;
    }
  }
  return inside;
}

}  // namespace detail

inline bool point_in_polygons(const LabelPolygonSet& set, double lon, double lat) {
  for (const Ring& ring : set.rings)
    if (detail::point_in_ring(ring, lon, lat)) return true;
  return false;
}

// Boolean membership mask over the grid: cell true iff its center lies inside
// any ring of the set. Overlapping rings simply merge (union).
inline std::vector<std::uint8_t> rasterize_polygons(const LabelPolygonSet& set,
                                                    const GeoGrid& grid) {
  grid.validate();
  for (const Ring& ring : set.rings) detail::validate_ring(ring, set.class_name);
  std::vector<std::uint8_t> out(grid.size(), 0);
  for (std::size_t r = 0; r < grid.n_rows; ++r) {
    double lat = grid.lat_center(r);
    for (std::size_t c = 0; c < grid.n_cols; ++c) {
      if (point_in_polygons(set, grid.lon_center(c), lat))
        out[r * grid.n_cols + c] = 1;
    }
  }
  return out;
}

// ---- GeoJSON ----
// FeatureCollection of Polygon/MultiPolygon features, one "class_name"
// property each. All rings of a geometry join the class's ring set.

inline std::vector<LabelPolygonSet> load_polygons_geojson(
    const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("invalid GeoJSON in " + path.string() + ": " + e.what());
  }
  if (doc.value("type", "") != "FeatureCollection")
    throw DataError("GeoJSON root must be a FeatureCollection: " + path.string());

  auto ring_from_json = [&](const nlohmann::json& jring) {
    Ring ring;
    for (const auto& pt : jring) {
      if (!pt.is_array() || pt.size() < 2)
        throw DataError("GeoJSON ring vertex must be [lon, lat]: " + path.string());
      ring.emplace_back(pt[0].get<double>(), pt[1].get<double>());
    }
    return ring;
  };

  std::vector<LabelPolygonSet> sets;
  auto set_for = [&](const std::string& cls) -> LabelPolygonSet& {
    for (auto& s : sets)
      if (s.class_name == cls) return s;
    sets.push_back({cls, {}});
    return sets.back();
  };

  for (const auto& feature : doc.value("features", nlohmann::json::array())) {
    if (feature.value("type", "") != "Feature")
      throw DataError("GeoJSON feature missing type=Feature: " + path.string());
    const auto& props = feature.value("properties", nlohmann::json::object());
    if (!props.contains("class_name") || !props["class_name"].is_string())
      throw DataError("GeoJSON feature missing string property 'class_name': " +
                      path.string());
    std::string cls = props["class_name"].get<std::string>();
    const auto& geom = feature.value("geometry", nlohmann::json::object());
    std::string gtype = geom.value("type", "");
    LabelPolygonSet& set = set_for(cls);
    if (gtype == "Polygon") {
      for (const auto& jring : geom.value("coordinates", nlohmann::json::array()))
        set.rings.push_back(ring_from_json(jring));
    } else if (gtype == "MultiPolygon") {
      for (const auto& poly : geom.value("coordinates", nlohmann::json::array()))
        for (const auto& jring : poly) set.rings.push_back(ring_from_json(jring));
    } else {
      throw DataError("GeoJSON geometry must be Polygon or MultiPolygon, got '" +
                      gtype + "': " + path.string());
    }
  }
  for (const auto& s : sets)
    for (const Ring& ring : s.rings) detail::validate_ring(ring, s.class_name);
  return sets;
}

inline void save_polygons_geojson(const std::vector<LabelPolygonSet>& sets,
                                  const std::filesystem::path& path) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& set : sets) {
    for (const Ring& ring : set.rings) {
      detail::validate_ring(ring, set.class_name);
      nlohmann::json jring = nlohmann::json::array();
      for (const auto& [lon, lat] : ring)
        jring.push_back(nlohmann::json::array({lon, lat}));
      features.push_back({
          {"type", "Feature"},
          {"properties", {{"class_name", set.class_name}}},
          {"geometry",
           {{"type", "Polygon"},
            {"coordinates", nlohmann::json::array({jring})}}},
      });
    }
  }
  nlohmann::json doc = {{"type", "FeatureCollection"}, {"features", features}};
  atomic_write_file(path, doc.dump(2) + "\n");
}

}  // namespace fuselet
