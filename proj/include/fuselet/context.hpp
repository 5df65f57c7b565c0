#pragma once

// Turning context-free cluster labels into named detections: count how often
// each composed label falls inside high-certainty class polygons, then assign
// a label to a class of interest when its hit ratio against the paired
// background class clears a threshold.  Classes pair by naming convention
// "<class>" / "<class>_background".

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuselet/cluster_tree.hpp"
#include "fuselet/polygons.hpp"

namespace fuselet {

struct ZonalCounts {
  // class name -> composed label -> pixel count
  std::map<std::string, std::map<std::int32_t, std::uint64_t>> counts;
  std::vector<std::string> scenes_seen;
};

// counts[class][label] over valid segmentation pixels whose center lies in
// any polygon of that class; every zone class gets a key even when empty
inline ZonalCounts zonal_histogram(const SegmentationMap& segmap,
                                   const std::vector<LabelPolygonSet>& zones,
                                   const std::string& scene_id) {
  segmap.grid.validate();
  if (segmap.labels.size() != segmap.grid.size() ||
      segmap.valid.size() != segmap.grid.size())
    throw DataError("zonal_histogram: segmentation buffers inconsistent");
  ZonalCounts out;
  out.scenes_seen.push_back(scene_id);
  for (const LabelPolygonSet& zone : zones) {
    auto& table = out.counts[zone.class_name];  // key exists even if empty
    const std::vector<std::uint8_t> inside = rasterize_polygons(zone, segmap.grid);
    for (std::size_t pix = 0; pix < inside.size(); ++pix)
      if (inside[pix] && segmap.valid[pix]) ++table[segmap.labels[pix]];
  }
  return out;
}

inline ZonalCounts merge_counts(const ZonalCounts& a, const ZonalCounts& b) {
  ZonalCounts out = a;
  for (const auto& [cls, table] : b.counts) {
    auto& dst = out.counts[cls];
    for (const auto& [label, count] : table) dst[label] += count;
  }
  out.scenes_seen.insert(out.scenes_seen.end(), b.scenes_seen.begin(),
                         b.scenes_seen.end());
  return out;
}

// label assigned iff it was seen at all and target/(target+background) > tau
inline std::set<std::int32_t> assign_context(const ZonalCounts& counts,
                                             const std::string& target,
                                             const std::string& background,
                                             double tau = 0.5) {
  if (!(tau >= 0.0 && tau < 1.0))
    throw ConfigError("assign_context: threshold must lie in [0, 1), got " +
                      std::to_string(tau));
  auto t_it = counts.counts.find(target);
  auto b_it = counts.counts.find(background);
  if (t_it == counts.counts.end())
    throw DataError("assign_context: class not present in counts: " + target);
  if (b_it == counts.counts.end())
    throw DataError("assign_context: class not present in counts: " + background);

  std::set<std::int32_t> labels;
  for (const auto& [label, count] : t_it->second) labels.insert(label);
  for (const auto& [label, count] : b_it->second) labels.insert(label);

  std::set<std::int32_t> assigned;
  for (std::int32_t label : labels) {
    const auto tc = t_it->second.count(label) ? t_it->second.at(label) : 0;
    const auto bc = b_it->second.count(label) ? b_it->second.at(label) : 0;
    const std::uint64_t total = tc + bc;
    if (total == 0) continue;
    if (static_cast<double>(tc) > tau * static_cast<double>(total))
      assigned.insert(label);
  }
  return assigned;
}

struct ContextTable {
  std::map<std::string, std::set<std::int32_t>> classes;  // target -> labels
  double threshold = 0.5;
};

// one assign_context pass per (target, target_background) pair
inline ContextTable build_context_table(
    const ZonalCounts& counts, const std::vector<std::string>& targets,
    double tau = 0.5) {
  ContextTable table;
  table.threshold = tau;
  for (const std::string& target : targets)
    table.classes[target] =
        assign_context(counts, target, target + "_background", tau);
  return table;
}

// binary raster: 1 where valid and the composed label is in the assigned set
inline Raster extract_mask(const SegmentationMap& segmap,
                           const std::set<std::int32_t>& assigned) {
  Raster mask = make_mask(segmap.grid);
  for (std::size_t pix = 0; pix < segmap.grid.size(); ++pix) {
    if (!segmap.valid[pix]) {
      mask.valid[pix] = 0;
      continue;
    }
    mask.values[pix] = assigned.count(segmap.labels[pix]) ? 1.0f : 0.0f;
  }
  return mask;
}

// ---------------------------------------------------------------------------
// JSON persistence (std::map keys keep the files deterministically ordered)

inline void save_zonal_counts(const ZonalCounts& counts,
                              const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["format"] = "fuselet zonal counts v1";
  nlohmann::json classes = nlohmann::json::object();
  for (const auto& [cls, table] : counts.counts) {
    nlohmann::json entries = nlohmann::json::object();
    for (const auto& [label, count] : table)
      entries[std::to_string(label)] = count;
    classes[cls] = entries;
  }
  doc["counts"] = classes;
  doc["scenes_seen"] = counts.scenes_seen;
  atomic_write_file(path, doc.dump(2) + "\n");
}

inline ZonalCounts load_zonal_counts(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("zonal counts: bad JSON in " + path.string() + ": " +
                    e.what());
  }
  if (!doc.contains("counts") || !doc["counts"].is_object())
    throw DataError("zonal counts: missing counts object in " + path.string());
  ZonalCounts out;
  for (const auto& [cls, entries] : doc["counts"].items()) {
    auto& table = out.counts[cls];
    for (const auto& [label, count] : entries.items()) {
      if (!count.is_number_unsigned())
        throw DataError("zonal counts: non-integer count in " + path.string());
      table[static_cast<std::int32_t>(std::stol(label))] =
          count.get<std::uint64_t>();
    }
  }
  if (doc.contains("scenes_seen"))
    out.scenes_seen = doc["scenes_seen"].get<std::vector<std::string>>();
  return out;
}

inline void save_context_table(const ContextTable& table,
                               const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["format"] = "fuselet context table v1";
  doc["threshold"] = table.threshold;
  nlohmann::json classes = nlohmann::json::object();
  for (const auto& [cls, labels] : table.classes)
    classes[cls] = std::vector<std::int32_t>(labels.begin(), labels.end());
  doc["classes"] = classes;
  atomic_write_file(path, doc.dump(2) + "\n");
}

inline ContextTable load_context_table(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("context table: bad JSON in " + path.string() + ": " +
                    e.what());
  }
  if (!doc.contains("classes") || !doc.contains("threshold"))
    throw DataError("context table: missing fields in " + path.string());
  ContextTable table;
  table.threshold = doc["threshold"].get<double>();
  for (const auto& [cls, labels] : doc["classes"].items()) {
    auto& dst = table.classes[cls];
    for (const auto& label : labels) dst.insert(label.get<std::int32_t>());
  }
  return table;
}

}  // namespace fuselet
