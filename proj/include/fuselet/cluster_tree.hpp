#pragma once

// Two-level clustering tree over encoder embeddings: one root head over all
// samples, then per-root-label child heads trained only on the samples the
// root routes to that label.  Composed output label = root*C_child + child
// (child = 0 where no child head exists), which is lossless given the child
// registry.  Routing is frozen after root training.

#include <cstdint>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuselet/dbn.hpp"
#include "fuselet/envi.hpp"
#include "fuselet/iic.hpp"
#include "fuselet/sampling.hpp"

namespace fuselet {

struct TreeConfig {
  std::size_t c_root = 800;
  std::size_t c_child = 100;
  std::size_t min_child_samples = 100;
  double noise_sigma = 0.05;
  std::size_t epochs = 10;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct ClusterTree {
  ClusterHead root;
  std::map<std::int32_t, ClusterHead> children;  // keyed by root label
  std::size_t c_child = 100;
  std::size_t min_child_samples = 100;
  double noise_sigma = 0.05;
  // training diagnostics (not restored by load_cluster_tree)
  std::map<std::int32_t, std::uint64_t> routing_counts;
  std::vector<double> root_loss;
  std::map<std::int32_t, std::vector<double>> child_loss;

  void check_consistent() const {
    root.check_consistent();
    if (c_child == 0) throw DataError("cluster tree: c_child must be > 0");
    for (const auto& [label, head] : children) {
      head.check_consistent();
      if (label < 0 || static_cast<std::size_t>(label) >= root.n_classes)
        throw DataError("cluster tree: child label out of root range");
      if (head.n_in != root.n_in)
        throw DataError("cluster tree: child input dim differs from root");
      if (head.n_classes != c_child)
        throw DataError("cluster tree: child class count differs from c_child");
    }
  }
};

inline std::int32_t argmax_label(const std::vector<double>& p) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < p.size(); ++k)
    if (p[k] > p[best]) best = k;  // ties keep the lowest index
  return static_cast<std::int32_t>(best);
}

inline std::int32_t compose_label(std::int32_t root_label,
                                  std::int32_t child_label,
                                  std::size_t c_child) {
  return root_label * static_cast<std::int32_t>(c_child) + child_label;
}

inline std::pair<std::int32_t, std::int32_t> decompose_label(
    std::int32_t composed, std::size_t c_child) {
  const auto c = static_cast<std::int32_t>(c_child);
  return {composed / c, composed % c};
}

inline ClusterTree train_tree(const std::vector<double>& embeddings,
                              std::size_t n, std::size_t dim,
                              const TreeConfig& cfg) {
  if (cfg.c_root == 0 || cfg.c_child == 0)
    throw ConfigError("train_tree: class counts must be > 0");
  if (n < cfg.min_child_samples)
    throw DataError("train_tree: fewer samples than min_child_samples");

  ClusterTree tree;
  tree.c_child = cfg.c_child;
  tree.min_child_samples = cfg.min_child_samples;
  tree.noise_sigma = cfg.noise_sigma;

  HeadTrainConfig head_cfg;
  head_cfg.n_classes = cfg.c_root;
  head_cfg.epochs = cfg.epochs;
  head_cfg.batch_size = cfg.batch_size;
  head_cfg.learning_rate = cfg.learning_rate;
  head_cfg.noise_sigma = cfg.noise_sigma;
  head_cfg.seed = cfg.seed;
  TrainedHead root = train_head(embeddings, n, dim, head_cfg);
  tree.root = std::move(root.head);
  tree.root_loss = std::move(root.epoch_loss);

  // freeze routing by the trained root's argmax
  std::vector<std::int32_t> routed(n);
  for (std::size_t i = 0; i < n; ++i) {
    routed[i] = argmax_label(head_forward(tree.root, embeddings.data() + i * dim));
    ++tree.routing_counts[routed[i]];
  }

  for (const auto& [label, count] : tree.routing_counts) {
    if (count < cfg.min_child_samples) continue;
    if (count < 2) continue;  // a head cannot train on fewer than 2 samples
    std::vector<double> subset;
    subset.reserve(count * dim);
    for (std::size_t i = 0; i < n; ++i)
      if (routed[i] == label)
        subset.insert(subset.end(), embeddings.begin() + i * dim,
                      embeddings.begin() + (i + 1) * dim);
    HeadTrainConfig child_cfg = head_cfg;
    child_cfg.n_classes = cfg.c_child;
    child_cfg.seed = cfg.seed + 1000003ull * static_cast<std::uint64_t>(label + 1);
    TrainedHead child = train_head(subset, count, dim, child_cfg);
    tree.children.emplace(label, std::move(child.head));
    tree.child_loss.emplace(label, std::move(child.epoch_loss));
  }
  tree.check_consistent();
  return tree;
}

struct SegmentationMap {
  GeoGrid grid;
  std::vector<std::int32_t> labels;  // [row][col]; undefined where invalid
  std::vector<std::uint8_t> valid;
  std::size_t c_child = 100;
};

// full pixel-labeling pass: neighborhoods -> standardize -> embed -> tree
inline SegmentationMap predict_map(const ClusterTree& tree,
                                   const DbnModel& dbn, const Raster& raster,
                                   const ChannelStats& stats,
                                   std::size_t threads = 1) {
  tree.check_consistent();
  if (tree.root.n_in != dbn.embedding_dim())
    throw DataError("predict_map: tree input dim " +
                    std::to_string(tree.root.n_in) +
                    " != encoder embedding dim " +
                    std::to_string(dbn.embedding_dim()));
  SampleSet samples = extract_neighborhoods(raster, "predict");
  standardize(samples, stats);
  if (samples.dim() != dbn.input_dim())
    throw DataError("predict_map: neighborhood dim " +
                    std::to_string(samples.dim()) + " != encoder input dim " +
                    std::to_string(dbn.input_dim()));

  SegmentationMap out;
  out.grid = raster.grid;
  out.c_child = tree.c_child;
  out.labels.assign(raster.grid.size(), 0);
  out.valid.assign(raster.grid.size(), 0);

  const std::size_t n = samples.size();
  if (n == 0) return out;
  const std::vector<double> z = embed(dbn, samples.vectors, n, threads);
  const std::size_t ed = dbn.embedding_dim();
  parallel_for(n, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const double* zi = z.data() + i * ed;
      const std::int32_t root_label = argmax_label(head_forward(tree.root, zi));
      std::int32_t child_label = 0;
      auto it = tree.children.find(root_label);
      if (it != tree.children.end())
        child_label = argmax_label(head_forward(it->second, zi));
      const auto& prov = samples.provenance[i];
      const std::size_t pix = static_cast<std::size_t>(prov.row) * raster.grid.n_cols +
                              static_cast<std::size_t>(prov.col);
      out.labels[pix] = compose_label(root_label, child_label, tree.c_child);
      out.valid[pix] = 1;
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// serialization: "FIIC" version 1 + JSON sidecar with training diagnostics

namespace detail {

inline void write_head(std::ostream& os, const ClusterHead& head) {
  write_u64_le(os, head.n_in);
  write_u64_le(os, head.n_classes);
  for (double w : head.weights) write_f64_le(os, w);
  for (double b : head.bias) write_f64_le(os, b);
}

inline ClusterHead read_head(std::istream& is) {
  ClusterHead head;
  head.n_in = read_u64_le(is);
  head.n_classes = read_u64_le(is);
  if (head.n_in == 0 || head.n_classes == 0 || head.n_in > (1u << 24) ||
      head.n_classes > (1u << 24))
    throw DataError("cluster tree file: implausible head dimensions");
  head.weights.resize(head.n_in * head.n_classes);
  for (double& w : head.weights) w = read_f64_le(is);
  head.bias.resize(head.n_classes);
  for (double& b : head.bias) b = read_f64_le(is);
  return head;
}

}  // namespace detail

inline void save_cluster_tree(const ClusterTree& tree,
                              const std::filesystem::path& base,
                              const nlohmann::json& config_info = {}) {
  tree.check_consistent();
  std::ostringstream os(std::ios::binary);
  os.write("FIIC", 4);
  write_u32_le(os, 1);  // container version
  write_u64_le(os, tree.c_child);
  write_u64_le(os, tree.min_child_samples);
  write_f64_le(os, tree.noise_sigma);
  detail::write_head(os, tree.root);
  write_u64_le(os, tree.children.size());
  for (const auto& [label, head] : tree.children) {  // std::map: ascending
    write_u32_le(os, static_cast<std::uint32_t>(label));
    detail::write_head(os, head);
  }
  atomic_write_file(base.string() + ".bin", os.str());

  nlohmann::json meta;
  meta["format"] = "fuselet cluster tree v1";
  meta["c_root"] = tree.root.n_classes;
  meta["c_child"] = tree.c_child;
  meta["embedding_dim"] = tree.root.n_in;
  meta["min_child_samples"] = tree.min_child_samples;
  meta["noise_sigma"] = tree.noise_sigma;
  meta["n_children"] = tree.children.size();
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [label, count] : tree.routing_counts)
    counts[std::to_string(label)] = count;
  meta["routing_counts"] = counts;
  meta["root_loss"] = tree.root_loss;
  nlohmann::json closses = nlohmann::json::object();
  for (const auto& [label, losses] : tree.child_loss)
    closses[std::to_string(label)] = losses;
  meta["child_loss"] = closses;
  if (!config_info.is_null() && !config_info.empty()) meta["config"] = config_info;
  atomic_write_file(base.string() + ".json", meta.dump(2) + "\n");
}

inline ClusterTree load_cluster_tree(const std::filesystem::path& base) {
  std::istringstream is(read_text_file(base.string() + ".bin"),
                        std::ios::binary);
  char magic[4] = {};
  if (!is.read(magic, 4) || std::string(magic, 4) != "FIIC")
    throw DataError("cluster tree file: bad magic: " + base.string() + ".bin");
  const std::uint32_t version = read_u32_le(is);
  if (version != 1)
    throw DataError("cluster tree file: unsupported version " +
                    std::to_string(version));
  ClusterTree tree;
  tree.c_child = read_u64_le(is);
  tree.min_child_samples = read_u64_le(is);
  tree.noise_sigma = read_f64_le(is);
  tree.root = detail::read_head(is);
  const std::uint64_t n_children = read_u64_le(is);
  if (n_children > tree.root.n_classes)
    throw DataError("cluster tree file: more children than root classes");
  for (std::uint64_t k = 0; k < n_children; ++k) {
    const auto label = static_cast<std::int32_t>(read_u32_le(is));
    tree.children.emplace(label, detail::read_head(is));
  }
  if (is.peek() != EOF)
    throw DataError("cluster tree file: trailing bytes");
  tree.check_consistent();
  return tree;
}

// segmentation maps persist as 32-bit integer rasters plus a tiny sidecar
// carrying the label encoding
inline void save_segmentation(const SegmentationMap& map,
                              const std::filesystem::path& base) {
  save_labels_envi(map.grid, map.labels, map.valid, base, "composed_label");
  nlohmann::json meta;
  meta["c_child"] = map.c_child;
  atomic_write_file(base.string() + ".json", meta.dump(2) + "\n");
}

inline SegmentationMap load_segmentation(const std::filesystem::path& base) {
  LabelRaster lr = load_labels_envi(base);
  const std::string sidecar = base.string() + ".json";
  if (!std::filesystem::exists(sidecar))
    throw DataError("segmentation map: missing sidecar " + sidecar);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text_file(sidecar));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("segmentation map: bad sidecar " + sidecar + ": " + e.what());
  }
  if (!meta.contains("c_child") || !meta["c_child"].is_number_unsigned())
    throw DataError("segmentation map: sidecar lacks c_child: " + sidecar);
  SegmentationMap map;
  map.grid = lr.grid;
  map.labels = std::move(lr.labels);
  map.valid = std::move(lr.valid);
  map.c_child = meta["c_child"].get<std::size_t>();
  if (map.c_child == 0)
    throw DataError("segmentation map: c_child must be > 0");
  return map;
}

}  // namespace fuselet
