#pragma once
// Stage orchestration over one output directory. Each stage declares its
// input files, its slice of the config, and its outputs; a manifest of
// FNV-1a hashes makes re-runs with unchanged inputs a no-op (unless forced).
// All artifact writers go through temp-file + rename, so a crashed stage
// never leaves a torn output behind.
//
// Stage order: gen-synthetic -> preprocess -> train-encoder -> train-cluster
//              -> predict -> assign-context -> detect -> evaluate

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuselet/cluster_tree.hpp"
#include "fuselet/config.hpp"
#include "fuselet/context.hpp"
#include "fuselet/dbn.hpp"
#include "fuselet/envi.hpp"
#include "fuselet/kmeans.hpp"
#include "fuselet/morph.hpp"
#include "fuselet/polygons.hpp"
#include "fuselet/sampling.hpp"
#include "fuselet/ssim.hpp"
#include "fuselet/synth.hpp"

namespace fuselet {

struct RunOptions {
  bool force = false;
  int threads = 1;
};

struct StageResult {
  std::string stage;
  bool skipped = false;   // manifest said up-to-date
  double seconds = 0.0;
  std::vector<std::string> outputs;
};

inline const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> names = {
      "gen-synthetic", "preprocess",     "train-encoder", "train-cluster",
      "predict",       "assign-context", "detect",        "evaluate"};
  return names;
}

namespace detail {

// concatenate sample sets, re-basing per-sample scene indices
inline void append_samples(SampleSet& acc, const SampleSet& more) {
  if (acc.n_channels != more.n_channels)
    throw DataError("append_samples: scenes disagree on channel count (" +
                    std::to_string(acc.n_channels) + " vs " +
                    std::to_string(more.n_channels) + ")");
  std::int32_t base = static_cast<std::int32_t>(acc.scene_names.size());
  acc.vectors.insert(acc.vectors.end(), more.vectors.begin(),
                     more.vectors.end());
  for (SampleProvenance p : more.provenance) {
    p.scene += base;
    acc.provenance.push_back(p);
  }
  acc.scene_names.insert(acc.scene_names.end(), more.scene_names.begin(),
                         more.scene_names.end());
}

inline void save_channel_stats(const ChannelStats& stats,
                               const std::filesystem::path& path) {
  nlohmann::json js = {{"format", "fuselet channel stats"},
                       {"mean", stats.mean},
                       {"stddev", stats.stddev}};
  atomic_write_file(path, js.dump(2) + "\n");
}

inline ChannelStats load_channel_stats(const std::filesystem::path& path) {
  nlohmann::json js;
  try {
    js = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("invalid channel stats file " + path.string() + ": " +
                    e.what());
  }
  ChannelStats st;
  try {
    st.mean = js.at("mean").get<std::vector<double>>();
    st.stddev = js.at("stddev").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("invalid channel stats file " + path.string() + ": " +
                    e.what());
  }
  if (st.mean.size() != st.stddev.size() || st.mean.empty())
    throw DataError("invalid channel stats file " + path.string());
  return st;
}

}  // namespace detail

class PipelineRunner {
 public:
  explicit PipelineRunner(PipelineConfig cfg, RunOptions opts = {})
      : cfg_(std::move(cfg)), opts_(opts) {
    if (cfg_.output_dir.empty())
      throw ConfigError(
          "output.dir: required (set it in the config or via FUSELET_OUT)");
    if (opts_.threads < 1) throw ConfigError("--threads must be >= 1");
    config_image_ = config_json(cfg_);
    load_manifest();
  }

  const PipelineConfig& config() const { return cfg_; }

  std::filesystem::path out(const std::string& rel) const {
    return cfg_.output_dir / rel;
  }

  // ---- artifact locations ----
  std::filesystem::path synth_raster_base(const std::string& name) const {
    return out("scenes/" + name);
  }
  std::filesystem::path synth_truth_base(const std::string& name,
                                         const std::string& cls) const {
    return out("scenes/" + name + "_truth_" + cls);
  }
  std::filesystem::path synth_labels_path(const std::string& name) const {
    return out("scenes/" + name + "_labels.geojson");
  }
  std::filesystem::path samples_base() const { return out("samples"); }
  std::filesystem::path stats_path() const { return out("channel_stats.json"); }
  std::filesystem::path encoder_base() const { return out("encoder"); }
  std::filesystem::path tree_base() const { return out("tree"); }
  std::filesystem::path segmap_base(const std::string& name) const {
    return out("segmaps/" + name);
  }
  std::filesystem::path context_path() const { return out("context.json"); }
  std::filesystem::path zonal_path() const { return out("zonal_counts.json"); }
  std::filesystem::path mask_base(const std::string& name,
                                  const std::string& cls) const {
    return out("masks/" + name + "_" + cls);
  }
  std::filesystem::path diff_base(const std::string& name,
                                  const std::string& cls) const {
    return out("masks/" + name + "_" + cls + "_diff");
  }
  std::filesystem::path report_csv_path() const { return out("report.csv"); }
  std::filesystem::path report_text_path() const { return out("report.txt"); }
  std::filesystem::path manifest_path() const { return out("manifest.json"); }

  StageResult run(const std::string& stage) {
    StagePlan plan = plan_stage(stage);
    std::string config_hash =
        hash_hex(fnv1a64(plan.config_slice.dump()));

    StageResult result;
    result.stage = stage;
    for (const auto& p : plan.outputs) result.outputs.push_back(p.string());

    if (!opts_.force && up_to_date(stage, plan, config_hash)) {
      result.skipped = true;
      return result;
    }

    // fail fast on missing prerequisites, then snapshot input hashes
    nlohmann::json input_hashes = nlohmann::json::object();
    for (const auto& p : plan.inputs) {
      if (!std::filesystem::exists(p))
        throw DataError(stage + ": missing prerequisite: " + p.string() +
                        (p.string().rfind(cfg_.output_dir.string(), 0) == 0
                             ? " (run the earlier stages first)"
                             : ""));
      input_hashes[p.string()] = hash_hex(hash_file(p));
    }

    auto t0 = std::chrono::steady_clock::now();
    std::filesystem::create_directories(cfg_.output_dir);
    plan.execute();
    auto t1 = std::chrono::steady_clock::now();
    result.seconds = std::chrono::duration<double>(t1 - t0).count();

    nlohmann::json output_hashes = nlohmann::json::object();
    for (const auto& p : plan.outputs) {
      if (!std::filesystem::exists(p))
        throw DataError(stage + ": expected output was not produced: " +
                        p.string());
      output_hashes[p.string()] = hash_hex(hash_file(p));
    }

    nlohmann::json entry = {{"config_hash", config_hash},
                            {"inputs", input_hashes},
                            {"outputs", output_hashes},
                            {"seeds", plan.seeds}};
    manifest_["stages"][stage] = entry;
    save_manifest();
    return result;
  }

  std::vector<StageResult> run_all() {
    std::vector<StageResult> results;
    for (const std::string& stage : pipeline_stages())
      results.push_back(run(stage));
    return results;
  }

 private:
  struct SceneRef {
    std::string name;
    std::string role;
    const SynthSceneConfig* synth = nullptr;  // exactly one of these
    const RealSceneConfig* real = nullptr;
  };

  struct StagePlan {
    std::vector<std::filesystem::path> inputs;
    std::vector<std::filesystem::path> outputs;
    nlohmann::json config_slice;
    nlohmann::json seeds = nlohmann::json::object();
    std::function<void()> execute;
  };

  PipelineConfig cfg_;
  RunOptions opts_;
  nlohmann::json config_image_;
  nlohmann::json manifest_ = {{"format", "fuselet manifest"},
                              {"version", 1},
                              {"stages", nlohmann::json::object()}};

  std::vector<SceneRef> scene_list() const {
    std::vector<SceneRef> scenes;
    for (const auto& s : cfg_.synth_scenes)
      scenes.push_back({s.name, s.role, &s, nullptr});
    for (const auto& s : cfg_.scenes)
      scenes.push_back({s.name, s.role, nullptr, &s});
    return scenes;
  }

  std::filesystem::path scene_raster_base(const SceneRef& sc) const {
    return sc.synth ? synth_raster_base(sc.name)
                    : detail::envi_base(sc.real->raster);
  }

  // label polygons for a scene ("" when the scene has none configured)
  std::filesystem::path scene_labels_path(const SceneRef& sc) const {
    return sc.synth ? synth_labels_path(sc.name) : sc.real->labels;
  }

  // reference mask for (scene, class); "" when unavailable
  std::filesystem::path scene_truth_base(const SceneRef& sc,
                                         const std::string& cls) const {
    if (sc.synth) {
      if (cls == "fire" || cls == "smoke") return synth_truth_base(sc.name, cls);
      return {};
    }
    auto it = sc.real->truth.find(cls);
    return it == sc.real->truth.end() ? std::filesystem::path{}
                                      : detail::envi_base(it->second);
  }

  static void push_envi(std::vector<std::filesystem::path>& v,
                        const std::filesystem::path& base) {
    v.push_back(base.string() + ".img");
    v.push_back(base.string() + ".hdr");
  }

  void load_manifest() {
    if (!std::filesystem::exists(manifest_path())) return;
    try {
      nlohmann::json m = nlohmann::json::parse(read_text_file(manifest_path()));
      if (m.value("format", "") == "fuselet manifest" && m.contains("stages"))
        manifest_ = m;
    } catch (...) {
      // unreadable manifest: fall through with a fresh one; stages just rerun
    }
  }

  void save_manifest() {
    std::filesystem::create_directories(cfg_.output_dir);
    atomic_write_file(manifest_path(), manifest_.dump(2) + "\n");
  }

  bool up_to_date(const std::string& stage, const StagePlan& plan,
                  const std::string& config_hash) const {
    if (!manifest_["stages"].contains(stage)) return false;
    const nlohmann::json& entry = manifest_["stages"][stage];
    if (entry.value("config_hash", "") != config_hash) return false;
    auto matches = [](const nlohmann::json& recorded,
                      const std::vector<std::filesystem::path>& files) {
      if (!recorded.is_object() || recorded.size() != files.size())
        return false;
      for (const auto& p : files) {
        if (!recorded.contains(p.string())) return false;
        if (!std::filesystem::exists(p)) return false;
        if (recorded[p.string()].get<std::string>() != hash_hex(hash_file(p)))
          return false;
      }
      return true;
    };
    // inputs AND outputs must hash as recorded, so a corrupted or hand-edited
    // artifact re-runs its producer instead of poisoning downstream stages
    return matches(entry.value("inputs", nlohmann::json::object()),
                   plan.inputs) &&
           matches(entry.value("outputs", nlohmann::json::object()),
                   plan.outputs);
  }

  Raster load_scene_raster(const SceneRef& sc) const {
    return load_raster(sc.synth ? synth_raster_base(sc.name)
                                : sc.real->raster);
  }

  // ---- stage plans ----
  StagePlan plan_stage(const std::string& stage) {
    if (stage == "gen-synthetic") return plan_gen_synthetic();
    if (stage == "preprocess") return plan_preprocess();
    if (stage == "train-encoder") return plan_train_encoder();
    if (stage == "train-cluster") return plan_train_cluster();
    if (stage == "predict") return plan_predict();
    if (stage == "assign-context") return plan_assign_context();
    if (stage == "detect") return plan_detect();
    if (stage == "evaluate") return plan_evaluate();
    throw ConfigError("unknown stage '" + stage + "'");
  }

  nlohmann::json synth_scene_slice() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : config_image_["scenes"])
      if (s["kind"] == "synth") arr.push_back(s);
    return arr;
  }

  StagePlan plan_gen_synthetic() {
    StagePlan plan;
    plan.config_slice = {{"synth_scenes", synth_scene_slice()}};
    for (const auto& s : cfg_.synth_scenes) {
      push_envi(plan.outputs, synth_raster_base(s.name));
      push_envi(plan.outputs, synth_truth_base(s.name, "fire"));
      push_envi(plan.outputs, synth_truth_base(s.name, "smoke"));
      plan.outputs.push_back(synth_labels_path(s.name));
      plan.seeds[s.name] = s.spec.seed;
    }
    plan.execute = [this] { exec_gen_synthetic(); };
    return plan;
  }

  StagePlan plan_preprocess() {
    StagePlan plan;
    plan.config_slice = {{"scenes", config_image_["scenes"]},
                         {"sampling", config_image_["sampling"]}};
    plan.seeds["sampling"] = cfg_.sampling.seed;
    for (const SceneRef& sc : scene_list())
      if (sc.role == "train") push_envi(plan.inputs, scene_raster_base(sc));
    plan.outputs.push_back(samples_base().string() + ".bin");
    plan.outputs.push_back(samples_base().string() + ".json");
    plan.outputs.push_back(stats_path());
    plan.execute = [this] { exec_preprocess(); };
    return plan;
  }

  StagePlan plan_train_encoder() {
    StagePlan plan;
    plan.config_slice = {{"dbn", config_image_["dbn"]}};
    plan.seeds["dbn"] = cfg_.dbn.cd.seed;
    plan.inputs.push_back(samples_base().string() + ".bin");
    plan.outputs.push_back(encoder_base().string() + ".bin");
    plan.outputs.push_back(encoder_base().string() + ".json");
    plan.execute = [this] { exec_train_encoder(); };
    return plan;
  }

  StagePlan plan_train_cluster() {
    StagePlan plan;
    plan.config_slice = {{"iic", config_image_["iic"]}};
    plan.seeds["iic"] = cfg_.iic.seed;
    plan.inputs.push_back(samples_base().string() + ".bin");
    plan.inputs.push_back(encoder_base().string() + ".bin");
    plan.outputs.push_back(tree_base().string() + ".bin");
    plan.outputs.push_back(tree_base().string() + ".json");
    plan.execute = [this] { exec_train_cluster(); };
    return plan;
  }

  StagePlan plan_predict() {
    StagePlan plan;
    plan.config_slice = {{"scenes", config_image_["scenes"]}};
    plan.inputs.push_back(encoder_base().string() + ".bin");
    plan.inputs.push_back(tree_base().string() + ".bin");
    plan.inputs.push_back(stats_path());
    for (const SceneRef& sc : scene_list()) {
      push_envi(plan.inputs, scene_raster_base(sc));
      push_envi(plan.outputs, segmap_base(sc.name));
      plan.outputs.push_back(segmap_base(sc.name).string() + ".json");
    }
    plan.execute = [this] { exec_predict(); };
    return plan;
  }

  StagePlan plan_assign_context() {
    StagePlan plan;
    plan.config_slice = {{"scenes", config_image_["scenes"]},
                         {"context", config_image_["context"]}};
    for (const SceneRef& sc : scene_list()) {
      if (sc.role != "train") continue;
      plan.inputs.push_back(segmap_base(sc.name).string() + ".img");
      plan.inputs.push_back(segmap_base(sc.name).string() + ".json");
      std::filesystem::path lp = scene_labels_path(sc);
      if (!lp.empty()) plan.inputs.push_back(lp);
    }
    plan.outputs.push_back(zonal_path());
    plan.outputs.push_back(context_path());
    plan.execute = [this] { exec_assign_context(); };
    return plan;
  }

  StagePlan plan_detect() {
    StagePlan plan;
    plan.config_slice = {{"scenes", config_image_["scenes"]},
                         {"context_classes", cfg_.context.classes},
                         {"morph", config_image_["morph"]}};
    plan.inputs.push_back(context_path());
    for (const SceneRef& sc : scene_list()) {
      plan.inputs.push_back(segmap_base(sc.name).string() + ".img");
      plan.inputs.push_back(segmap_base(sc.name).string() + ".json");
      for (const std::string& cls : cfg_.context.classes)
        push_envi(plan.outputs, mask_base(sc.name, cls));
    }
    plan.execute = [this] { exec_detect(); };
    return plan;
  }

  StagePlan plan_evaluate() {
    StagePlan plan;
    plan.config_slice = {{"scenes", config_image_["scenes"]},
                         {"context_classes", cfg_.context.classes},
                         {"eval", config_image_["eval"]}};
    for (const SceneRef& sc : scene_list()) {
      if (sc.role != "test") continue;
      for (const std::string& cls : cfg_.context.classes) {
        std::filesystem::path tb = scene_truth_base(sc, cls);
        if (tb.empty()) continue;
        push_envi(plan.inputs, mask_base(sc.name, cls));
        push_envi(plan.inputs, tb);
        push_envi(plan.outputs, diff_base(sc.name, cls));
      }
    }
    plan.outputs.push_back(report_csv_path());
    plan.outputs.push_back(report_text_path());
    plan.execute = [this] { exec_evaluate(); };
    return plan;
  }

  // ---- stage bodies ----
  void exec_gen_synthetic() {
    for (const auto& s : cfg_.synth_scenes) {
      SynthScene scene = generate_scene(s.spec);
      save_raster(scene.raster, synth_raster_base(s.name));
      save_raster(scene.truth_fire, synth_truth_base(s.name, "fire"));
      save_raster(scene.truth_smoke, synth_truth_base(s.name, "smoke"));
      save_polygons_geojson(scene.labels, synth_labels_path(s.name));
    }
  }

  void exec_preprocess() {
    SampleSet pooled;
    bool first = true;
    for (const SceneRef& sc : scene_list()) {
      if (sc.role != "train") continue;
      SampleSet s = extract_neighborhoods(load_scene_raster(sc), sc.name);
      if (first) {
        pooled = std::move(s);
        first = false;
      } else {
        detail::append_samples(pooled, s);
      }
    }
    if (first || pooled.size() == 0)
      throw DataError(
          "preprocess: training scenes yielded no valid 3x3 neighborhoods");
    ChannelStats stats = fit_stats(pooled);
    standardize(pooled, stats);
    std::size_t k = std::min(cfg_.sampling.k, pooled.size());
    StratificationModel model =
        kmeans_fit(pooled.vectors, pooled.size(), pooled.dim(), k,
                   /*max_iter=*/50, cfg_.sampling.seed);
    SampleSet picked = stratified_sample(pooled, model, cfg_.sampling.n_total,
                                         cfg_.sampling.seed + 1);
    save_sample_set(picked, samples_base());
    detail::save_channel_stats(stats, stats_path());
  }

  std::vector<std::size_t> resolve_layer_dims(std::size_t input_dim) const {
    if (!cfg_.dbn.layer_dims.empty()) return cfg_.dbn.layer_dims;
    auto h = static_cast<std::size_t>(std::llround(
        cfg_.dbn.expansion_factor * static_cast<double>(input_dim)));
    if (h == 0) h = 1;
    return std::vector<std::size_t>(cfg_.dbn.n_layers, h);
  }

  void exec_train_encoder() {
    SampleSet s = load_sample_set(samples_base());
    DbnModel model =
        train_dbn(s.vectors, s.size(), s.dim(), resolve_layer_dims(s.dim()),
                  cfg_.dbn.cd);
    save_dbn(model, encoder_base(), config_image_["dbn"]);
  }

  void exec_train_cluster() {
    SampleSet s = load_sample_set(samples_base());
    DbnModel dbn = load_dbn(encoder_base());
    std::vector<double> z = embed(dbn, s.vectors, s.size(), opts_.threads);
    ClusterTree tree = train_tree(z, s.size(), dbn.embedding_dim(), cfg_.iic);
    save_cluster_tree(tree, tree_base(), config_image_["iic"]);
  }

  void exec_predict() {
    DbnModel dbn = load_dbn(encoder_base());
    ClusterTree tree = load_cluster_tree(tree_base());
    ChannelStats stats = detail::load_channel_stats(stats_path());
    for (const SceneRef& sc : scene_list()) {
      Raster raster = load_scene_raster(sc);
      SegmentationMap map =
          predict_map(tree, dbn, raster, stats, opts_.threads);
      save_segmentation(map, segmap_base(sc.name));
    }
  }

  void exec_assign_context() {
    ZonalCounts total;
    bool first = true;
    for (const SceneRef& sc : scene_list()) {
      if (sc.role != "train") continue;
      std::filesystem::path lp = scene_labels_path(sc);
      if (lp.empty())
        throw ConfigError("scene '" + sc.name +
                          "': labels are required for context assignment");
      SegmentationMap map = load_segmentation(segmap_base(sc.name));
      std::vector<LabelPolygonSet> zones = load_polygons_geojson(lp);
      ZonalCounts counts = zonal_histogram(map, zones, sc.name);
      total = first ? counts : merge_counts(total, counts);
      first = false;
    }
    ContextTable table =
        build_context_table(total, cfg_.context.classes, cfg_.context.tau);
    save_zonal_counts(total, zonal_path());
    save_context_table(table, context_path());
  }

  void exec_detect() {
    ContextTable table = load_context_table(context_path());
    for (const SceneRef& sc : scene_list()) {
      SegmentationMap map = load_segmentation(segmap_base(sc.name));
      for (const std::string& cls : cfg_.context.classes) {
        auto it = table.classes.find(cls);
        if (it == table.classes.end())
          throw DataError("detect: context table has no class '" + cls + "'");
        Raster raw = extract_mask(map, it->second);
        std::vector<Contour> contours = trace_borders(raw);
        Raster filled =
            fill_contours(contours, raw.grid, cfg_.morph.preserve_holes);
        Raster final_mask =
            filter_by_area(filled, cfg_.morph.min_area, cfg_.morph.max_area);
        final_mask.valid = map.valid;  // mirror prediction validity
        final_mask.channel_names = {cls + "_mask"};
        save_raster(final_mask, mask_base(sc.name, cls));
      }
    }
  }

  void exec_evaluate() {
    std::vector<EvalPair> pairs;
    for (const SceneRef& sc : scene_list()) {
      if (sc.role != "test") continue;
      for (const std::string& cls : cfg_.context.classes) {
        std::filesystem::path tb = scene_truth_base(sc, cls);
        if (tb.empty()) continue;
        Raster detection = load_raster(mask_base(sc.name, cls));
        Raster reference = load_raster(tb);
        LabelRaster diff = difference_map(detection, reference);
        save_labels_envi(diff.grid, diff.labels, diff.valid,
                         diff_base(sc.name, cls), "difference");
        pairs.push_back({std::move(detection), std::move(reference), cls});
      }
    }
    if (pairs.empty())
      throw DataError(
          "evaluate: no (detection, reference) pairs; test scenes with truth "
          "masks are required");
    std::vector<EvalRow> rows = evaluate_set(pairs, cfg_.eval);
    atomic_write_file(report_csv_path(), report_csv(rows));
    atomic_write_file(report_text_path(), report_text(rows));
  }
};

}  // namespace fuselet
