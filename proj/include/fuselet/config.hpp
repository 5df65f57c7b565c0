#pragma once
// Pipeline configuration: typed view over the TOML config file with
// field-path error messages, plus the canonical JSON form used for
// manifest hashing.
//
// Sections: [output], [[synth_scenes]] and/or [[scenes]], [sampling], [dbn],
// [iic], [context], [morph], [eval]. Seeds are always explicit — sampling,
// dbn and iic training never fall back to a default seed.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuselet/cluster_tree.hpp"
#include "fuselet/rbm.hpp"
#include "fuselet/ssim.hpp"
#include "fuselet/synth.hpp"
#include "fuselet/toml.hpp"

namespace fuselet {

struct SynthSceneConfig {
  std::string name;
  std::string role;  // "train" or "test"
  SceneSpec spec;
};

struct RealSceneConfig {
  std::string name;
  std::string role;
  std::filesystem::path raster;
  std::filesystem::path labels;  // empty when absent
  std::map<std::string, std::filesystem::path> truth;  // class -> mask raster
};

struct SamplingSection {
  std::size_t k = 16;          // strata for the k-means scale-down
  std::size_t n_total = 0;     // samples kept for training
  std::uint64_t seed = 0;
};

struct DbnSection {
  std::vector<std::size_t> layer_dims;  // explicit hidden sizes, or:
  double expansion_factor = 0.0;        // hidden = round(factor * input_dim)
  std::size_t n_layers = 0;             // layer count for expansion_factor
  CdConfig cd;
};

struct ContextSection {
  std::vector<std::string> classes;  // each pairs with "<class>_background"
  double tau = 0.5;
};

struct MorphSection {
  std::size_t min_area = 0;
  std::optional<std::size_t> max_area;
  bool preserve_holes = false;
};

struct PipelineConfig {
  std::filesystem::path output_dir;
  std::filesystem::path base_dir;  // config file directory, for relative paths
  std::vector<SynthSceneConfig> synth_scenes;
  std::vector<RealSceneConfig> scenes;
  SamplingSection sampling;
  DbnSection dbn;
  TreeConfig iic;
  ContextSection context;
  MorphSection morph;
  SsimConfig eval;
};

namespace detail {

[[noreturn]] inline void cfg_fail(const std::string& path,
                                  const std::string& what) {
  throw ConfigError(path + ": " + what);
}

inline const TomlValue& require_value(const TomlTable& t, const std::string& key,
                                      const std::string& path) {
  const TomlValue* v = t.find(key);
  if (!v) cfg_fail(path + "." + key, "required");
  return *v;
}

inline std::int64_t as_int(const TomlValue& v, const std::string& path) {
  if (v.kind != TomlValue::Kind::Integer) cfg_fail(path, "expected an integer");
  return v.integer;
}

inline double as_num(const TomlValue& v, const std::string& path) {
  if (v.kind != TomlValue::Kind::Integer && v.kind != TomlValue::Kind::Float)
    cfg_fail(path, "expected a number");
  return v.as_number();
}

inline std::string as_str(const TomlValue& v, const std::string& path) {
  if (v.kind != TomlValue::Kind::String) cfg_fail(path, "expected a string");
  return v.str;
}

inline bool as_bool(const TomlValue& v, const std::string& path) {
  if (v.kind != TomlValue::Kind::Boolean) cfg_fail(path, "expected a boolean");
  return v.boolean;
}

inline std::int64_t get_int(const TomlTable& t, const std::string& key,
                            const std::string& path, std::int64_t fallback) {
  const TomlValue* v = t.find(key);
  return v ? as_int(*v, path + "." + key) : fallback;
}

inline double get_num(const TomlTable& t, const std::string& key,
                      const std::string& path, double fallback) {
  const TomlValue* v = t.find(key);
  return v ? as_num(*v, path + "." + key) : fallback;
}

inline std::string get_str(const TomlTable& t, const std::string& key,
                           const std::string& path, const std::string& fallback) {
  const TomlValue* v = t.find(key);
  return v ? as_str(*v, path + "." + key) : fallback;
}

inline bool get_bool(const TomlTable& t, const std::string& key,
                     const std::string& path, bool fallback) {
  const TomlValue* v = t.find(key);
  return v ? as_bool(*v, path + "." + key) : fallback;
}

inline std::uint64_t require_seed(const TomlTable& t, const std::string& path) {
  const TomlValue& v = require_value(t, "seed", path);
  std::int64_t s = as_int(v, path + ".seed");
  if (s < 0) cfg_fail(path + ".seed", "must be >= 0");
  return static_cast<std::uint64_t>(s);
}

inline std::size_t positive_count(std::int64_t v, const std::string& path) {
  if (v < 1) cfg_fail(path, "must be >= 1");
  return static_cast<std::size_t>(v);
}

// reject misspelled keys early; `prefixes` lets scenes carry truth_<class>
inline void check_known_keys(const TomlTable& t,
                             const std::set<std::string>& known,
                             const std::string& path,
                             const std::vector<std::string>& prefixes = {}) {
  for (const auto& [key, val] : t.values) {
    if (known.count(key)) continue;
    bool ok = false;
    for (const std::string& p : prefixes)
      if (key.size() > p.size() && key.compare(0, p.size(), p) == 0) ok = true;
    if (!ok) cfg_fail(path + "." + key, "unknown key");
  }
}

inline std::string parse_role(const TomlTable& t, const std::string& path) {
  std::string role = get_str(t, "role", path, "train");
  if (role != "train" && role != "test")
    cfg_fail(path + ".role", "must be \"train\" or \"test\", got \"" + role + "\"");
  return role;
}

inline std::filesystem::path resolve_path(const std::string& raw,
                                          const std::filesystem::path& base) {
  std::filesystem::path p(raw);
  return p.is_absolute() ? p : base / p;
}

}  // namespace detail

inline PipelineConfig parse_pipeline_config(const TomlDoc& doc,
                                            const std::filesystem::path& base_dir) {
  using detail::cfg_fail;
  PipelineConfig cfg;
  cfg.base_dir = base_dir;

  if (!doc.root.values.empty())
    cfg_fail(doc.root.values.begin()->first,
             "top-level keys are not allowed; use a [section]");
  static const std::set<std::string> known_tables = {
      "output", "sampling", "dbn", "iic", "context", "morph", "eval"};
  for (const auto& [name, t] : doc.tables)
    if (!known_tables.count(name)) cfg_fail(name, "unknown section");
  for (const auto& [name, t] : doc.table_arrays)
    if (name != "synth_scenes" && name != "scenes")
      cfg_fail(name, "unknown section");

  // [output]
  if (const auto it = doc.tables.find("output"); it != doc.tables.end()) {
    detail::check_known_keys(it->second, {"dir"}, "output");
    std::string dir = detail::get_str(it->second, "dir", "output", "");
    if (!dir.empty()) cfg.output_dir = detail::resolve_path(dir, base_dir);
  }

  // [[synth_scenes]]
  if (const auto it = doc.table_arrays.find("synth_scenes");
      it != doc.table_arrays.end()) {
    for (std::size_t i = 0; i < it->second.size(); ++i) {
      const TomlTable& t = it->second[i];
      std::string path = "synth_scenes[" + std::to_string(i) + "]";
      detail::check_known_keys(
          t,
          {"name", "role", "n_rows", "n_cols", "n_vis_channels",
           "n_thermal_channels", "n_fires", "n_plumes", "seed",
           "terrain_roughness", "fire_intensity", "smoke_opacity"},
          path);
      SynthSceneConfig s;
      s.name = detail::as_str(detail::require_value(t, "name", path),
                              path + ".name");
      s.role = detail::parse_role(t, path);
      s.spec.n_rows = detail::as_int(detail::require_value(t, "n_rows", path),
                                     path + ".n_rows");
      s.spec.n_cols = detail::as_int(detail::require_value(t, "n_cols", path),
                                     path + ".n_cols");
      s.spec.n_vis_channels = detail::get_int(t, "n_vis_channels", path, 4);
      s.spec.n_thermal_channels =
          detail::get_int(t, "n_thermal_channels", path, 2);
      s.spec.n_fires = detail::get_int(t, "n_fires", path, 0);
      s.spec.n_plumes = detail::get_int(t, "n_plumes", path, 0);
      s.spec.seed = detail::require_seed(t, path);
      s.spec.terrain_roughness =
          detail::get_num(t, "terrain_roughness", path, 0.3);
      s.spec.fire_intensity = detail::get_num(t, "fire_intensity", path, 3.0);
      s.spec.smoke_opacity = detail::get_num(t, "smoke_opacity", path, 1.2);
      try {
        s.spec.validate();
      } catch (const ConfigError& e) {
        cfg_fail(path, e.what());
      }
      cfg.synth_scenes.push_back(std::move(s));
    }
  }

  // [[scenes]]
  if (const auto it = doc.table_arrays.find("scenes");
      it != doc.table_arrays.end()) {
    for (std::size_t i = 0; i < it->second.size(); ++i) {
      const TomlTable& t = it->second[i];
      std::string path = "scenes[" + std::to_string(i) + "]";
      detail::check_known_keys(t, {"name", "role", "raster", "labels"}, path,
                               {"truth_"});
      RealSceneConfig s;
      s.name = detail::as_str(detail::require_value(t, "name", path),
                              path + ".name");
      s.role = detail::parse_role(t, path);
      s.raster = detail::resolve_path(
          detail::as_str(detail::require_value(t, "raster", path),
                         path + ".raster"),
          base_dir);
      std::string labels = detail::get_str(t, "labels", path, "");
      if (!labels.empty()) s.labels = detail::resolve_path(labels, base_dir);
      for (const auto& [key, val] : t.values) {
        if (key.rfind("truth_", 0) == 0 && key.size() > 6)
          s.truth[key.substr(6)] = detail::resolve_path(
              detail::as_str(val, path + "." + key), base_dir);
      }
      cfg.scenes.push_back(std::move(s));
    }
  }

  // scene roster sanity
  std::set<std::string> names;
  std::size_t n_train = 0;
  auto note_scene = [&](const std::string& name, const std::string& role,
                        const std::string& path) {
    if (name.empty()) cfg_fail(path + ".name", "must not be empty");
    if (!names.insert(name).second)
      cfg_fail(path + ".name", "duplicate scene name \"" + name + "\"");
    if (role == "train") ++n_train;
  };
  for (std::size_t i = 0; i < cfg.synth_scenes.size(); ++i)
    note_scene(cfg.synth_scenes[i].name, cfg.synth_scenes[i].role,
               "synth_scenes[" + std::to_string(i) + "]");
  for (std::size_t i = 0; i < cfg.scenes.size(); ++i)
    note_scene(cfg.scenes[i].name, cfg.scenes[i].role,
               "scenes[" + std::to_string(i) + "]");
  if (names.empty()) cfg_fail("scenes", "at least one scene is required");
  if (n_train == 0) cfg_fail("scenes", "at least one scene must have role=\"train\"");

  // [sampling]
  {
    auto it = doc.tables.find("sampling");
    if (it == doc.tables.end()) cfg_fail("sampling", "section required");
    const TomlTable& t = it->second;
    detail::check_known_keys(t, {"k", "n_total", "seed"}, "sampling");
    cfg.sampling.k = detail::positive_count(
        detail::get_int(t, "k", "sampling", 16), "sampling.k");
    cfg.sampling.n_total = detail::positive_count(
        detail::as_int(detail::require_value(t, "n_total", "sampling"),
                       "sampling.n_total"),
        "sampling.n_total");
    cfg.sampling.seed = detail::require_seed(t, "sampling");
  }

  // [dbn]
  {
    auto it = doc.tables.find("dbn");
    if (it == doc.tables.end()) cfg_fail("dbn", "section required");
    const TomlTable& t = it->second;
    detail::check_known_keys(
        t,
        {"layer_dims", "expansion_factor", "n_layers", "gibbs_steps",
         "learning_rate", "momentum", "weight_decay", "batch_size", "epochs",
         "seed"},
        "dbn");
    const TomlValue* dims = t.find("layer_dims");
    const TomlValue* factor = t.find("expansion_factor");
    if ((dims != nullptr) == (factor != nullptr))
      cfg_fail("dbn", "exactly one of layer_dims or expansion_factor required");
    if (dims) {
      if (dims->kind != TomlValue::Kind::Array || dims->array.empty())
        cfg_fail("dbn.layer_dims", "expected a non-empty array of integers");
      for (std::size_t i = 0; i < dims->array.size(); ++i)
        cfg.dbn.layer_dims.push_back(detail::positive_count(
            detail::as_int(dims->array[i],
                           "dbn.layer_dims[" + std::to_string(i) + "]"),
            "dbn.layer_dims[" + std::to_string(i) + "]"));
    } else {
      cfg.dbn.expansion_factor = detail::as_num(*factor, "dbn.expansion_factor");
      if (!(cfg.dbn.expansion_factor > 0.0))
        cfg_fail("dbn.expansion_factor", "must be > 0");
      cfg.dbn.n_layers = detail::positive_count(
          detail::get_int(t, "n_layers", "dbn", 2), "dbn.n_layers");
    }
    cfg.dbn.cd.gibbs_steps = static_cast<int>(detail::positive_count(
        detail::get_int(t, "gibbs_steps", "dbn", 1), "dbn.gibbs_steps"));
    cfg.dbn.cd.learning_rate =
        detail::get_num(t, "learning_rate", "dbn", 0.01);
    if (!(cfg.dbn.cd.learning_rate > 0.0))
      cfg_fail("dbn.learning_rate", "must be > 0");
    cfg.dbn.cd.momentum = detail::get_num(t, "momentum", "dbn", 0.5);
    if (cfg.dbn.cd.momentum < 0.0 || cfg.dbn.cd.momentum >= 1.0)
      cfg_fail("dbn.momentum", "must be in [0, 1)");
    cfg.dbn.cd.weight_decay = detail::get_num(t, "weight_decay", "dbn", 1e-4);
    if (cfg.dbn.cd.weight_decay < 0.0)
      cfg_fail("dbn.weight_decay", "must be >= 0");
    cfg.dbn.cd.batch_size = detail::positive_count(
        detail::get_int(t, "batch_size", "dbn", 128), "dbn.batch_size");
    cfg.dbn.cd.epochs = static_cast<int>(detail::positive_count(
        detail::get_int(t, "epochs", "dbn", 10), "dbn.epochs"));
    cfg.dbn.cd.seed = detail::require_seed(t, "dbn");
  }

  // [iic]
  {
    auto it = doc.tables.find("iic");
    if (it == doc.tables.end()) cfg_fail("iic", "section required");
    const TomlTable& t = it->second;
    detail::check_known_keys(t,
                             {"c_root", "c_child", "min_child_samples",
                              "noise_sigma", "epochs", "batch_size",
                              "learning_rate", "seed"},
                             "iic");
    cfg.iic.c_root = detail::positive_count(
        detail::get_int(t, "c_root", "iic", 800), "iic.c_root");
    if (cfg.iic.c_root < 2) cfg_fail("iic.c_root", "must be >= 2");
    cfg.iic.c_child = detail::positive_count(
        detail::get_int(t, "c_child", "iic", 100), "iic.c_child");
    cfg.iic.min_child_samples = detail::positive_count(
        detail::get_int(t, "min_child_samples", "iic", 100),
        "iic.min_child_samples");
    if (cfg.iic.min_child_samples < 2)
      cfg_fail("iic.min_child_samples", "must be >= 2");
    cfg.iic.noise_sigma = detail::get_num(t, "noise_sigma", "iic", 0.05);
    if (cfg.iic.noise_sigma < 0.0) cfg_fail("iic.noise_sigma", "must be >= 0");
    cfg.iic.epochs = detail::positive_count(
        detail::get_int(t, "epochs", "iic", 10), "iic.epochs");
    cfg.iic.batch_size = detail::positive_count(
        detail::get_int(t, "batch_size", "iic", 256), "iic.batch_size");
    cfg.iic.learning_rate = detail::get_num(t, "learning_rate", "iic", 1e-3);
    if (!(cfg.iic.learning_rate > 0.0))
      cfg_fail("iic.learning_rate", "must be > 0");
    cfg.iic.seed = detail::require_seed(t, "iic");
  }

  // [context]
  {
    auto it = doc.tables.find("context");
    if (it == doc.tables.end()) cfg_fail("context", "section required");
    const TomlTable& t = it->second;
    detail::check_known_keys(t, {"classes", "tau"}, "context");
    const TomlValue& cls = detail::require_value(t, "classes", "context");
    if (cls.kind != TomlValue::Kind::Array || cls.array.empty())
      cfg_fail("context.classes", "expected a non-empty array of strings");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < cls.array.size(); ++i) {
      std::string path = "context.classes[" + std::to_string(i) + "]";
      std::string name = detail::as_str(cls.array[i], path);
      if (name.empty()) cfg_fail(path, "must not be empty");
      if (name.size() > 11 &&
          name.substr(name.size() - 11) == "_background")
        cfg_fail(path, "list the foreground class; its _background pair is implied");
      if (!seen.insert(name).second) cfg_fail(path, "duplicate class");
      cfg.context.classes.push_back(name);
    }
    cfg.context.tau = detail::get_num(t, "tau", "context", 0.5);
    if (!(cfg.context.tau >= 0.0) || !(cfg.context.tau < 1.0))
      cfg_fail("context.tau", "must satisfy 0 <= tau < 1");
  }

  // [morph]
  if (const auto it = doc.tables.find("morph"); it != doc.tables.end()) {
    const TomlTable& t = it->second;
    detail::check_known_keys(t, {"min_area", "max_area", "preserve_holes"},
                             "morph");
    std::int64_t min_area = detail::get_int(t, "min_area", "morph", 0);
    if (min_area < 0) cfg_fail("morph.min_area", "must be >= 0");
    cfg.morph.min_area = static_cast<std::size_t>(min_area);
    std::int64_t max_area = detail::get_int(t, "max_area", "morph", 0);
    if (max_area < 0) cfg_fail("morph.max_area", "must be >= 0 (0 = unlimited)");
    if (max_area > 0) {
      cfg.morph.max_area = static_cast<std::size_t>(max_area);
      if (cfg.morph.min_area > *cfg.morph.max_area)
        cfg_fail("morph.max_area", "must be >= morph.min_area");
    }
    cfg.morph.preserve_holes =
        detail::get_bool(t, "preserve_holes", "morph", false);
  }

  // [eval]
  if (const auto it = doc.tables.find("eval"); it != doc.tables.end()) {
    const TomlTable& t = it->second;
    detail::check_known_keys(t, {"window", "k1", "k2", "dynamic_range"}, "eval");
    std::string window = detail::get_str(t, "window", "eval", "gaussian11");
    if (window == "gaussian11")
      cfg.eval.window = SsimConfig::Window::Gaussian11;
    else if (window == "uniform8")
      cfg.eval.window = SsimConfig::Window::Uniform8;
    else
      cfg_fail("eval.window", "must be \"gaussian11\" or \"uniform8\"");
    cfg.eval.k1 = detail::get_num(t, "k1", "eval", 0.01);
    cfg.eval.k2 = detail::get_num(t, "k2", "eval", 0.03);
    cfg.eval.dynamic_range = detail::get_num(t, "dynamic_range", "eval", 1.0);
    if (!(cfg.eval.k1 > 0.0)) cfg_fail("eval.k1", "must be > 0");
    if (!(cfg.eval.k2 > 0.0)) cfg_fail("eval.k2", "must be > 0");
    if (!(cfg.eval.dynamic_range > 0.0))
      cfg_fail("eval.dynamic_range", "must be > 0");
  }

  return cfg;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const DataError& e) {
    throw ConfigError(std::string("cannot read config file: ") + e.what());
  }
  return parse_pipeline_config(parse_toml(text),
                               path.has_parent_path()
                                   ? path.parent_path()
                                   : std::filesystem::path("."));
}

// --seed N: sampling gets N, the encoder N+1, the cluster heads N+2
inline void apply_seed_override(PipelineConfig& cfg, std::uint64_t seed) {
  cfg.sampling.seed = seed;
  cfg.dbn.cd.seed = seed + 1;
  cfg.iic.seed = seed + 2;
}

// Canonical JSON image of the config (paths and output dir excluded where
// they do not affect artifact content). Section subobjects are hashed
// per-stage by the pipeline manifest.
inline nlohmann::json config_json(const PipelineConfig& cfg) {
  nlohmann::json scenes = nlohmann::json::array();
  for (const auto& s : cfg.synth_scenes) {
    scenes.push_back({{"kind", "synth"},
                      {"name", s.name},
                      {"role", s.role},
                      {"n_rows", s.spec.n_rows},
                      {"n_cols", s.spec.n_cols},
                      {"n_vis_channels", s.spec.n_vis_channels},
                      {"n_thermal_channels", s.spec.n_thermal_channels},
                      {"n_fires", s.spec.n_fires},
                      {"n_plumes", s.spec.n_plumes},
                      {"seed", s.spec.seed},
                      {"terrain_roughness", s.spec.terrain_roughness},
                      {"fire_intensity", s.spec.fire_intensity},
                      {"smoke_opacity", s.spec.smoke_opacity}});
  }
  for (const auto& s : cfg.scenes) {
    nlohmann::json truth = nlohmann::json::object();
    for (const auto& [cls, p] : s.truth) truth[cls] = p.string();
    scenes.push_back({{"kind", "real"},
                      {"name", s.name},
                      {"role", s.role},
                      {"raster", s.raster.string()},
                      {"labels", s.labels.string()},
                      {"truth", truth}});
  }
  return {
      {"scenes", scenes},
      {"sampling",
       {{"k", cfg.sampling.k},
        {"n_total", cfg.sampling.n_total},
        {"seed", cfg.sampling.seed}}},
      {"dbn",
       {{"layer_dims", cfg.dbn.layer_dims},
        {"expansion_factor", cfg.dbn.expansion_factor},
        {"n_layers", cfg.dbn.n_layers},
        {"gibbs_steps", cfg.dbn.cd.gibbs_steps},
        {"learning_rate", cfg.dbn.cd.learning_rate},
        {"momentum", cfg.dbn.cd.momentum},
        {"weight_decay", cfg.dbn.cd.weight_decay},
        {"batch_size", cfg.dbn.cd.batch_size},
        {"epochs", cfg.dbn.cd.epochs},
        {"seed", cfg.dbn.cd.seed}}},
      {"iic",
       {{"c_root", cfg.iic.c_root},
        {"c_child", cfg.iic.c_child},
        {"min_child_samples", cfg.iic.min_child_samples},
        {"noise_sigma", cfg.iic.noise_sigma},
        {"epochs", cfg.iic.epochs},
        {"batch_size", cfg.iic.batch_size},
        {"learning_rate", cfg.iic.learning_rate},
        {"seed", cfg.iic.seed}}},
      {"context", {{"classes", cfg.context.classes}, {"tau", cfg.context.tau}}},
      {"morph",
       {{"min_area", cfg.morph.min_area},
        {"max_area", cfg.morph.max_area ? *cfg.morph.max_area : 0},
        {"preserve_holes", cfg.morph.preserve_holes}}},
      {"eval",
       {{"window", cfg.eval.window == SsimConfig::Window::Gaussian11
                       ? "gaussian11"
                       : "uniform8"},
        {"k1", cfg.eval.k1},
        {"k2", cfg.eval.k2},
        {"dynamic_range", cfg.eval.dynamic_range}}},
  };
}

}  // namespace fuselet
