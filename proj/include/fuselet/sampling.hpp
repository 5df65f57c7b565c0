#pragma once
// Pixel-neighborhood sample extraction and per-channel standardization.
// Each fully-valid 3x3 window becomes one flat vector of 9*n_channels values,
// channel-major: for each channel, the window's nine pixels in row-major
// spatial order (NW,N,NE, W,center,E, SW,S,SE).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuselet/raster.hpp"

namespace fuselet {

struct ChannelStats {
  std::vector<double> mean;    // one entry per raster channel
  std::vector<double> stddev;  // population std, floored at 1e-12

  bool operator==(const ChannelStats&) const = default;
};

struct SampleProvenance {
  std::int32_t scene = 0;  // index into SampleSet::scene_names
  std::int32_t row = 0;    // center pixel of the window
  std::int32_t col = 0;

  bool operator==(const SampleProvenance&) const = default;
};

struct SampleSet {
  std::size_t n_channels = 0;
  std::vector<double> vectors;  // [n][dim] row-major, dim = 9*n_channels
  std::vector<SampleProvenance> provenance;
  std::vector<std::string> scene_names;
  std::optional<ChannelStats> stats;  // set once standardized

  std::size_t dim() const { return 9 * n_channels; }
  std::size_t size() const { return n_channels == 0 ? 0 : vectors.size() / dim(); }
  const double* vec(std::size_t i) const { return vectors.data() + i * dim(); }
  double* vec(std::size_t i) { return vectors.data() + i * dim(); }

  void check_consistent() const {
    if (n_channels == 0) throw DataError("SampleSet: zero channels");
    if (vectors.size() % dim() != 0)
      throw DataError("SampleSet: vector buffer not a multiple of dim");
    if (provenance.size() != size())
      throw DataError("SampleSet: provenance size mismatch");
  }
};

// One sample per interior pixel whose full 3x3 neighborhood is valid.
// Samples appear in row-major center-pixel order.
inline SampleSet extract_neighborhoods(const Raster& raster,
                                       const std::string& scene_name) {
  raster.check_consistent();
  SampleSet out;
  out.n_channels = raster.n_channels;
  out.scene_names = {scene_name};
  if (raster.grid.n_rows < 3 || raster.grid.n_cols < 3) return out;

  const std::size_t plane = raster.grid.size();
  const std::size_t cols = raster.grid.n_cols;
  for (std::size_t r = 1; r + 1 < raster.grid.n_rows; ++r) {
    for (std::size_t c = 1; c + 1 < cols; ++c) {
      bool ok = true;
      for (int dr = -1; dr <= 1 && ok; ++dr)
        for (int dc = -1; dc <= 1 && ok; ++dc)
          ok = raster.valid[(r + static_cast<std::size_t>(dr + 1) - 1) * cols +
                            (c + static_cast<std::size_t>(dc + 1) - 1)] != 0;
      if (!ok) continue;
      for (std::size_t ch = 0; ch < raster.n_channels; ++ch) {
        const float* plane_ptr = raster.values.data() + ch * plane;
        for (int dr = -1; dr <= 1; ++dr)
          for (int dc = -1; dc <= 1; ++dc)
            out.vectors.push_back(static_cast<double>(
                plane_ptr[(r + static_cast<std::size_t>(dr + 1) - 1) * cols +
                          (c + static_cast<std::size_t>(dc + 1) - 1)]));
      }
      out.provenance.push_back({0, static_cast<std::int32_t>(r),
                                static_cast<std::int32_t>(c)});
    }
  }
  return out;
}

// Concatenates `extra` onto `base`, remapping scene indices.
inline void append_samples(SampleSet& base, const SampleSet& extra) {
  if (base.n_channels == 0) {
    base = extra;
    return;
  }
  if (base.n_channels != extra.n_channels)
    throw DataError("append_samples: channel count mismatch");
  std::vector<std::int32_t> remap(extra.scene_names.size());
  for (std::size_t s = 0; s < extra.scene_names.size(); ++s) {
    auto it = std::find(base.scene_names.begin(), base.scene_names.end(),
                        extra.scene_names[s]);
    if (it == base.scene_names.end()) {
      base.scene_names.push_back(extra.scene_names[s]);
      remap[s] = static_cast<std::int32_t>(base.scene_names.size() - 1);
    } else {
      remap[s] = static_cast<std::int32_t>(it - base.scene_names.begin());
    }
  }
  base.vectors.insert(base.vectors.end(), extra.vectors.begin(),
                      extra.vectors.end());
  for (SampleProvenance p : extra.provenance) {
    p.scene = remap[static_cast<std::size_t>(p.scene)];
    base.provenance.push_back(p);
  }
}

inline SampleSet subset_samples(const SampleSet& s,
                                const std::vector<std::size_t>& indices) {
  s.check_consistent();
  SampleSet out;
  out.n_channels = s.n_channels;
  out.scene_names = s.scene_names;
  out.stats = s.stats;
  out.vectors.reserve(indices.size() * s.dim());
  out.provenance.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= s.size()) throw DataError("subset_samples: index out of range");
    out.vectors.insert(out.vectors.end(), s.vec(i), s.vec(i) + s.dim());
    out.provenance.push_back(s.provenance[i]);
  }
  return out;
}

// Pooled moments per raster channel: all nine window positions of a channel
// share that channel's mean/std. Population variance (divide by count).
inline ChannelStats fit_stats(const SampleSet& s) {
  s.check_consistent();
  if (s.size() == 0) throw DataError("fit_stats: empty sample set");
  const std::size_t n = s.size(), nch = s.n_channels, dim = s.dim();
  ChannelStats st;
  st.mean.assign(nch, 0.0);
  st.stddev.assign(nch, 0.0);
  const double count = static_cast<double>(n * 9);
  for (std::size_t i = 0; i < n; ++i) {
    const double* v = s.vectors.data() + i * dim;
    for (std::size_t ch = 0; ch < nch; ++ch)
      for (std::size_t k = 0; k < 9; ++k) st.mean[ch] += v[ch * 9 + k];
  }
  for (std::size_t ch = 0; ch < nch; ++ch) st.mean[ch] /= count;
  for (std::size_t i = 0; i < n; ++i) {
    const double* v = s.vectors.data() + i * dim;
    for (std::size_t ch = 0; ch < nch; ++ch)
      for (std::size_t k = 0; k < 9; ++k) {
        double d = v[ch * 9 + k] - st.mean[ch];
        st.stddev[ch] += d * d;
      }
  }
  for (std::size_t ch = 0; ch < nch; ++ch)
    st.stddev[ch] = std::max(std::sqrt(st.stddev[ch] / count), 1e-12);
  return st;
}

inline void standardize(SampleSet& s, const ChannelStats& st) {
  s.check_consistent();
  if (st.mean.size() != s.n_channels)
    throw DataError("standardize: stats channel count mismatch");
  const std::size_t n = s.size(), dim = s.dim();
  for (std::size_t i = 0; i < n; ++i) {
    double* v = s.vectors.data() + i * dim;
    for (std::size_t ch = 0; ch < s.n_channels; ++ch)
      for (std::size_t k = 0; k < 9; ++k)
        v[ch * 9 + k] = (v[ch * 9 + k] - st.mean[ch]) / st.stddev[ch];
  }
  s.stats = st;
}

inline void destandardize(SampleSet& s, const ChannelStats& st) {
  s.check_consistent();
  const std::size_t n = s.size(), dim = s.dim();
  for (std::size_t i = 0; i < n; ++i) {
    double* v = s.vectors.data() + i * dim;
    for (std::size_t ch = 0; ch < s.n_channels; ++ch)
      for (std::size_t k = 0; k < 9; ++k)
        v[ch * 9 + k] = v[ch * 9 + k] * st.stddev[ch] + st.mean[ch];
  }
  s.stats.reset();
}

// ---- persistence: binary matrix + JSON sidecar for inspection ----

inline void save_sample_set(const SampleSet& s, const std::filesystem::path& base) {
  s.check_consistent();
  std::ostringstream os(std::ios::binary);
  os.write("FSMP", 4);
  write_u32_le(os, 1);  // container version
  write_u64_le(os, s.size());
  write_u64_le(os, s.n_channels);
  for (double v : s.vectors) write_f64_le(os, v);
  for (const SampleProvenance& p : s.provenance) {
    write_i32_le(os, p.scene);
    write_i32_le(os, p.row);
    write_i32_le(os, p.col);
  }
  write_u32_le(os, static_cast<std::uint32_t>(s.scene_names.size()));
  for (const std::string& name : s.scene_names) {
    write_u32_le(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  write_u8(os, s.stats ? 1 : 0);
  if (s.stats) {
    for (double m : s.stats->mean) write_f64_le(os, m);
    for (double d : s.stats->stddev) write_f64_le(os, d);
  }
  atomic_write_file(base.string() + ".bin", os.str());

  nlohmann::json side = {
      {"format", "fuselet sample set"},
      {"n_samples", s.size()},
      {"n_channels", s.n_channels},
      {"dim", s.dim()},
      {"scenes", s.scene_names},
      {"standardized", s.stats.has_value()},
  };
  if (s.stats) {
    side["stats"] = {{"mean", s.stats->mean}, {"stddev", s.stats->stddev}};
  }
  atomic_write_file(base.string() + ".json", side.dump(2) + "\n");
}

inline SampleSet load_sample_set(const std::filesystem::path& base) {
  std::ifstream is(base.string() + ".bin", std::ios::binary);
  if (!is) throw DataError("cannot open sample set: " + base.string() + ".bin");
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "FSMP")
    throw DataError("bad sample set magic: " + base.string());
  std::uint32_t version = read_u32_le(is);
  if (version != 1)
    throw DataError("unsupported sample set version " + std::to_string(version));
  SampleSet s;
  std::uint64_t n = read_u64_le(is);
  s.n_channels = read_u64_le(is);
  if (s.n_channels == 0) throw DataError("sample set with zero channels");
  s.vectors.resize(n * s.dim());
  for (double& v : s.vectors) v = read_f64_le(is);
  s.provenance.resize(n);
  for (SampleProvenance& p : s.provenance) {
    p.scene = read_i32_le(is);
    p.row = read_i32_le(is);
    p.col = read_i32_le(is);
  }
  std::uint32_t n_scenes = read_u32_le(is);
  s.scene_names.resize(n_scenes);
  for (std::string& name : s.scene_names) {
    std::uint32_t len = read_u32_le(is);
    name.resize(len);
    if (len && !is.read(name.data(), len))
      throw DataError("truncated sample set: " + base.string());
  }
  if (read_u8(is)) {
    ChannelStats st;
    st.mean.resize(s.n_channels);
    st.stddev.resize(s.n_channels);
    for (double& m : st.mean) m = read_f64_le(is);
    for (double& d : st.stddev) d = read_f64_le(is);
    s.stats = st;
  }
  return s;
}

}  // namespace fuselet
