#pragma once
// Reader/writer for a pragmatic subset of the ENVI raster format:
// text header "<base>.hdr" + raw band-sequential payload "<base>.img",
// little-endian, data type 4 (float32) or 3 (int32), byte order 0.
// Georeferencing comes from "map info" with a 1-based tie point at the
// top-left corner of pixel (0,0).

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fuselet/raster.hpp"

namespace fuselet {

enum class EnviDataType : int { Int32 = 3, Float32 = 4 };

struct SaveOptions {
  EnviDataType data_type = EnviDataType::Float32;
  double fill = -9999.0;  // stored at invalid pixels, recorded in the header
};

// Declares how file values map to the in-memory raster: which bands to keep,
// which value means "no data", and an optional closed valid range. A pixel is
// invalid iff any selected channel is fill, NaN, or out of range.
struct LoadSpec {
  std::vector<int> channels;            // empty = all bands, in file order
  std::optional<double> fill;           // overrides the header ignore value
  std::optional<double> valid_min;
  std::optional<double> valid_max;
};

namespace detail {

inline std::filesystem::path envi_base(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  if (p.extension() == ".hdr" || p.extension() == ".img") p.replace_extension();
  return p;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

inline std::vector<std::string> split_list(const std::string& braced) {
  // "{a, b, c}" -> trimmed items
  std::string body = trim(braced);
  if (!body.empty() && body.front() == '{') body.erase(body.begin());
  if (!body.empty() && body.back() == '}') body.pop_back();
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(body);
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("ENVI header: bad numeric value for " + what + ": '" + s + "'");
  }
}

inline std::map<std::string, std::string> parse_header(
    const std::filesystem::path& hdr) {
  std::ifstream is(hdr);
  if (!is) throw DataError("cannot open ENVI header: " + hdr.string());
  std::string first;
  std::getline(is, first);
  if (trim(first) != "ENVI")
    throw DataError("not an ENVI header (missing magic line): " + hdr.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    // gather continuation lines until braces balance
    while (std::count(line.begin(), line.end(), '{') >
               std::count(line.begin(), line.end(), '}') &&
           is) {
      std::string more;
      if (!std::getline(is, more)) break;
      line += " " + more;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = lower(trim(line.substr(0, eq)));
    std::string val = trim(line.substr(eq + 1));
    kv[key] = val;
  }
  return kv;
}

inline std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

struct EnviHeader {
  std::size_t samples = 0, lines = 0, bands = 0;
  int data_type = 0;
  GeoGrid grid;
  std::vector<std::string> band_names;
  std::optional<double> ignore_value;
};

inline EnviHeader read_header_info(const std::filesystem::path& base) {
  auto kv = parse_header(base.string() + ".hdr");
  auto need = [&](const std::string& k) -> std::string {
    auto it = kv.find(k);
    if (it == kv.end())
      throw DataError("ENVI header missing required field '" + k + "': " +
                      base.string() + ".hdr");
    return it->second;
  };
  EnviHeader h;
  h.samples = static_cast<std::size_t>(parse_double(need("samples"), "samples"));
  h.lines = static_cast<std::size_t>(parse_double(need("lines"), "lines"));
  h.bands = static_cast<std::size_t>(parse_double(need("bands"), "bands"));
  h.data_type = static_cast<int>(parse_double(need("data type"), "data type"));
  if (h.data_type != 3 && h.data_type != 4)
    throw DataError("ENVI: unsupported data type " + std::to_string(h.data_type) +
                    " (supported: 3=int32, 4=float32)");
  if (lower(need("interleave")) != "bsq")
    throw DataError("ENVI: unsupported interleave (only bsq): " + base.string());
  if (static_cast<int>(parse_double(need("byte order"), "byte order")) != 0)
    throw DataError("ENVI: unsupported byte order (only little-endian 0)");
  auto mi = split_list(need("map info"));
  if (mi.size() < 7)
    throw DataError("ENVI: malformed map info (need 7+ fields): " + base.string());
  double ref_x = parse_double(mi[1], "map info ref x");
  double ref_y = parse_double(mi[2], "map info ref y");
  double ref_lon = parse_double(mi[3], "map info lon");
  double ref_lat = parse_double(mi[4], "map info lat");
  h.grid.pixel_width = parse_double(mi[5], "map info pixel width");
  h.grid.pixel_height = parse_double(mi[6], "map info pixel height");
  // tie point is 1-based at the pixel's top-left corner
  h.grid.origin_lon = ref_lon - (ref_x - 1.0) * h.grid.pixel_width;
  h.grid.origin_lat = ref_lat + (ref_y - 1.0) * h.grid.pixel_height;
  h.grid.n_rows = h.lines;
  h.grid.n_cols = h.samples;
  h.grid.validate();
  if (auto it = kv.find("band names"); it != kv.end())
    h.band_names = split_list(it->second);
  if (auto it = kv.find("data ignore value"); it != kv.end())
    h.ignore_value = parse_double(it->second, "data ignore value");
  return h;
}

inline void write_header(const std::filesystem::path& base, const GeoGrid& grid,
                         std::size_t bands, int data_type,
                         const std::vector<std::string>& band_names,
                         double ignore_value, const std::string& description) {
  std::ostringstream os;
  os << "ENVI\n";
  os << "description = {" << description << "}\n";
  os << "samples = " << grid.n_cols << "\n";
  os << "lines = " << grid.n_rows << "\n";
  os << "bands = " << bands << "\n";
  os << "header offset = 0\n";
  os << "file type = ENVI Standard\n";
  os << "data type = " << data_type << "\n";
  os << "interleave = bsq\n";
  os << "byte order = 0\n";
  os << "map info = {Geographic Lat/Lon, 1.0, 1.0, " << fmt_g17(grid.origin_lon)
     << ", " << fmt_g17(grid.origin_lat) << ", " << fmt_g17(grid.pixel_width)
     << ", " << fmt_g17(grid.pixel_height) << ", WGS-84}\n";
  if (!band_names.empty()) {
    os << "band names = {";
    for (std::size_t i = 0; i < band_names.size(); ++i)
      os << (i ? ", " : "") << band_names[i];
    os << "}\n";
  }
  os << "data ignore value = " << fmt_g17(ignore_value) << "\n";
  atomic_write_file(base.string() + ".hdr", os.str());
}

template <typename T, typename ReadOne>
std::vector<T> read_payload(const std::filesystem::path& base, std::size_t count,
                            ReadOne read_one) {
  std::filesystem::path img = base.string() + ".img";
  std::ifstream is(img, std::ios::binary);
  if (!is) throw DataError("cannot open ENVI payload: " + img.string());
  std::vector<T> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = read_one(is);
  char extra;
  if (is.get(extra))
    throw DataError("ENVI payload larger than header declares: " + img.string());
  return out;
}

}  // namespace detail

inline void save_raster(const Raster& raster, const std::filesystem::path& path,
                        const SaveOptions& opts = {}) {
  raster.check_consistent();
  namespace fs = std::filesystem;
  fs::path base = detail::envi_base(path);
  if (base.has_parent_path()) fs::create_directories(base.parent_path());
  detail::write_header(base, raster.grid, raster.n_channels,
                       static_cast<int>(opts.data_type), raster.channel_names,
                       opts.fill, "fuselet raster");
  std::ostringstream os(std::ios::binary);
  const std::size_t plane = raster.grid.size();
  for (std::size_t c = 0; c < raster.n_channels; ++c) {
    for (std::size_t p = 0; p < plane; ++p) {
      bool ok = raster.valid[p] != 0;
      if (opts.data_type == EnviDataType::Float32) {
        float v = ok ? raster.values[c * plane + p] : static_cast<float>(opts.fill);
        write_f32_le(os, v);
      } else {
        std::int32_t v = ok ? static_cast<std::int32_t>(
                                  std::llround(raster.values[c * plane + p]))
                            : static_cast<std::int32_t>(std::llround(opts.fill));
        write_i32_le(os, v);
      }
    }
  }
  atomic_write_file(base.string() + ".img", os.str());
}

inline Raster load_raster(const std::filesystem::path& path,
                          const LoadSpec& spec = {}) {
  namespace fs = std::filesystem;
  fs::path base = detail::envi_base(path);
  detail::EnviHeader h = detail::read_header_info(base);

  std::vector<int> sel = spec.channels;
  if (sel.empty()) {
    sel.resize(h.bands);
    for (std::size_t i = 0; i < h.bands; ++i) sel[i] = static_cast<int>(i);
  }
  for (int c : sel)
    if (c < 0 || static_cast<std::size_t>(c) >= h.bands)
      throw DataError("channel index " + std::to_string(c) +
                      " out of range (file has " + std::to_string(h.bands) +
                      " bands): " + base.string());

  const std::size_t plane = h.samples * h.lines;
  std::vector<float> file_values;
  if (h.data_type == 4) {
    file_values = detail::read_payload<float>(
        base, plane * h.bands, [](std::istream& is) { return read_f32_le(is); });
  } else {
    auto iv = detail::read_payload<std::int32_t>(
        base, plane * h.bands, [](std::istream& is) { return read_i32_le(is); });
    file_values.assign(iv.begin(), iv.end());
  }

  std::optional<double> fill = spec.fill ? spec.fill : h.ignore_value;

  Raster r;
  r.grid = h.grid;
  r.n_channels = sel.size();
  r.values.resize(sel.size() * plane);
  r.valid.assign(plane, 1);
  r.channel_names.resize(sel.size());
  for (std::size_t k = 0; k < sel.size(); ++k) {
    std::size_t b = static_cast<std::size_t>(sel[k]);
    r.channel_names[k] = b < h.band_names.size() ? h.band_names[b]
                                                 : "ch" + std::to_string(b);
    const float* src = file_values.data() + b * plane;
    float* dst = r.values.data() + k * plane;
    std::copy(src, src + plane, dst);
    for (std::size_t p = 0; p < plane; ++p) {
      float v = src[p];
      bool bad = std::isnan(v);
      if (!bad && fill && v == static_cast<float>(*fill)) bad = true;
      if (!bad && spec.valid_min && v < static_cast<float>(*spec.valid_min))
        bad = true;
      if (!bad && spec.valid_max && v > static_cast<float>(*spec.valid_max))
        bad = true;
      if (bad) r.valid[p] = 0;
    }
  }
  return r;
}

// Integer label payloads (segmentation maps, difference maps) keep an exact
// int32 path so labels never round-trip through float.
inline void save_labels_envi(const GeoGrid& grid,
                             const std::vector<std::int32_t>& labels,
                             const std::vector<std::uint8_t>& valid,
                             const std::filesystem::path& path,
                             const std::string& band_name = "label",
                             std::int32_t fill = -9999) {
  grid.validate();
  if (labels.size() != grid.size() || valid.size() != grid.size())
    throw DataError("save_labels_envi: buffer size mismatch");
  namespace fs = std::filesystem;
  fs::path base = detail::envi_base(path);
  if (base.has_parent_path()) fs::create_directories(base.parent_path());
  detail::write_header(base, grid, 1, 3, {band_name}, fill, "fuselet labels");
  std::ostringstream os(std::ios::binary);
  for (std::size_t p = 0; p < grid.size(); ++p)
    write_i32_le(os, valid[p] ? labels[p] : fill);
  atomic_write_file(base.string() + ".img", os.str());
}

struct LabelRaster {
  GeoGrid grid;
  std::vector<std::int32_t> labels;
  std::vector<std::uint8_t> valid;
};

inline LabelRaster load_labels_envi(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  fs::path base = detail::envi_base(path);
  detail::EnviHeader h = detail::read_header_info(base);
  if (h.bands != 1)
    throw DataError("label raster must have exactly one band: " + base.string());
  if (h.data_type != 3)
    throw DataError("label raster must be int32 (data type 3): " + base.string());
  LabelRaster lr;
  lr.grid = h.grid;
  lr.labels = detail::read_payload<std::int32_t>(
      base, h.grid.size(), [](std::istream& is) { return read_i32_le(is); });
  lr.valid.assign(h.grid.size(), 1);
  std::int32_t fill = h.ignore_value
                          ? static_cast<std::int32_t>(std::llround(*h.ignore_value))
                          : -9999;
  for (std::size_t p = 0; p < lr.labels.size(); ++p)
    if (lr.labels[p] == fill) lr.valid[p] = 0;
  return lr;
}

}  // namespace fuselet
