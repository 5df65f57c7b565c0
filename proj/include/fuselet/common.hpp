#pragma once
// Shared plumbing: error types, deterministic RNG, thread helper,
// byte-order-safe binary IO, and content hashing.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fuselet {

// Error taxonomy maps onto CLI exit codes: config=2, data=3, numeric=4.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Deterministic random stream. mt19937_64 output is pinned by the standard,
// and the uniform/normal transforms below are hand-rolled so the byte-exact
// reproducibility guarantee does not depend on libstdc++ distribution
// internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  // Uniform double in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, bound) by masked rejection.
  std::uint64_t integer(std::uint64_t bound) {
    if (bound == 0) throw NumericError("Rng::integer: bound must be positive");
    std::uint64_t mask = bound - 1;
    mask |= mask >> 1; mask |= mask >> 2; mask |= mask >> 4;
    mask |= mask >> 8; mask |= mask >> 16; mask |= mask >> 32;
    for (;;) {
      std::uint64_t r = engine_() & mask;
      if (r < bound) return r;
    }
  }

  // Standard normal via the polar method; caches the spare deviate.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // In-place Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(integer(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Runs fn(begin, end) over [0, n) split into contiguous chunks. Outputs must
// be disjoint per index; there is no reduction, so results are independent of
// the thread count (bit-identical reruns with any --threads value).
inline void parallel_for(std::size_t n, int threads,
                         const std::function<void(std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  std::size_t want = threads <= 1 ? 1 : static_cast<std::size_t>(threads);
  std::size_t n_chunks = std::min(want, n);
  if (n_chunks <= 1) {
    fn(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(n_chunks);
  std::size_t chunk = (n + n_chunks - 1) / n_chunks;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    std::size_t b = c * chunk;
    std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& t : pool) t.join();
}

// ---- little-endian binary IO (explicit byte composition, host-independent) --

inline void write_u8(std::ostream& os, std::uint8_t v) {
  os.put(static_cast<char>(v));
}

inline void write_u32_le(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

inline void write_u64_le(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

inline void write_i32_le(std::ostream& os, std::int32_t v) {
  write_u32_le(os, static_cast<std::uint32_t>(v));
}

inline void write_f32_le(std::ostream& os, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  write_u32_le(os, u);
}

inline void write_f64_le(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  write_u64_le(os, u);
}

inline std::uint8_t read_u8(std::istream& is) {
  int c = is.get();
  if (c == EOF) throw DataError("unexpected end of binary stream");
  return static_cast<std::uint8_t>(c);
}

inline std::uint32_t read_u32_le(std::istream& is) {
  char b[4];
  if (!is.read(b, 4)) throw DataError("unexpected end of binary stream");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
  return v;
}

inline std::uint64_t read_u64_le(std::istream& is) {
  char b[8];
  if (!is.read(b, 8)) throw DataError("unexpected end of binary stream");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
  return v;
}

inline std::int32_t read_i32_le(std::istream& is) {
  return static_cast<std::int32_t>(read_u32_le(is));
}

inline float read_f32_le(std::istream& is) {
  std::uint32_t u = read_u32_le(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

inline double read_f64_le(std::istream& is) {
  std::uint64_t u = read_u64_le(is);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

// ---- content hashing (FNV-1a 64) for stage manifests ----

inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

inline std::uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open file for hashing: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (is.read(buf, sizeof buf) || is.gcount() > 0) {
    h = fnv1a64(buf, static_cast<std::size_t>(is.gcount()), h);
    if (!is) break;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

// ---- small file helpers ----

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Writes via a temp file + rename so readers never observe partial artifacts.
inline void atomic_write_file(const std::filesystem::path& path,
                              const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open file for writing: " + tmp.string());
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!os) throw DataError("short write: " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace fuselet
