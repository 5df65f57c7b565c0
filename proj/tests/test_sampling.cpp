#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "fuselet/kmeans.hpp"
#include "fuselet/sampling.hpp"

using namespace fuselet;
namespace fs = std::filesystem;

static Raster grid_raster(std::size_t rows, std::size_t cols,
                          std::size_t channels) {
  GeoGrid g{0.0, static_cast<double>(rows), 1.0, 1.0, rows, cols};
  Raster r = Raster::zeros(g, channels);
  for (std::size_t ch = 0; ch < channels; ++ch)
    for (std::size_t row = 0; row < rows; ++row)
      for (std::size_t col = 0; col < cols; ++col)
        r.at(ch, row, col) = static_cast<float>(1000 * ch + 10 * row + col);
  return r;
}

TEST_CASE("neighborhoods: 3x3 raster yields one row-major window") {
  Raster r = grid_raster(3, 3, 1);
  SampleSet s = extract_neighborhoods(r, "a");
  REQUIRE(s.size() == 1);
  REQUIRE(s.dim() == 9);
  // window rows top to bottom, each left to right
  std::vector<double> expect = {0, 1, 2, 10, 11, 12, 20, 21, 22};
  for (std::size_t k = 0; k < 9; ++k) CHECK(s.vec(0)[k] == expect[k]);
  CHECK(s.provenance[0] == SampleProvenance{0, 1, 1});
  CHECK(s.scene_names == std::vector<std::string>{"a"});
}

TEST_CASE("neighborhoods: channels are contiguous blocks") {
  Raster r = grid_raster(3, 3, 2);
  SampleSet s = extract_neighborhoods(r, "a");
  REQUIRE(s.size() == 1);
  REQUIRE(s.dim() == 18);
  for (std::size_t k = 0; k < 9; ++k) {
    CHECK(s.vec(0)[k] < 1000);           // channel 0 block first
    CHECK(s.vec(0)[9 + k] >= 1000);      // then channel 1
    CHECK(s.vec(0)[9 + k] == s.vec(0)[k] + 1000);
  }
}

TEST_CASE("neighborhoods: invalid pixels knock out touching windows") {
  Raster r = grid_raster(6, 6, 1);
  r.set_valid(1, 1, false);
  SampleSet s = extract_neighborhoods(r, "a");
  // interior is 4x4 = 16 centers; the four centers within distance 1 of the
  // invalid pixel lose their windows
  REQUIRE(s.size() == 12);
  for (const auto& p : s.provenance) {
    CHECK(std::max(std::abs(p.row - 1), std::abs(p.col - 1)) > 1);
  }
  // centers appear in row-major order
  for (std::size_t i = 1; i < s.provenance.size(); ++i) {
    auto a = s.provenance[i - 1], b = s.provenance[i];
    CHECK((b.row > a.row || (b.row == a.row && b.col > a.col)));
  }
}

TEST_CASE("neighborhoods: rasters thinner than 3 pixels yield nothing") {
  CHECK(extract_neighborhoods(grid_raster(2, 5, 1), "a").size() == 0);
  CHECK(extract_neighborhoods(grid_raster(5, 2, 1), "a").size() == 0);
  CHECK(extract_neighborhoods(grid_raster(5, 5, 1), "a").size() == 9);
}

TEST_CASE("append_samples remaps scene indices") {
  Raster r = grid_raster(3, 4, 1);
  SampleSet a = extract_neighborhoods(r, "s1");
  SampleSet b = extract_neighborhoods(r, "s2");
  SampleSet c = extract_neighborhoods(r, "s1");
  SampleSet all;
  append_samples(all, a);
  append_samples(all, b);
  append_samples(all, c);
  REQUIRE(all.size() == 6);
  REQUIRE(all.scene_names == std::vector<std::string>{"s1", "s2"});
  CHECK(all.provenance[0].scene == 0);
  CHECK(all.provenance[2].scene == 1);
  CHECK(all.provenance[4].scene == 0);
}

static SampleSet random_samples(std::size_t n, std::size_t channels,
                                std::uint64_t seed) {
  SampleSet s;
  s.n_channels = channels;
  s.scene_names = {"rand"};
  Rng rng(seed);
  s.vectors.resize(n * s.dim());
  for (auto& v : s.vectors) v = rng.uniform(-3.0, 7.0);
  s.provenance.assign(n, SampleProvenance{0, 1, 1});
  return s;
}

TEST_CASE("fit_stats matches a naive two-pass oracle") {
  SampleSet s = random_samples(500, 3, 11);
  ChannelStats st = fit_stats(s);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    // oracle: gather the channel's values, then direct mean/variance
    std::vector<double> vals;
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t k = 0; k < 9; ++k) vals.push_back(s.vec(i)[ch * 9 + k]);
    double mean = std::accumulate(vals.begin(), vals.end(), 0.0) /
                  static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(vals.size());  // population variance
    CHECK(std::abs(st.mean[ch] - mean) < 1e-12);
    CHECK(std::abs(st.stddev[ch] - std::sqrt(var)) < 1e-12);
  }
}

TEST_CASE("fit_stats floors the std of constant channels") {
  SampleSet s = random_samples(50, 2, 3);
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t k = 0; k < 9; ++k) s.vec(i)[k] = 4.25;  // channel 0 constant
  ChannelStats st = fit_stats(s);
  CHECK(st.stddev[0] == 1e-12);
  CHECK(st.mean[0] == 4.25);
  CHECK(st.stddev[1] > 1.0);
  // standardizing the constant channel yields exact zeros, not NaN/inf
  standardize(s, st);
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t k = 0; k < 9; ++k) CHECK(s.vec(i)[k] == 0.0);
}

TEST_CASE("standardize centers and scales; destandardize inverts") {
  SampleSet s = random_samples(300, 2, 17);
  SampleSet orig = s;
  ChannelStats st = fit_stats(s);
  standardize(s, st);
  REQUIRE(s.stats.has_value());
  ChannelStats after = fit_stats(s);
  for (std::size_t ch = 0; ch < 2; ++ch) {
    CHECK(std::abs(after.mean[ch]) < 1e-9);
    CHECK(std::abs(after.stddev[ch] - 1.0) < 1e-9);
  }
  destandardize(s, st);
  for (std::size_t i = 0; i < s.vectors.size(); ++i)
    CHECK(std::abs(s.vectors[i] - orig.vectors[i]) < 1e-12);
}

TEST_CASE("standardize rejects mismatched stats") {
  SampleSet s = random_samples(10, 2, 1);
  ChannelStats st;
  st.mean = {0.0};
  st.stddev = {1.0};
  CHECK_THROWS_AS(standardize(s, st), DataError);
}

TEST_CASE("sample set round-trips through disk bit-exactly") {
  SampleSet s = random_samples(40, 2, 23);
  s.scene_names = {"alpha", "beta"};
  for (std::size_t i = 20; i < 40; ++i) s.provenance[i].scene = 1;
  s.stats = fit_stats(s);
  fs::path base = fs::temp_directory_path() / "fuselet_test_samples" / "set";
  save_sample_set(s, base);
  SampleSet back = load_sample_set(base);
  CHECK(back.vectors == s.vectors);
  CHECK(back.provenance == s.provenance);
  CHECK(back.scene_names == s.scene_names);
  REQUIRE(back.stats.has_value());
  CHECK(back.stats->mean == s.stats->mean);
  CHECK(back.stats->stddev == s.stats->stddev);
  CHECK(fs::exists(base.string() + ".json"));
}

TEST_CASE("sample set loader rejects foreign files") {
  fs::path base = fs::temp_directory_path() / "fuselet_test_samples" / "junk";
  atomic_write_file(base.string() + ".bin", "NOPE and then some");
  CHECK_THROWS_AS(load_sample_set(base), DataError);
}

// ---- k-means ----

TEST_CASE("kmeans with k=1 finds the mean") {
  Rng rng(5);
  std::size_t n = 257, dim = 4;
  std::vector<double> data(n * dim);
  for (auto& v : data) v = rng.uniform(-2.0, 9.0);
  StratificationModel m = kmeans_fit(data, n, dim, 1, 50, 99);
  for (std::size_t d = 0; d < dim; ++d) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += data[i * dim + d];
    mean /= static_cast<double>(n);
    CHECK(std::abs(m.centroids[d] - mean) < 1e-12);
  }
}

TEST_CASE("kmeans inertia never increases") {
  Rng rng(31);
  std::size_t n = 400, dim = 5;
  std::vector<double> data(n * dim);
  for (auto& v : data) v = rng.normal();
  StratificationModel m = kmeans_fit(data, n, dim, 7, 60, 123);
  REQUIRE(m.inertia_log.size() >= 2);
  for (std::size_t i = 1; i < m.inertia_log.size(); ++i)
    CHECK(m.inertia_log[i] <= m.inertia_log[i - 1] + 1e-9);
}

TEST_CASE("kmeans recovers well-separated blobs") {
  Rng rng(7);
  std::vector<std::pair<double, double>> centers = {{0, 0}, {10, 0}, {0, 10}};
  std::vector<double> data;
  std::vector<std::size_t> truth;
  for (std::size_t b = 0; b < 3; ++b)
    for (int i = 0; i < 60; ++i) {
      data.push_back(centers[b].first + 0.4 * rng.normal());
      data.push_back(centers[b].second + 0.4 * rng.normal());
      truth.push_back(b);
    }
  StratificationModel m = kmeans_fit(data, truth.size(), 2, 3, 100, 55);
  std::vector<std::size_t> assign = assign_clusters(m, data, truth.size());
  // same-blob points always share a cluster, different blobs never do
  for (std::size_t i = 0; i < truth.size(); ++i)
    for (std::size_t j = i + 1; j < truth.size(); ++j)
      REQUIRE((assign[i] == assign[j]) == (truth[i] == truth[j]));
  // each centroid sits near one true center
  for (std::size_t j = 0; j < 3; ++j) {
    double best = 1e18;
    for (auto [cx, cy] : centers) {
      double dx = m.centroids[j * 2] - cx, dy = m.centroids[j * 2 + 1] - cy;
      best = std::min(best, std::sqrt(dx * dx + dy * dy));
    }
    CHECK(best < 0.5);
  }
}

TEST_CASE("kmeans survives more clusters than distinct points") {
  // two distinct values, three clusters: one cluster is empty every pass
  std::vector<double> data;
  for (int i = 0; i < 12; ++i) data.push_back(i < 6 ? 0.0 : 5.0);
  StratificationModel m = kmeans_fit(data, 12, 1, 3, 30, 9);
  CHECK(m.inertia_log.back() == 0.0);
  for (std::size_t i = 1; i < m.inertia_log.size(); ++i)
    CHECK(m.inertia_log[i] <= m.inertia_log[i - 1] + 1e-9);
}

TEST_CASE("cluster assignment breaks ties toward the lowest index") {
  StratificationModel m;
  m.k = 3;
  m.dim = 1;
  m.centroids = {2.0, 2.0, 2.0};
  std::vector<double> data = {1.0, 2.0, 3.0};
  auto assign = assign_clusters(m, data, 3);
  CHECK(assign == std::vector<std::size_t>{0, 0, 0});
}

TEST_CASE("kmeans input validation") {
  std::vector<double> data = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(kmeans_fit(data, 3, 1, 4, 10, 1), DataError);  // k > n
  CHECK_THROWS_AS(kmeans_fit(data, 3, 1, 0, 10, 1), DataError);
  CHECK_THROWS_AS(kmeans_fit(data, 2, 2, 1, 10, 1), DataError);  // size mismatch
}

// ---- largest-remainder quotas ----

TEST_CASE("largest remainder on hand-worked fixtures") {
  using detail::largest_remainder;
  // sizes {5,3,2}, 7 of 10: exact shares {3.5, 2.1, 1.4} -> {4,2,1}
  CHECK(largest_remainder({5, 3, 2}, 7) == std::vector<std::uint64_t>{4, 2, 1});
  // remainder tie between strata 0 and 1 resolves to the lower index
  CHECK(largest_remainder({1, 1, 2}, 2) == std::vector<std::uint64_t>{1, 0, 1});
  CHECK(largest_remainder({0, 4}, 3) == std::vector<std::uint64_t>{0, 3});
  CHECK(largest_remainder({2, 2}, 0) == std::vector<std::uint64_t>{0, 0});
  // quotas always sum to the request
  Rng rng(77);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::uint64_t> w(1 + rng.integer(8));
    std::uint64_t W = 0;
    for (auto& x : w) {
      x = rng.integer(1000);
      W += x;
    }
    if (W == 0) continue;
    std::uint64_t total = rng.integer(W + 1);
    auto q = largest_remainder(w, total);
    std::uint64_t sum = 0;
    for (std::size_t s = 0; s < q.size(); ++s) {
      sum += q[s];
      CHECK(q[s] <= w[s]);  // proportional quotas never exceed the weight
    }
    CHECK(sum == total);
  }
}

TEST_CASE("capped quotas spill excess into remaining capacity") {
  using detail::capped_quotas;
  // plain largest remainder would give {6,6}; cap 3 forces {3,9}
  CHECK(capped_quotas({10, 10}, {3, 100}, 12) ==
        std::vector<std::uint64_t>{3, 9});
  CHECK_THROWS_AS(capped_quotas({5, 5}, {2, 2}, 10), DataError);
}

TEST_CASE("stratified pick honors quotas, order and determinism") {
  // strata: 0 -> 600 members, 1 -> 300, 2 -> 100
  std::vector<std::size_t> strata;
  for (int i = 0; i < 1000; ++i)
    strata.push_back(i < 600 ? 0 : (i < 900 ? 1 : 2));

  SECTION("asking for everything returns the identity") {
    auto all = stratified_pick(strata, 3, 1000, 42);
    REQUIRE(all.size() == 1000);
    for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
    auto more = stratified_pick(strata, 3, 5000, 42);
    CHECK(more.size() == 1000);
  }
  SECTION("quota counts match largest remainder exactly") {
    auto picked = stratified_pick(strata, 3, 100, 42);
    REQUIRE(picked.size() == 100);
    std::vector<std::size_t> per(3, 0);
    for (std::size_t i : picked) ++per[strata[i]];
    CHECK(per == std::vector<std::size_t>{60, 30, 10});
    CHECK(std::is_sorted(picked.begin(), picked.end()));
    CHECK(std::adjacent_find(picked.begin(), picked.end()) == picked.end());
  }
  SECTION("same seed, same pick; the pick is a uniform subset") {
    auto a = stratified_pick(strata, 3, 100, 42);
    auto b = stratified_pick(strata, 3, 100, 42);
    CHECK(a == b);
    auto c = stratified_pick(strata, 3, 100, 43);
    CHECK(a != c);
  }
}

TEST_CASE("stratified_sample keeps blob proportions") {
  Rng rng(70);
  SampleSet s;
  s.n_channels = 1;  // dim 9
  s.scene_names = {"x"};
  auto add_blob = [&](double center, int count) {
    for (int i = 0; i < count; ++i) {
      for (int k = 0; k < 9; ++k) s.vectors.push_back(center + 0.05 * rng.normal());
      s.provenance.push_back({0, 1, 1});
    }
  };
  add_blob(0.0, 600);
  add_blob(20.0, 300);
  add_blob(-40.0, 100);
  StratificationModel m = kmeans_fit(s.vectors, s.size(), s.dim(), 3, 50, 8);
  SampleSet picked = stratified_sample(s, m, 100, 21);
  REQUIRE(picked.size() == 100);
  // counts by nearest blob center
  std::size_t c0 = 0, c1 = 0, c2 = 0;
  for (std::size_t i = 0; i < picked.size(); ++i) {
    double v = picked.vec(i)[0];
    if (std::abs(v) < 5) ++c0;
    else if (std::abs(v - 20) < 5) ++c1;
    else ++c2;
  }
  CHECK(c0 == 60);
  CHECK(c1 == 30);
  CHECK(c2 == 10);
}
