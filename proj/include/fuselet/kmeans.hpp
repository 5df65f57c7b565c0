#pragma once
// Lloyd k-means with k-means++ seeding, used to stratify the sample pool, and
// largest-remainder proportional sampling over the resulting strata.

#include <cstdint>
#include <limits>
#include <vector>

#include "fuselet/sampling.hpp"

namespace fuselet {

struct StratificationModel {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::vector<double> centroids;    // [k][dim]
  std::vector<double> inertia_log;  // inertia after each assignment pass
};

namespace detail {

inline double sq_dist(const double* a, const double* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    double t = a[d] - b[d];
    s += t * t;
  }
  return s;
}

// Nearest centroid index, ties to the lowest index.
inline std::size_t nearest_centroid(const double* v,
                                    const std::vector<double>& centroids,
                                    std::size_t k, std::size_t dim,
                                    double* dist_out = nullptr) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_j = 0;
  for (std::size_t j = 0; j < k; ++j) {
    double d = sq_dist(v, centroids.data() + j * dim, dim);
    if (d < best) {
      best = d;
      best_j = j;
    }
  }
  if (dist_out) *dist_out = best;
  return best_j;
}

}  // namespace detail

// k-means++ seeding: first centroid uniform, then each next with probability
// proportional to squared distance from the nearest already-chosen centroid.
inline std::vector<double> kmeans_plus_plus_init(const std::vector<double>& data,
                                                 std::size_t n, std::size_t dim,
                                                 std::size_t k, Rng& rng) {
  std::vector<double> centroids(k * dim);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = static_cast<std::size_t>(rng.integer(n));
  std::copy(data.begin() + first * dim, data.begin() + (first + 1) * dim,
            centroids.begin());
  for (std::size_t j = 1; j < k; ++j) {
    const double* prev = centroids.data() + (j - 1) * dim;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = detail::sq_dist(data.data() + i * dim, prev, dim);
      if (d < d2[i]) d2[i] = d;
      total += d2[i];
    }
    std::size_t pick;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(rng.integer(n));  // all points coincide
    }
    std::copy(data.begin() + pick * dim, data.begin() + (pick + 1) * dim,
              centroids.begin() + j * dim);
  }
  return centroids;
}

inline StratificationModel kmeans_fit(const std::vector<double>& data,
                                      std::size_t n, std::size_t dim,
                                      std::size_t k, int max_iter,
                                      std::uint64_t seed) {
  if (n == 0 || dim == 0) throw DataError("kmeans_fit: empty data");
  if (k == 0 || k > n)
    throw DataError("kmeans_fit: need 1 <= k <= n_samples, got k=" +
                    std::to_string(k) + ", n=" + std::to_string(n));
  if (data.size() != n * dim) throw DataError("kmeans_fit: buffer size mismatch");

  Rng rng(seed);
  StratificationModel model;
  model.k = k;
  model.dim = dim;
  model.centroids = kmeans_plus_plus_init(data, n, dim, k, rng);

  std::vector<std::size_t> assign(n, 0), prev_assign;
  std::vector<double> dist(n, 0.0);
  for (int iter = 0; iter < max_iter; ++iter) {
    // assignment pass + inertia
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      assign[i] = detail::nearest_centroid(data.data() + i * dim,
                                           model.centroids, k, dim, &dist[i]);
      inertia += dist[i];
    }
    if (!model.inertia_log.empty()) {
      double prev = model.inertia_log.back();
      if (inertia > prev + 1e-9 * std::max(1.0, prev))
        throw NumericError("kmeans_fit: inertia increased (" +
                           std::to_string(prev) + " -> " +
                           std::to_string(inertia) + ")");
    }
    model.inertia_log.push_back(inertia);
    if (iter > 0 && assign == prev_assign) break;
    prev_assign = assign;

    // update pass
    std::vector<double> sums(k * dim, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* v = data.data() + i * dim;
      double* sum = sums.data() + assign[i] * dim;
      for (std::size_t d = 0; d < dim; ++d) sum[d] += v[d];
      ++counts[assign[i]];
    }
    std::vector<std::uint8_t> used_for_reseed(n, 0);
    for (std::size_t j = 0; j < k; ++j) {
      if (counts[j] > 0) {
        for (std::size_t d = 0; d < dim; ++d)
          model.centroids[j * dim + d] =
              sums[j * dim + d] / static_cast<double>(counts[j]);
      } else {
        // empty cluster: re-seed on the worst-fit sample (largest distance to
        // its assigned centroid), lowest index on ties
        std::size_t worst = 0;
        double worst_d = -1.0;
        for (std::size_t i = 0; i < n; ++i)
          if (!used_for_reseed[i] && dist[i] > worst_d) {
            worst_d = dist[i];
            worst = i;
          }
        used_for_reseed[worst] = 1;
        std::copy(data.begin() + worst * dim, data.begin() + (worst + 1) * dim,
                  model.centroids.begin() + j * dim);
      }
    }
  }
  return model;
}

inline std::vector<std::size_t> assign_clusters(const StratificationModel& model,
                                                const std::vector<double>& data,
                                                std::size_t n) {
  if (data.size() != n * model.dim)
    throw DataError("assign_clusters: buffer size mismatch");
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = detail::nearest_centroid(data.data() + i * model.dim,
                                      model.centroids, model.k, model.dim);
  return out;
}

namespace detail {

// Integer largest-remainder apportionment: quotas proportional to `weights`
// summing exactly to `total`. Extra units go to the largest remainders,
// lowest index on ties. Exact 64-bit arithmetic throughout.
inline std::vector<std::uint64_t> largest_remainder(
    const std::vector<std::uint64_t>& weights, std::uint64_t total) {
  std::uint64_t W = 0;
  for (auto w : weights) W += w;
  std::vector<std::uint64_t> quota(weights.size(), 0);
  if (W == 0 || total == 0) return quota;
  std::vector<std::uint64_t> rem(weights.size(), 0);
  std::uint64_t assigned = 0;
  for (std::size_t s = 0; s < weights.size(); ++s) {
    unsigned __int128 prod =
        static_cast<unsigned __int128>(total) * weights[s];
    quota[s] = static_cast<std::uint64_t>(prod / W);
    rem[s] = static_cast<std::uint64_t>(prod % W);
    assigned += quota[s];
  }
  std::vector<std::size_t> order(weights.size());
  for (std::size_t s = 0; s < order.size(); ++s) order[s] = s;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rem[a] > rem[b];
  });
  for (std::size_t i = 0; assigned < total && i < order.size(); ++i) {
    ++quota[order[i]];
    ++assigned;
  }
  return quota;
}

// Largest-remainder quotas capped at per-stratum capacity; any capped excess
// is re-apportioned over the remaining capacity until it is placed.
inline std::vector<std::uint64_t> capped_quotas(
    const std::vector<std::uint64_t>& weights,
    const std::vector<std::uint64_t>& caps, std::uint64_t total) {
  std::vector<std::uint64_t> quota = largest_remainder(weights, total);
  for (;;) {
    std::uint64_t deficit = 0;
    for (std::size_t s = 0; s < quota.size(); ++s)
      if (quota[s] > caps[s]) {
        deficit += quota[s] - caps[s];
        quota[s] = caps[s];
      }
    if (deficit == 0) return quota;
    std::vector<std::uint64_t> spare(quota.size());
    std::uint64_t spare_total = 0;
    for (std::size_t s = 0; s < quota.size(); ++s) {
      spare[s] = caps[s] - quota[s];
      spare_total += spare[s];
    }
    if (spare_total < deficit)
      throw DataError("capped_quotas: total capacity below requested total");
    std::vector<std::uint64_t> extra = largest_remainder(spare, deficit);
    for (std::size_t s = 0; s < quota.size(); ++s) quota[s] += extra[s];
  }
}

}  // namespace detail

// Proportional stratified pick: per-stratum quotas by largest remainder, then
// uniform sampling without replacement inside each stratum. Returns selected
// indices in ascending order. Requesting at least the population returns
// every index (order-stable identity).
inline std::vector<std::size_t> stratified_pick(
    const std::vector<std::size_t>& strata, std::size_t n_strata,
    std::size_t n_total, std::uint64_t seed) {
  const std::size_t n = strata.size();
  if (n_total >= n) {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    return all;
  }
  std::vector<std::vector<std::size_t>> members(n_strata);
  for (std::size_t i = 0; i < n; ++i) {
    if (strata[i] >= n_strata)
      throw DataError("stratified_pick: stratum id out of range");
    members[strata[i]].push_back(i);
  }
  std::vector<std::uint64_t> sizes(n_strata), caps(n_strata);
  for (std::size_t s = 0; s < n_strata; ++s)
    sizes[s] = caps[s] = members[s].size();
  std::vector<std::uint64_t> quota =
      detail::capped_quotas(sizes, caps, n_total);

  Rng rng(seed);
  std::vector<std::size_t> picked;
  picked.reserve(n_total);
  for (std::size_t s = 0; s < n_strata; ++s) {
    std::vector<std::size_t>& m = members[s];
    std::size_t q = static_cast<std::size_t>(quota[s]);
    if (q == m.size()) {
      picked.insert(picked.end(), m.begin(), m.end());
      continue;
    }
    // partial Fisher-Yates: the first q entries become the sample
    for (std::size_t i = 0; i < q; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng.integer(m.size() - i));
      std::swap(m[i], m[j]);
    }
    picked.insert(picked.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(q));
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

// Convenience wrapper: k-means stratification + proportional pick.
inline SampleSet stratified_sample(const SampleSet& samples,
                                   const StratificationModel& model,
                                   std::size_t n_total, std::uint64_t seed) {
  samples.check_consistent();
  if (model.dim != samples.dim())
    throw DataError("stratified_sample: model/sample dim mismatch");
  std::vector<std::size_t> strata =
      assign_clusters(model, samples.vectors, samples.size());
  std::vector<std::size_t> picked =
      stratified_pick(strata, model.k, n_total, seed);
  if (picked.size() == samples.size()) return samples;
  return subset_samples(samples, picked);
}

}  // namespace fuselet
