#pragma once
// Restricted Boltzmann machine layers (unit-variance gaussian or bernoulli
// visible units, bernoulli hidden units) trained by contrastive divergence.
//
// The Gibbs sampling order inside cd_update is a documented contract so that
// an update can be replayed exactly from the same RNG stream: per step,
// hidden units are sampled row-major (one uniform draw per batch row and
// unit, set when u < p), then gaussian visible units are sampled row-major
// (one standard normal draw each, v = mean + z). Bernoulli visible layers
// feed the activation probabilities forward instead of sampling.

#include <cstdint>
#include <string>
#include <vector>

#include "fuselet/common.hpp"

namespace fuselet {

enum class RbmKind : std::uint32_t { GaussianVisible = 0, BernoulliVisible = 1 };

struct RbmLayer {
  RbmKind kind = RbmKind::GaussianVisible;
  std::size_t n_visible = 0;
  std::size_t n_hidden = 0;
  std::vector<double> W;  // [n_visible][n_hidden]
  std::vector<double> b;  // visible bias
  std::vector<double> c;  // hidden bias

  void check_consistent() const {
    if (n_visible == 0 || n_hidden == 0)
      throw DataError("RbmLayer: empty layer");
    if (W.size() != n_visible * n_hidden || b.size() != n_visible ||
        c.size() != n_hidden)
      throw DataError("RbmLayer: parameter buffer size mismatch");
  }
};

struct CdConfig {
  int gibbs_steps = 1;
  double learning_rate = 0.01;
  double momentum = 0.5;
  double weight_decay = 1e-4;
  std::size_t batch_size = 128;
  int epochs = 10;
  std::uint64_t seed = 0;
};

// Momentum carry-over between consecutive cd_update calls.
struct CdState {
  std::vector<double> dW, db, dc;

  static CdState zeros(const RbmLayer& layer) {
    return {std::vector<double>(layer.W.size(), 0.0),
            std::vector<double>(layer.b.size(), 0.0),
            std::vector<double>(layer.c.size(), 0.0)};
  }
};

namespace detail {

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) {
  // log(1 + e^x) without overflow on either tail
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

}  // namespace detail

// p(h=1 | v) for a batch: logistic(c + v W). Output [B][n_hidden].
inline std::vector<double> hidden_activation(const RbmLayer& layer,
                                             const double* v, std::size_t B) {
  layer.check_consistent();
  const std::size_t V = layer.n_visible, H = layer.n_hidden;
  std::vector<double> p(B * H);
  for (std::size_t r = 0; r < B; ++r) {
    double* row = p.data() + r * H;
    const double* vr = v + r * V;
    for (std::size_t j = 0; j < H; ++j) row[j] = layer.c[j];
    for (std::size_t i = 0; i < V; ++i) {
      double vi = vr[i];
      const double* w = layer.W.data() + i * H;
      for (std::size_t j = 0; j < H; ++j) row[j] += vi * w[j];
    }
    for (std::size_t j = 0; j < H; ++j) row[j] = detail::logistic(row[j]);
  }
  return p;
}

// Conditional visible mean given hidden values (probabilities or samples):
// gaussian layers return b + W h, bernoulli layers logistic(b + W h).
// Output [B][n_visible].
inline std::vector<double> visible_mean(const RbmLayer& layer, const double* h,
                                        std::size_t B) {
  layer.check_consistent();
  const std::size_t V = layer.n_visible, H = layer.n_hidden;
  std::vector<double> v(B * V);
  for (std::size_t r = 0; r < B; ++r) {
    double* row = v.data() + r * V;
    const double* hr = h + r * H;
    for (std::size_t i = 0; i < V; ++i) {
      double s = layer.b[i];
      const double* w = layer.W.data() + i * H;
      for (std::size_t j = 0; j < H; ++j) s += w[j] * hr[j];
      row[i] = layer.kind == RbmKind::GaussianVisible ? s : detail::logistic(s);
    }
  }
  return v;
}

// Free energy of one visible vector: hidden units sum out analytically.
//   gaussian:  0.5*||v-b||^2 - sum_j softplus(c_j + v . W_:j)
//   bernoulli: -b.v          - sum_j softplus(c_j + v . W_:j)
inline double free_energy(const RbmLayer& layer, const double* v) {
  layer.check_consistent();
  const std::size_t V = layer.n_visible, H = layer.n_hidden;
  double f = 0.0;
  if (layer.kind == RbmKind::GaussianVisible) {
    for (std::size_t i = 0; i < V; ++i) {
      double d = v[i] - layer.b[i];
      f += 0.5 * d * d;
    }
  } else {
    for (std::size_t i = 0; i < V; ++i) f -= layer.b[i] * v[i];
  }
  std::vector<double> act(layer.c);
  for (std::size_t i = 0; i < V; ++i) {
    double vi = v[i];
    const double* w = layer.W.data() + i * H;
    for (std::size_t j = 0; j < H; ++j) act[j] += vi * w[j];
  }
  for (std::size_t j = 0; j < H; ++j) f -= detail::softplus(act[j]);
  return f;
}

// One CD-k parameter update on a batch (rows of v0, shape [B][n_visible]).
// Positive statistics use p(h|v0); the negative phase runs k Gibbs steps in
// the documented sampling order. Returns the mean squared error between v0
// and its one-pass mean-field reconstruction. Updates, with decay on weights
// only:
//   delta = lr * gradient + momentum * previous_delta
inline double cd_update(RbmLayer& layer, const double* v0, std::size_t B,
                        const CdConfig& cfg, Rng& rng, CdState& state) {
  layer.check_consistent();
  if (B == 0) throw DataError("cd_update: empty batch");
  if (cfg.gibbs_steps < 1) throw ConfigError("cd_update: gibbs_steps must be >= 1");
  const std::size_t V = layer.n_visible, H = layer.n_hidden;

  std::vector<double> p0 = hidden_activation(layer, v0, B);

  // mean-field reconstruction error (no sampling involved)
  std::vector<double> recon = visible_mean(layer, p0.data(), B);
  double mse = 0.0;
  for (std::size_t t = 0; t < B * V; ++t) {
    double d = recon[t] - v0[t];
    mse += d * d;
  }
  mse /= static_cast<double>(B * V);

  // negative phase: alternate h ~ Bern(p), v <- sample/mean
  std::vector<double> p = p0;
  std::vector<double> h(B * H);
  std::vector<double> v(v0, v0 + B * V);
  for (int step = 0; step < cfg.gibbs_steps; ++step) {
    for (std::size_t t = 0; t < B * H; ++t)
      h[t] = rng.uniform() < p[t] ? 1.0 : 0.0;
    v = visible_mean(layer, h.data(), B);
    if (layer.kind == RbmKind::GaussianVisible)
      for (std::size_t t = 0; t < B * V; ++t) v[t] += rng.normal();
    p = hidden_activation(layer, v.data(), B);
  }

  // gradient estimates
  const double invB = 1.0 / static_cast<double>(B);
  std::vector<double> gW(V * H, 0.0);
  for (std::size_t r = 0; r < B; ++r) {
    const double* v0r = v0 + r * V;
    const double* p0r = p0.data() + r * H;
    const double* vr = v.data() + r * V;
    const double* pr = p.data() + r * H;
    for (std::size_t i = 0; i < V; ++i) {
      double a = v0r[i], bneg = vr[i];
      double* g = gW.data() + i * H;
      for (std::size_t j = 0; j < H; ++j) g[j] += a * p0r[j] - bneg * pr[j];
    }
  }
  for (std::size_t i = 0; i < V; ++i)
    for (std::size_t j = 0; j < H; ++j) {
      std::size_t t = i * H + j;
      double g = gW[t] * invB - cfg.weight_decay * layer.W[t];
      state.dW[t] = cfg.learning_rate * g + cfg.momentum * state.dW[t];
      layer.W[t] += state.dW[t];
    }
  for (std::size_t i = 0; i < V; ++i) {
    double g = 0.0;
    for (std::size_t r = 0; r < B; ++r) g += v0[r * V + i] - v[r * V + i];
    state.db[i] = cfg.learning_rate * g * invB + cfg.momentum * state.db[i];
    layer.b[i] += state.db[i];
  }
  for (std::size_t j = 0; j < H; ++j) {
    double g = 0.0;
    for (std::size_t r = 0; r < B; ++r) g += p0[r * H + j] - p[r * H + j];
    state.dc[j] = cfg.learning_rate * g * invB + cfg.momentum * state.dc[j];
    layer.c[j] += state.dc[j];
  }

  if (!std::isfinite(mse) || !all_finite(layer.W) || !all_finite(layer.b) ||
      !all_finite(layer.c))
    throw NumericError("cd_update: non-finite reconstruction error or parameters");
  return mse;
}

}  // namespace fuselet
