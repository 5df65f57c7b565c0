#pragma once

// Affine-softmax clustering heads trained to maximize the mutual information
// between the cluster assignments of a sample and a noise-perturbed copy of
// it.  The loss is the negative mutual information of the batch joint
// distribution; gradients are analytic through the joint assembly, the
// symmetrization, the log clamp and the softmax.
//
// Replayable RNG contract for train_head (one stream, consumed in order):
//   1. n_in*C standard normals scaled by 0.1 initialize the weights
//      (row-major over [input][class]); biases start at zero.
//   2. per epoch: one Fisher-Yates shuffle of the sample-index array, then
//      per batch B*dim standard normals scaled by noise_sigma, row-major
//      over (sample-in-batch, coordinate), build the perturbed view.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fuselet/common.hpp"

namespace fuselet {

struct ClusterHead {
  std::size_t n_in = 0;
  std::size_t n_classes = 0;
  std::vector<double> weights;  // [n_in][n_classes] row-major
  std::vector<double> bias;     // [n_classes]

  void check_consistent() const {
    if (n_in == 0 || n_classes == 0 || weights.size() != n_in * n_classes ||
        bias.size() != n_classes)
      throw DataError("cluster head: inconsistent shapes");
    if (!all_finite(weights) || !all_finite(bias))
      throw DataError("cluster head: non-finite parameters");
  }
};

// softmax(z.W + bias) with max-subtraction; one row
inline std::vector<double> head_forward(const ClusterHead& head,
                                        const double* z) {
  const std::size_t D = head.n_in, C = head.n_classes;
  std::vector<double> logits(head.bias);
  for (std::size_t d = 0; d < D; ++d) {
    const double zd = z[d];
    const double* wrow = head.weights.data() + d * C;
    for (std::size_t k = 0; k < C; ++k) logits[k] += zd * wrow[k];
  }
  double mx = logits[0];
  for (double l : logits) mx = std::max(mx, l);
  double sum = 0.0;
  for (double& l : logits) {
    l = std::exp(l - mx);
    sum += l;
  }
  for (double& l : logits) l /= sum;
  return logits;
}

inline std::vector<double> head_forward_batch(const ClusterHead& head,
                                              const double* z,
                                              std::size_t n_rows) {
  std::vector<double> out(n_rows * head.n_classes);
  for (std::size_t r = 0; r < n_rows; ++r) {
    auto p = head_forward(head, z + r * head.n_in);
    std::copy(p.begin(), p.end(), out.begin() + r * head.n_classes);
  }
  return out;
}

namespace detail {

constexpr double kJointClamp = 1e-9;

// symmetrized batch joint Q = ((1/B) sum_b pa_b (x) pb_b + transpose) / 2
inline std::vector<double> assemble_joint(const double* pa, const double* pb,
                                          std::size_t B, std::size_t C) {
  std::vector<double> p(C * C, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < C; ++i) {
      const double w = pa[b * C + i] / static_cast<double>(B);
      for (std::size_t j = 0; j < C; ++j) p[i * C + j] += w * pb[b * C + j];
    }
  std::vector<double> q(C * C);
  for (std::size_t i = 0; i < C; ++i)
    for (std::size_t j = 0; j < C; ++j)
      q[i * C + j] = 0.5 * (p[i * C + j] + p[j * C + i]);
  return q;
}

// loss = -sum_ij Q_ij (ln max(Q_ij,eps) - ln max(r_i,eps) - ln max(c_j,eps));
// exact-zero entries contribute exactly zero, so one-hot batches hit the
// closed form -ln C to rounding.
inline double loss_from_joint(const std::vector<double>& q, std::size_t C,
                              std::vector<double>& row_sums,
                              std::vector<double>& col_sums) {
  row_sums.assign(C, 0.0);
  col_sums.assign(C, 0.0);
  for (std::size_t i = 0; i < C; ++i)
    for (std::size_t j = 0; j < C; ++j) {
      row_sums[i] += q[i * C + j];
      col_sums[j] += q[i * C + j];
    }
  double loss = 0.0;
  for (std::size_t i = 0; i < C; ++i)
    for (std::size_t j = 0; j < C; ++j) {
      const double qij = q[i * C + j];
      loss -= qij * (std::log(std::max(qij, kJointClamp)) -
                     std::log(std::max(row_sums[i], kJointClamp)) -
                     std::log(std::max(col_sums[j], kJointClamp)));
    }
  return loss;
}

inline void validate_prob_rows(const double* p, std::size_t B, std::size_t C,
                               const char* what) {
  for (std::size_t b = 0; b < B; ++b) {
    double s = 0.0;
    for (std::size_t k = 0; k < C; ++k) {
      if (p[b * C + k] < -1e-9)
        throw DataError(std::string(what) + ": negative probability in row " +
                        std::to_string(b));
      s += p[b * C + k];
    }
    if (std::abs(s - 1.0) > 1e-6)
      throw DataError(std::string(what) + ": row " + std::to_string(b) +
                      " sums to " + std::to_string(s) + ", expected 1");
  }
}

}  // namespace detail

struct IicLossResult {
  double loss = 0.0;
  std::vector<double> joint;  // symmetrized [C][C]
};

inline IicLossResult iic_loss(const std::vector<double>& probs_a,
                              const std::vector<double>& probs_b,
                              std::size_t B, std::size_t C) {
  if (B == 0 || C == 0 || probs_a.size() != B * C || probs_b.size() != B * C)
    throw DataError("iic_loss: shape mismatch");
  detail::validate_prob_rows(probs_a.data(), B, C, "iic_loss probs_a");
  detail::validate_prob_rows(probs_b.data(), B, C, "iic_loss probs_b");
  IicLossResult out;
  out.joint = detail::assemble_joint(probs_a.data(), probs_b.data(), B, C);
  std::vector<double> r, c;
  out.loss = detail::loss_from_joint(out.joint, C, r, c);
  return out;
}

struct HeadGradient {
  double loss = 0.0;
  std::vector<double> g_weights;  // same shape as head.weights
  std::vector<double> g_bias;
};

// loss and analytic parameter gradient for a shared head applied to both
// views za and zb (each [B][n_in] row-major)
inline HeadGradient iic_head_grad(const ClusterHead& head,
                                  const std::vector<double>& za,
                                  const std::vector<double>& zb,
                                  std::size_t B) {
  const std::size_t D = head.n_in, C = head.n_classes;
  if (za.size() != B * D || zb.size() != B * D || B == 0)
    throw DataError("iic_head_grad: shape mismatch");
  const std::vector<double> pa = head_forward_batch(head, za.data(), B);
  const std::vector<double> pb = head_forward_batch(head, zb.data(), B);
  const std::vector<double> q = detail::assemble_joint(pa.data(), pb.data(), B, C);

  std::vector<double> r, c;
  HeadGradient out;
  out.loss = detail::loss_from_joint(q, C, r, c);

  // dL/dQ, with clamped entries receiving no gradient through their own log
  std::vector<double> gq(C * C);
  const double eps = detail::kJointClamp;
  for (std::size_t i = 0; i < C; ++i)
    for (std::size_t j = 0; j < C; ++j) {
      const double qij = q[i * C + j];
      double g = -(std::log(std::max(qij, eps)) -
                   std::log(std::max(r[i], eps)) -
                   std::log(std::max(c[j], eps)));
      if (qij >= eps) g -= 1.0;
      if (r[i] >= eps) g += 1.0;
      if (c[j] >= eps) g += 1.0;
      gq[i * C + j] = g;
    }
  // back through symmetrization: P fed Q as (P + P^T)/2
  std::vector<double> gp(C * C);
  for (std::size_t i = 0; i < C; ++i)
    for (std::size_t j = 0; j < C; ++j)
      gp[i * C + j] = 0.5 * (gq[i * C + j] + gq[j * C + i]);

  // back through the outer-product average into each probability row
  const double inv_b = 1.0 / static_cast<double>(B);
  std::vector<double> dpa(B * C, 0.0), dpb(B * C, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < C; ++i) {
      double acc_a = 0.0;
      for (std::size_t j = 0; j < C; ++j)
        acc_a += gp[i * C + j] * pb[b * C + j];
      dpa[b * C + i] = inv_b * acc_a;
      double acc_b = 0.0;
      for (std::size_t j = 0; j < C; ++j)
        acc_b += gp[j * C + i] * pa[b * C + j];
      dpb[b * C + i] = inv_b * acc_b;
    }

  // softmax jacobian, then accumulate the shared affine parameters
  auto softmax_back = [&](const std::vector<double>& p,
                          const std::vector<double>& dp) {
    std::vector<double> dl(B * C);
    for (std::size_t b = 0; b < B; ++b) {
      double dot = 0.0;
      for (std::size_t k = 0; k < C; ++k)
        dot += dp[b * C + k] * p[b * C + k];
      for (std::size_t k = 0; k < C; ++k)
        dl[b * C + k] = p[b * C + k] * (dp[b * C + k] - dot);
    }
    return dl;
  };
  const std::vector<double> dla = softmax_back(pa, dpa);
  const std::vector<double> dlb = softmax_back(pb, dpb);

  out.g_weights.assign(D * C, 0.0);
  out.g_bias.assign(C, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t d = 0; d < D; ++d) {
      const double za_bd = za[b * D + d], zb_bd = zb[b * D + d];
      double* grow = out.g_weights.data() + d * C;
      for (std::size_t k = 0; k < C; ++k)
        grow[k] += za_bd * dla[b * C + k] + zb_bd * dlb[b * C + k];
    }
    for (std::size_t k = 0; k < C; ++k)
      out.g_bias[k] += dla[b * C + k] + dlb[b * C + k];
  }
  return out;
}

struct HeadTrainConfig {
  std::size_t n_classes = 0;
  std::size_t epochs = 10;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;
};

struct TrainedHead {
  ClusterHead head;
  std::vector<double> epoch_loss;  // batch-size-weighted mean per epoch
};

inline TrainedHead train_head(const std::vector<double>& embeddings,
                              std::size_t n, std::size_t dim,
                              const HeadTrainConfig& cfg) {
  if (cfg.n_classes == 0) throw ConfigError("train_head: n_classes must be > 0");
  if (cfg.batch_size == 0) throw ConfigError("train_head: batch_size must be > 0");
  if (cfg.noise_sigma < 0)
    throw ConfigError("train_head: noise_sigma must be >= 0");
  if (n < 2) throw DataError("train_head: need at least 2 samples");
  if (embeddings.size() != n * dim)
    throw DataError("train_head: embedding buffer size mismatch");

  const std::size_t D = dim, C = cfg.n_classes;
  Rng rng(cfg.seed);
  TrainedHead out;
  out.head.n_in = D;
  out.head.n_classes = C;
  out.head.weights.resize(D * C);
  for (double& w : out.head.weights) w = rng.normal(0.0, 0.1);
  out.head.bias.assign(C, 0.0);

  // Adam moments, bias-corrected, step count shared by weights and biases
  std::vector<double> mw(D * C, 0.0), vw(D * C, 0.0), mb(C, 0.0), vb(C, 0.0);
  const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;
  std::uint64_t t = 0;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<double> za, zb;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t B = std::min(cfg.batch_size, n - start);
      za.resize(B * D);
      zb.resize(B * D);
      for (std::size_t r = 0; r < B; ++r) {
        const double* src = embeddings.data() + order[start + r] * D;
        std::copy(src, src + D, za.begin() + r * D);
      }
      for (std::size_t tix = 0; tix < B * D; ++tix)
        zb[tix] = za[tix] + cfg.noise_sigma * rng.normal();

      HeadGradient g = iic_head_grad(out.head, za, zb, B);
      if (!std::isfinite(g.loss))
        throw NumericError("train_head: non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch offset " +
                           std::to_string(start));
      loss_sum += g.loss * static_cast<double>(B);
      seen += B;

      ++t;
      const double corr1 = 1.0 - std::pow(b1, static_cast<double>(t));
      const double corr2 = 1.0 - std::pow(b2, static_cast<double>(t));
      for (std::size_t k = 0; k < D * C; ++k) {
        mw[k] = b1 * mw[k] + (1.0 - b1) * g.g_weights[k];
        vw[k] = b2 * vw[k] + (1.0 - b2) * g.g_weights[k] * g.g_weights[k];
        out.head.weights[k] -=
            cfg.learning_rate * (mw[k] / corr1) / (std::sqrt(vw[k] / corr2) + adam_eps);
      }
      for (std::size_t k = 0; k < C; ++k) {
        mb[k] = b1 * mb[k] + (1.0 - b1) * g.g_bias[k];
        vb[k] = b2 * vb[k] + (1.0 - b2) * g.g_bias[k] * g.g_bias[k];
        out.head.bias[k] -=
            cfg.learning_rate * (mb[k] / corr1) / (std::sqrt(vb[k] / corr2) + adam_eps);
      }
    }
    out.epoch_loss.push_back(loss_sum / static_cast<double>(seen));
  }
  out.head.check_consistent();
  return out;
}

}  // namespace fuselet
