#pragma once
// Greedy layer-wise deep belief network: a gaussian-visible first layer
// followed by bernoulli layers, each trained by contrastive divergence on the
// mean-field output of the stack below. Embedding = deterministic mean-field
// forward pass through every layer.

#include <filesystem>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "fuselet/rbm.hpp"

namespace fuselet {

struct DbnModel {
  std::vector<RbmLayer> layers;
  std::vector<std::vector<double>> recon_log;  // per layer, per epoch mean MSE

  std::size_t input_dim() const {
    return layers.empty() ? 0 : layers.front().n_visible;
  }
  std::size_t embedding_dim() const {
    return layers.empty() ? 0 : layers.back().n_hidden;
  }

  void check_consistent() const {
    if (layers.empty()) throw DataError("DbnModel: no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].check_consistent();
      if (l > 0 && layers[l].n_visible != layers[l - 1].n_hidden)
        throw DataError("DbnModel: layer dimension chain broken at layer " +
                        std::to_string(l));
      if (l > 0 && layers[l].kind != RbmKind::BernoulliVisible)
        throw DataError("DbnModel: layers above the first must be bernoulli");
    }
  }
};

namespace detail {

inline RbmLayer init_layer(RbmKind kind, std::size_t V, std::size_t H, Rng& rng) {
  RbmLayer layer;
  layer.kind = kind;
  layer.n_visible = V;
  layer.n_hidden = H;
  layer.W.resize(V * H);
  for (double& w : layer.W) w = rng.normal(0.0, 0.01);
  layer.b.assign(V, 0.0);
  layer.c.assign(H, 0.0);
  return layer;
}

}  // namespace detail

// Trains the stack greedily. `data` is [n][dim] (standardized vectors for the
// gaussian first layer). Layer l is seeded from cfg.seed + l so retraining a
// prefix of the stack reproduces it.
inline DbnModel train_dbn(const std::vector<double>& data, std::size_t n,
                          std::size_t dim, const std::vector<std::size_t>& layer_dims,
                          const CdConfig& cfg) {
  if (n == 0 || dim == 0) throw DataError("train_dbn: empty data");
  if (data.size() != n * dim) throw DataError("train_dbn: buffer size mismatch");
  if (layer_dims.empty()) throw ConfigError("train_dbn: no layer dims");
  if (cfg.epochs < 1) throw ConfigError("train_dbn: epochs must be >= 1");
  if (cfg.batch_size == 0) throw ConfigError("train_dbn: batch_size must be >= 1");

  DbnModel model;
  std::vector<double> input = data;
  std::size_t in_dim = dim;

  for (std::size_t l = 0; l < layer_dims.size(); ++l) {
    Rng rng(cfg.seed + l);
    RbmKind kind = l == 0 ? RbmKind::GaussianVisible : RbmKind::BernoulliVisible;
    RbmLayer layer = detail::init_layer(kind, in_dim, layer_dims[l], rng);
    CdState state = CdState::zeros(layer);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::vector<double> batch(cfg.batch_size * in_dim);
    std::vector<double> epoch_errors;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      rng.shuffle(order);
      double err_sum = 0.0;
      std::size_t n_batches = 0;
      for (std::size_t off = 0; off < n; off += cfg.batch_size) {
        std::size_t B = std::min(cfg.batch_size, n - off);
        for (std::size_t r = 0; r < B; ++r)
          std::copy(input.begin() + order[off + r] * in_dim,
                    input.begin() + (order[off + r] + 1) * in_dim,
                    batch.begin() + r * in_dim);
        err_sum += cd_update(layer, batch.data(), B, cfg, rng, state);
        ++n_batches;
      }
      epoch_errors.push_back(err_sum / static_cast<double>(n_batches));
    }

    model.recon_log.push_back(std::move(epoch_errors));
    // mean-field activations feed the next layer
    input = hidden_activation(layer, input.data(), n);
    in_dim = layer.n_hidden;
    model.layers.push_back(std::move(layer));
  }
  model.check_consistent();
  return model;
}

// Deterministic embedding: successive hidden activation probabilities, no
// sampling anywhere. Output [n][embedding_dim]. Thread-count independent
// (rows are written disjointly).
inline std::vector<double> embed(const DbnModel& model,
                                 const std::vector<double>& data, std::size_t n,
                                 int threads = 1) {
  model.check_consistent();
  if (n == 0) return {};
  if (data.size() != n * model.input_dim())
    throw DataError("embed: buffer size mismatch (expect dim " +
                    std::to_string(model.input_dim()) + ")");
  std::vector<double> out(n * model.embedding_dim());
  parallel_for(n, threads, [&](std::size_t i0, std::size_t i1) {
    std::size_t chunk = i1 - i0;
    std::vector<double> cur(data.begin() + i0 * model.input_dim(),
                            data.begin() + i1 * model.input_dim());
    for (const RbmLayer& layer : model.layers)
      cur = hidden_activation(layer, cur.data(), chunk);
    std::copy(cur.begin(), cur.end(),
              out.begin() + i0 * model.embedding_dim());
  });
  return out;
}

// ---- persistence: versioned binary container + JSON sidecar ----

inline void save_dbn(const DbnModel& model, const std::filesystem::path& base,
                     const nlohmann::json& config_info = nlohmann::json::object()) {
  model.check_consistent();
  std::ostringstream os(std::ios::binary);
  os.write("FDBN", 4);
  write_u32_le(os, 1);  // container version
  write_u32_le(os, static_cast<std::uint32_t>(model.layers.size()));
  for (const RbmLayer& layer : model.layers) {
    write_u32_le(os, static_cast<std::uint32_t>(layer.kind));
    write_u64_le(os, layer.n_visible);
    write_u64_le(os, layer.n_hidden);
    for (double w : layer.W) write_f64_le(os, w);
    for (double v : layer.b) write_f64_le(os, v);
    for (double v : layer.c) write_f64_le(os, v);
  }
  atomic_write_file(base.string() + ".bin", os.str());

  nlohmann::json side = {
      {"format", "fuselet dbn encoder"},
      {"input_dim", model.input_dim()},
      {"embedding_dim", model.embedding_dim()},
      {"reconstruction_error", model.recon_log},
  };
  nlohmann::json dims = nlohmann::json::array();
  for (const RbmLayer& layer : model.layers) dims.push_back(layer.n_hidden);
  side["layer_dims"] = dims;
  if (!config_info.empty()) side["config"] = config_info;
  atomic_write_file(base.string() + ".json", side.dump(2) + "\n");
}

inline DbnModel load_dbn(const std::filesystem::path& base) {
  std::ifstream is(base.string() + ".bin", std::ios::binary);
  if (!is) throw DataError("cannot open encoder model: " + base.string() + ".bin");
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "FDBN")
    throw DataError("bad encoder model magic: " + base.string());
  std::uint32_t version = read_u32_le(is);
  if (version != 1)
    throw DataError("unsupported encoder model version " + std::to_string(version));
  DbnModel model;
  std::uint32_t n_layers = read_u32_le(is);
  for (std::uint32_t l = 0; l < n_layers; ++l) {
    RbmLayer layer;
    std::uint32_t kind = read_u32_le(is);
    if (kind > 1) throw DataError("bad layer kind in encoder model");
    layer.kind = static_cast<RbmKind>(kind);
    layer.n_visible = read_u64_le(is);
    layer.n_hidden = read_u64_le(is);
    if (layer.n_visible == 0 || layer.n_hidden == 0 ||
        layer.n_visible > (1u << 24) || layer.n_hidden > (1u << 24))
      throw DataError("implausible layer dimensions in encoder model");
    layer.W.resize(layer.n_visible * layer.n_hidden);
    for (double& w : layer.W) w = read_f64_le(is);
    layer.b.resize(layer.n_visible);
    for (double& v : layer.b) v = read_f64_le(is);
    layer.c.resize(layer.n_hidden);
    for (double& v : layer.c) v = read_f64_le(is);
    model.layers.push_back(std::move(layer));
  }
  model.check_consistent();
  return model;
}

}  // namespace fuselet
