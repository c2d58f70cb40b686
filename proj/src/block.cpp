#include "block.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>

#include "blasops.hpp"
#include "digest.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace bn {

namespace {

constexpr char kMagic[4] = {'B', 'N', 'B', 'M'};
constexpr uint16_t kFormatVersion = 1;

// Lateral caches for full datasets can get large; above this budget the
// trainer recomputes base activations per batch instead.
constexpr size_t kMaxLateralCacheBytes = size_t(1500) * 1024 * 1024;

void activate_inplace(Activation act, double* v, size_t n) {
  if (act == Activation::rectifier) {
    for (size_t i = 0; i < n; ++i) v[i] = v[i] > 0.0 ? v[i] : 0.0;
  } else {
    for (size_t i = 0; i < n; ++i) v[i] = 1.0 / (1.0 + std::exp(-v[i]));
  }
}

void add_bias_rows(double* m, int n, int width, const std::vector<double>& bias) {
  for (int row = 0; row < n; ++row) {
    double* p = m + static_cast<size_t>(row) * width;
    for (int j = 0; j < width; ++j) p[j] += bias[j];
  }
}

/// First two hidden activations of a frozen base for a raw batch.
void compute_base_acts(const Network& base, const double* batch, int n,
                       std::vector<double>& a1, std::vector<double>& a2) {
  const DenseLayer& l0 = base.layers[0];
  const DenseLayer& l1 = base.layers[1];
  a1.resize(static_cast<size_t>(n) * l0.output_width);
  a2.resize(static_cast<size_t>(n) * l1.output_width);
  gemm_nt(n, l0.output_width, l0.input_width, batch, l0.weights.data(), a1.data());
  add_bias_rows(a1.data(), n, l0.output_width, l0.biases);
  activate_inplace(l0.activation, a1.data(), a1.size());
  gemm_nt(n, l1.output_width, l1.input_width, a1.data(), l1.weights.data(), a2.data());
  add_bias_rows(a2.data(), n, l1.output_width, l1.biases);
  activate_inplace(l1.activation, a2.data(), a2.size());
}

void fill_base_acts(const BlockNetwork& bnet, const double* batch, int n,
                    BlockCache& cache) {
  const size_t m = bnet.bases.size();
  cache.base_act1.resize(m);
  cache.base_act2.resize(m);
  for (size_t k = 0; k < m; ++k) {
    compute_base_acts(bnet.bases[k], batch, n, cache.base_act1[k],
                      cache.base_act2[k]);
  }
}

void gather_base_acts(const LateralCache& lat, const int* rows, int n,
                      BlockCache& cache) {
  const size_t m = lat.act1.size();
  cache.base_act1.resize(m);
  cache.base_act2.resize(m);
  for (size_t k = 0; k < m; ++k) {
    const int w1 = static_cast<int>(lat.act1[k].size() / lat.n);
    const int w2 = static_cast<int>(lat.act2[k].size() / lat.n);
    cache.base_act1[k].resize(static_cast<size_t>(n) * w1);
    cache.base_act2[k].resize(static_cast<size_t>(n) * w2);
    for (int i = 0; i < n; ++i) {
      std::memcpy(cache.base_act1[k].data() + static_cast<size_t>(i) * w1,
                  lat.act1[k].data() + static_cast<size_t>(rows[i]) * w1,
                  sizeof(double) * w1);
      std::memcpy(cache.base_act2[k].data() + static_cast<size_t>(i) * w2,
                  lat.act2[k].data() + static_cast<size_t>(rows[i]) * w2,
                  sizeof(double) * w2);
    }
  }
}

/// Runs the block layers and output unit, assuming cache.base_act1/2 are
/// filled. `raw_batch` is required when the depth-1 block layer exists.
std::vector<double> forward_from_base_acts(const BlockNetwork& bnet,
                                           const double* raw_batch, int n,
                                           BlockCache& cache) {
  const size_t num_block = bnet.block_layers.size();
  cache.batch = n;
  cache.raw_batch = raw_batch;
  cache.input.resize(num_block);
  cache.pre.resize(num_block);
  cache.act.resize(num_block);

  const double* prev_act = nullptr;
  for (size_t idx = 0; idx < num_block; ++idx) {
    const DenseLayer& layer = bnet.block_layers[idx];
    const int depth = bnet.block_depths[idx];
    const double* input = nullptr;
    if (depth == 1) {
      cache.input[idx].clear();
      input = raw_batch;
    } else {
      const LateralLayout lay = lateral_layout(bnet, depth);
      auto& in = cache.input[idx];
      in.resize(static_cast<size_t>(n) * lay.total);
      for (int row = 0; row < n; ++row) {
        double* dst = in.data() + static_cast<size_t>(row) * lay.total;
        if (lay.block_width > 0) {
          std::memcpy(dst, prev_act + static_cast<size_t>(row) * lay.block_width,
                      sizeof(double) * lay.block_width);
        }
        for (size_t k = 0; k < bnet.bases.size(); ++k) {
          const auto& src = depth == 2 ? cache.base_act1[k] : cache.base_act2[k];
          const int w = lay.base_widths[k];
          std::memcpy(dst + lay.base_offsets[k],
                      src.data() + static_cast<size_t>(row) * w, sizeof(double) * w);
        }
      }
      input = in.data();
    }

    auto& pre = cache.pre[idx];
    auto& act = cache.act[idx];
    pre.resize(static_cast<size_t>(n) * layer.output_width);
    act.resize(pre.size());
    gemm_nt(n, layer.output_width, layer.input_width, input, layer.weights.data(),
            pre.data());
    add_bias_rows(pre.data(), n, layer.output_width, layer.biases);
    std::memcpy(act.data(), pre.data(), sizeof(double) * pre.size());
    activate_inplace(layer.activation, act.data(), act.size());
    prev_act = act.data();
  }

  const DenseLayer& out = bnet.output;
  cache.out_pre.resize(n);
  cache.out_act.resize(n);
  gemm_nt(n, 1, out.input_width, cache.act.back().data(), out.weights.data(),
          cache.out_pre.data());
  for (int i = 0; i < n; ++i) cache.out_pre[i] += out.biases[0];
  for (int i = 0; i < n; ++i) {
    cache.out_act[i] = 1.0 / (1.0 + std::exp(-cache.out_pre[i]));
  }
  return cache.out_act;
}

DenseLayer init_dense(int in, int out, Activation act, Xoshiro256ss& rng) {
  DenseLayer layer;
  layer.input_width = in;
  layer.output_width = out;
  layer.activation = act;
  const double bound = std::sqrt(6.0 / (in + out));
  layer.weights.resize(static_cast<size_t>(out) * in);
  for (double& w : layer.weights) w = rng.uniform(-bound, bound);
  layer.biases.assign(out, 0.0);
  return layer;
}

std::vector<DenseLayer*> trainable_layers(BlockNetwork& bnet) {
  std::vector<DenseLayer*> out;
  for (auto& l : bnet.block_layers) out.push_back(&l);
  out.push_back(&bnet.output);
  return out;
}

void block_sgd_step(BlockNetwork& bnet, const Gradients& grads, Velocity& vel,
                    double lr, double momentum) {
  const auto layers = trainable_layers(bnet);
  for (size_t l = 0; l < layers.size(); ++l) {
    auto& layer = *layers[l];
    const auto& gw = grads.weights[l];
    const auto& gb = grads.biases[l];
    auto& vw = vel.weights[l];
    auto& vb = vel.biases[l];
    for (size_t i = 0; i < gw.size(); ++i) {
      vw[i] = momentum * vw[i] - lr * gw[i];
      layer.weights[i] += vw[i];
    }
    for (size_t i = 0; i < gb.size(); ++i) {
      vb[i] = momentum * vb[i] - lr * gb[i];
      layer.biases[i] += vb[i];
    }
  }
}

void append_u16v(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void append_u32v(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void append_u64v(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

}  // namespace

std::string BlockSpec::name() const {
  return "BA-" + std::to_string(h1) + "-" + std::to_string(h2) + "-" +
         std::to_string(h3);
}

LateralLayout lateral_layout(const BlockNetwork& bnet, int depth) {
  if (depth != 2 && depth != 3) {
    fail(ErrorCode::invalid_argument, "lateral_layout: depth must be 2 or 3");
  }
  LateralLayout lay;
  lay.block_width = depth == 2 ? std::max(bnet.spec.h1, 0)
                               : std::max(bnet.spec.h2, 0);
  int offset = lay.block_width;
  for (const Network& base : bnet.bases) {
    const int w = base.layers[depth - 2].output_width;
    lay.base_offsets.push_back(offset);
    lay.base_widths.push_back(w);
    offset += w;
  }
  lay.total = offset;
  return lay;
}

BlockNetwork compose(const std::vector<Network>& bases, const BlockSpec& spec,
                     uint64_t seed) {
  if (bases.empty()) {
    fail(ErrorCode::invalid_argument, "compose: at least one base model is required");
  }
  if (spec.h3 < 1) {
    fail(ErrorCode::invalid_argument,
         "compose: h3 must be >= 1 (the output unit attaches to block layer 3)");
  }
  if (spec.h1 < 0 || spec.h2 < 0) {
    fail(ErrorCode::invalid_argument, "compose: negative block widths");
  }
  const int input_width = bases.front().input_width;
  for (const Network& base : bases) {
    if (base.input_width != input_width) {
      fail(ErrorCode::invalid_argument, "compose: base input widths differ");
    }
    if (base.layers.size() < 3) {
      fail(ErrorCode::invalid_argument,
           "compose: base models need at least two hidden layers");
    }
  }

  BlockNetwork bnet;
  bnet.input_width = input_width;
  bnet.spec = spec;
  bnet.bases = bases;
  for (Network& base : bnet.bases) {
    for (DenseLayer& layer : base.layers) layer.frozen = true;
  }

  int lateral1 = 0, lateral2 = 0;
  for (const Network& base : bnet.bases) {
    lateral1 += base.layers[0].output_width;
    lateral2 += base.layers[1].output_width;
  }

  Xoshiro256ss rng(seed);
  if (spec.h1 > 0) {
    bnet.block_layers.push_back(
        init_dense(input_width, spec.h1, Activation::rectifier, rng));
    bnet.block_depths.push_back(1);
  }
  if (spec.h2 > 0) {
    const int in = (spec.h1 > 0 ? spec.h1 : 0) + lateral1;
    bnet.block_layers.push_back(init_dense(in, spec.h2, Activation::rectifier, rng));
    bnet.block_depths.push_back(2);
  }
  {
    const int in = (spec.h2 > 0 ? spec.h2 : 0) + lateral2;
    bnet.block_layers.push_back(init_dense(in, spec.h3, Activation::rectifier, rng));
    bnet.block_depths.push_back(3);
  }
  bnet.output = init_dense(spec.h3, 1, Activation::sigmoid, rng);
  return bnet;
}

long long block_param_count(const BlockSpec& spec, int num_bases,
                            const std::array<int, 3>& base_widths,
                            int input_width) {
  if (spec.h3 < 1 || num_bases < 1) {
    fail(ErrorCode::invalid_argument, "block_param_count: invalid spec");
  }
  long long total = 0;
  if (spec.h1 > 0) {
    total += static_cast<long long>(spec.h1) * (input_width + 1);
  }
  if (spec.h2 > 0) {
    const long long in = (spec.h1 > 0 ? spec.h1 : 0) +
                         static_cast<long long>(num_bases) * base_widths[0];
    total += spec.h2 * (in + 1);
  }
  {
    const long long in = (spec.h2 > 0 ? spec.h2 : 0) +
                         static_cast<long long>(num_bases) * base_widths[1];
    total += spec.h3 * (in + 1);
  }
  total += spec.h3 + 1;  // output unit
  return total;
}

long long block_param_count(const BlockNetwork& bnet) {
  long long total = 0;
  for (const DenseLayer& layer : bnet.block_layers) {
    total += static_cast<long long>(layer.output_width) * (layer.input_width + 1);
  }
  total += static_cast<long long>(bnet.output.output_width) *
           (bnet.output.input_width + 1);
  return total;
}

std::vector<double> forward_block(const BlockNetwork& bnet, const double* batch,
                                  int n, BlockCache* cache) {
  BlockCache local;
  BlockCache& c = cache ? *cache : local;
  fill_base_acts(bnet, batch, n, c);
  return forward_from_base_acts(bnet, batch, n, c);
}

Gradients backward_block(const BlockNetwork& bnet, const BlockCache& cache,
                         const uint8_t* labels) {
  const int n = cache.batch;
  const size_t num_block = bnet.block_layers.size();
  if (cache.act.size() != num_block || n <= 0) {
    fail(ErrorCode::invalid_argument, "backward_block: stale or mismatched cache");
  }

  Gradients grads;
  grads.weights.resize(num_block + 1);
  grads.biases.resize(num_block + 1);

  // Output unit as in backward(): delta = (p - y) / n.
  std::vector<double> delta_out(n);
  for (int i = 0; i < n; ++i) {
    delta_out[i] = (cache.out_act[i] - static_cast<double>(labels[i])) / n;
  }
  const auto& top_act = cache.act.back();
  auto& gw_out = grads.weights[num_block];
  auto& gb_out = grads.biases[num_block];
  gw_out.resize(bnet.output.weights.size());
  gb_out.assign(1, 0.0);
  gemm_tn(1, bnet.output.input_width, n, delta_out.data(), top_act.data(),
          gw_out.data());
  for (int i = 0; i < n; ++i) gb_out[0] += delta_out[i];

  // Delta entering the top block layer.
  std::vector<double> delta(static_cast<size_t>(n) * bnet.output.input_width);
  gemm_nn(n, bnet.output.input_width, 1, delta_out.data(),
          bnet.output.weights.data(), delta.data());

  std::vector<double> delta_prev;
  for (size_t idx = num_block; idx-- > 0;) {
    const DenseLayer& layer = bnet.block_layers[idx];
    // Rectifier derivative on this layer's pre-activations.
    const auto& pre = cache.pre[idx];
    for (size_t i = 0; i < delta.size(); ++i) {
      if (pre[i] <= 0.0) delta[i] = 0.0;
    }

    const double* input =
        bnet.block_depths[idx] == 1 ? cache.raw_batch : cache.input[idx].data();
    auto& gw = grads.weights[idx];
    auto& gb = grads.biases[idx];
    gw.resize(layer.weights.size());
    gb.assign(layer.output_width, 0.0);
    gemm_tn(layer.output_width, layer.input_width, n, delta.data(), input,
            gw.data());
    for (int row = 0; row < n; ++row) {
      const double* drow = delta.data() + static_cast<size_t>(row) * layer.output_width;
      for (int j = 0; j < layer.output_width; ++j) gb[j] += drow[j];
    }

    if (idx == 0) break;
    const int depth = bnet.block_depths[idx];
    const LateralLayout lay = lateral_layout(bnet, depth);
    const bool wired = lay.block_width > 0 &&
                       bnet.block_depths[idx - 1] == depth - 1;
    if (!wired) {
      // No gradient path into earlier block layers (removed middle layer);
      // their parameters receive zero gradients.
      for (size_t j = 0; j < idx; ++j) {
        grads.weights[j].assign(bnet.block_layers[j].weights.size(), 0.0);
        grads.biases[j].assign(bnet.block_layers[j].biases.size(), 0.0);
      }
      break;
    }
    delta_prev.resize(static_cast<size_t>(n) * lay.block_width);
    gemm_nn_sub(n, lay.block_width, layer.output_width, delta.data(),
                layer.weights.data(), layer.input_width, delta_prev.data());
    delta.swap(delta_prev);
  }
  return grads;
}

LateralCache build_lateral_cache(const BlockNetwork& bnet, const DataView& data) {
  LateralCache lat;
  lat.n = data.n;
  lat.act1.resize(bnet.bases.size());
  lat.act2.resize(bnet.bases.size());
  for (size_t k = 0; k < bnet.bases.size(); ++k) {
    lat.act1[k].resize(static_cast<size_t>(data.n) *
                       bnet.bases[k].layers[0].output_width);
    lat.act2[k].resize(static_cast<size_t>(data.n) *
                       bnet.bases[k].layers[1].output_width);
  }

  constexpr int kChunk = 1024;
  std::vector<double> raw;
  std::vector<double> a1, a2;
  for (int start = 0; start < data.n; start += kChunk) {
    const int count = std::min(kChunk, data.n - start);
    raw.resize(static_cast<size_t>(count) * data.width);
    for (int i = 0; i < count; ++i) {
      data.fill_row(start + i, raw.data() + static_cast<size_t>(i) * data.width);
    }
    for (size_t k = 0; k < bnet.bases.size(); ++k) {
      compute_base_acts(bnet.bases[k], raw.data(), count, a1, a2);
      const int w1 = bnet.bases[k].layers[0].output_width;
      const int w2 = bnet.bases[k].layers[1].output_width;
      std::memcpy(lat.act1[k].data() + static_cast<size_t>(start) * w1, a1.data(),
                  sizeof(double) * a1.size());
      std::memcpy(lat.act2[k].data() + static_cast<size_t>(start) * w2, a2.data(),
                  sizeof(double) * a2.size());
    }
  }
  return lat;
}

TrainResult train_block(BlockNetwork& bnet, const DataView& data,
                        const TrainConfig& config,
                        const LateralCache* shared_lat) {
  if (data.n < 2) {
    fail(ErrorCode::invalid_argument, "train_block: need at least 2 examples");
  }
  if (shared_lat && shared_lat->n != data.n) {
    fail(ErrorCode::invalid_argument,
         "train_block: shared lateral cache does not match the dataset");
  }
  const int n_val = std::max(
      1, static_cast<int>(std::lround(data.n * config.validation_fraction)));
  const int n_train = data.n - n_val;
  if (n_train < 1) {
    fail(ErrorCode::invalid_argument,
         "train_block: validation fraction leaves no train data");
  }

  size_t lateral_bytes = 0;
  for (const Network& base : bnet.bases) {
    lateral_bytes += sizeof(double) * static_cast<size_t>(data.n) *
                     (base.layers[0].output_width + base.layers[1].output_width);
  }
  const bool use_cache =
      shared_lat != nullptr || lateral_bytes <= kMaxLateralCacheBytes;
  LateralCache local_lat;
  if (use_cache && !shared_lat) local_lat = build_lateral_cache(bnet, data);
  const LateralCache& lat = shared_lat ? *shared_lat : local_lat;

  Xoshiro256ss shuffle_rng(config.seed);
  std::vector<int> order(n_train);
  for (int i = 0; i < n_train; ++i) order[i] = i;

  const auto layers = trainable_layers(bnet);
  Velocity vel;
  vel.weights.resize(layers.size());
  vel.biases.resize(layers.size());
  for (size_t l = 0; l < layers.size(); ++l) {
    vel.weights[l].assign(layers[l]->weights.size(), 0.0);
    vel.biases[l].assign(layers[l]->biases.size(), 0.0);
  }

  const bool needs_raw = bnet.block_depths.front() == 1;
  const int bs = std::min(config.batch_size, n_train);
  std::vector<double> raw_batch;
  std::vector<uint8_t> batch_labels(bs);
  std::vector<int> batch_rows(bs);
  BlockCache cache;

  const auto eval_rows = [&](int begin, int count) {
    // Validation through the same cached path used for training batches.
    constexpr int kChunk = 512;
    std::vector<double> raw;
    std::vector<int> rows;
    BlockCache c;
    int wrong = 0;
    for (int start = 0; start < count; start += kChunk) {
      const int cn = std::min(kChunk, count - start);
      rows.resize(cn);
      for (int i = 0; i < cn; ++i) rows[i] = begin + start + i;
      if (needs_raw || !use_cache) {
        raw.resize(static_cast<size_t>(cn) * data.width);
        for (int i = 0; i < cn; ++i) {
          data.fill_row(rows[i], raw.data() + static_cast<size_t>(i) * data.width);
        }
      }
      if (use_cache) {
        gather_base_acts(lat, rows.data(), cn, c);
      } else {
        fill_base_acts(bnet, raw.data(), cn, c);
      }
      const auto probs =
          forward_from_base_acts(bnet, raw.empty() ? nullptr : raw.data(), cn, c);
      for (int i = 0; i < cn; ++i) {
        const int predicted = probs[i] >= 0.5 ? 1 : 0;
        if (predicted != data.labels[rows[i]]) ++wrong;
      }
    }
    return 100.0 * wrong / static_cast<double>(count);
  };

  TrainResult result;
  double lr = config.learning_rate;
  double best = std::numeric_limits<double>::infinity();
  std::vector<DenseLayer> best_params;
  int streak = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (int i = n_train - 1; i > 0; --i) {
      const int j = static_cast<int>(
          shuffle_rng.next_below(static_cast<uint64_t>(i) + 1));
      std::swap(order[i], order[j]);
    }

    double loss_sum = 0.0;
    for (int start = 0; start < n_train; start += bs) {
      const int count = std::min(bs, n_train - start);
      for (int k = 0; k < count; ++k) {
        batch_rows[k] = order[start + k];
        batch_labels[k] = data.labels[batch_rows[k]];
      }
      if (needs_raw || !use_cache) {
        raw_batch.resize(static_cast<size_t>(count) * data.width);
        for (int k = 0; k < count; ++k) {
          data.fill_row(batch_rows[k],
                        raw_batch.data() + static_cast<size_t>(k) * data.width);
        }
      }
      if (use_cache) {
        gather_base_acts(lat, batch_rows.data(), count, cache);
      } else {
        fill_base_acts(bnet, raw_batch.data(), count, cache);
      }
      const auto probs = forward_from_base_acts(
          bnet, raw_batch.empty() ? nullptr : raw_batch.data(), count, cache);
      loss_sum += mean_bce_loss(probs, batch_labels.data()) * count;
      const Gradients grads = backward_block(bnet, cache, batch_labels.data());
      block_sgd_step(bnet, grads, vel, lr, config.momentum);
    }
    const double train_loss = loss_sum / n_train;
    if (!std::isfinite(train_loss)) {
      fail(ErrorCode::diverged,
           "train_block: non-finite loss at epoch " + std::to_string(epoch));
    }

    const double val_err = eval_rows(n_train, n_val);
    result.log.push_back({epoch, train_loss, val_err, lr});

    if (val_err < best) {
      best = val_err;
      result.best_epoch = epoch;
      best_params.clear();
      for (const auto* l : layers) best_params.push_back(*l);
      streak = 0;
    } else {
      ++streak;
      if (streak % 5 == 0) lr *= 0.5;
      if (streak > config.patience) break;
    }
  }

  if (!best_params.empty()) {
    for (size_t l = 0; l < layers.size(); ++l) *layers[l] = best_params[l];
  }
  result.best_val_error_pct = best;
  return result;
}

double evaluate_block(const BlockNetwork& bnet, const DataView& data,
                      const LateralCache* lat) {
  if (data.n < 1) {
    fail(ErrorCode::invalid_argument, "evaluate_block: empty dataset");
  }
  if (lat && lat->n != data.n) {
    fail(ErrorCode::invalid_argument,
         "evaluate_block: lateral cache does not match the dataset");
  }
  const bool needs_raw = lat == nullptr || bnet.block_depths.front() == 1;
  constexpr int kChunk = 512;
  std::vector<double> raw;
  std::vector<int> rows;
  BlockCache cache;
  int wrong = 0;
  for (int start = 0; start < data.n; start += kChunk) {
    const int count = std::min(kChunk, data.n - start);
    if (needs_raw) {
      raw.resize(static_cast<size_t>(count) * data.width);
      for (int i = 0; i < count; ++i) {
        data.fill_row(start + i, raw.data() + static_cast<size_t>(i) * data.width);
      }
    }
    if (lat) {
      rows.resize(count);
      for (int i = 0; i < count; ++i) rows[i] = start + i;
      gather_base_acts(*lat, rows.data(), count, cache);
    } else {
      fill_base_acts(bnet, raw.data(), count, cache);
    }
    const auto probs = forward_from_base_acts(
        bnet, needs_raw ? raw.data() : nullptr, count, cache);
    for (int i = 0; i < count; ++i) {
      const int predicted = probs[i] >= 0.5 ? 1 : 0;
      if (predicted != data.labels[start + i]) ++wrong;
    }
  }
  return 100.0 * wrong / static_cast<double>(data.n);
}

void save_block_model(const BlockNetwork& bnet,
                      const std::vector<std::string>& base_paths,
                      const std::string& path) {
  if (base_paths.size() != bnet.bases.size()) {
    fail(ErrorCode::invalid_argument,
         "save_block_model: one path per base model is required");
  }
  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  append_u16v(out, kFormatVersion);
  append_u32v(out, static_cast<uint32_t>(bnet.spec.h1));
  append_u32v(out, static_cast<uint32_t>(bnet.spec.h2));
  append_u32v(out, static_cast<uint32_t>(bnet.spec.h3));
  out.push_back(static_cast<uint8_t>(bnet.bases.size()));
  for (size_t k = 0; k < bnet.bases.size(); ++k) {
    const std::string& p = base_paths[k];
    append_u16v(out, static_cast<uint16_t>(p.size()));
    out.insert(out.end(), p.begin(), p.end());
    append_u64v(out, params_digest(bnet.bases[k].layers));
  }
  std::vector<DenseLayer> trainable = bnet.block_layers;
  trainable.push_back(bnet.output);
  out.push_back(static_cast<uint8_t>(trainable.size()));
  append_layers_bytes(out, trainable);

  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) fail(ErrorCode::io, "save_block_model: cannot open " + path);
  const size_t written = std::fwrite(out.data(), 1, out.size(), f);
  std::fclose(f);
  if (written != out.size()) {
    fail(ErrorCode::io, "save_block_model: write failed for " + path);
  }
}

BlockNetwork load_block_model(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) fail(ErrorCode::io, "load_block_model: cannot open " + path);
  std::vector<uint8_t> bytes;
  uint8_t buf[65536];
  size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof(buf), f)) > 0) {
    bytes.insert(bytes.end(), buf, buf + got);
  }
  std::fclose(f);

  size_t pos = 0;
  const auto need = [&](size_t n) {
    if (pos + n > bytes.size()) {
      fail(ErrorCode::truncated, "load_block_model: truncated file");
    }
  };
  need(4);
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail(ErrorCode::bad_magic, "load_block_model: bad magic");
  }
  pos = 4;
  need(2);
  const uint16_t version =
      static_cast<uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
  pos += 2;
  if (version != kFormatVersion) {
    fail(ErrorCode::bad_version, "load_block_model: unsupported version");
  }
  const auto read_u32 = [&] {
    need(4);
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes[pos + i];
    pos += 4;
    return v;
  };
  const auto read_u64 = [&] {
    need(8);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[pos + i];
    pos += 8;
    return v;
  };
  BlockSpec spec;
  spec.h1 = static_cast<int>(read_u32());
  spec.h2 = static_cast<int>(read_u32());
  spec.h3 = static_cast<int>(read_u32());
  need(1);
  const int m = bytes[pos++];

  const std::filesystem::path dir = std::filesystem::path(path).parent_path();
  std::vector<Network> bases;
  std::vector<uint64_t> digests;
  for (int k = 0; k < m; ++k) {
    need(2);
    const uint16_t len = static_cast<uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
    pos += 2;
    need(len);
    std::string base_path(bytes.begin() + pos, bytes.begin() + pos + len);
    pos += len;
    digests.push_back(read_u64());
    std::filesystem::path bp(base_path);
    if (bp.is_relative()) bp = dir / bp;
    bases.push_back(load_model(bp.string()));
    if (params_digest(bases.back().layers) != digests.back()) {
      fail(ErrorCode::digest_mismatch,
           "load_block_model: base model " + bp.string() +
               " does not match the digest recorded at save time");
    }
  }

  need(1);
  const int layer_count = bytes[pos++];
  std::vector<DenseLayer> trainable = read_layers_bytes(bytes, &pos, layer_count);
  if (trainable.empty()) {
    fail(ErrorCode::truncated, "load_block_model: missing block layers");
  }

  BlockNetwork bnet;
  bnet.spec = spec;
  bnet.bases = std::move(bases);
  for (Network& base : bnet.bases) {
    for (DenseLayer& layer : base.layers) layer.frozen = true;
  }
  bnet.input_width = bnet.bases.front().input_width;
  bnet.output = trainable.back();
  trainable.pop_back();
  bnet.block_layers = std::move(trainable);
  if (spec.h1 > 0) bnet.block_depths.push_back(1);
  if (spec.h2 > 0) bnet.block_depths.push_back(2);
  bnet.block_depths.push_back(3);
  if (bnet.block_depths.size() != bnet.block_layers.size()) {
    fail(ErrorCode::truncated, "load_block_model: layer count does not match spec");
  }
  return bnet;
}

}  // namespace bn
