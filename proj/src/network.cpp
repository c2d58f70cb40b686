#include "network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>

#include "blasops.hpp"
#include "digest.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace bn {

namespace {

constexpr double kProbClamp = 1e-12;

constexpr char kMagic[4] = {'B', 'N', 'M', 'D'};
constexpr uint16_t kFormatVersion = 1;

void apply_activation(Activation act, const double* pre, double* out, size_t n) {
  if (act == Activation::rectifier) {
    for (size_t i = 0; i < n; ++i) out[i] = pre[i] > 0.0 ? pre[i] : 0.0;
  } else {
    for (size_t i = 0; i < n; ++i) out[i] = 1.0 / (1.0 + std::exp(-pre[i]));
  }
}

void check_chain(const std::vector<LayerSpec>& specs) {
  if (specs.empty()) {
    fail(ErrorCode::invalid_argument, "init_network: no layers");
  }
  for (const LayerSpec& s : specs) {
    if (s.input_width < 1 || s.output_width < 1) {
      fail(ErrorCode::invalid_argument, "init_network: layer widths must be >= 1");
    }
  }
  for (size_t i = 1; i < specs.size(); ++i) {
    if (specs[i].input_width != specs[i - 1].output_width) {
      fail(ErrorCode::invalid_argument,
           "init_network: layer " + std::to_string(i) + " input width " +
               std::to_string(specs[i].input_width) + " does not chain to " +
               std::to_string(specs[i - 1].output_width));
    }
  }
  if (specs.back().output_width != 1) {
    fail(ErrorCode::invalid_argument, "init_network: output layer must have width 1");
  }
}

void append_bytes(std::vector<uint8_t>& out, const void* data, size_t n) {
  const auto* p = static_cast<const uint8_t*>(data);
  out.insert(out.end(), p, p + n);
}

void append_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void append_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void append_f64(std::vector<uint8_t>& out, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(bits >> (8 * i)));
}

struct ByteReader {
  const std::vector<uint8_t>& bytes;
  size_t pos = 0;

  bool read(void* out, size_t n) {
    if (pos + n > bytes.size()) return false;
    std::memcpy(out, bytes.data() + pos, n);
    pos += n;
    return true;
  }
  bool read_u16(uint16_t* v) {
    uint8_t b[2];
    if (!read(b, 2)) return false;
    *v = static_cast<uint16_t>(b[0] | (b[1] << 8));
    return true;
  }
  bool read_u32(uint32_t* v) {
    uint8_t b[4];
    if (!read(b, 4)) return false;
    *v = 0;
    for (int i = 3; i >= 0; --i) *v = (*v << 8) | b[i];
    return true;
  }
  bool read_f64(double* d) {
    uint8_t b[8];
    if (!read(b, 8)) return false;
    uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | b[i];
    std::memcpy(d, &bits, 8);
    return true;
  }
};

}  // namespace

std::vector<LayerSpec> scratch_layer_specs(int input_width,
                                           const std::vector<int>& hidden_widths) {
  std::vector<LayerSpec> specs;
  int prev = input_width;
  for (int w : hidden_widths) {
    specs.push_back({prev, w, Activation::rectifier});
    prev = w;
  }
  specs.push_back({prev, 1, Activation::sigmoid});
  return specs;
}

Network init_network(const std::vector<LayerSpec>& specs, uint64_t seed) {
  check_chain(specs);
  Network net;
  net.input_width = specs.front().input_width;
  Xoshiro256ss rng(seed);
  for (const LayerSpec& s : specs) {
    DenseLayer layer;
    layer.input_width = s.input_width;
    layer.output_width = s.output_width;
    layer.activation = s.activation;
    const double bound = std::sqrt(6.0 / (s.input_width + s.output_width));
    layer.weights.resize(static_cast<size_t>(s.output_width) * s.input_width);
    for (double& w : layer.weights) w = rng.uniform(-bound, bound);
    layer.biases.assign(s.output_width, 0.0);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

std::vector<double> forward(const Network& net, const double* batch, int n,
                            ForwardCache* cache) {
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.batch = n;
  c.pre.resize(net.layers.size());
  c.act.resize(net.layers.size());

  const double* input = batch;
  for (size_t l = 0; l < net.layers.size(); ++l) {
    const DenseLayer& layer = net.layers[l];
    auto& pre = c.pre[l];
    auto& act = c.act[l];
    pre.resize(static_cast<size_t>(n) * layer.output_width);
    act.resize(pre.size());
    gemm_nt(n, layer.output_width, layer.input_width, input, layer.weights.data(),
            pre.data());
    for (int row = 0; row < n; ++row) {
      double* prow = pre.data() + static_cast<size_t>(row) * layer.output_width;
      for (int j = 0; j < layer.output_width; ++j) prow[j] += layer.biases[j];
    }
    apply_activation(layer.activation, pre.data(), act.data(), pre.size());
    input = act.data();
  }
  return c.act.back();
}

double bce_loss(double prob, int label) {
  const double p = std::clamp(prob, kProbClamp, 1.0 - kProbClamp);
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

double mean_bce_loss(const std::vector<double>& probs, const uint8_t* labels) {
  double sum = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) sum += bce_loss(probs[i], labels[i]);
  return sum / static_cast<double>(probs.size());
}

Gradients backward(const Network& net, const ForwardCache& cache,
                   const double* batch, const uint8_t* labels) {
  const int n = cache.batch;
  const size_t num_layers = net.layers.size();
  if (cache.act.size() != num_layers || n <= 0) {
    fail(ErrorCode::invalid_argument, "backward: stale or mismatched cache");
  }

  Gradients grads;
  grads.weights.resize(num_layers);
  grads.biases.resize(num_layers);

  // Output unit: sigmoid + cross-entropy gives delta = (p - y) / n.
  const auto& probs = cache.act.back();
  std::vector<double> delta(probs.size());
  for (int i = 0; i < n; ++i) {
    delta[i] = (probs[i] - static_cast<double>(labels[i])) / n;
  }

  std::vector<double> delta_prev;
  for (size_t l = num_layers; l-- > 0;) {
    const DenseLayer& layer = net.layers[l];
    const double* input =
        l == 0 ? batch : cache.act[l - 1].data();

    if (!layer.frozen) {
      auto& gw = grads.weights[l];
      auto& gb = grads.biases[l];
      gw.resize(layer.weights.size());
      gb.assign(layer.output_width, 0.0);
      gemm_tn(layer.output_width, layer.input_width, n, delta.data(), input,
              gw.data());
      for (int row = 0; row < n; ++row) {
        const double* drow = delta.data() + static_cast<size_t>(row) * layer.output_width;
        for (int j = 0; j < layer.output_width; ++j) gb[j] += drow[j];
      }
    }

    if (l == 0) break;
    const DenseLayer& below = net.layers[l - 1];
    delta_prev.resize(static_cast<size_t>(n) * layer.input_width);
    gemm_nn(n, layer.input_width, layer.output_width, delta.data(),
            layer.weights.data(), delta_prev.data());
    const auto& pre_below = cache.pre[l - 1];
    const auto& act_below = cache.act[l - 1];
    if (below.activation == Activation::rectifier) {
      for (size_t i = 0; i < delta_prev.size(); ++i) {
        if (pre_below[i] <= 0.0) delta_prev[i] = 0.0;
      }
    } else {
      for (size_t i = 0; i < delta_prev.size(); ++i) {
        delta_prev[i] *= act_below[i] * (1.0 - act_below[i]);
      }
    }
    delta.swap(delta_prev);
  }
  return grads;
}

Velocity make_velocity(const Network& net) {
  Velocity vel;
  vel.weights.resize(net.layers.size());
  vel.biases.resize(net.layers.size());
  for (size_t l = 0; l < net.layers.size(); ++l) {
    if (net.layers[l].frozen) continue;
    vel.weights[l].assign(net.layers[l].weights.size(), 0.0);
    vel.biases[l].assign(net.layers[l].biases.size(), 0.0);
  }
  return vel;
}

void sgd_step(Network& net, const Gradients& grads, Velocity& vel, double lr,
              double momentum) {
  if (grads.weights.size() != net.layers.size() ||
      vel.weights.size() != net.layers.size()) {
    fail(ErrorCode::invalid_argument, "sgd_step: gradient/velocity shape mismatch");
  }
  for (size_t l = 0; l < net.layers.size(); ++l) {
    DenseLayer& layer = net.layers[l];
    if (layer.frozen) continue;
    const auto& gw = grads.weights[l];
    const auto& gb = grads.biases[l];
    auto& vw = vel.weights[l];
    auto& vb = vel.biases[l];
    if (gw.size() != layer.weights.size() || gb.size() != layer.biases.size()) {
      fail(ErrorCode::invalid_argument, "sgd_step: gradient shape mismatch");
    }
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

void DataView::fill_row(int i, double* out) const {
  if (qpixels != nullptr) {
    const uint8_t* src = qpixels + static_cast<size_t>(i) * width;
    for (int j = 0; j < width; ++j) out[j] = src[j] / 255.0;
  } else {
    std::memcpy(out, dpixels + static_cast<size_t>(i) * width,
                sizeof(double) * width);
  }
}

DataView DataView::slice(int begin, int count) const {
  DataView v = *this;
  v.n = count;
  if (qpixels) v.qpixels = qpixels + static_cast<size_t>(begin) * width;
  if (dpixels) v.dpixels = dpixels + static_cast<size_t>(begin) * width;
  v.labels = labels + begin;
  return v;
}

DataView view(const Dataset& ds) {
  DataView v;
  v.n = ds.n();
  v.width = kPixelCount;
  v.qpixels = ds.pixels.data();
  v.labels = ds.labels.data();
  return v;
}

TrainResult train(Network& net, const DataView& data, const TrainConfig& config) {
  if (data.n < 2) {
    fail(ErrorCode::invalid_argument, "train: need at least 2 examples");
  }
  const int n_val = std::max(
      1, static_cast<int>(std::lround(data.n * config.validation_fraction)));
  const int n_train = data.n - n_val;
  if (n_train < 1) {
    fail(ErrorCode::invalid_argument, "train: validation fraction leaves no train data");
  }
  const DataView train_view = data.slice(0, n_train);
  const DataView val_view = data.slice(n_train, n_val);

  Xoshiro256ss shuffle_rng(config.seed);
  std::vector<int> order(n_train);
  for (int i = 0; i < n_train; ++i) order[i] = i;

  Velocity vel = make_velocity(net);
  const int bs = std::min(config.batch_size, n_train);
  std::vector<double> batch(static_cast<size_t>(bs) * data.width);
  std::vector<uint8_t> batch_labels(bs);
  ForwardCache cache;

  TrainResult result;
  double lr = config.learning_rate;
  double best = std::numeric_limits<double>::infinity();
  std::vector<DenseLayer> best_layers;
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
        const int idx = order[start + k];
        train_view.fill_row(idx, batch.data() + static_cast<size_t>(k) * data.width);
        batch_labels[k] = train_view.labels[idx];
      }
      const std::vector<double> probs = forward(net, batch.data(), count, &cache);
      loss_sum += mean_bce_loss(probs, batch_labels.data()) * count;
      const Gradients grads = backward(net, cache, batch.data(), batch_labels.data());
      sgd_step(net, grads, vel, lr, config.momentum);
    }
    const double train_loss = loss_sum / n_train;
    if (!std::isfinite(train_loss)) {
      fail(ErrorCode::diverged,
           "train: non-finite loss at epoch " + std::to_string(epoch));
    }

    const double val_err = evaluate(net, val_view);
    result.log.push_back({epoch, train_loss, val_err, lr});

    if (val_err < best) {
      best = val_err;
      result.best_epoch = epoch;
      best_layers = net.layers;
      streak = 0;
    } else {
      ++streak;
      if (streak % 5 == 0) lr *= 0.5;
      if (streak > config.patience) break;
    }
  }

  if (!best_layers.empty()) net.layers = best_layers;
  result.best_val_error_pct = best;
  return result;
}

double evaluate(const Network& net, const DataView& data) {
  if (data.n < 1) {
    fail(ErrorCode::invalid_argument, "evaluate: empty dataset");
  }
  constexpr int kChunk = 512;
  std::vector<double> batch;
  int wrong = 0;
  for (int start = 0; start < data.n; start += kChunk) {
    const int count = std::min(kChunk, data.n - start);
    batch.resize(static_cast<size_t>(count) * data.width);
    for (int k = 0; k < count; ++k) {
      data.fill_row(start + k, batch.data() + static_cast<size_t>(k) * data.width);
    }
    const std::vector<double> probs = forward(net, batch.data(), count);
    for (int k = 0; k < count; ++k) {
      const int predicted = probs[k] >= 0.5 ? 1 : 0;
      if (predicted != data.labels[start + k]) ++wrong;
    }
  }
  return 100.0 * wrong / static_cast<double>(data.n);
}

long long param_count(const Network& net) {
  long long total = 0;
  for (const DenseLayer& layer : net.layers) {
    total += static_cast<long long>(layer.output_width) * (layer.input_width + 1);
  }
  return total;
}

void append_layers_bytes(std::vector<uint8_t>& out,
                         const std::vector<DenseLayer>& layers) {
  for (const DenseLayer& layer : layers) {
    append_u32(out, static_cast<uint32_t>(layer.input_width));
    append_u32(out, static_cast<uint32_t>(layer.output_width));
    out.push_back(static_cast<uint8_t>(layer.activation));
    out.push_back(layer.frozen ? 1 : 0);
    for (double w : layer.weights) append_f64(out, w);
    for (double b : layer.biases) append_f64(out, b);
  }
}

std::vector<DenseLayer> read_layers_bytes(const std::vector<uint8_t>& bytes,
                                          size_t* pos, int count) {
  ByteReader r{bytes, *pos};
  std::vector<DenseLayer> layers;
  for (int l = 0; l < count; ++l) {
    DenseLayer layer;
    uint32_t in = 0, out = 0;
    uint8_t act = 0, frozen = 0;
    if (!r.read_u32(&in) || !r.read_u32(&out) || !r.read(&act, 1) ||
        !r.read(&frozen, 1)) {
      fail(ErrorCode::truncated, "model: truncated layer header");
    }
    if (act > 1) fail(ErrorCode::bad_version, "model: unknown activation code");
    layer.input_width = static_cast<int>(in);
    layer.output_width = static_cast<int>(out);
    layer.activation = static_cast<Activation>(act);
    layer.frozen = frozen != 0;
    layer.weights.resize(static_cast<size_t>(in) * out);
    layer.biases.resize(out);
    for (double& w : layer.weights) {
      if (!r.read_f64(&w)) fail(ErrorCode::truncated, "model: truncated weights");
    }
    for (double& b : layer.biases) {
      if (!r.read_f64(&b)) fail(ErrorCode::truncated, "model: truncated biases");
    }
    layers.push_back(std::move(layer));
  }
  *pos = r.pos;
  return layers;
}

uint64_t params_digest(const std::vector<DenseLayer>& layers) {
  std::vector<uint8_t> buf;
  for (const DenseLayer& layer : layers) {
    append_u32(buf, static_cast<uint32_t>(layer.input_width));
    append_u32(buf, static_cast<uint32_t>(layer.output_width));
    buf.push_back(static_cast<uint8_t>(layer.activation));
    for (double w : layer.weights) append_f64(buf, w);
    for (double b : layer.biases) append_f64(buf, b);
  }
  return fnv1a64(buf);
}

std::vector<uint8_t> serialize_model(const Network& net) {
  std::vector<uint8_t> out;
  append_bytes(out, kMagic, 4);
  append_u16(out, kFormatVersion);
  out.push_back(static_cast<uint8_t>(net.layers.size()));
  append_layers_bytes(out, net.layers);
  return out;
}

Network deserialize_model(const std::vector<uint8_t>& bytes) {
  ByteReader r{bytes};
  char magic[4];
  if (!r.read(magic, 4)) fail(ErrorCode::truncated, "model: shorter than header");
  if (std::memcmp(magic, kMagic, 4) != 0) fail(ErrorCode::bad_magic, "model: bad magic");
  uint16_t version = 0;
  if (!r.read_u16(&version)) fail(ErrorCode::truncated, "model: shorter than header");
  if (version != kFormatVersion) {
    fail(ErrorCode::bad_version,
         "model: unsupported format version " + std::to_string(version));
  }
  uint8_t layer_count = 0;
  if (!r.read(&layer_count, 1)) fail(ErrorCode::truncated, "model: shorter than header");

  Network net;
  size_t pos = r.pos;
  net.layers = read_layers_bytes(bytes, &pos, layer_count);
  net.input_width = net.layers.empty() ? 0 : net.layers.front().input_width;
  return net;
}

void save_model(const Network& net, const std::string& path) {
  const std::vector<uint8_t> bytes = serialize_model(net);
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) fail(ErrorCode::io, "save_model: cannot open " + path);
  const size_t written = std::fwrite(bytes.data(), 1, bytes.size(), f);
  std::fclose(f);
  if (written != bytes.size()) fail(ErrorCode::io, "save_model: write failed for " + path);
}

Network load_model(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) fail(ErrorCode::io, "load_model: cannot open " + path);
  std::vector<uint8_t> bytes;
  uint8_t buf[65536];
  size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof(buf), f)) > 0) {
    bytes.insert(bytes.end(), buf, buf + got);
  }
  std::fclose(f);
  return deserialize_model(bytes);
}

void write_train_log_csv(const TrainResult& result, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) fail(ErrorCode::io, "write_train_log_csv: cannot open " + path);
  std::fprintf(f, "epoch,train_loss,val_error_pct,lr\n");
  for (const EpochLog& row : result.log) {
    std::fprintf(f, "%d,%.6f,%.4f,%.8g\n", row.epoch, row.train_loss,
                 row.val_error_pct, row.learning_rate);
  }
  std::fclose(f);
}

}  // namespace bn
