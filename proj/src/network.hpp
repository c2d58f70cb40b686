#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dataset.hpp"

namespace bn {

enum class Activation : uint8_t {
  rectifier = 0,
  sigmoid = 1,
};

struct LayerSpec {
  int input_width = 0;
  int output_width = 0;
  Activation activation = Activation::rectifier;
};

struct DenseLayer {
  int input_width = 0;
  int output_width = 0;
  Activation activation = Activation::rectifier;
  bool frozen = false;
  std::vector<double> weights;  // output_width x input_width, row-major
  std::vector<double> biases;   // output_width
};

/// Fully connected feed-forward net. The last layer is the output unit:
/// width 1 with a logistic sigmoid.
struct Network {
  int input_width = 0;
  std::vector<DenseLayer> layers;
};

/// Layer specs for the NN-a-b-c family: rectifier hidden layers of the given
/// widths over `input_width` inputs, plus the sigmoid output unit.
std::vector<LayerSpec> scratch_layer_specs(int input_width,
                                           const std::vector<int>& hidden_widths);

/// Weights uniform in +/- sqrt(6/(fan_in+fan_out)), biases zero,
/// deterministic per seed. Throws on non-chaining specs.
Network init_network(const std::vector<LayerSpec>& specs, uint64_t seed);

/// Per-layer pre-activations and activations for one batch.
struct ForwardCache {
  int batch = 0;
  std::vector<std::vector<double>> pre;  // [layer] batch x output_width
  std::vector<std::vector<double>> act;  // [layer] batch x output_width
};

/// Probabilities for a row-major batch (n x input_width). The cache, when
/// given, retains intermediates for backward().
std::vector<double> forward(const Network& net, const double* batch, int n,
                            ForwardCache* cache = nullptr);

/// Binary cross-entropy with probabilities clamped to [1e-12, 1-1e-12].
double bce_loss(double prob, int label);
double mean_bce_loss(const std::vector<double>& probs, const uint8_t* labels);

/// Gradients of the mean batch loss. Entries for frozen layers stay empty.
struct Gradients {
  std::vector<std::vector<double>> weights;  // per layer, empty when frozen
  std::vector<std::vector<double>> biases;
};

Gradients backward(const Network& net, const ForwardCache& cache,
                   const double* batch, const uint8_t* labels);

/// Momentum buffers matching the non-frozen parameters.
struct Velocity {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
};

Velocity make_velocity(const Network& net);

/// v <- momentum*v - lr*g; theta <- theta + v. Frozen layers untouched.
void sgd_step(Network& net, const Gradients& grads, Velocity& vel, double lr,
              double momentum);

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 64;
  int max_epochs = 80;
  double validation_fraction = 0.1;
  int patience = 10;
  uint64_t seed = 0;  // drives the per-epoch shuffle
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_error_pct = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_error_pct = 100.0;
};

/// Read-only view over training data: quantized dataset rows or raw doubles.
struct DataView {
  int n = 0;
  int width = 0;
  const uint8_t* qpixels = nullptr;  // quantized rows, n x width
  const double* dpixels = nullptr;   // raw rows, n x width (exclusive with qpixels)
  const uint8_t* labels = nullptr;

  void fill_row(int i, double* out) const;
  DataView slice(int begin, int count) const;
};

DataView view(const Dataset& ds);

/// Mini-batch SGD with momentum, per-epoch shuffle under config.seed, early
/// stopping on a held-out validation tail (the last
/// round(n*validation_fraction) rows), and learning-rate halving on
/// validation plateaus (every 5 consecutive non-improving epochs). Restores
/// the parameters of the best validation epoch before returning. Throws
/// Error(diverged) on non-finite loss.
TrainResult train(Network& net, const DataView& data, const TrainConfig& config);

/// Percentage of misclassified examples; prob >= 0.5 classifies as label 1.
double evaluate(const Network& net, const DataView& data);

/// Trainable + frozen parameter count: sum over layers of out*(in+1).
long long param_count(const Network& net);

/// "BNMD" container, bit-exact little-endian serialization.
void save_model(const Network& net, const std::string& path);
Network load_model(const std::string& path);
std::vector<uint8_t> serialize_model(const Network& net);
Network deserialize_model(const std::vector<uint8_t>& bytes);

/// Layer-list encoding shared by the model containers: per layer input_width
/// u32, output_width u32, activation u8, frozen u8, weights then biases as
/// f64 LE.
void append_layers_bytes(std::vector<uint8_t>& out, const std::vector<DenseLayer>& layers);
std::vector<DenseLayer> read_layers_bytes(const std::vector<uint8_t>& bytes,
                                          size_t* pos, int count);

/// FNV-1a digest over layer shapes and parameters, ignoring freeze flags.
/// Identical digests mean bit-identical weights and biases.
uint64_t params_digest(const std::vector<DenseLayer>& layers);

void write_train_log_csv(const TrainResult& result, const std::string& path);

}  // namespace bn
