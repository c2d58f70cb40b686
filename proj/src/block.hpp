#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "network.hpp"

namespace bn {

/// Block neuron counts per hidden layer; zeros mark removed layers. The top
/// layer h3 must be non-empty because the output unit attaches to it.
struct BlockSpec {
  int h1 = 0;
  int h2 = 0;
  int h3 = 1;

  std::string name() const;  // "BA-h1-h2-h3"
};

/// Frozen base networks plus a trainable block wired laterally into them.
/// Block layer at depth d reads the previous block layer (when present)
/// concatenated with every base's hidden activations at depth d-1; block
/// layer 1 reads the raw input. The output unit reads block layer 3 only.
/// Base third-layer activations and base outputs are never consumed.
struct BlockNetwork {
  int input_width = 0;
  BlockSpec spec;
  std::vector<Network> bases;             // every base layer frozen
  std::vector<DenseLayer> block_layers;   // existing block layers, depth order
  std::vector<int> block_depths;          // depth (1..3) of each block layer
  DenseLayer output;                      // 1 x h3, sigmoid

  int trainable_layer_count() const {
    return static_cast<int>(block_layers.size()) + 1;
  }
};

/// Column layout of the concatenated input feeding the block layer at
/// `depth` (2 or 3): block part first, then each base's slice in list order.
struct LateralLayout {
  int block_width = 0;               // 0 when the previous block layer is absent
  std::vector<int> base_offsets;     // column offset of each base's slice
  std::vector<int> base_widths;
  int total = 0;
};

LateralLayout lateral_layout(const BlockNetwork& bnet, int depth);

/// Builds the composition; bases are copied and frozen, block parameters are
/// initialized like init_network under `seed`. Throws on an empty base list,
/// mismatched base input widths, bases with fewer than two hidden layers, or
/// h3 < 1.
BlockNetwork compose(const std::vector<Network>& bases, const BlockSpec& spec,
                     uint64_t seed);

/// Closed-form trainable parameter count for homogeneous bases with hidden
/// widths `base_widths`, matching compose()'s wiring.
long long block_param_count(const BlockSpec& spec, int num_bases,
                            const std::array<int, 3>& base_widths = {200, 100, 50},
                            int input_width = 1024);

/// Trainable parameter count of an actual composition (brute-force sum).
long long block_param_count(const BlockNetwork& bnet);

struct BlockCache {
  int batch = 0;
  const double* raw_batch = nullptr;  // set when a depth-1 block layer exists
  std::vector<std::vector<double>> base_act1;  // [base] n x width1
  std::vector<std::vector<double>> base_act2;  // [base] n x width2
  std::vector<std::vector<double>> input;      // [block layer] n x in_width
  std::vector<std::vector<double>> pre;        // [block layer] n x h
  std::vector<std::vector<double>> act;
  std::vector<double> out_pre;
  std::vector<double> out_act;
};

std::vector<double> forward_block(const BlockNetwork& bnet, const double* batch,
                                  int n, BlockCache* cache = nullptr);

/// Gradients for the trainable parameters only, ordered
/// [block layers..., output]. Base parameters receive no entries.
Gradients backward_block(const BlockNetwork& bnet, const BlockCache& cache,
                         const uint8_t* labels);

/// Base activations for a whole dataset, computed once. Training gathers
/// rows from here instead of re-running the frozen bases every epoch.
struct LateralCache {
  int n = 0;
  std::vector<std::vector<double>> act1;  // [base] n x width1
  std::vector<std::vector<double>> act2;  // [base] n x width2
};

LateralCache build_lateral_cache(const BlockNetwork& bnet, const DataView& data);

/// Same contract as train(), restricted to block parameters. Base parameter
/// bytes are bit-identical before and after. `shared_lat`, when given, must
/// cover exactly the rows of `data`; repetitions over one dataset can then
/// reuse a single cache.
TrainResult train_block(BlockNetwork& bnet, const DataView& data,
                        const TrainConfig& config,
                        const LateralCache* shared_lat = nullptr);

double evaluate_block(const BlockNetwork& bnet, const DataView& data,
                      const LateralCache* lat = nullptr);

/// "BNBM" container: block spec and trainable layers, plus per-base model
/// paths and parameter digests so substituted bases are detected at load.
void save_block_model(const BlockNetwork& bnet,
                      const std::vector<std::string>& base_paths,
                      const std::string& path);

/// Reloads a composition, reading each base model from its recorded path
/// (relative paths resolve against the block file's directory). Throws
/// Error(digest_mismatch) when a base's parameters differ from the digest
/// recorded at save time.
BlockNetwork load_block_model(const std::string& path);

}  // namespace bn
