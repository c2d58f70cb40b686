#include "block.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "errors.hpp"
#include "rng.hpp"

using namespace bn;

namespace {

std::vector<Network> standard_bases(int m, int input_width = 1024,
                                    uint64_t seed = 1) {
  std::vector<Network> bases;
  for (int k = 0; k < m; ++k) {
    bases.push_back(init_network(
        scratch_layer_specs(input_width, {200, 100, 50}), seed + k));
  }
  return bases;
}

std::vector<Network> toy_bases(int m, int input_width, uint64_t seed) {
  std::vector<Network> bases;
  for (int k = 0; k < m; ++k) {
    bases.push_back(
        init_network(scratch_layer_specs(input_width, {5, 4, 3}), seed + k));
  }
  return bases;
}

struct ToyData {
  std::vector<double> x;
  std::vector<uint8_t> y;
  int n = 0;
  int width = 0;

  DataView view() const {
    DataView v;
    v.n = n;
    v.width = width;
    v.dpixels = x.data();
    v.labels = y.data();
    return v;
  }
};

ToyData random_toy(int n, int width, uint64_t seed) {
  ToyData d;
  d.n = n;
  d.width = width;
  Xoshiro256ss rng(seed);
  for (int i = 0; i < n * width; ++i) d.x.push_back(rng.uniform(-1.0, 1.0));
  for (int i = 0; i < n; ++i) d.y.push_back(static_cast<uint8_t>(rng.next_bool()));
  return d;
}

}  // namespace

TEST(ComposeTest, RemovedFirstLayerWiringShapes) {
  // BA-0-50-50 over four bases: 50x800 from the base first layers, 50x450
  // from 50 block units plus the base second layers, and a 1x50 output.
  const BlockNetwork bnet = compose(standard_bases(4), BlockSpec{0, 50, 50}, 3);
  ASSERT_EQ(bnet.block_layers.size(), 2u);
  EXPECT_EQ(bnet.block_depths, (std::vector<int>{2, 3}));
  EXPECT_EQ(bnet.block_layers[0].input_width, 800);
  EXPECT_EQ(bnet.block_layers[0].output_width, 50);
  EXPECT_EQ(bnet.block_layers[1].input_width, 450);
  EXPECT_EQ(bnet.block_layers[1].output_width, 50);
  EXPECT_EQ(bnet.output.input_width, 50);
  EXPECT_EQ(bnet.output.output_width, 1);
}

TEST(ComposeTest, FullThreeLayerBlockOverOneBase) {
  const BlockNetwork bnet = compose(standard_bases(1), BlockSpec{50, 50, 50}, 4);
  ASSERT_EQ(bnet.block_layers.size(), 3u);
  EXPECT_EQ(bnet.block_layers[0].input_width, 1024);
  EXPECT_EQ(bnet.block_layers[1].input_width, 50 + 200);
  EXPECT_EQ(bnet.block_layers[2].input_width, 50 + 100);
  EXPECT_EQ(bnet.output.input_width, 50);
}

TEST(ComposeTest, SingleTrainableLayerOverFiveBases) {
  const BlockNetwork bnet = compose(standard_bases(5), BlockSpec{0, 0, 50}, 5);
  ASSERT_EQ(bnet.block_layers.size(), 1u);
  EXPECT_EQ(bnet.block_layers[0].input_width, 500);
  EXPECT_EQ(bnet.block_layers[0].output_width, 50);
}

TEST(ComposeTest, BasesAreFrozen) {
  const BlockNetwork bnet = compose(standard_bases(2), BlockSpec{0, 50, 50}, 6);
  for (const Network& base : bnet.bases) {
    for (const DenseLayer& layer : base.layers) {
      EXPECT_TRUE(layer.frozen);
    }
  }
}

TEST(ComposeTest, RejectsEmptyBaseList) {
  EXPECT_THROW(compose({}, BlockSpec{0, 0, 50}, 0), Error);
}

TEST(ComposeTest, RejectsEmptyTopLayer) {
  EXPECT_THROW(compose(standard_bases(1), BlockSpec{50, 50, 0}, 0), Error);
}

TEST(ComposeTest, RejectsMismatchedBaseInputs) {
  std::vector<Network> bases = toy_bases(1, 8, 1);
  bases.push_back(init_network(scratch_layer_specs(9, {5, 4, 3}), 2));
  EXPECT_THROW(compose(bases, BlockSpec{0, 0, 4}, 0), Error);
}

TEST(BlockParamCountTest, PinnedClosedFormValues) {
  EXPECT_EQ(block_param_count(BlockSpec{0, 50, 50}, 5), 77651);
  EXPECT_EQ(block_param_count(BlockSpec{0, 0, 50}, 5), 25101);
  EXPECT_EQ(block_param_count(BlockSpec{0, 50, 50}, 4), 62651);
  EXPECT_EQ(block_param_count(BlockSpec{0, 0, 50}, 4), 20101);
}

TEST(BlockParamCountTest, ClosedFormMatchesCompositionBruteForce) {
  for (int m = 1; m <= 5; ++m) {
    const auto bases = toy_bases(m, 16, 10 + m);
    for (int h1 : {0, 1, 50}) {
      for (int h2 : {0, 1, 50}) {
        for (int h3 : {1, 50}) {
          const BlockSpec spec{h1, h2, h3};
          const BlockNetwork bnet = compose(bases, spec, 1);
          EXPECT_EQ(block_param_count(bnet),
                    block_param_count(spec, m, {5, 4, 3}, 16))
              << spec.name() << " m=" << m;
        }
      }
    }
  }
}

TEST(ForwardBlockTest, ZeroBlockWeightsGiveHalf) {
  BlockNetwork bnet = compose(toy_bases(2, 8, 3), BlockSpec{0, 4, 3}, 9);
  for (auto& layer : bnet.block_layers) {
    std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
    std::fill(layer.biases.begin(), layer.biases.end(), 0.0);
  }
  std::fill(bnet.output.weights.begin(), bnet.output.weights.end(), 0.0);
  bnet.output.biases[0] = 0.0;
  Xoshiro256ss rng(5);
  std::vector<double> x(8);
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);
  const auto probs = forward_block(bnet, x.data(), 1);
  EXPECT_DOUBLE_EQ(probs[0], 0.5);
}

TEST(ForwardBlockTest, HandComputedSingleUnitComposition) {
  // One base with 1-unit layers and identity-ish weights, one-unit block.
  std::vector<Network> bases;
  Network base = init_network(scratch_layer_specs(1, {1, 1, 1}), 0);
  base.layers[0].weights = {2.0};  // L1 = relu(2x)
  base.layers[0].biases = {0.0};
  base.layers[1].weights = {0.5};  // L2 = relu(L1/2) = relu(x)
  base.layers[1].biases = {0.0};
  bases.push_back(base);

  BlockNetwork bnet = compose(bases, BlockSpec{0, 1, 1}, 0);
  // Block L2 reads base L1 (one unit): relu(1 * L1) = 2x for x > 0.
  bnet.block_layers[0].weights = {1.0};
  bnet.block_layers[0].biases = {0.0};
  // Block L3 reads [block L2, base L2]: relu(l2 - base_l2) = relu(2x - x) = x.
  bnet.block_layers[1].weights = {1.0, -1.0};
  bnet.block_layers[1].biases = {0.0};
  bnet.output.weights = {1.0};
  bnet.output.biases = {0.0};

  const double x = 0.75;
  const auto probs = forward_block(bnet, &x, 1);
  EXPECT_NEAR(probs[0], 1.0 / (1.0 + std::exp(-0.75)), 1e-15);
}

TEST(ForwardBlockTest, BaseOutputLayersAreNeverConsumed) {
  const auto bases = toy_bases(2, 8, 30);
  const BlockNetwork bnet = compose(bases, BlockSpec{3, 3, 3}, 31);

  std::vector<Network> stripped = bases;
  for (Network& base : stripped) base.layers.pop_back();  // drop output unit
  BlockNetwork bnet2 = compose(stripped, BlockSpec{3, 3, 3}, 31);

  Xoshiro256ss rng(6);
  std::vector<double> x(16);
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);
  const auto a = forward_block(bnet, x.data(), 2);
  const auto b = forward_block(bnet2, x.data(), 2);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(ForwardBlockTest, LateralInputsEnterOnlyThroughLateralWeights) {
  // Zeroing base k's lateral columns must equal feeding zeros as base k's
  // activations.
  const auto bases = toy_bases(3, 8, 40);
  const BlockNetwork original = compose(bases, BlockSpec{0, 4, 3}, 41);

  BlockNetwork zero_weights = original;
  const int victim = 1;
  for (size_t idx = 0; idx < zero_weights.block_layers.size(); ++idx) {
    const int depth = zero_weights.block_depths[idx];
    if (depth == 1) continue;
    const LateralLayout lay = lateral_layout(zero_weights, depth);
    DenseLayer& layer = zero_weights.block_layers[idx];
    for (int row = 0; row < layer.output_width; ++row) {
      for (int col = lay.base_offsets[victim];
           col < lay.base_offsets[victim] + lay.base_widths[victim]; ++col) {
        layer.weights[static_cast<size_t>(row) * layer.input_width + col] = 0.0;
      }
    }
  }

  BlockNetwork zero_base = original;
  for (DenseLayer& layer : zero_base.bases[victim].layers) {
    std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
    // Rectifier of a negative bias is exactly zero activation.
    std::fill(layer.biases.begin(), layer.biases.end(), -1.0);
  }

  Xoshiro256ss rng(7);
  std::vector<double> x(4 * 8);
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);
  const auto a = forward_block(zero_weights, x.data(), 4);
  const auto b = forward_block(zero_base, x.data(), 4);
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(BackwardBlockTest, MatchesCentralFiniteDifferences) {
  for (const BlockSpec spec : {BlockSpec{3, 3, 3}, BlockSpec{0, 4, 3},
                               BlockSpec{0, 0, 5}, BlockSpec{2, 0, 3}}) {
    BlockNetwork bnet = compose(toy_bases(2, 6, 50), spec, 51);
    const ToyData data = random_toy(5, 6, 52);
    BlockCache cache;
    forward_block(bnet, data.x.data(), data.n, &cache);
    const Gradients grads = backward_block(bnet, cache, data.y.data());

    const double h = 1e-5;
    double worst = 0.0;
    const auto loss = [&] {
      return mean_bce_loss(forward_block(bnet, data.x.data(), data.n),
                           data.y.data());
    };
    std::vector<DenseLayer*> layers;
    for (auto& l : bnet.block_layers) layers.push_back(&l);
    layers.push_back(&bnet.output);
    for (size_t l = 0; l < layers.size(); ++l) {
      for (size_t i = 0; i < layers[l]->weights.size(); ++i) {
        double& p = layers[l]->weights[i];
        const double saved = p;
        p = saved + h;
        const double up = loss();
        p = saved - h;
        const double down = loss();
        p = saved;
        const double numeric = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(grads.weights[l][i] - numeric) /
                                    std::max({1.0, std::abs(grads.weights[l][i]),
                                              std::abs(numeric)}));
      }
    }
    EXPECT_LT(worst, 1e-6) << spec.name();
  }
}

TEST(TrainBlockTest, FreezeLawHoldsBitExactly) {
  BlockNetwork bnet = compose(toy_bases(3, 10, 60), BlockSpec{0, 5, 4}, 61);
  const ToyData data = random_toy(120, 10, 62);
  std::vector<uint64_t> before;
  for (const Network& base : bnet.bases) {
    before.push_back(params_digest(base.layers));
  }
  TrainConfig cfg;
  cfg.max_epochs = 6;
  cfg.batch_size = 16;
  cfg.seed = 63;
  train_block(bnet, data.view(), cfg);
  for (size_t k = 0; k < bnet.bases.size(); ++k) {
    EXPECT_EQ(params_digest(bnet.bases[k].layers), before[k]);
  }
}

TEST(TrainBlockTest, DeterministicAndCacheAgnostic) {
  const ToyData data = random_toy(150, 10, 70);
  TrainConfig cfg;
  cfg.max_epochs = 8;
  cfg.batch_size = 16;
  cfg.seed = 71;

  BlockNetwork a = compose(toy_bases(2, 10, 72), BlockSpec{2, 4, 3}, 73);
  BlockNetwork b = compose(toy_bases(2, 10, 72), BlockSpec{2, 4, 3}, 73);
  const LateralCache lat = build_lateral_cache(a, data.view());
  const TrainResult ra = train_block(a, data.view(), cfg, &lat);
  const TrainResult rb = train_block(b, data.view(), cfg);  // builds its own
  ASSERT_EQ(ra.log.size(), rb.log.size());
  for (size_t i = 0; i < ra.log.size(); ++i) {
    EXPECT_EQ(ra.log[i].train_loss, rb.log[i].train_loss);
  }
  std::vector<uint8_t> bytes_a, bytes_b;
  append_layers_bytes(bytes_a, a.block_layers);
  append_layers_bytes(bytes_b, b.block_layers);
  EXPECT_EQ(bytes_a, bytes_b);
}

TEST(TrainBlockTest, LearnsAToyTask) {
  // Target depends on the input through a separable rule the block can pick
  // up from raw lateral features.
  ToyData data;
  data.n = 300;
  data.width = 6;
  Xoshiro256ss rng(80);
  for (int i = 0; i < data.n; ++i) {
    std::vector<double> row(6);
    for (auto& v : row) v = rng.uniform(-1.0, 1.0);
    const bool one = row[0] + row[1] > row[2] + 0.1;
    data.y.push_back(one ? 1 : 0);
    data.x.insert(data.x.end(), row.begin(), row.end());
  }
  BlockNetwork bnet = compose(toy_bases(1, 6, 81), BlockSpec{4, 4, 4}, 82);
  TrainConfig cfg;
  cfg.learning_rate = 0.3;
  cfg.batch_size = 16;
  cfg.max_epochs = 150;
  cfg.patience = 30;
  cfg.seed = 83;
  train_block(bnet, data.view(), cfg);
  EXPECT_LT(evaluate_block(bnet, data.view()), 15.0);
}

TEST(EvaluateBlockTest, CachedAndDirectPathsAgree) {
  BlockNetwork bnet = compose(toy_bases(2, 8, 90), BlockSpec{0, 4, 3}, 91);
  const ToyData data = random_toy(200, 8, 92);
  const LateralCache lat = build_lateral_cache(bnet, data.view());
  EXPECT_EQ(evaluate_block(bnet, data.view()),
            evaluate_block(bnet, data.view(), &lat));
}

TEST(BlockModelIoTest, RoundTripPreservesParameters) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "bn_block_io";
  fs::create_directories(dir);

  const auto bases = toy_bases(2, 8, 100);
  std::vector<std::string> base_paths;
  for (size_t k = 0; k < bases.size(); ++k) {
    const std::string p = (dir / ("base" + std::to_string(k) + ".bnmd")).string();
    save_model(bases[k], p);
    base_paths.push_back("base" + std::to_string(k) + ".bnmd");  // relative
  }
  BlockNetwork bnet = compose(bases, BlockSpec{0, 5, 4}, 101);
  const std::string path = (dir / "comp.bnbm").string();
  save_block_model(bnet, base_paths, path);

  const BlockNetwork back = load_block_model(path);
  EXPECT_EQ(back.spec.h1, 0);
  EXPECT_EQ(back.spec.h2, 5);
  EXPECT_EQ(back.spec.h3, 4);
  std::vector<uint8_t> a, b;
  append_layers_bytes(a, bnet.block_layers);
  append_layers_bytes(b, back.block_layers);
  EXPECT_EQ(a, b);

  Xoshiro256ss rng(9);
  std::vector<double> x(8);
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);
  EXPECT_EQ(forward_block(bnet, x.data(), 1)[0], forward_block(back, x.data(), 1)[0]);
  fs::remove_all(dir);
}

TEST(BlockModelIoTest, SubstitutedBaseIsDetected) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "bn_block_sub";
  fs::create_directories(dir);

  const auto bases = toy_bases(1, 8, 110);
  const std::string base_path = (dir / "base.bnmd").string();
  save_model(bases[0], base_path);
  BlockNetwork bnet = compose(bases, BlockSpec{0, 0, 4}, 111);
  const std::string path = (dir / "comp.bnbm").string();
  save_block_model(bnet, {"base.bnmd"}, path);

  // Swap in a different network under the same file name.
  save_model(init_network(scratch_layer_specs(8, {5, 4, 3}), 999), base_path);
  try {
    load_block_model(path);
    FAIL() << "expected digest_mismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::digest_mismatch);
  }
  fs::remove_all(dir);
}
