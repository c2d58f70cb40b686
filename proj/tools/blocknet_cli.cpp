// Command-line front end; all functionality goes through the C API.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "blocknet/blocknet.h"

namespace {

int report(bn_status status) {
  if (status == BN_OK) return 0;
  std::fprintf(stderr, "error: %s", bn_status_name(status));
  const char* detail = bn_last_error();
  if (detail && detail[0] != '\0') std::fprintf(stderr, " (%s)", detail);
  std::fprintf(stderr, "\n");
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Block network experiments: stimulus generation, training, "
               "and result-table reproduction"};
  app.require_subcommand(1);

  std::string out_dir = "out";
  int threads = 1;
  uint64_t master_seed = 42;
  app.add_option("--out-dir", out_dir, "Directory for models, logs and results");
  app.add_option("--threads", threads, "Worker threads for generation and repetitions");
  app.add_option("--seed", master_seed, "Master seed");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a labeled dataset file");
  std::string gen_task, gen_out;
  uint64_t gen_n = 0;
  uint64_t gen_seed = 42;
  bool gen_seed_set = false;
  gen->add_option("--task", gen_task, "Task name")->required();
  gen->add_option("--n", gen_n, "Number of examples")->required();
  gen->add_option("--seed", gen_seed, "Dataset seed")
      ->each([&](const std::string&) { gen_seed_set = true; });
  gen->add_option("--out", gen_out, "Output path")->required();

  // train / train-block
  auto* train = app.add_subcommand("train", "Train a scratch network from a config");
  std::string train_config;
  train->add_option("--config", train_config, "Config file")->required();
  auto* train_block =
      app.add_subcommand("train-block", "Train a block composition from a config");
  std::string train_block_config;
  train_block->add_option("--config", train_block_config, "Config file")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a model on a dataset file");
  std::string eval_model, eval_data;
  eval->add_option("--model", eval_model, "Model file (.bnmd or .bnbm)")->required();
  eval->add_option("--data", eval_data, "Dataset file (.bnds)")->required();

  // table
  auto* table = app.add_subcommand("table", "Reproduce a result table");
  int table_id = 1;
  double table_scale = 0.1;
  int table_reps = 3;
  table->add_option("--id", table_id, "Table id (1, 2 or 3)")->required();
  table->add_option("--scale", table_scale, "Fraction of the full dataset sizes");
  table->add_option("--reps", table_reps, "Repetitions per experiment");

  // fig3
  auto* fig3 = app.add_subcommand("fig3", "Outperformance sweep over base counts");
  double fig3_scale = 0.1;
  int fig3_samples = 6;
  int fig3_reps = 1;
  std::string fig3_ms = "1,2,3,4,5";
  fig3->add_option("--scale", fig3_scale, "Fraction of the full dataset sizes");
  fig3->add_option("--samples", fig3_samples, "Base-subset draws per count");
  fig3->add_option("--ms", fig3_ms, "Comma-separated base counts");
  fig3->add_option("--reps", fig3_reps, "Repetitions per experiment");

  // verify
  auto* verify = app.add_subcommand(
      "verify", "Run parameter-count, freeze-law and gradient self-checks");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    bn_dataset* ds = nullptr;
    bn_status status = bn_dataset_generate(
        gen_task.c_str(), gen_n, gen_seed_set ? gen_seed : master_seed, threads, &ds);
    if (status == BN_OK) {
      status = bn_dataset_write(ds, gen_out.c_str());
      bn_dataset_free(ds);
      if (status == BN_OK) {
        std::printf("wrote %" PRIu64 " examples to %s\n", gen_n, gen_out.c_str());
      }
    }
    return report(status);
  }

  if (train->parsed() || train_block->parsed()) {
    const std::string& config = train->parsed() ? train_config : train_block_config;
    double summary[4] = {0, 0, 0, 0};
    const bn_status status =
        bn_cmd_train(config.c_str(), out_dir.c_str(), threads, summary);
    if (status == BN_OK) {
      std::printf("test error %% mean=%.4f best=%.4f worst=%.4f (trainable params %.0f)\n",
                  summary[0], summary[1], summary[2], summary[3]);
    }
    return report(status);
  }

  if (eval->parsed()) {
    bn_model* model = nullptr;
    bn_status status = bn_model_load(eval_model.c_str(), &model);
    if (status != BN_OK) return report(status);
    bn_dataset* ds = nullptr;
    status = bn_dataset_read(eval_data.c_str(), &ds);
    if (status != BN_OK) {
      bn_model_free(model);
      return report(status);
    }
    double error_pct = 0.0;
    status = bn_model_evaluate(model, ds, &error_pct);
    if (status == BN_OK) {
      std::printf("test error %.4f%% on %" PRIu64 " examples (%s)\n", error_pct,
                  bn_dataset_size(ds), bn_dataset_task(ds));
    }
    bn_dataset_free(ds);
    bn_model_free(model);
    return report(status);
  }

  if (table->parsed()) {
    const bn_status status = bn_cmd_table(table_id, table_scale, table_reps,
                                          master_seed, out_dir.c_str(), threads);
    if (status == BN_OK) {
      std::printf("wrote %s/table%d.csv\n", out_dir.c_str(), table_id);
    }
    return report(status);
  }

  if (fig3->parsed()) {
    const bn_status status =
        bn_cmd_fig3(fig3_ms.c_str(), fig3_samples, fig3_scale, fig3_reps,
                    master_seed, out_dir.c_str(), threads);
    if (status == BN_OK) {
      std::printf("wrote %s/fig3.csv and %s/fig3_plot.dat\n", out_dir.c_str(),
                  out_dir.c_str());
    }
    return report(status);
  }

  if (verify->parsed()) {
    return report(bn_cmd_verify(master_seed));
  }

  return 0;
}
