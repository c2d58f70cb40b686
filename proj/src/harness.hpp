#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "block.hpp"
#include "dataset.hpp"
#include "network.hpp"

namespace bn {

/// One experiment: train an architecture on a task `repetitions` times
/// (fresh weights per repetition, fixed datasets) and aggregate test errors.
struct ExperimentConfig {
  enum class Mode { scratch, block };

  Mode mode = Mode::scratch;
  Task task = Task::blt_srp;
  std::vector<int> net_spec = {200, 100, 50};    // scratch hidden widths
  BlockSpec block_spec;                          // block mode
  std::vector<Task> base_tasks;                  // block mode, task must not appear
  std::vector<std::string> base_models;          // optional explicit model paths
  int train_size = 20000;
  int test_size = 10000;
  int base_train_size = 0;                       // 0 -> round(1.75 * train_size)
  int repetitions = 3;
  uint64_t master_seed = 42;
  TrainConfig train;                             // train.seed is derived per repetition
};

/// Flat key=value config text; lists are comma-separated. Round-trips through
/// parse_config_text/config_to_text.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);
std::string config_to_text(const ExperimentConfig& cfg);

struct ExperimentResult {
  std::vector<double> errors;  // per-repetition test error percentages
  double mean = 0.0;
  double best = 0.0;
  double worst = 0.0;
  long long trainable_params = 0;
  double seconds = 0.0;  // wall clock of this invocation (0 when cached)
};

struct CachedResult {
  std::vector<double> errors;
  long long trainable_params = 0;
};

/// Shared state for a batch of runs: output directory (models, logs, results
/// cache), worker threads, and in-memory dataset/result caches. Repetition
/// results persist under <out_dir>/results keyed by a config digest, so
/// repeated invocations (and the scratch references shared by tables and
/// sweeps) reuse earlier training runs; determinism makes cached and fresh
/// numbers identical.
struct RunContext {
  std::string out_dir = "out";
  int threads = 1;
  bool save_models = false;

  std::map<std::string, std::shared_ptr<const Dataset>> dataset_cache;
  std::map<std::string, CachedResult> result_cache;
  std::mutex mu;
};

/// Seed derivation, shared by everything the harness runs:
///   repetition seed   = mix_seed(master, rep_index)
///   train dataset     = mix_seed(master, task_id)
///   test dataset      = mix_seed(master, 0x7E57 + task_id)
///   weight init       = mix_seed(rep_seed, 0)
///   shuffle stream    = mix_seed(rep_seed, 1)
uint64_t train_dataset_seed(uint64_t master, Task task);
uint64_t test_dataset_seed(uint64_t master, Task task);

std::shared_ptr<const Dataset> get_dataset(RunContext& ctx, Task task, int n,
                                           uint64_t seed);

/// save_models additionally writes each repetition's trained model and
/// training log under out_dir (always on when ctx.save_models is set).
ExperimentResult run_experiment(const ExperimentConfig& cfg, RunContext& ctx,
                                bool save_models = false);

/// Base model for a task: the repetition-0 network of the canonical scratch
/// NN-200-100-50 protocol, trained through run_experiment (and therefore
/// shared with table scratch references via the result cache). Returns the
/// model path.
std::string ensure_base_model(RunContext& ctx, Task task, int train_size,
                              uint64_t master_seed);

// --- Table and sweep reproduction ---------------------------------------

inline constexpr int kScratchFullTrainSize = 350000;
inline constexpr int kBlockFullTrainSize = 200000;
inline constexpr int kTestSize = 10000;

struct TableCell {
  ExperimentResult result;
  bool beats_scratch = false;  // tables 2-3 only
};

struct TableRow {
  std::string condition;
  std::vector<TableCell> cells;  // one per architecture column
};

struct TableResult {
  int table_id = 0;
  double scale = 1.0;
  std::vector<std::string> arch_names;
  std::vector<TableRow> rows;
};

/// Reproduces one of the three result tables at `scale` (fraction of the
/// full dataset sizes: 350k for table 1, 200k for tables 2-3, with the
/// scratch reference for tables 2-3 trained at the table-1 size).
TableResult run_table(int table_id, double scale, int repetitions,
                      uint64_t master_seed, RunContext& ctx);

struct SweepPoint {
  int num_bases = 0;
  int samples = 0;      // base-subset draws
  int comparisons = 0;  // (architecture, task) pairs = 2 * samples
  int wins = 0;
  double fraction = 0.0;
};

struct SweepResult {
  double scale = 1.0;
  std::vector<SweepPoint> points;
};

/// For each base count m, draws random (base subset, admissible target task)
/// pairs, trains BA-0-50-50 and BA-0-0-50, and counts how often the block
/// mean error beats (strictly) the scratch NN-200-100-50 mean on the same
/// task and scale. Requested sample counts shrink with a warning when fewer
/// distinct pairs exist.
SweepResult run_fig3_sweep(const std::vector<int>& base_counts,
                           int samples_per_count, double scale, int repetitions,
                           uint64_t master_seed, RunContext& ctx);

struct Report {
  std::optional<TableResult> table;
  std::optional<SweepResult> sweep;
};

/// Writes the CSV for a table or sweep at csv_path; sweeps additionally get
/// "<csv_path minus extension>_plot.dat" with raw (m, fraction) pairs.
/// Numbers in the CSV use the tables' fixed 1-decimal formatting. Empty
/// results are an error and create no file.
void emit_report(const Report& report, const std::string& csv_path);

/// Self-check suite: parameter-count identities, the freeze law, and
/// analytic-vs-numeric gradient agreement. Prints one line per check to
/// stdout; returns true when everything passes.
bool run_verify_suite(uint64_t seed);

}  // namespace bn
