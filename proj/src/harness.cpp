#include "harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <thread>

#include "digest.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace fs = std::filesystem;

namespace bn {

namespace {

constexpr uint64_t kTestSeedTag = 0x7E57;

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  if (!out.empty() && out.back().empty()) out.pop_back();
  return out;
}

long parse_long(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const long r = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    fail(ErrorCode::invalid_argument, "config: bad integer for " + key + ": " + v);
  }
}

double parse_double(const std::string& v, const std::string& key) {
  try {
    size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    fail(ErrorCode::invalid_argument, "config: bad number for " + key + ": " + v);
  }
}

Task parse_task(const std::string& v) {
  const auto t = task_from_name(v);
  if (!t) fail(ErrorCode::invalid_argument, "config: unknown task " + v);
  return *t;
}

BlockSpec parse_block_spec(const std::string& v) {
  std::string body = v;
  if (body.rfind("BA-", 0) == 0) {
    body = body.substr(3);
    std::replace(body.begin(), body.end(), '-', ',');
  }
  const auto parts = split(body, ',');
  if (parts.size() != 3) {
    fail(ErrorCode::invalid_argument, "config: block_spec needs h1,h2,h3: " + v);
  }
  BlockSpec spec;
  spec.h1 = static_cast<int>(parse_long(parts[0], "block_spec"));
  spec.h2 = static_cast<int>(parse_long(parts[1], "block_spec"));
  spec.h3 = static_cast<int>(parse_long(parts[2], "block_spec"));
  return spec;
}

int base_train_size_of(const ExperimentConfig& cfg) {
  if (cfg.base_train_size > 0) return cfg.base_train_size;
  // Default mirrors the full-scale ratio between scratch and block datasets.
  return static_cast<int>(std::lround(cfg.train_size * 1.75));
}

void validate(const ExperimentConfig& cfg) {
  if (cfg.repetitions < 1) {
    fail(ErrorCode::invalid_argument, "config: repetitions must be >= 1");
  }
  if (cfg.train_size < 2 || cfg.test_size < 1) {
    fail(ErrorCode::invalid_argument, "config: train/test sizes too small");
  }
  if (cfg.mode == ExperimentConfig::Mode::block) {
    if (cfg.base_tasks.empty()) {
      fail(ErrorCode::invalid_argument, "config: block mode requires base_tasks");
    }
    for (Task t : cfg.base_tasks) {
      if (t == cfg.task) {
        fail(ErrorCode::invalid_argument,
             std::string("config: target task ") + task_name(cfg.task) +
                 " was used to train a base model");
      }
    }
    if (!cfg.base_models.empty() &&
        cfg.base_models.size() != cfg.base_tasks.size()) {
      fail(ErrorCode::invalid_argument,
           "config: base_models must match base_tasks in length");
    }
    if (cfg.block_spec.h3 < 1) {
      fail(ErrorCode::invalid_argument, "config: block_spec h3 must be >= 1");
    }
  } else {
    if (cfg.net_spec.empty()) {
      fail(ErrorCode::invalid_argument, "config: net_spec must not be empty");
    }
  }
}

/// Canonical text of everything that determines a repetition's numbers
/// (everything except the repetition count).
std::string result_key(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "mode=" << (cfg.mode == ExperimentConfig::Mode::scratch ? "scratch" : "block");
  os << ";task=" << task_name(cfg.task);
  if (cfg.mode == ExperimentConfig::Mode::scratch) {
    os << ";net=";
    for (size_t i = 0; i < cfg.net_spec.size(); ++i) {
      os << (i ? "-" : "") << cfg.net_spec[i];
    }
  } else {
    os << ";block=" << cfg.block_spec.name() << ";bases=";
    for (size_t i = 0; i < cfg.base_tasks.size(); ++i) {
      os << (i ? "+" : "") << task_name(cfg.base_tasks[i]);
    }
    if (!cfg.base_models.empty()) {
      os << ";base_models=";
      for (size_t i = 0; i < cfg.base_models.size(); ++i) {
        os << (i ? "," : "") << cfg.base_models[i];
      }
    } else {
      os << ";base_n=" << base_train_size_of(cfg);
    }
  }
  os << ";train_n=" << cfg.train_size << ";test_n=" << cfg.test_size;
  os << ";seed=" << cfg.master_seed;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                ";lr=%.17g;mom=%.17g;bs=%d;epochs=%d;vf=%.17g;patience=%d",
                cfg.train.learning_rate, cfg.train.momentum, cfg.train.batch_size,
                cfg.train.max_epochs, cfg.train.validation_fraction,
                cfg.train.patience);
  os << buf;
  return os.str();
}

fs::path results_dir(const RunContext& ctx) { return fs::path(ctx.out_dir) / "results"; }
fs::path models_dir(const RunContext& ctx) { return fs::path(ctx.out_dir) / "models"; }
fs::path logs_dir(const RunContext& ctx) { return fs::path(ctx.out_dir) / "logs"; }

CachedResult load_cached(RunContext& ctx, const std::string& key) {
  {
    std::lock_guard<std::mutex> lock(ctx.mu);
    const auto it = ctx.result_cache.find(key);
    if (it != ctx.result_cache.end()) return it->second;
  }
  CachedResult cached;
  const fs::path path = results_dir(ctx) / (hex64(fnv1a64(key)) + ".txt");
  std::FILE* f = std::fopen(path.string().c_str(), "r");
  if (!f) return cached;
  char line[512];
  while (std::fgets(line, sizeof(line), f)) {
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (s.rfind("params ", 0) == 0) {
      cached.trainable_params = std::atoll(s.c_str() + 7);
    } else {
      cached.errors.push_back(std::atof(s.c_str()));
    }
  }
  std::fclose(f);
  std::lock_guard<std::mutex> lock(ctx.mu);
  ctx.result_cache[key] = cached;
  return cached;
}

void store_cached(RunContext& ctx, const std::string& key, const CachedResult& cached) {
  fs::create_directories(results_dir(ctx));
  const fs::path path = results_dir(ctx) / (hex64(fnv1a64(key)) + ".txt");
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) fail(ErrorCode::io, "cannot write result cache " + path.string());
  std::fprintf(f, "# %s\n", key.c_str());
  std::fprintf(f, "params %lld\n", cached.trainable_params);
  for (double e : cached.errors) std::fprintf(f, "%.17g\n", e);
  std::fclose(f);
  std::lock_guard<std::mutex> lock(ctx.mu);
  ctx.result_cache[key] = cached;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(std::min(threads, n));
  for (int t = 0; t < std::min(threads, n); ++t) {
    pool.emplace_back([&, t] {
      try {
        for (;;) {
          const int i = next.fetch_add(1);
          if (i >= n) return;
          fn(i);
        }
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string rep_tag(const std::string& key, int rep) {
  return "run_" + hex64(fnv1a64(key)) + "_rep" + std::to_string(rep);
}

fs::path rep_model_path(const RunContext& ctx, const std::string& key, int rep,
                        ExperimentConfig::Mode mode) {
  const char* ext = mode == ExperimentConfig::Mode::scratch ? ".bnmd" : ".bnbm";
  return models_dir(ctx) / (rep_tag(key, rep) + ext);
}

}  // namespace

uint64_t train_dataset_seed(uint64_t master, Task task) {
  return mix_seed(master, static_cast<uint64_t>(task));
}

uint64_t test_dataset_seed(uint64_t master, Task task) {
  return mix_seed(master, kTestSeedTag + static_cast<uint64_t>(task));
}

std::shared_ptr<const Dataset> get_dataset(RunContext& ctx, Task task, int n,
                                           uint64_t seed) {
  const std::string key = std::string(task_name(task)) + "|" + std::to_string(n) +
                          "|" + std::to_string(seed);
  {
    std::lock_guard<std::mutex> lock(ctx.mu);
    const auto it = ctx.dataset_cache.find(key);
    if (it != ctx.dataset_cache.end()) return it->second;
  }
  auto ds = std::make_shared<Dataset>(build_dataset(task, n, seed, ctx.threads));
  std::lock_guard<std::mutex> lock(ctx.mu);
  ctx.dataset_cache[key] = ds;
  return ds;
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  bool saw_mode = false, saw_task = false;
  while (std::getline(ss, line)) {
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    const size_t eq = s.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::invalid_argument, "config: expected key=value, got: " + s);
    }
    const std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key == "mode") {
      if (value == "scratch") {
        cfg.mode = ExperimentConfig::Mode::scratch;
      } else if (value == "block") {
        cfg.mode = ExperimentConfig::Mode::block;
      } else {
        fail(ErrorCode::invalid_argument, "config: mode must be scratch or block");
      }
      saw_mode = true;
    } else if (key == "task") {
      cfg.task = parse_task(value);
      saw_task = true;
    } else if (key == "net_spec") {
      cfg.net_spec.clear();
      for (const auto& p : split(value, ',')) {
        cfg.net_spec.push_back(static_cast<int>(parse_long(p, key)));
      }
    } else if (key == "block_spec") {
      cfg.block_spec = parse_block_spec(value);
    } else if (key == "base_tasks") {
      cfg.base_tasks.clear();
      for (const auto& p : split(value, ',')) cfg.base_tasks.push_back(parse_task(p));
    } else if (key == "base_models") {
      cfg.base_models = split(value, ',');
    } else if (key == "train_size") {
      cfg.train_size = static_cast<int>(parse_long(value, key));
    } else if (key == "test_size") {
      cfg.test_size = static_cast<int>(parse_long(value, key));
    } else if (key == "base_train_size") {
      cfg.base_train_size = static_cast<int>(parse_long(value, key));
    } else if (key == "repetitions") {
      cfg.repetitions = static_cast<int>(parse_long(value, key));
    } else if (key == "master_seed") {
      try {
        cfg.master_seed = std::stoull(value);
      } catch (const std::exception&) {
        fail(ErrorCode::invalid_argument, "config: bad master_seed: " + value);
      }
    } else if (key == "learning_rate") {
      cfg.train.learning_rate = parse_double(value, key);
    } else if (key == "momentum") {
      cfg.train.momentum = parse_double(value, key);
    } else if (key == "batch_size") {
      cfg.train.batch_size = static_cast<int>(parse_long(value, key));
    } else if (key == "max_epochs") {
      cfg.train.max_epochs = static_cast<int>(parse_long(value, key));
    } else if (key == "validation_fraction") {
      cfg.train.validation_fraction = parse_double(value, key);
    } else if (key == "patience") {
      cfg.train.patience = static_cast<int>(parse_long(value, key));
    } else {
      fail(ErrorCode::invalid_argument, "config: unknown key " + key);
    }
  }
  if (!saw_mode || !saw_task) {
    fail(ErrorCode::invalid_argument, "config: mode and task are required");
  }
  validate(cfg);
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "r");
  if (!f) fail(ErrorCode::io, "cannot open config " + path);
  std::string text;
  char buf[4096];
  size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof(buf), f)) > 0) text.append(buf, got);
  std::fclose(f);
  return parse_config_text(text);
}

std::string config_to_text(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "mode=" << (cfg.mode == ExperimentConfig::Mode::scratch ? "scratch" : "block")
     << "\n";
  os << "task=" << task_name(cfg.task) << "\n";
  if (cfg.mode == ExperimentConfig::Mode::scratch) {
    os << "net_spec=";
    for (size_t i = 0; i < cfg.net_spec.size(); ++i) {
      os << (i ? "," : "") << cfg.net_spec[i];
    }
    os << "\n";
  } else {
    os << "block_spec=" << cfg.block_spec.h1 << "," << cfg.block_spec.h2 << ","
       << cfg.block_spec.h3 << "\n";
    os << "base_tasks=";
    for (size_t i = 0; i < cfg.base_tasks.size(); ++i) {
      os << (i ? "," : "") << task_name(cfg.base_tasks[i]);
    }
    os << "\n";
    if (!cfg.base_models.empty()) {
      os << "base_models=";
      for (size_t i = 0; i < cfg.base_models.size(); ++i) {
        os << (i ? "," : "") << cfg.base_models[i];
      }
      os << "\n";
    }
    os << "base_train_size=" << base_train_size_of(cfg) << "\n";
  }
  os << "train_size=" << cfg.train_size << "\n";
  os << "test_size=" << cfg.test_size << "\n";
  os << "repetitions=" << cfg.repetitions << "\n";
  os << "master_seed=" << cfg.master_seed << "\n";
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "learning_rate=%.17g\nmomentum=%.17g\nbatch_size=%d\n"
                "max_epochs=%d\nvalidation_fraction=%.17g\npatience=%d\n",
                cfg.train.learning_rate, cfg.train.momentum, cfg.train.batch_size,
                cfg.train.max_epochs, cfg.train.validation_fraction,
                cfg.train.patience);
  os << buf;
  return os.str();
}

std::string ensure_base_model(RunContext& ctx, Task task, int train_size,
                              uint64_t master_seed) {
  ExperimentConfig cfg;
  cfg.mode = ExperimentConfig::Mode::scratch;
  cfg.task = task;
  cfg.net_spec = {200, 100, 50};
  cfg.train_size = train_size;
  cfg.test_size = kTestSize;
  cfg.repetitions = 1;
  cfg.master_seed = master_seed;

  const std::string key = result_key(cfg);
  const fs::path path = models_dir(ctx) / (rep_tag(key, 0) + ".bnmd");
  if (!fs::exists(path)) {
    run_experiment(cfg, ctx, /*save_models=*/true);
  }
  if (!fs::exists(path)) {
    fail(ErrorCode::io, "ensure_base_model: expected model at " + path.string());
  }
  return path.string();
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, RunContext& ctx,
                                bool save_models) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const std::string key = result_key(cfg);
  const bool want_models = save_models || ctx.save_models;
  CachedResult cached = load_cached(ctx, key);

  // A repetition runs when its error is not cached or when its model file is
  // wanted but missing; determinism makes a re-run reproduce the cached
  // number exactly.
  std::vector<int> reps_to_run;
  for (int rep = 0; rep < cfg.repetitions; ++rep) {
    const bool have_error = rep < static_cast<int>(cached.errors.size());
    const bool have_model =
        !want_models || fs::exists(rep_model_path(ctx, key, rep, cfg.mode));
    if (!have_error || !have_model) reps_to_run.push_back(rep);
  }

  ExperimentResult result;
  if (!reps_to_run.empty()) {
    // Datasets are fixed across repetitions; only weights and shuffles vary.
    const auto train_ds = get_dataset(ctx, cfg.task, cfg.train_size,
                                      train_dataset_seed(cfg.master_seed, cfg.task));
    const auto test_ds = get_dataset(ctx, cfg.task, cfg.test_size,
                                     test_dataset_seed(cfg.master_seed, cfg.task));

    std::vector<Network> bases;
    std::vector<std::string> base_paths;
    LateralCache train_lat, test_lat;
    bool have_lat = false;
    if (cfg.mode == ExperimentConfig::Mode::block) {
      base_paths = cfg.base_models;
      if (base_paths.empty()) {
        for (Task t : cfg.base_tasks) {
          base_paths.push_back(
              ensure_base_model(ctx, t, base_train_size_of(cfg), cfg.master_seed));
        }
      }
      for (const auto& p : base_paths) bases.push_back(load_model(p));
      // One probe composition provides the wiring for shared lateral caches
      // and the trainable parameter count.
      const BlockNetwork probe = compose(bases, cfg.block_spec, 0);
      cached.trainable_params = block_param_count(probe);
      size_t bytes = 0;
      for (const Network& b : bases) {
        bytes += sizeof(double) * static_cast<size_t>(train_ds->n() + test_ds->n()) *
                 (b.layers[0].output_width + b.layers[1].output_width);
      }
      if (bytes < size_t(1800) * 1024 * 1024) {
        train_lat = build_lateral_cache(probe, view(*train_ds));
        test_lat = build_lateral_cache(probe, view(*test_ds));
        have_lat = true;
      }
    } else {
      Network probe = init_network(scratch_layer_specs(kPixelCount, cfg.net_spec), 0);
      cached.trainable_params = param_count(probe);
    }

    if (want_models) {
      fs::create_directories(models_dir(ctx));
      fs::create_directories(logs_dir(ctx));
      fs::create_directories(fs::path(ctx.out_dir) / "configs");
      std::FILE* f = std::fopen(
          ((fs::path(ctx.out_dir) / "configs" / ("run_" + hex64(fnv1a64(key)) + ".cfg"))
               .string())
              .c_str(),
          "w");
      if (f) {
        const std::string text = config_to_text(cfg);
        std::fwrite(text.data(), 1, text.size(), f);
        std::fclose(f);
      }
    }

    if (static_cast<int>(cached.errors.size()) < cfg.repetitions) {
      cached.errors.resize(cfg.repetitions, -1.0);
    }
    parallel_for(static_cast<int>(reps_to_run.size()), ctx.threads, [&](int i) {
      const int rep = reps_to_run[i];
      const uint64_t rep_seed = mix_seed(cfg.master_seed, rep);
      TrainConfig tc = cfg.train;
      tc.seed = mix_seed(rep_seed, 1);
      double err = 0.0;
      if (cfg.mode == ExperimentConfig::Mode::scratch) {
        Network net = init_network(scratch_layer_specs(kPixelCount, cfg.net_spec),
                                   mix_seed(rep_seed, 0));
        const TrainResult log = train(net, view(*train_ds), tc);
        err = evaluate(net, view(*test_ds));
        if (want_models) {
          save_model(net, rep_model_path(ctx, key, rep, cfg.mode).string());
          write_train_log_csv(log, (logs_dir(ctx) / (rep_tag(key, rep) + ".csv")).string());
        }
      } else {
        BlockNetwork bnet = compose(bases, cfg.block_spec, mix_seed(rep_seed, 0));
        const TrainResult log =
            train_block(bnet, view(*train_ds), tc, have_lat ? &train_lat : nullptr);
        err = evaluate_block(bnet, view(*test_ds), have_lat ? &test_lat : nullptr);
        if (want_models) {
          // Base paths are stored relative to the block file's directory so
          // the bundle stays loadable when the out-dir moves as a whole.
          std::vector<std::string> stored;
          for (const auto& p : base_paths) {
            stored.push_back(
                fs::proximate(fs::absolute(p), fs::absolute(models_dir(ctx))).string());
          }
          save_block_model(bnet, stored,
                           rep_model_path(ctx, key, rep, cfg.mode).string());
          write_train_log_csv(log, (logs_dir(ctx) / (rep_tag(key, rep) + ".csv")).string());
        }
      }
      cached.errors[rep] = err;
    });
    store_cached(ctx, key, cached);
  }

  result.errors.assign(cached.errors.begin(), cached.errors.begin() + cfg.repetitions);
  result.trainable_params = cached.trainable_params;
  result.mean = 0.0;
  result.best = result.errors.front();
  result.worst = result.errors.front();
  for (double e : result.errors) {
    result.mean += e;
    result.best = std::min(result.best, e);
    result.worst = std::max(result.worst, e);
  }
  result.mean /= static_cast<double>(result.errors.size());
  result.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

namespace {

struct TableRowDef {
  Task target;
  std::vector<Task> bases;
};

const std::vector<TableRowDef>& table2_rows() {
  using T = Task;
  static const std::vector<TableRowDef> rows = {
      {T::ang_crs, {T::ang_tri_ln, T::crs_ncrs, T::blt_srp, T::blt_srp_ln}},
      {T::ang_crs, {T::ang_tri_ln, T::ang_crs_ln, T::crs_ncrs, T::blt_srp_ln}},
      {T::ang_crs, {T::ang_tri_ln, T::crs_ncrs, T::blt_srp_ln, T::ang_crs_ln}},
      {T::ang_crs_ln, {T::ang_tri_ln, T::crs_ncrs, T::blt_srp_ln, T::ang_crs}},
      {T::ang_crs_ln, {T::ang_tri_ln, T::crs_ncrs, T::blt_srp, T::blt_srp_ln}},
      {T::blt_srp, {T::ang_crs, T::ang_tri_ln, T::crs_ncrs, T::blt_srp_ln}},
      {T::blt_srp, {T::ang_crs_ln, T::ang_tri_ln, T::crs_ncrs, T::ang_crs}},
      {T::blt_srp_ln, {T::ang_crs_ln, T::ang_tri_ln, T::crs_ncrs, T::ang_crs}},
      {T::blt_srp_ln, {T::ang_crs, T::ang_tri_ln, T::crs_ncrs, T::ang_crs_ln}},
  };
  return rows;
}

std::string condition_string(const TableRowDef& def) {
  std::string s = task_name(def.target);
  s += " (";
  for (size_t i = 0; i < def.bases.size(); ++i) {
    if (i) s += "+";
    s += task_name(def.bases[i]);
  }
  s += ")";
  return s;
}

ExperimentConfig scratch_config(Task task, const std::vector<int>& widths,
                                int train_size, int reps, uint64_t master) {
  ExperimentConfig cfg;
  cfg.mode = ExperimentConfig::Mode::scratch;
  cfg.task = task;
  cfg.net_spec = widths;
  cfg.train_size = train_size;
  cfg.test_size = kTestSize;
  cfg.repetitions = reps;
  cfg.master_seed = master;
  return cfg;
}

ExperimentConfig block_config(Task task, const BlockSpec& spec,
                              const std::vector<Task>& bases, int train_size,
                              int base_train_size, int reps, uint64_t master) {
  ExperimentConfig cfg;
  cfg.mode = ExperimentConfig::Mode::block;
  cfg.task = task;
  cfg.block_spec = spec;
  cfg.base_tasks = bases;
  cfg.train_size = train_size;
  cfg.base_train_size = base_train_size;
  cfg.test_size = kTestSize;
  cfg.repetitions = reps;
  cfg.master_seed = master;
  return cfg;
}

}  // namespace

TableResult run_table(int table_id, double scale, int repetitions,
                      uint64_t master_seed, RunContext& ctx) {
  if (table_id < 1 || table_id > 3) {
    fail(ErrorCode::invalid_argument, "run_table: table id must be 1, 2 or 3");
  }
  if (!(scale > 0.0) || scale > 1.0) {
    fail(ErrorCode::invalid_argument, "run_table: scale must be in (0, 1]");
  }
  const int scratch_n =
      std::max(2, static_cast<int>(std::lround(scale * kScratchFullTrainSize)));
  const int block_n =
      std::max(2, static_cast<int>(std::lround(scale * kBlockFullTrainSize)));

  TableResult table;
  table.table_id = table_id;
  table.scale = scale;

  if (table_id == 1) {
    table.arch_names = {"NN-200-100-50", "NN-60-40-20"};
    const std::vector<std::vector<int>> archs = {{200, 100, 50}, {60, 40, 20}};
    for (Task task : kAllTasks) {
      TableRow row;
      row.condition = task_name(task);
      for (const auto& widths : archs) {
        TableCell cell;
        cell.result = run_experiment(
            scratch_config(task, widths, scratch_n, repetitions, master_seed), ctx);
        row.cells.push_back(std::move(cell));
      }
      table.rows.push_back(std::move(row));
    }
    return table;
  }

  const BlockSpec ba_0_50_50{0, 50, 50};
  const BlockSpec ba_0_0_50{0, 0, 50};
  table.arch_names = {ba_0_50_50.name(), ba_0_0_50.name()};

  std::vector<TableRowDef> rows;
  if (table_id == 2) {
    rows = table2_rows();
  } else {
    for (Task task : kAllTasks) {
      TableRowDef def;
      def.target = task;
      for (Task other : kAllTasks) {
        if (other != task) def.bases.push_back(other);
      }
      rows.push_back(std::move(def));
    }
  }

  for (const TableRowDef& def : rows) {
    const ExperimentResult scratch_ref = run_experiment(
        scratch_config(def.target, {200, 100, 50}, scratch_n, repetitions,
                       master_seed),
        ctx);
    TableRow row;
    row.condition = condition_string(def);
    for (const BlockSpec& spec : {ba_0_50_50, ba_0_0_50}) {
      TableCell cell;
      cell.result = run_experiment(
          block_config(def.target, spec, def.bases, block_n, scratch_n,
                       repetitions, master_seed),
          ctx);
      cell.beats_scratch = cell.result.mean <= scratch_ref.mean;
      row.cells.push_back(std::move(cell));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

SweepResult run_fig3_sweep(const std::vector<int>& base_counts,
                           int samples_per_count, double scale, int repetitions,
                           uint64_t master_seed, RunContext& ctx) {
  if (base_counts.empty() || samples_per_count < 1) {
    fail(ErrorCode::invalid_argument, "run_fig3_sweep: need base counts and samples");
  }
  if (!(scale > 0.0) || scale > 1.0) {
    fail(ErrorCode::invalid_argument, "run_fig3_sweep: scale must be in (0, 1]");
  }
  for (int m : base_counts) {
    if (m < 1 || m > kTaskCount - 1) {
      fail(ErrorCode::invalid_argument,
           "run_fig3_sweep: base counts must be in 1.." +
               std::to_string(kTaskCount - 1));
    }
  }
  const int scratch_n =
      std::max(2, static_cast<int>(std::lround(scale * kScratchFullTrainSize)));
  const int block_n =
      std::max(2, static_cast<int>(std::lround(scale * kBlockFullTrainSize)));

  SweepResult sweep;
  sweep.scale = scale;
  const BlockSpec specs[2] = {BlockSpec{0, 50, 50}, BlockSpec{0, 0, 50}};

  for (int m : base_counts) {
    // All (sorted subset of size m, admissible target) pairs, then a seeded
    // shuffle picks the sample.
    std::vector<TableRowDef> pairs;
    std::vector<int> combo(m);
    const std::function<void(int, int)> enumerate = [&](int start, int depth) {
      if (depth == m) {
        for (int target = 0; target < kTaskCount; ++target) {
          if (std::find(combo.begin(), combo.end(), target) != combo.end()) continue;
          TableRowDef def;
          def.target = static_cast<Task>(target);
          for (int b : combo) def.bases.push_back(static_cast<Task>(b));
          pairs.push_back(std::move(def));
        }
        return;
      }
      for (int v = start; v < kTaskCount; ++v) {
        combo[depth] = v;
        enumerate(v + 1, depth + 1);
      }
    };
    enumerate(0, 0);

    Xoshiro256ss rng(mix_seed(master_seed, 0xF1630000ull + static_cast<uint64_t>(m)));
    for (size_t i = pairs.size(); i > 1; --i) {
      const size_t j = rng.next_below(i);
      std::swap(pairs[i - 1], pairs[j]);
    }
    int samples = samples_per_count;
    if (samples > static_cast<int>(pairs.size())) {
      std::fprintf(stderr,
                   "fig3: only %zu distinct (bases, task) pairs exist for m=%d; "
                   "reducing samples from %d\n",
                   pairs.size(), m, samples);
      samples = static_cast<int>(pairs.size());
    }

    SweepPoint point;
    point.num_bases = m;
    point.samples = samples;
    point.comparisons = 2 * samples;
    for (int s = 0; s < samples; ++s) {
      const TableRowDef& def = pairs[s];
      const ExperimentResult scratch_ref = run_experiment(
          scratch_config(def.target, {200, 100, 50}, scratch_n, repetitions,
                         master_seed),
          ctx);
      for (const BlockSpec& spec : specs) {
        const ExperimentResult blocked = run_experiment(
            block_config(def.target, spec, def.bases, block_n, scratch_n,
                         repetitions, master_seed),
            ctx);
        if (blocked.mean < scratch_ref.mean) ++point.wins;
      }
    }
    point.fraction = static_cast<double>(point.wins) / point.comparisons;
    sweep.points.push_back(point);
  }
  return sweep;
}

void emit_report(const Report& report, const std::string& csv_path) {
  if ((!report.table || report.table->rows.empty()) &&
      (!report.sweep || report.sweep->points.empty())) {
    fail(ErrorCode::invalid_argument, "emit_report: empty results");
  }

  const auto open = [](const std::string& p) {
    std::FILE* f = std::fopen(p.c_str(), "w");
    if (!f) fail(ErrorCode::io, "emit_report: cannot open " + p);
    return f;
  };

  if (report.table && !report.table->rows.empty()) {
    const TableResult& table = *report.table;
    std::FILE* f = open(csv_path);
    std::fprintf(f, "condition");
    const bool flags = table.table_id != 1;
    for (const auto& arch : table.arch_names) {
      std::fprintf(f, ",%s", arch.c_str());
      if (flags) std::fprintf(f, ",%s_beats_scratch", arch.c_str());
    }
    std::fprintf(f, "\n");
    for (const TableRow& row : table.rows) {
      std::fprintf(f, "%s", row.condition.c_str());
      for (const TableCell& cell : row.cells) {
        std::fprintf(f, ",%.1f(%.1f-%.1f)", cell.result.mean, cell.result.best,
                     cell.result.worst);
        if (flags) std::fprintf(f, ",%d", cell.beats_scratch ? 1 : 0);
      }
      std::fprintf(f, "\n");
    }
    std::fclose(f);
  }

  if (report.sweep && !report.sweep->points.empty()) {
    const SweepResult& sweep = *report.sweep;
    std::FILE* f = open(csv_path);
    std::fprintf(f, "num_bases,samples,comparisons,wins,outperform_pct\n");
    for (const SweepPoint& p : sweep.points) {
      std::fprintf(f, "%d,%d,%d,%d,%.1f\n", p.num_bases, p.samples, p.comparisons,
                   p.wins, 100.0 * p.fraction);
    }
    std::fclose(f);

    fs::path plot = csv_path;
    plot.replace_extension();
    plot += "_plot.dat";
    std::FILE* pf = open(plot.string());
    for (const SweepPoint& p : sweep.points) {
      std::fprintf(pf, "%d %.6f\n", p.num_bases, p.fraction);
    }
    std::fclose(pf);
  }
}

// --- verify suite ---------------------------------------------------------

namespace {

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

/// Central finite differences over every trainable parameter.
double max_gradcheck_err_network(Network& net, const std::vector<double>& batch,
                                 int n, const std::vector<uint8_t>& labels) {
  ForwardCache cache;
  const auto probs = forward(net, batch.data(), n, &cache);
  (void)probs;
  const Gradients grads = backward(net, cache, batch.data(), labels.data());

  const double h = 1e-5;
  double worst = 0.0;
  const auto loss_at = [&] {
    const auto p = forward(net, batch.data(), n);
    return mean_bce_loss(p, labels.data());
  };
  for (size_t l = 0; l < net.layers.size(); ++l) {
    if (net.layers[l].frozen) continue;
    auto check_param = [&](double& param, double analytic) {
      const double saved = param;
      param = saved + h;
      const double up = loss_at();
      param = saved - h;
      const double down = loss_at();
      param = saved;
      worst = std::max(worst, rel_err(analytic, (up - down) / (2.0 * h)));
    };
    for (size_t i = 0; i < net.layers[l].weights.size(); ++i) {
      check_param(net.layers[l].weights[i], grads.weights[l][i]);
    }
    for (size_t i = 0; i < net.layers[l].biases.size(); ++i) {
      check_param(net.layers[l].biases[i], grads.biases[l][i]);
    }
  }
  return worst;
}

double max_gradcheck_err_block(BlockNetwork& bnet, const std::vector<double>& batch,
                               int n, const std::vector<uint8_t>& labels) {
  BlockCache cache;
  forward_block(bnet, batch.data(), n, &cache);
  const Gradients grads = backward_block(bnet, cache, labels.data());

  const double h = 1e-5;
  double worst = 0.0;
  const auto loss_at = [&] {
    const auto p = forward_block(bnet, batch.data(), n);
    return mean_bce_loss(p, labels.data());
  };
  std::vector<DenseLayer*> layers;
  for (auto& l : bnet.block_layers) layers.push_back(&l);
  layers.push_back(&bnet.output);
  for (size_t l = 0; l < layers.size(); ++l) {
    auto check_param = [&](double& param, double analytic) {
      const double saved = param;
      param = saved + h;
      const double up = loss_at();
      param = saved - h;
      const double down = loss_at();
      param = saved;
      worst = std::max(worst, rel_err(analytic, (up - down) / (2.0 * h)));
    };
    for (size_t i = 0; i < layers[l]->weights.size(); ++i) {
      check_param(layers[l]->weights[i], grads.weights[l][i]);
    }
    for (size_t i = 0; i < layers[l]->biases.size(); ++i) {
      check_param(layers[l]->biases[i], grads.biases[l][i]);
    }
  }
  return worst;
}

bool report_check(const char* name, bool ok, const std::string& detail) {
  std::printf("[%s] %s%s%s\n", ok ? "PASS" : "FAIL", name,
              detail.empty() ? "" : ": ", detail.c_str());
  return ok;
}

}  // namespace

bool run_verify_suite(uint64_t seed) {
  bool all_ok = true;

  {
    Network nn = init_network(scratch_layer_specs(1024, {60, 40, 20}), seed);
    const bool ok_counts =
        param_count(nn) == 64781 &&
        block_param_count(BlockSpec{0, 50, 50}, 4) == 62651 &&
        block_param_count(BlockSpec{0, 50, 50}, 5) == 77651 &&
        block_param_count(BlockSpec{0, 0, 50}, 5) == 25101;
    all_ok &= report_check("parameter-count identities", ok_counts,
                           "NN-60-40-20=" + std::to_string(param_count(nn)));

    // Closed form vs an actual composition over the standard base family.
    bool ok_law = true;
    std::vector<Network> bases;
    for (int k = 0; k < 5 && ok_law; ++k) {
      bases.push_back(
          init_network(scratch_layer_specs(1024, {200, 100, 50}), seed + k));
      for (int h1 : {0, 1, 50}) {
        for (int h2 : {0, 1, 50}) {
          for (int h3 : {1, 50}) {
            const BlockSpec spec{h1, h2, h3};
            const BlockNetwork bnet = compose(bases, spec, seed);
            if (block_param_count(bnet) !=
                block_param_count(spec, static_cast<int>(bases.size()))) {
              ok_law = false;
            }
          }
        }
      }
    }
    all_ok &= report_check("parameter-count law (closed form vs composition)",
                           ok_law, "");
  }

  {
    // Freeze law on a toy composition.
    Xoshiro256ss rng(mix_seed(seed, 1));
    const int width = 12, n = 96;
    std::vector<Network> bases;
    for (int k = 0; k < 2; ++k) {
      bases.push_back(init_network(scratch_layer_specs(width, {8, 6, 4}),
                                   mix_seed(seed, 10 + k)));
    }
    std::vector<double> x(static_cast<size_t>(n) * width);
    std::vector<uint8_t> y(n);
    for (auto& v : x) v = rng.next_double();
    for (int i = 0; i < n; ++i) y[i] = static_cast<uint8_t>(rng.next_bool());
    BlockNetwork bnet = compose(bases, BlockSpec{0, 5, 4}, mix_seed(seed, 2));
    std::vector<uint64_t> before;
    for (const auto& b : bnet.bases) before.push_back(params_digest(b.layers));
    DataView data;
    data.n = n;
    data.width = width;
    data.dpixels = x.data();
    data.labels = y.data();
    TrainConfig tc;
    tc.max_epochs = 5;
    tc.batch_size = 16;
    tc.seed = mix_seed(seed, 3);
    train_block(bnet, data, tc);
    bool ok = true;
    for (size_t k = 0; k < bnet.bases.size(); ++k) {
      if (params_digest(bnet.bases[k].layers) != before[k]) ok = false;
    }
    all_ok &= report_check("freeze law (base digests unchanged by training)", ok, "");
  }

  {
    // Gradient spot checks.
    Xoshiro256ss rng(mix_seed(seed, 4));
    double worst = 0.0;
    for (int trial = 0; trial < 3; ++trial) {
      const int in = 5 + trial, n = 7;
      Network net = init_network(scratch_layer_specs(in, {6, 4}),
                                 mix_seed(seed, 20 + trial));
      std::vector<double> x(static_cast<size_t>(n) * in);
      std::vector<uint8_t> y(n);
      for (auto& v : x) v = rng.uniform(-1.0, 1.0);
      for (int i = 0; i < n; ++i) y[i] = static_cast<uint8_t>(rng.next_bool());
      worst = std::max(worst, max_gradcheck_err_network(net, x, n, y));
    }
    {
      const int in = 6, n = 5;
      std::vector<Network> bases;
      bases.push_back(init_network(scratch_layer_specs(in, {5, 4, 3}),
                                   mix_seed(seed, 30)));
      bases.push_back(init_network(scratch_layer_specs(in, {4, 3, 2}),
                                   mix_seed(seed, 31)));
      BlockNetwork bnet = compose(bases, BlockSpec{3, 3, 3}, mix_seed(seed, 32));
      std::vector<double> x(static_cast<size_t>(n) * in);
      std::vector<uint8_t> y(n);
      for (auto& v : x) v = rng.uniform(-1.0, 1.0);
      for (int i = 0; i < n; ++i) y[i] = static_cast<uint8_t>(rng.next_bool());
      worst = std::max(worst, max_gradcheck_err_block(bnet, x, n, y));
    }
    char detail[64];
    std::snprintf(detail, sizeof(detail), "max relative error %.3g", worst);
    all_ok &= report_check("gradient check (analytic vs central differences)",
                           worst < 1e-6, detail);
  }

  return all_ok;
}

}  // namespace bn
