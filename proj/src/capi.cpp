#include "blocknet/blocknet.h"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "block.hpp"
#include "dataset.hpp"
#include "errors.hpp"
#include "harness.hpp"
#include "network.hpp"

namespace {

thread_local std::string g_last_error;

bn_status code_of(bn::ErrorCode code) {
  switch (code) {
    case bn::ErrorCode::invalid_argument: return BN_ERR_INVALID_ARGUMENT;
    case bn::ErrorCode::io: return BN_ERR_IO;
    case bn::ErrorCode::bad_magic: return BN_ERR_BAD_MAGIC;
    case bn::ErrorCode::bad_version: return BN_ERR_BAD_VERSION;
    case bn::ErrorCode::truncated: return BN_ERR_TRUNCATED;
    case bn::ErrorCode::bad_task: return BN_ERR_BAD_TASK;
    case bn::ErrorCode::generation_failed: return BN_ERR_GENERATION_FAILED;
    case bn::ErrorCode::diverged: return BN_ERR_DIVERGED;
    case bn::ErrorCode::digest_mismatch: return BN_ERR_DIGEST_MISMATCH;
  }
  return BN_ERR_UNKNOWN;
}

template <typename Fn>
bn_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const bn::Error& e) {
    g_last_error = e.what();
    return code_of(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return BN_ERR_UNKNOWN;
  } catch (...) {
    g_last_error = "unknown error";
    return BN_ERR_UNKNOWN;
  }
}

}  // namespace

struct bn_dataset {
  bn::Dataset ds;
};

struct bn_model {
  std::variant<bn::Network, bn::BlockNetwork> model;
};

extern "C" {

const char* bn_status_name(bn_status status) {
  switch (status) {
    case BN_OK: return "ok";
    case BN_ERR_INVALID_ARGUMENT: return "invalid argument";
    case BN_ERR_IO: return "io error";
    case BN_ERR_BAD_MAGIC: return "bad magic";
    case BN_ERR_BAD_VERSION: return "bad version";
    case BN_ERR_TRUNCATED: return "truncated file";
    case BN_ERR_BAD_TASK: return "bad task id";
    case BN_ERR_GENERATION_FAILED: return "generation failed";
    case BN_ERR_DIVERGED: return "training diverged";
    case BN_ERR_DIGEST_MISMATCH: return "base model digest mismatch";
    case BN_ERR_VERIFY_FAILED: return "verification failed";
    case BN_ERR_UNKNOWN: return "unknown error";
  }
  return "unknown status";
}

const char* bn_last_error(void) { return g_last_error.c_str(); }

bn_status bn_dataset_generate(const char* task, uint64_t n, uint64_t seed,
                              int threads, bn_dataset** out) {
  return guarded([&]() -> bn_status {
    if (!task || !out) {
      g_last_error = "null argument";
      return BN_ERR_INVALID_ARGUMENT;
    }
    const auto t = bn::task_from_name(task);
    if (!t) {
      g_last_error = std::string("unknown task: ") + task;
      return BN_ERR_INVALID_ARGUMENT;
    }
    auto* handle = new bn_dataset{
        bn::build_dataset(*t, static_cast<int>(n), seed, threads)};
    *out = handle;
    return BN_OK;
  });
}

bn_status bn_dataset_write(const bn_dataset* ds, const char* path) {
  return guarded([&]() -> bn_status {
    if (!ds || !path) {
      g_last_error = "null argument";
      return BN_ERR_INVALID_ARGUMENT;
    }
    bn::write_dataset(ds->ds, path);
    return BN_OK;
  });
}

bn_status bn_dataset_read(const char* path, bn_dataset** out) {
  return guarded([&]() -> bn_status {
    if (!path || !out) {
      g_last_error = "null argument";
      return BN_ERR_INVALID_ARGUMENT;
    }
    *out = new bn_dataset{bn::read_dataset(path)};
    return BN_OK;
  });
}

uint64_t bn_dataset_size(const bn_dataset* ds) {
  return ds ? static_cast<uint64_t>(ds->ds.n()) : 0;
}

const char* bn_dataset_task(const bn_dataset* ds) {
  return ds ? bn::task_name(ds->ds.task) : "";
}

void bn_dataset_free(bn_dataset* ds) { delete ds; }

bn_status bn_model_load(const char* path, bn_model** out) {
  return guarded([&]() -> bn_status {
    if (!path || !out) {
      g_last_error = "null argument";
      return BN_ERR_INVALID_ARGUMENT;
    }
    std::FILE* f = std::fopen(path, "rb");
    if (!f) {
      g_last_error = std::string("cannot open ") + path;
      return BN_ERR_IO;
    }
    char magic[4] = {0, 0, 0, 0};
    const size_t got = std::fread(magic, 1, 4, f);
    std::fclose(f);
    if (got != 4) {
      g_last_error = "file shorter than header";
      return BN_ERR_TRUNCATED;
    }
    auto* handle = new bn_model{};
    if (std::memcmp(magic, "BNBM", 4) == 0) {
      handle->model = bn::load_block_model(path);
    } else {
      handle->model = bn::load_model(path);
    }
    *out = handle;
    return BN_OK;
  });
}

int64_t bn_model_param_count(const bn_model* model) {
  if (!model) return 0;
  if (const auto* net = std::get_if<bn::Network>(&model->model)) {
    return bn::param_count(*net);
  }
  return bn::block_param_count(std::get<bn::BlockNetwork>(model->model));
}

bn_status bn_model_evaluate(const bn_model* model, const bn_dataset* ds,
                            double* error_pct) {
  return guarded([&]() -> bn_status {
    if (!model || !ds || !error_pct) {
      g_last_error = "null argument";
      return BN_ERR_INVALID_ARGUMENT;
    }
    const bn::DataView data = bn::view(ds->ds);
    if (const auto* net = std::get_if<bn::Network>(&model->model)) {
      *error_pct = bn::evaluate(*net, data);
    } else {
      *error_pct = bn::evaluate_block(std::get<bn::BlockNetwork>(model->model), data);
    }
    return BN_OK;
  });
}

void bn_model_free(bn_model* model) { delete model; }

bn_status bn_cmd_train(const char* config_path, const char* out_dir, int threads,
                       double summary[4]) {
  return guarded([&]() -> bn_status {
    if (!config_path || !out_dir) {
      g_last_error = "null argument";
      return BN_ERR_INVALID_ARGUMENT;
    }
    const bn::ExperimentConfig cfg = bn::parse_config_file(config_path);
    bn::RunContext ctx;
    ctx.out_dir = out_dir;
    ctx.threads = threads;
    ctx.save_models = true;
    const bn::ExperimentResult result = bn::run_experiment(cfg, ctx);
    if (summary) {
      summary[0] = result.mean;
      summary[1] = result.best;
      summary[2] = result.worst;
      summary[3] = static_cast<double>(result.trainable_params);
    }
    return BN_OK;
  });
}

bn_status bn_cmd_table(int table_id, double scale, int repetitions,
                       uint64_t master_seed, const char* out_dir, int threads) {
  return guarded([&]() -> bn_status {
    if (!out_dir) {
      g_last_error = "null argument";
      return BN_ERR_INVALID_ARGUMENT;
    }
    bn::RunContext ctx;
    ctx.out_dir = out_dir;
    ctx.threads = threads;
    std::filesystem::create_directories(out_dir);
    bn::Report report;
    report.table = bn::run_table(table_id, scale, repetitions, master_seed, ctx);
    const std::string csv = (std::filesystem::path(out_dir) /
                             ("table" + std::to_string(table_id) + ".csv"))
                                .string();
    bn::emit_report(report, csv);
    return BN_OK;
  });
}

bn_status bn_cmd_fig3(const char* base_counts, int samples_per_count, double scale,
                      int repetitions, uint64_t master_seed, const char* out_dir,
                      int threads) {
  return guarded([&]() -> bn_status {
    if (!base_counts || !out_dir) {
      g_last_error = "null argument";
      return BN_ERR_INVALID_ARGUMENT;
    }
    std::vector<int> counts;
    std::string token;
    for (const char* p = base_counts;; ++p) {
      if (*p == ',' || *p == '\0') {
        if (!token.empty()) {
          counts.push_back(std::atoi(token.c_str()));
          token.clear();
        }
        if (*p == '\0') break;
      } else {
        token.push_back(*p);
      }
    }
    bn::RunContext ctx;
    ctx.out_dir = out_dir;
    ctx.threads = threads;
    std::filesystem::create_directories(out_dir);
    bn::Report report;
    report.sweep = bn::run_fig3_sweep(counts, samples_per_count, scale,
                                      repetitions, master_seed, ctx);
    const std::string csv =
        (std::filesystem::path(out_dir) / "fig3.csv").string();
    bn::emit_report(report, csv);
    return BN_OK;
  });
}

bn_status bn_cmd_verify(uint64_t seed) {
  return guarded([&]() -> bn_status {
    if (!bn::run_verify_suite(seed)) {
      g_last_error = "one or more verification checks failed";
      return BN_ERR_VERIFY_FAILED;
    }
    return BN_OK;
  });
}

}  // extern "C"
