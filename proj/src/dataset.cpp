#include "dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <thread>

#include "errors.hpp"

namespace bn {

namespace {

constexpr char kMagic[4] = {'B', 'N', 'D', 'S'};
constexpr uint16_t kFormatVersion = 1;
// Child stream index reserved for the label shuffle; example indices start
// at 0 and can never collide with it.
constexpr uint64_t kShuffleStream = 0xFFFFFFFFFFFFFFFFull;

void generate_example(Task task, int label, uint64_t stream_seed, uint8_t* out_pixels) {
  Xoshiro256ss rng(stream_seed);
  const StimulusSpec spec = gen_spec(task, label, rng);
  const Image img = rasterize(spec, rng);
  for (int j = 0; j < kPixelCount; ++j) {
    out_pixels[j] = static_cast<uint8_t>(std::lround(img.pixels[j] * 255.0));
  }
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put_u16(std::FILE* f, uint16_t v) {
  const uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
  std::fwrite(b, 1, 2, f);
}

void put_u64(std::FILE* f, uint64_t v) {
  uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
  std::fwrite(b, 1, 8, f);
}

bool get_bytes(std::FILE* f, void* out, size_t n) {
  return std::fread(out, 1, n, f) == n;
}

bool get_u16(std::FILE* f, uint16_t* v) {
  uint8_t b[2];
  if (!get_bytes(f, b, 2)) return false;
  *v = static_cast<uint16_t>(b[0] | (b[1] << 8));
  return true;
}

bool get_u64(std::FILE* f, uint64_t* v) {
  uint8_t b[8];
  if (!get_bytes(f, b, 8)) return false;
  uint64_t r = 0;
  for (int i = 7; i >= 0; --i) r = (r << 8) | b[i];
  *v = r;
  return true;
}

}  // namespace

void Dataset::fill_example(int i, double* out) const {
  const uint8_t* src = example(i);
  for (int j = 0; j < kPixelCount; ++j) out[j] = src[j] / 255.0;
}

Dataset build_dataset(Task task, int n, uint64_t seed, int threads) {
  if (n < 2) {
    fail(ErrorCode::invalid_argument, "build_dataset: need at least 2 examples");
  }
  Dataset ds;
  ds.task = task;
  ds.seed = seed;
  ds.labels.resize(n);
  for (int i = 0; i < n; ++i) ds.labels[i] = static_cast<uint8_t>(i % 2);

  // Fisher-Yates over the interleaved labels, on a dedicated child stream.
  Xoshiro256ss shuffle_rng(mix_seed(seed, kShuffleStream));
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(shuffle_rng.next_below(static_cast<uint64_t>(i) + 1));
    std::swap(ds.labels[i], ds.labels[j]);
  }

  ds.pixels.resize(static_cast<size_t>(n) * kPixelCount);
  const auto worker_range = [&](int begin, int end, std::string* err) {
    try {
      for (int i = begin; i < end; ++i) {
        generate_example(task, ds.labels[i], mix_seed(seed, static_cast<uint64_t>(i)),
                         ds.pixels.data() + static_cast<size_t>(i) * kPixelCount);
      }
    } catch (const Error& e) {
      *err = std::string(e.what()) + " (example range " + std::to_string(begin) +
             ".." + std::to_string(end) + ")";
    }
  };

  if (threads <= 1) {
    std::string err;
    worker_range(0, n, &err);
    if (!err.empty()) fail(ErrorCode::generation_failed, err);
    return ds;
  }

  const int nt = std::min<int>(threads, n);
  std::vector<std::string> errs(nt);
  std::vector<std::thread> pool;
  std::atomic<int> next_chunk{0};
  constexpr int kChunk = 256;
  const int chunks = (n + kChunk - 1) / kChunk;
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([&, t] {
      for (;;) {
        const int c = next_chunk.fetch_add(1);
        if (c >= chunks) return;
        worker_range(c * kChunk, std::min(n, (c + 1) * kChunk), &errs[t]);
        if (!errs[t].empty()) return;
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& err : errs) {
    if (!err.empty()) fail(ErrorCode::generation_failed, err);
  }
  return ds;
}

void write_dataset(const Dataset& ds, const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) fail(ErrorCode::io, "write_dataset: cannot open " + path);
  std::fwrite(kMagic, 1, 4, f.get());
  put_u16(f.get(), kFormatVersion);
  const uint8_t task_id = static_cast<uint8_t>(ds.task);
  std::fwrite(&task_id, 1, 1, f.get());
  put_u64(f.get(), static_cast<uint64_t>(ds.n()));
  put_u64(f.get(), ds.seed);
  for (int i = 0; i < ds.n(); ++i) {
    std::fwrite(&ds.labels[i], 1, 1, f.get());
    std::fwrite(ds.example(i), 1, kPixelCount, f.get());
  }
  if (std::ferror(f.get())) fail(ErrorCode::io, "write_dataset: write failed for " + path);
}

Dataset read_dataset(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) fail(ErrorCode::io, "read_dataset: cannot open " + path);

  char magic[4];
  if (!get_bytes(f.get(), magic, 4)) {
    fail(ErrorCode::truncated, "read_dataset: file shorter than header");
  }
  if (std::memcmp(magic, kMagic, 4) != 0) {
    fail(ErrorCode::bad_magic, "read_dataset: bad magic in " + path);
  }
  uint16_t version = 0;
  if (!get_u16(f.get(), &version)) {
    fail(ErrorCode::truncated, "read_dataset: file shorter than header");
  }
  if (version != kFormatVersion) {
    fail(ErrorCode::bad_version,
         "read_dataset: unsupported format version " + std::to_string(version));
  }
  uint8_t task_id = 0;
  uint64_t count = 0, seed = 0;
  if (!get_bytes(f.get(), &task_id, 1) || !get_u64(f.get(), &count) ||
      !get_u64(f.get(), &seed)) {
    fail(ErrorCode::truncated, "read_dataset: file shorter than header");
  }
  if (task_id >= kTaskCount) {
    fail(ErrorCode::bad_task, "read_dataset: unknown task id " + std::to_string(task_id));
  }

  Dataset ds;
  ds.task = static_cast<Task>(task_id);
  ds.seed = seed;
  ds.labels.resize(count);
  ds.pixels.resize(count * kPixelCount);
  for (uint64_t i = 0; i < count; ++i) {
    if (!get_bytes(f.get(), &ds.labels[i], 1) ||
        !get_bytes(f.get(), ds.pixels.data() + i * kPixelCount, kPixelCount)) {
      fail(ErrorCode::truncated,
           "read_dataset: truncated at example " + std::to_string(i));
    }
  }
  return ds;
}

}  // namespace bn
