#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stimulus.hpp"

namespace bn {

/// Labeled image collection for one task. Pixels are stored 8-bit quantized
/// (round(v*255)), exactly as the on-disk format keeps them, so an in-memory
/// dataset and its file round-trip are byte-identical. Training consumes
/// de-quantized v/255 values.
struct Dataset {
  Task task = Task::ang_crs;
  uint64_t seed = 0;
  std::vector<uint8_t> labels;  // one entry per example
  std::vector<uint8_t> pixels;  // kPixelCount bytes per example, row-major

  int n() const { return static_cast<int>(labels.size()); }
  const uint8_t* example(int i) const { return pixels.data() + static_cast<size_t>(i) * kPixelCount; }
  /// De-quantizes example i into out[0..1023].
  void fill_example(int i, double* out) const;
};

/// Generates a class-balanced dataset: ceil(n/2) label-0 and floor(n/2)
/// label-1 examples, label order shuffled under the seed. Example i is drawn
/// from its own child stream mix_seed(seed, i), so any parallel schedule
/// produces the identical dataset. threads <= 1 runs sequentially.
Dataset build_dataset(Task task, int n, uint64_t seed, int threads = 1);

/// "BNDS" container: magic, format version u16 LE, task id u8, example count
/// u64 LE, seed u64 LE, then per example a label byte and 1024 pixel bytes.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace bn
