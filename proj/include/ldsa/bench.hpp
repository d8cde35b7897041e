#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "ldsa/attention.hpp"
#include "ldsa/encoder.hpp"

namespace ldsa {

// One timed configuration: median and median-absolute-deviation of
// `repetitions` runs, taken after 2 untimed warmups on a monotone clock.
struct BenchRecord {
  std::string variant;
  std::size_t t = 0;
  std::size_t c = 0;
  std::size_t d = 0;
  std::size_t h = 0;
  std::size_t repetitions = 0;
  double median_seconds = 0.0;
  double mad_seconds = 0.0;
};

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

struct BenchOptions {
  std::size_t d = 320;
  std::size_t h = 4;
  std::size_t c = 31;
  std::size_t conv_kernel = 15;
  std::size_t ffn_inner = 1280;
  std::size_t reps = 5;      // timed runs per T (>= 5)
  std::uint64_t seed = 1;
  bool full_block = false;   // time a whole encoder block instead of the
                             // attention layer alone
};

constexpr std::size_t kBenchWarmups = 2;

// Times single-layer forward passes of the given variant on random inputs,
// one record per T. The HA mechanism is timed as SA followed by LDSA; with
// full_block set, whole encoder blocks are timed instead. DSA capacity is
// sized to the largest requested T.
std::vector<BenchRecord> bench_runtime(Variant variant, const std::vector<std::size_t>& t_list,
                                       const BenchOptions& opts);

// Ordinary least squares of log(median_seconds) against log(T). Requires at
// least 4 records with distinct T and positive times.
SlopeFit fit_loglog_slope(const std::vector<BenchRecord>& records);

struct SweepRow {
  std::size_t c = 0;
  std::size_t w2_weights = 0;         // total LDSA w2 entries: d * c
  std::size_t attention_weights = 0;  // full LDSA layer weight total
  double median_seconds = 0.0;
  double mad_seconds = 0.0;
};

// Per context width: LDSA parameter totals and runtime at fixed T.
std::vector<SweepRow> sweep_context_width(const std::vector<std::size_t>& c_list,
                                          const BenchOptions& opts, std::size_t t);

void write_bench_csv(const std::vector<BenchRecord>& records, std::ostream& out);
std::vector<BenchRecord> read_bench_csv(std::istream& in);
void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);

}  // namespace ldsa
