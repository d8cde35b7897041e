#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "ldsa/bench.hpp"

using namespace ldsa;

namespace {

std::vector<BenchRecord> synthetic(const std::vector<std::size_t>& ts, double k, double power,
                                   const std::vector<double>& noise = {}) {
  std::vector<BenchRecord> records;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    BenchRecord r;
    r.variant = "sa";
    r.t = ts[i];
    r.repetitions = 5;
    r.median_seconds = k * std::pow(static_cast<double>(ts[i]), power);
    if (!noise.empty()) r.median_seconds *= noise[i];
    records.push_back(r);
  }
  return records;
}

}  // namespace

TEST_CASE("fit_loglog_slope recovers exact power laws") {
  const std::vector<std::size_t> ts = {64, 128, 256, 512, 1024};
  const SlopeFit quad = fit_loglog_slope(synthetic(ts, 3e-9, 2.0));
  CHECK(quad.slope == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(quad.r2 == doctest::Approx(1.0).epsilon(1e-12));

  const SlopeFit lin = fit_loglog_slope(synthetic(ts, 2e-7, 1.0));
  CHECK(lin.slope == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("fit_loglog_slope tolerates multiplicative noise") {
  const std::vector<std::size_t> ts = {64, 128, 256, 512, 1024, 2048};
  const std::vector<double> noise = {1.01, 0.99, 1.012, 0.988, 1.008, 0.995};
  const SlopeFit fit = fit_loglog_slope(synthetic(ts, 1e-8, 1.5, noise));
  CHECK(fit.slope > 1.4);
  CHECK(fit.slope < 1.6);
}

TEST_CASE("fit_loglog_slope refuses degenerate inputs") {
  CHECK_THROWS_AS(fit_loglog_slope(synthetic({256}, 1e-8, 2.0)), std::invalid_argument);
  CHECK_THROWS_AS(fit_loglog_slope(synthetic({256, 512, 1024}, 1e-8, 2.0)),
                  std::invalid_argument);
  // Repeats of one T do not count as distinct.
  CHECK_THROWS_AS(fit_loglog_slope(synthetic({256, 256, 512, 1024}, 1e-8, 2.0)),
                  std::invalid_argument);
  auto bad = synthetic({64, 128, 256, 512}, 1e-8, 2.0);
  bad[2].median_seconds = 0.0;
  CHECK_THROWS_AS(fit_loglog_slope(bad), std::invalid_argument);
}

TEST_CASE("bench csv round-trips records exactly") {
  BenchOptions opts;
  opts.d = 32;
  opts.h = 2;
  opts.c = 3;
  opts.conv_kernel = 3;
  opts.ffn_inner = 64;
  opts.reps = 5;
  const std::vector<BenchRecord> records = bench_runtime(Variant::Ldsa, {16, 32}, opts);
  REQUIRE(records.size() == 2);
  CHECK(records[0].variant == "ldsa");
  CHECK(records[0].t == 16);
  CHECK(records[0].median_seconds > 0.0);

  std::stringstream ss;
  write_bench_csv(records, ss);
  std::string header;
  std::getline(ss, header);
  CHECK(header == "variant,T,c,d,h,repetitions,median_seconds,mad_seconds");

  std::stringstream ss2;
  write_bench_csv(records, ss2);
  const std::vector<BenchRecord> back = read_bench_csv(ss2);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].variant == records[i].variant);
    CHECK(back[i].t == records[i].t);
    CHECK(back[i].c == records[i].c);
    CHECK(back[i].d == records[i].d);
    CHECK(back[i].h == records[i].h);
    CHECK(back[i].repetitions == records[i].repetitions);
    CHECK(back[i].median_seconds == records[i].median_seconds);
    CHECK(back[i].mad_seconds == records[i].mad_seconds);
  }
}

TEST_CASE("bench rejects too few repetitions and empty grids") {
  BenchOptions opts;
  opts.reps = 4;
  CHECK_THROWS_AS(bench_runtime(Variant::Sa, {16}, opts), std::invalid_argument);
  opts.reps = 5;
  CHECK_THROWS_AS(bench_runtime(Variant::Sa, {}, opts), std::invalid_argument);
}

TEST_CASE("sweep reports the context-width parameter totals") {
  BenchOptions opts;
  opts.d = 320;
  opts.h = 4;
  opts.reps = 5;
  const std::vector<SweepRow> rows = sweep_context_width({15, 31}, opts, 64);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].w2_weights == 4800);
  CHECK(rows[1].w2_weights == 9920);
  CHECK(rows[0].attention_weights == 3 * 320 * 320 + 4800);
  CHECK(rows[1].attention_weights == 3 * 320 * 320 + 9920);
  CHECK(rows[0].median_seconds > 0.0);

  std::stringstream ss;
  write_sweep_csv(rows, ss);
  std::string header;
  std::getline(ss, header);
  CHECK(header == "c,w2_weights,attention_weights,median_seconds,mad_seconds");
}

TEST_CASE("sweep rejects even context widths") {
  BenchOptions opts;
  CHECK_THROWS_AS(sweep_context_width({15, 16}, opts, 64), ShapeError);
}

TEST_CASE("sweep with width one runs and weights are all one") {
  BenchOptions opts;
  opts.d = 16;
  opts.h = 2;
  const std::vector<SweepRow> rows = sweep_context_width({1}, opts, 32);
  CHECK(rows[0].w2_weights == 16);

  Rng rng(1);
  LdsaParams p = init_ldsa_params(16, 2, 1, rng);
  const AttentionOutput out = ldsa_forward(rng.uniform_matrix(32, 16, -1.0, 1.0), p);
  for (const Matrix& w : out.weights)
    for (double v : w.data) CHECK(v == 1.0);
}

TEST_CASE("ldsa runtime grows with the context width") {
  // At small d the window terms dominate, so the effect clears timing noise.
  BenchOptions opts;
  opts.d = 64;
  opts.h = 2;
  opts.reps = 9;
  const std::vector<SweepRow> rows = sweep_context_width({1, 31, 63}, opts, 1024);
  REQUIRE(rows.size() == 3);
  // Nondecreasing within a noise allowance between neighbours, and the
  // endpoints must separate cleanly.
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(rows[i].median_seconds > 0.8 * rows[i - 1].median_seconds);
  }
  CHECK(rows[2].median_seconds > rows[0].median_seconds);
}

TEST_CASE("full-block timing covers every variant") {
  BenchOptions opts;
  opts.d = 32;
  opts.h = 2;
  opts.c = 3;
  opts.conv_kernel = 3;
  opts.ffn_inner = 64;
  opts.reps = 5;
  opts.full_block = true;
  for (Variant v : {Variant::Sa, Variant::Dsa, Variant::Ldsa, Variant::Ha}) {
    const std::vector<BenchRecord> records = bench_runtime(v, {16, 32}, opts);
    REQUIRE(records.size() == 2);
    for (const BenchRecord& r : records) CHECK(r.median_seconds > 0.0);
  }
}
