#include "ldsa/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace ldsa {

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mad_of(const std::vector<double>& v, double median) {
  std::vector<double> dev;
  dev.reserve(v.size());
  for (double x : v) dev.push_back(std::fabs(x - median));
  return median_of(std::move(dev));
}

// Keeps the timed forward from being optimized away.
volatile double g_sink = 0.0;

template <class Fn>
std::pair<double, double> time_runs(const Fn& run, std::size_t reps) {
  using clock = std::chrono::steady_clock;
  for (std::size_t i = 0; i < kBenchWarmups; ++i) g_sink = g_sink + run();
  std::vector<double> seconds;
  seconds.reserve(reps);
  for (std::size_t i = 0; i < reps; ++i) {
    const auto start = clock::now();
    g_sink = g_sink + run();
    const auto stop = clock::now();
    seconds.push_back(std::chrono::duration<double>(stop - start).count());
  }
  const double med = median_of(seconds);
  return {med, mad_of(seconds, med)};
}

}  // namespace

std::vector<BenchRecord> bench_runtime(Variant variant, const std::vector<std::size_t>& t_list,
                                       const BenchOptions& opts) {
  if (t_list.empty()) throw std::invalid_argument("bench_runtime: empty T list");
  if (opts.reps < 5) throw std::invalid_argument("bench_runtime: need at least 5 repetitions");
  const std::size_t t_cap = *std::max_element(t_list.begin(), t_list.end());

  Rng rng(opts.seed);
  std::vector<BenchRecord> records;

  if (opts.full_block) {
    EncoderConfig cfg;
    cfg.variant = variant;
    cfg.n_blocks = 1;
    cfg.d = opts.d;
    cfg.h = opts.h;
    cfg.c = opts.c;
    cfg.conv_kernel = opts.conv_kernel;
    cfg.ffn_inner = opts.ffn_inner;
    cfg.t_max = t_cap;
    const BlockParams block = init_block_params(cfg, rng);
    for (std::size_t t : t_list) {
      const Matrix x = rng.uniform_matrix(t, opts.d, -1.0, 1.0);
      auto [med, mad] = time_runs(
          [&]() { return encoder_block_forward(x, variant, block)(0, 0); }, opts.reps);
      records.push_back({to_string(variant), t, opts.c, opts.d, opts.h, opts.reps, med, mad});
    }
    return records;
  }

  SaParams sa;
  DsaParams dsa;
  LdsaParams ldsa;
  switch (variant) {
    case Variant::Sa:
      sa = init_sa_params(opts.d, opts.h, rng);
      break;
    case Variant::Dsa:
      dsa = init_dsa_params(opts.d, opts.h, t_cap, rng);
      break;
    case Variant::Ldsa:
      ldsa = init_ldsa_params(opts.d, opts.h, opts.c, rng);
      break;
    case Variant::Ha:
      sa = init_sa_params(opts.d, opts.h, rng);
      ldsa = init_ldsa_params(opts.d, opts.h, opts.c, rng);
      break;
  }

  for (std::size_t t : t_list) {
    const Matrix x = rng.uniform_matrix(t, opts.d, -1.0, 1.0);
    std::pair<double, double> timing;
    switch (variant) {
      case Variant::Sa:
        timing = time_runs([&]() { return multihead_sa(x, sa, false).y(0, 0); }, opts.reps);
        break;
      case Variant::Dsa:
        timing = time_runs([&]() { return multihead_dsa(x, dsa, false).y(0, 0); }, opts.reps);
        break;
      case Variant::Ldsa:
        timing = time_runs([&]() { return ldsa_forward(x, ldsa, false).y(0, 0); }, opts.reps);
        break;
      case Variant::Ha:
        // Tandem: SA output feeds the local attention.
        timing = time_runs(
            [&]() { return ldsa_forward(multihead_sa(x, sa, false).y, ldsa, false).y(0, 0); },
            opts.reps);
        break;
    }
    records.push_back(
        {to_string(variant), t, opts.c, opts.d, opts.h, opts.reps, timing.first, timing.second});
  }
  return records;
}

SlopeFit fit_loglog_slope(const std::vector<BenchRecord>& records) {
  std::vector<double> xs, ys;
  for (const BenchRecord& r : records) {
    if (r.median_seconds <= 0.0) {
      throw std::invalid_argument("fit_loglog_slope: nonpositive time for T=" +
                                  std::to_string(r.t));
    }
    xs.push_back(std::log(static_cast<double>(r.t)));
    ys.push_back(std::log(r.median_seconds));
  }
  std::vector<double> distinct = xs;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 4) {
    throw std::invalid_argument("fit_loglog_slope: need >= 4 distinct T values, got " +
                                std::to_string(distinct.size()));
  }

  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (fit.intercept + fit.slope * xs[i]);
    ss_res += e * e;
  }
  fit.r2 = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
  return fit;
}

std::vector<SweepRow> sweep_context_width(const std::vector<std::size_t>& c_list,
                                          const BenchOptions& opts, std::size_t t) {
  std::vector<SweepRow> rows;
  for (std::size_t c : c_list) {
    if (c % 2 == 0 || c == 0) {
      throw ShapeError("sweep_context_width: context width must be odd, got " +
                       std::to_string(c));
    }
    BenchOptions o = opts;
    o.c = c;
    const ParamTable table = count_attention_params(Variant::Ldsa, opts.d, opts.h, c);
    std::size_t w2 = 0;
    for (const ParamEntry& e : table.entries)
      if (e.name.rfind("w2_", 0) == 0) w2 += e.count();
    const std::vector<BenchRecord> rec = bench_runtime(Variant::Ldsa, {t}, o);
    rows.push_back({c, w2, table.total_weights(), rec[0].median_seconds, rec[0].mad_seconds});
  }
  return rows;
}

void write_bench_csv(const std::vector<BenchRecord>& records, std::ostream& out) {
  out << "variant,T,c,d,h,repetitions,median_seconds,mad_seconds\n";
  char buf[160];
  for (const BenchRecord& r : records) {
    std::snprintf(buf, sizeof(buf), "%s,%zu,%zu,%zu,%zu,%zu,%.17g,%.17g\n", r.variant.c_str(),
                  r.t, r.c, r.d, r.h, r.repetitions, r.median_seconds, r.mad_seconds);
    out << buf;
  }
}

std::vector<BenchRecord> read_bench_csv(std::istream& in) {
  std::vector<BenchRecord> records;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      continue;  // header
    }
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) {
      throw std::invalid_argument("read_bench_csv: expected 8 columns, got " +
                                  std::to_string(cells.size()));
    }
    BenchRecord r;
    r.variant = cells[0];
    r.t = std::stoull(cells[1]);
    r.c = std::stoull(cells[2]);
    r.d = std::stoull(cells[3]);
    r.h = std::stoull(cells[4]);
    r.repetitions = std::stoull(cells[5]);
    r.median_seconds = std::stod(cells[6]);
    r.mad_seconds = std::stod(cells[7]);
    records.push_back(std::move(r));
  }
  return records;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "c,w2_weights,attention_weights,median_seconds,mad_seconds\n";
  char buf[160];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%zu,%zu,%zu,%.17g,%.17g\n", r.c, r.w2_weights,
                  r.attention_weights, r.median_seconds, r.mad_seconds);
    out << buf;
  }
}

}  // namespace ldsa
