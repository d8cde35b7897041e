#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>
#include <sstream>

#include "ldsa/training.hpp"

using namespace ldsa;

namespace {

EncoderConfig tiny_config(Variant v) {
  EncoderConfig cfg;
  cfg.variant = v;
  cfg.n_blocks = 2;
  cfg.d = 16;
  cfg.h = 2;
  cfg.c = 5;
  cfg.conv_kernel = 5;
  cfg.ffn_inner = 64;
  cfg.t_max = 16;
  cfg.feat_dim = 8;
  return cfg;
}

// Independent labeler: same rule as the generator, different loop structure.
std::size_t relabel(const Matrix& x, const std::vector<Matrix>& projections,
                    std::size_t frame) {
  const std::size_t feat_dim = x.cols;
  std::vector<double> mean(feat_dim, 0.0);
  for (std::size_t i = 0; i < kToyWindowLen; ++i)
    for (std::size_t j = 0; j < feat_dim; ++j)
      mean[j] += x(toy_window_begin(frame) + i, j) / static_cast<double>(kToyWindowLen);
  std::size_t best_k = 0;
  double best = -1e300;
  for (std::size_t k = 0; k < projections.size(); ++k) {
    double score = 0.0;
    for (std::size_t j = 0; j < feat_dim; ++j) score += projections[k](0, j) * mean[j];
    if (score > best) {
      best = score;
      best_k = k;
    }
  }
  return best_k;
}

}  // namespace

TEST_CASE("noam_lr branch crossover, closed form and first step") {
  // Both branches coincide at step == warmup.
  const double at_warmup = noam_lr(25000, 320, 25000, 1.0);
  CHECK(at_warmup == doctest::Approx(1.0 / (std::sqrt(320.0) * std::sqrt(25000.0))).epsilon(1e-15));
  CHECK(at_warmup == doctest::Approx(3.536e-4).epsilon(1e-3));

  const double first = noam_lr(1, 320, 25000, 1.0);
  CHECK(first == doctest::Approx(std::pow(320.0, -0.5) * std::pow(25000.0, -1.5)).epsilon(1e-15));
}

TEST_CASE("noam_lr is continuous at warmup, rising before and falling after") {
  const std::size_t warmup = 100;
  double prev = 0.0;
  for (std::size_t step = 1; step <= warmup; ++step) {
    const double lr = noam_lr(step, 64, warmup, 1.0);
    CHECK(lr > prev);
    prev = lr;
  }
  for (std::size_t step = warmup + 1; step <= 3 * warmup; ++step) {
    const double lr = noam_lr(step, 64, warmup, 1.0);
    CHECK(lr < prev);
    prev = lr;
  }
  // Continuity: the two branch formulas meet at step == warmup.
  const double left = static_cast<double>(warmup) * std::pow(warmup, -1.5);
  const double right = std::pow(warmup, -0.5);
  CHECK(left == doctest::Approx(right).epsilon(1e-15));
  CHECK_THROWS_AS(noam_lr(0, 64, warmup, 1.0), std::invalid_argument);
}

TEST_CASE("adam with zero gradients never changes parameters") {
  ClassifierParams p;
  Rng rng(1);
  p.w = rng.uniform_matrix(3, 4, -1.0, 1.0);
  p.b = rng.uniform_matrix(1, 4, -1.0, 1.0);
  const ClassifierParams before = p;
  ClassifierParams zero_grads = zeros_like(p);
  AdamState state;
  for (int i = 0; i < 5; ++i) adam_step(p, zero_grads, state, 0.1);
  CHECK(max_abs_diff(p.w, before.w) == 0.0);
  CHECK(max_abs_diff(p.b, before.b) == 0.0);
  CHECK(state.step == 5);
}

TEST_CASE("adam single step from zero state matches the hand-evaluated update") {
  Matrix param(1, 1);
  param(0, 0) = 0.3;
  Matrix grad(1, 1);
  grad(0, 0) = -0.2;
  Matrix m(1, 1), v(1, 1);
  const double lr = 0.01, beta1 = 0.9, beta2 = 0.98, eps = 1e-9;
  adam_update(param, grad, m, v, 1, lr, beta1, beta2, eps);
  // Bias correction cancels on the first step: delta = -lr * g / (|g| + eps).
  const double expected = 0.3 - lr * (-0.2) / (0.2 + eps);
  CHECK(param(0, 0) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(m(0, 0) == doctest::Approx((1.0 - beta1) * -0.2).epsilon(1e-15));
  CHECK(v(0, 0) == doctest::Approx((1.0 - beta2) * 0.04).epsilon(1e-15));
}

TEST_CASE("adam per-step update approaches lr with a constant gradient") {
  Matrix param(1, 1);
  Matrix grad(1, 1);
  grad(0, 0) = 0.7;
  Matrix m(1, 1), v(1, 1);
  const double lr = 0.01;
  double prev = 0.0;
  double delta = 0.0;
  for (std::size_t step = 1; step <= 5000; ++step) {
    adam_update(param, grad, m, v, step, lr, 0.9, 0.98, 1e-9);
    delta = param(0, 0) - prev;
    prev = param(0, 0);
  }
  CHECK(std::fabs(delta) == doctest::Approx(lr).epsilon(1e-2));
  CHECK(delta < 0.0);  // moves against the gradient
}

TEST_CASE("gen_toy_task is deterministic and labels match the independent rule") {
  const ToyDataset a = gen_toy_task(7, 5, 20, 8, 4);
  const ToyDataset b = gen_toy_task(7, 5, 20, 8, 4);
  REQUIRE(a.inputs.size() == 5);
  CHECK(a.total_frames() == 5 * frontend_out_len(20));
  for (std::size_t u = 0; u < 5; ++u) {
    CHECK(max_abs_diff(a.inputs[u], b.inputs[u]) == 0.0);
    CHECK(a.labels[u] == b.labels[u]);
    for (std::size_t f = 0; f < a.labels[u].size(); ++f) {
      CHECK(a.labels[u][f] == relabel(a.inputs[u], a.projections, f));
    }
  }
}

TEST_CASE("two-class labels flip under input negation") {
  const ToyDataset data = gen_toy_task(11, 6, 20, 8, 2);
  // Centered two-class projections are an opposite pair.
  CHECK(max_abs(data.projections[0] + data.projections[1]) < 1e-15);
  for (std::size_t u = 0; u < data.inputs.size(); ++u) {
    const Matrix negated = data.inputs[u] * -1.0;
    for (std::size_t f = 0; f < data.labels[u].size(); ++f) {
      CHECK(relabel(negated, data.projections, f) == 1 - data.labels[u][f]);
    }
  }
}

TEST_CASE("untrained model sits near chance level") {
  const EncoderConfig cfg = tiny_config(Variant::Ldsa);
  const ToyDataset data = gen_toy_task(7, 50, 20, cfg.feat_dim, 4);
  const TrainMetrics m = train_overfit(cfg, data, 0, 1);
  CHECK(m.steps.empty());
  CHECK(m.final_accuracy > 0.05);
  CHECK(m.final_accuracy < 0.5);
}

TEST_CASE("ldsa overfits a separable two-class task within 300 steps") {
  const EncoderConfig cfg = tiny_config(Variant::Ldsa);
  const ToyDataset data = gen_toy_task(7, 10, 20, cfg.feat_dim, 2);
  TrainOptions opts;
  opts.warmup = 100;
  opts.eval_every = 25;
  const TrainMetrics m = train_overfit(cfg, data, 300, 1, opts);
  CHECK_FALSE(m.diverged);
  CHECK(m.final_accuracy >= 0.99);

  // Healthy-run shape: the 10-step moving average of the loss never rises.
  std::vector<double> ma;
  for (std::size_t i = 9; i < m.steps.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = i - 9; j <= i; ++j) s += m.steps[j].loss;
    ma.push_back(s / 10.0);
  }
  for (std::size_t i = 1; i < ma.size(); ++i) CHECK(ma[i] <= ma[i - 1] + 1e-12);
}

TEST_CASE("training is bit-reproducible for one seed") {
  const EncoderConfig cfg = tiny_config(Variant::Ha);
  const ToyDataset data = gen_toy_task(3, 8, 20, cfg.feat_dim, 3);
  TrainOptions opts;
  opts.warmup = 50;
  const TrainMetrics a = train_overfit(cfg, data, 40, 5, opts);
  const TrainMetrics b = train_overfit(cfg, data, 40, 5, opts);
  REQUIRE(a.steps.size() == b.steps.size());
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    CHECK(a.steps[i].loss == b.steps[i].loss);
    CHECK(a.steps[i].lr == b.steps[i].lr);
    CHECK(a.steps[i].accuracy == b.steps[i].accuracy);
  }
}

TEST_CASE("divergence is reported with its step index") {
  const EncoderConfig cfg = tiny_config(Variant::Ldsa);
  const ToyDataset data = gen_toy_task(7, 10, 20, cfg.feat_dim, 4);
  TrainOptions opts;
  opts.warmup = 10;
  opts.lr_scale = 1e8;
  const TrainMetrics m = train_overfit(cfg, data, 100, 1, opts);
  CHECK(m.diverged);
  CHECK(m.diverged_step >= 1);
  CHECK(m.diverged_step <= 100);
}

TEST_CASE("metrics csv has the documented columns") {
  const EncoderConfig cfg = tiny_config(Variant::Ldsa);
  const ToyDataset data = gen_toy_task(7, 4, 20, cfg.feat_dim, 2);
  TrainOptions opts;
  opts.warmup = 10;
  const TrainMetrics m = train_overfit(cfg, data, 5, 1, opts);
  std::stringstream ss;
  write_metrics_csv(m, ss);
  std::string header;
  std::getline(ss, header);
  CHECK(header == "step,lr,loss,accuracy");
  std::size_t rows = 0;
  std::string line;
  while (std::getline(ss, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 5);
}

TEST_CASE("grad_check_suite passes everywhere at its tolerances") {
  const std::vector<GradReport> reports = grad_check_suite(123);
  CHECK(reports.size() > 40);
  std::set<std::string> components;
  for (const GradReport& r : reports) {
    components.insert(r.component);
    INFO(r.component, "/", r.block, " err=", r.max_rel_err);
    CHECK(r.pass);
    CHECK(r.max_rel_err < r.tolerance);
  }
  // Layer checks for both head counts plus all four one-block encoders.
  for (const char* want :
       {"sa_h1", "sa_h2", "dsa_h1", "dsa_h2", "ldsa_h1", "ldsa_h2", "encoder_sa",
        "encoder_dsa", "encoder_ldsa", "encoder_ha"}) {
    CHECK(components.count(want) == 1);
  }
}

TEST_CASE("grad_check_suite flags a corrupted gradient block") {
  GradCheckOptions opts;
  opts.include_encoders = false;
  opts.corrupt_component = "dsa_h2";
  opts.corrupt_block = "w2_1";
  const std::vector<GradReport> reports = grad_check_suite(123, opts);
  bool saw_corrupted = false;
  for (const GradReport& r : reports) {
    if (r.component == opts.corrupt_component && r.block == opts.corrupt_block) {
      saw_corrupted = true;
      CHECK_FALSE(r.pass);
    } else {
      CHECK(r.pass);
    }
  }
  CHECK(saw_corrupted);
}

TEST_CASE("grad_check_suite is deterministic per seed") {
  GradCheckOptions opts;
  opts.include_encoders = false;
  const auto a = grad_check_suite(9, opts);
  const auto b = grad_check_suite(9, opts);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].component == b[i].component);
    CHECK(a[i].block == b[i].block);
    CHECK(a[i].max_rel_err == b[i].max_rel_err);
  }
}

TEST_CASE("grad reports serialize to stable json") {
  GradCheckOptions opts;
  opts.include_encoders = false;
  const auto reports = grad_check_suite(9, opts);
  const std::string a = grad_reports_to_json(9, reports);
  const std::string b = grad_reports_to_json(9, reports);
  CHECK(a == b);
  CHECK(a.find("\"all_pass\": true") != std::string::npos);
}
