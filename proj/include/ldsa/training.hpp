#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ldsa/encoder.hpp"
#include "ldsa/optim.hpp"

namespace ldsa {

// Synthetic frame-classification corpus. Each utterance is a T x feat_dim
// feature matrix; each post-frontend frame carries a class label derived
// from the matching input window, so the task is solvable by local context.
struct ToyDataset {
  std::vector<Matrix> inputs;                // T x feat_dim each
  std::vector<std::vector<std::size_t>> labels;  // one label per post-frontend frame
  std::vector<Matrix> projections;           // n_classes fixed 1 x feat_dim vectors
  std::uint64_t seed = 0;

  std::size_t n_classes() const { return projections.size(); }
  std::size_t total_frames() const;
};

// The receptive field of post-frontend frame t: input frames [4t, 4t+6].
std::size_t toy_window_begin(std::size_t frame);
constexpr std::size_t kToyWindowLen = 7;

// label(t) = argmax_k p_k . mean(window(t)). The projection vectors are
// centered across classes, so with n_classes = 2 they are an opposite pair
// and labels flip when inputs are negated.
ToyDataset gen_toy_task(std::uint64_t seed, std::size_t n_utts, std::size_t t,
                        std::size_t feat_dim, std::size_t n_classes);

// Linear softmax head on top of the encoder output.
struct ClassifierParams {
  Matrix w, b;  // d x n_classes, 1 x n_classes
  void visit(const ParamVisitor& f);
  void visit(const ConstParamVisitor& f) const;
};

struct OverfitModel {
  EncoderParams encoder;
  ClassifierParams classifier;
  void visit(const ParamVisitor& f);
  void visit(const ConstParamVisitor& f) const;
};

struct TrainOptions {
  std::size_t warmup = 400;
  double lr_scale = 1.0;
  std::size_t eval_every = 50;  // training-set accuracy evaluation period
};

struct StepRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double accuracy = 0.0;  // most recent training-set evaluation
};

struct TrainMetrics {
  std::vector<StepRecord> steps;
  double final_loss = 0.0;
  double final_accuracy = 0.0;
  bool diverged = false;
  std::size_t diverged_step = 0;
};

// Trains encoder + classifier with cross-entropy, Adam and the Noam schedule.
// Each step takes one full-batch pass over the dataset, so the recorded loss
// is that epoch's training loss. Deterministic given (seed, config, steps).
TrainMetrics train_overfit(const EncoderConfig& cfg, const ToyDataset& data,
                           std::size_t steps, std::uint64_t seed,
                           const TrainOptions& opts = {});

// Returns the trained model too, for checkpointing from the CLI.
TrainMetrics train_overfit(const EncoderConfig& cfg, const ToyDataset& data,
                           std::size_t steps, std::uint64_t seed, const TrainOptions& opts,
                           OverfitModel* model_out);

void write_metrics_csv(const TrainMetrics& m, std::ostream& out);

// One finite-difference comparison: the worst relative error across a named
// parameter block, error = max|a - n| / max(||a||inf, ||n||inf, 1e-12).
struct GradReport {
  std::string component;  // e.g. "sa_h2" or "encoder_ldsa"
  std::string block;      // parameter name within the component
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct GradCheckOptions {
  double layer_tolerance = 1e-5;
  double block_tolerance = 1e-4;
  double fd_step = 1e-6;
  bool include_encoders = true;  // the full one-block encoder checks
  // Fault-injection hook for tests: corrupt this analytic gradient block
  // before comparing, so the report must flag it.
  std::string corrupt_component;
  std::string corrupt_block;
};

// Checks every parameter block of SA/DSA/LDSA layers (h = 1 and 2) and of
// full one-block encoders of all four variants against central differences.
std::vector<GradReport> grad_check_suite(std::uint64_t seed,
                                         const GradCheckOptions& opts = {});

std::string grad_reports_to_json(std::uint64_t seed, const std::vector<GradReport>& reports);

}  // namespace ldsa
