#include "ldsa/training.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "json.hpp"

#include "ldsa/gradcheck.hpp"

namespace ldsa {

std::size_t ToyDataset::total_frames() const {
  std::size_t n = 0;
  for (const auto& l : labels) n += l.size();
  return n;
}

std::size_t toy_window_begin(std::size_t frame) { return 4 * frame; }

ToyDataset gen_toy_task(std::uint64_t seed, std::size_t n_utts, std::size_t t,
                        std::size_t feat_dim, std::size_t n_classes) {
  if (n_classes < 2) throw std::invalid_argument("gen_toy_task: need at least 2 classes");
  const std::size_t frames = frontend_out_len(t);
  Rng rng(seed);
  ToyDataset data;
  data.seed = seed;

  for (std::size_t k = 0; k < n_classes; ++k) {
    data.projections.push_back(rng.uniform_matrix(1, feat_dim, -1.0, 1.0));
  }
  // Center the projections across classes: for two classes this leaves an
  // opposite pair, so negating the inputs flips every label.
  for (std::size_t j = 0; j < feat_dim; ++j) {
    double mean = 0.0;
    for (const Matrix& p : data.projections) mean += p(0, j);
    mean /= static_cast<double>(n_classes);
    for (Matrix& p : data.projections) p(0, j) -= mean;
  }

  for (std::size_t u = 0; u < n_utts; ++u) {
    Matrix x = rng.uniform_matrix(t, feat_dim, -1.0, 1.0);
    std::vector<std::size_t> labels(frames);
    for (std::size_t f = 0; f < frames; ++f) {
      const std::size_t begin = toy_window_begin(f);
      double best = 0.0;
      std::size_t best_k = 0;
      for (std::size_t k = 0; k < n_classes; ++k) {
        double score = 0.0;
        for (std::size_t j = 0; j < feat_dim; ++j) {
          double mean = 0.0;
          for (std::size_t i = 0; i < kToyWindowLen; ++i) mean += x(begin + i, j);
          score += data.projections[k](0, j) * mean / static_cast<double>(kToyWindowLen);
        }
        if (k == 0 || score > best) {
          best = score;
          best_k = k;
        }
      }
      labels[f] = best_k;
    }
    data.inputs.push_back(std::move(x));
    data.labels.push_back(std::move(labels));
  }
  return data;
}

void ClassifierParams::visit(const ParamVisitor& f) {
  f("w", w);
  f("b", b);
}
void ClassifierParams::visit(const ConstParamVisitor& f) const {
  const_cast<ClassifierParams*>(this)->visit(
      [&f](const std::string& n, Matrix& m) { f(n, m); });
}

void OverfitModel::visit(const ParamVisitor& f) {
  encoder.visit(f);
  classifier.visit([&f](const std::string& n, Matrix& m) { f("classifier." + n, m); });
}
void OverfitModel::visit(const ConstParamVisitor& f) const {
  const_cast<OverfitModel*>(this)->visit(
      [&f](const std::string& n, Matrix& m) { f(n, m); });
}

namespace {

double dataset_accuracy(const OverfitModel& model, const EncoderConfig& cfg,
                        const ToyDataset& data) {
  std::size_t correct = 0, total = 0;
  for (std::size_t u = 0; u < data.inputs.size(); ++u) {
    const Matrix enc = encoder_forward(data.inputs[u], cfg, model.encoder);
    const Matrix logits = add_row_broadcast(matmul(enc, model.classifier.w), model.classifier.b);
    for (std::size_t t = 0; t < logits.rows; ++t) {
      std::size_t arg = 0;
      for (std::size_t k = 1; k < logits.cols; ++k)
        if (logits(t, k) > logits(t, arg)) arg = k;
      correct += arg == data.labels[u][t] ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace

TrainMetrics train_overfit(const EncoderConfig& cfg, const ToyDataset& data,
                           std::size_t steps, std::uint64_t seed, const TrainOptions& opts) {
  return train_overfit(cfg, data, steps, seed, opts, nullptr);
}

TrainMetrics train_overfit(const EncoderConfig& cfg, const ToyDataset& data,
                           std::size_t steps, std::uint64_t seed, const TrainOptions& opts,
                           OverfitModel* model_out) {
  cfg.validate();
  if (data.inputs.empty()) throw std::invalid_argument("train_overfit: dataset is empty");

  Rng rng(seed);
  OverfitModel model;
  model.encoder = init_encoder_params(cfg, rng, true);
  model.classifier.w = xavier_uniform_init(cfg.d, data.n_classes(), rng);
  model.classifier.b = Matrix(1, data.n_classes());

  AdamState adam;
  const NoamSchedule sched{cfg.d, opts.warmup, opts.lr_scale};

  TrainMetrics metrics;
  double accuracy = dataset_accuracy(model, cfg, data);
  metrics.final_accuracy = accuracy;

  const double inv_utts = 1.0 / static_cast<double>(data.inputs.size());
  for (std::size_t step = 1; step <= steps; ++step) {
    // Full-batch step: one step is one pass over the dataset, so the
    // recorded loss is the training loss of that epoch.
    OverfitModel grads = zeros_like(model);
    double loss = 0.0;
    for (std::size_t u = 0; u < data.inputs.size(); ++u) {
      const Matrix& x = data.inputs[u];
      const std::vector<std::size_t>& labels = data.labels[u];

      const Matrix enc = encoder_forward(x, cfg, model.encoder);
      if (enc.rows != labels.size()) {
        throw ShapeError("train_overfit: encoder produced " + std::to_string(enc.rows) +
                         " frames, dataset has " + std::to_string(labels.size()) + " labels");
      }
      const Matrix logits =
          add_row_broadcast(matmul(enc, model.classifier.w), model.classifier.b);
      const Matrix probs = row_softmax(logits);

      for (std::size_t t = 0; t < probs.rows; ++t)
        loss -= inv_utts / static_cast<double>(probs.rows) * std::log(probs(t, labels[t]));

      Matrix dlogits = probs;
      for (std::size_t t = 0; t < dlogits.rows; ++t) dlogits(t, labels[t]) -= 1.0;
      dlogits *= inv_utts / static_cast<double>(dlogits.rows);

      grads.classifier.w += matmul(transpose(enc), dlogits);
      grads.classifier.b += col_sum(dlogits);
      const Matrix denc = matmul(dlogits, transpose(model.classifier.w));
      encoder_backward(x, cfg, model.encoder, denc, grads.encoder);
    }
    if (!std::isfinite(loss)) {
      metrics.diverged = true;
      metrics.diverged_step = step;
      break;
    }

    const double lr = sched.lr(step);
    adam_step(model, grads, adam, lr);

    if (step % opts.eval_every == 0 || step == steps) {
      accuracy = dataset_accuracy(model, cfg, data);
    }
    metrics.steps.push_back({step, lr, loss, accuracy});
    metrics.final_loss = loss;
    metrics.final_accuracy = accuracy;
  }

  if (model_out != nullptr) *model_out = std::move(model);
  return metrics;
}

void write_metrics_csv(const TrainMetrics& m, std::ostream& out) {
  char buf[128];
  out << "step,lr,loss,accuracy\n";
  for (const StepRecord& r : m.steps) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", r.step, r.lr, r.loss,
                  r.accuracy);
    out << buf;
  }
}

namespace {

double dot_all(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

// Checks analytic gradients of every block of `params` for the loss
// <g_upstream, forward(params)> against central differences.
template <class P, class ForwardFn, class BackwardFn>
void check_param_blocks(const std::string& component, const P& params,
                        const ForwardFn& forward, const BackwardFn& backward,
                        double tolerance, const GradCheckOptions& opts,
                        std::vector<GradReport>& reports) {
  P analytic = zeros_like(params);
  backward(analytic);

  P work = params;
  auto work_slots = collect_params(work);
  auto analytic_slots = collect_params(analytic);

  for (std::size_t i = 0; i < work_slots.size(); ++i) {
    Matrix* target = work_slots[i].value;
    const Matrix original = *target;
    const auto f = [&](const Matrix& probe) {
      *target = probe;
      return forward(work);
    };
    const Matrix numeric = central_diff_grad(f, original, opts.fd_step);
    *target = original;

    Matrix a = *analytic_slots[i].value;
    if (component == opts.corrupt_component && work_slots[i].name == opts.corrupt_block) {
      a.data[0] += 1.0 + max_abs(a);
    }
    const double err = grad_rel_error(a, numeric);
    reports.push_back({component, work_slots[i].name, err, tolerance, err < tolerance});
  }
}

template <class P, class FwdY, class Bwd>
void check_attention_layer(const std::string& component, const Matrix& x, const P& params,
                           const Matrix& upstream, const FwdY& forward_y, const Bwd& backward,
                           const GradCheckOptions& opts, std::vector<GradReport>& reports) {
  // Parameter blocks.
  check_param_blocks(
      component, params,
      [&](const P& p) { return dot_all(upstream, forward_y(x, p)); },
      [&](P& grads) { backward(x, params, upstream, grads); }, opts.layer_tolerance, opts,
      reports);
  // Input gradient.
  P scratch = zeros_like(params);
  const Matrix dx = backward(x, params, upstream, scratch);
  const Matrix dx_num = central_diff_grad(
      [&](const Matrix& probe) { return dot_all(upstream, forward_y(probe, params)); }, x,
      opts.fd_step);
  double err = grad_rel_error(dx, dx_num);
  if (component == opts.corrupt_component && opts.corrupt_block == "x") err += 1.0;
  reports.push_back({component, "x", err, opts.layer_tolerance, err < opts.layer_tolerance});
}

}  // namespace

std::vector<GradReport> grad_check_suite(std::uint64_t seed, const GradCheckOptions& opts) {
  std::vector<GradReport> reports;
  const std::size_t t = 6, d = 8;

  for (std::size_t h : {std::size_t{1}, std::size_t{2}}) {
    const std::string suffix = "_h" + std::to_string(h);
    Rng rng(seed);
    const Matrix x = rng.uniform_matrix(t, d, -1.0, 1.0);
    const Matrix upstream = rng.uniform_matrix(t, d, -1.0, 1.0);

    {
      SaParams p = init_sa_params(d, h, rng);
      check_attention_layer(
          "sa" + suffix, x, p, upstream,
          [](const Matrix& in, const SaParams& pp) { return multihead_sa(in, pp, false).y; },
          [](const Matrix& in, const SaParams& pp, const Matrix& dy, SaParams& g) {
            return attention_backward(in, pp, dy, g);
          },
          opts, reports);
    }
    {
      DsaParams p = init_dsa_params(d, h, t + 2, rng);
      check_attention_layer(
          "dsa" + suffix, x, p, upstream,
          [](const Matrix& in, const DsaParams& pp) { return multihead_dsa(in, pp, false).y; },
          [](const Matrix& in, const DsaParams& pp, const Matrix& dy, DsaParams& g) {
            return attention_backward(in, pp, dy, g);
          },
          opts, reports);
    }
    {
      LdsaParams p = init_ldsa_params(d, h, 3, rng);
      check_attention_layer(
          "ldsa" + suffix, x, p, upstream,
          [](const Matrix& in, const LdsaParams& pp) { return ldsa_forward(in, pp, false).y; },
          [](const Matrix& in, const LdsaParams& pp, const Matrix& dy, LdsaParams& g) {
            return attention_backward(in, pp, dy, g);
          },
          opts, reports);
    }
  }

  if (opts.include_encoders) {
    for (Variant variant : {Variant::Sa, Variant::Dsa, Variant::Ldsa, Variant::Ha}) {
      EncoderConfig cfg;
      cfg.variant = variant;
      cfg.n_blocks = 1;
      cfg.d = 8;
      cfg.h = 2;
      cfg.c = 3;
      cfg.conv_kernel = 3;
      cfg.ffn_inner = 16;
      cfg.t_max = 8;
      cfg.feat_dim = 8;

      Rng rng(seed + 7);
      const Matrix features = rng.uniform_matrix(12, cfg.feat_dim, -1.0, 1.0);
      const std::size_t out_len = frontend_out_len(features.rows);
      const Matrix upstream = rng.uniform_matrix(out_len, cfg.d, -1.0, 1.0);
      const EncoderParams params = init_encoder_params(cfg, rng, true);

      check_param_blocks(
          "encoder_" + to_string(variant), params,
          [&](const EncoderParams& p) {
            return dot_all(upstream, encoder_forward(features, cfg, p));
          },
          [&](EncoderParams& grads) {
            encoder_backward(features, cfg, params, upstream, grads);
          },
          opts.block_tolerance, opts, reports);
    }
  }
  return reports;
}

std::string grad_reports_to_json(std::uint64_t seed, const std::vector<GradReport>& reports) {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  bool all = true;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const GradReport& r : reports) {
    all = all && r.pass;
    rows.push_back(nlohmann::ordered_json{{"component", r.component},
                                          {"block", r.block},
                                          {"max_rel_err", r.max_rel_err},
                                          {"tolerance", r.tolerance},
                                          {"pass", r.pass}});
  }
  j["all_pass"] = all;
  j["reports"] = std::move(rows);
  return j.dump(2) + "\n";
}

}  // namespace ldsa
