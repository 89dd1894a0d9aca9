#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "condense/condensation.hpp"
#include "condense/dataset.hpp"
#include "condense/metrics.hpp"
#include "condense/model.hpp"

namespace condense {

/// Predictions are clamped to [kPredictionClamp, 1 - kPredictionClamp] inside the loss.
inline constexpr double kPredictionClamp = 1e-7;

template <typename T>
struct LossResult {
  double loss = 0.0;
  BasicTensor<T> grad;  // d loss / d prediction, [batch x 1]
};

/// Mean binary cross-entropy. The gradient is taken at the clamped prediction.
template <typename T>
LossResult<T> bce_loss(const BasicTensor<T>& pred, const BasicTensor<T>& label) {
  if (pred.shape() != label.shape() || pred.rank() != 2 || pred.dim(1) != 1) {
    throw DimensionError("bce_loss expects matching [batch x 1] tensors, got " + shape_string(pred.shape()) +
                         " and " + shape_string(label.shape()));
  }
  const std::size_t n = pred.size();
  LossResult<T> out{0.0, BasicTensor<T>(pred.shape())};
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = static_cast<double>(label[i]);
    if (y != 0.0 && y != 1.0) throw DataError("bce_loss: label must be 0 or 1");
    const double p = std::clamp(static_cast<double>(pred[i]), kPredictionClamp, 1.0 - kPredictionClamp);
    sum += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
    out.grad[i] = static_cast<T>((-y / p + (1.0 - y) / (1.0 - p)) / static_cast<double>(n));
  }
  out.loss = sum / static_cast<double>(n);
  return out;
}

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<BasicTensor<T>> m;
  std::vector<BasicTensor<T>> v;
  std::uint64_t step = 0;  // number of updates applied
};

/// One bias-corrected Adam update. Moments start at zero on the first call.
/// `names` (optional) labels tensors in the non-finite gradient diagnostic.
template <typename T>
void adam_step(const std::vector<BasicTensor<T>*>& params, const std::vector<BasicTensor<T>>& grads,
               AdamState<T>& state, const AdamConfig& cfg, const std::vector<std::string>& names = {}) {
  if (params.size() != grads.size()) throw DimensionError("adam_step: parameter and gradient counts differ");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw DimensionError("adam_step: optimizer state does not match parameters");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->shape() != grads[k].shape() || state.m[k].shape() != grads[k].shape()) {
      throw DimensionError("adam_step: shape mismatch for tensor " + std::to_string(k));
    }
    if (!grads[k].all_finite()) {
      throw NumericError("non-finite gradient in " + (k < names.size() ? names[k] : "tensor " + std::to_string(k)));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k]->data();
    auto g = grads[k].data();
    auto m = state.m[k].data();
    auto v = state.v[k].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = cfg.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + cfg.epsilon);
      p[i] = static_cast<T>(static_cast<double>(p[i]) - update);
    }
  }
}

struct PruneHook {
  double fraction = 0.5;
  std::size_t after_epoch = 1;
};

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::optional<PruneHook> prune_hook;
  bool record_timing = true;
};

inline void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw UsageError("epochs must be at least 1");
  if (cfg.batch_size < 1) throw UsageError("batch size must be at least 1");
  if (!(cfg.adam.learning_rate > 0.0)) throw UsageError("learning rate must be positive");
  if (cfg.prune_hook) {
    if (!(cfg.prune_hook->fraction >= 0.0 && cfg.prune_hook->fraction < 1.0)) {
      throw UsageError("prune fraction must lie in [0, 1)");
    }
    if (cfg.prune_hook->after_epoch < 1 || cfg.prune_hook->after_epoch > cfg.epochs) {
      throw UsageError("prune epoch must lie in [1, epochs]");
    }
  }
}

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double test_auroc = std::numeric_limits<double>::quiet_NaN();  // NaN if the test set has one class
  double seconds = 0.0;

  friend bool operator==(const EpochLog& a, const EpochLog& b) {
    auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    return a.epoch == b.epoch && same(a.train_loss, b.train_loss) && same(a.test_auroc, b.test_auroc) &&
           same(a.seconds, b.seconds);
  }
};

template <typename T>
struct TrainResult {
  Model<T> model;
  std::vector<EpochLog> logs;
  std::optional<PruneReport> prune_report;
};

/// Raised when the loss or a gradient turns non-finite. Carries the model as
/// it was at the end of the last completed epoch.
template <typename T>
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, Model<T> last_good, std::vector<EpochLog> logs)
      : NumericError(what), last_good_(std::move(last_good)), logs_(std::move(logs)) {}

  const Model<T>& last_good() const { return last_good_; }
  const std::vector<EpochLog>& logs() const { return logs_; }

 private:
  Model<T> last_good_;
  std::vector<EpochLog> logs_;
};

template <typename T>
double dataset_auroc(const Model<T>& model, const Dataset<T>& data) {
  if (!data.has_both_classes()) return std::numeric_limits<double>::quiet_NaN();
  const auto scores = predict_scores(model, data);
  return auroc(std::span<const double>(scores), std::span<const int>(data.labels));
}

/// Mini-batch training with BCE and Adam.
///
/// The sample order is reshuffled every epoch from a stream reserved for
/// shuffling, and dropout masks come from a separate stream, so evaluation
/// never perturbs training randomness. A short final batch is kept. When a
/// prune hook is set, the model is pruned at the end of the given epoch and
/// the optimizer restarts from zero moments.
template <typename T>
TrainResult<T> train(Model<T> model, const Dataset<T>& train_set, const Dataset<T>& test_set,
                     const TrainConfig& cfg) {
  validate(cfg);
  validate(model);
  if (train_set.size() == 0 || test_set.size() == 0) throw DataError("training and test sets must be non-empty");
  for (const auto* d : {&train_set, &test_set}) {
    if (d->feature_width() != model.spec.input_width() || d->is_sequence() != model.spec.recurrent()) {
      throw DataError("dataset inputs " + shape_string(d->inputs.shape()) + " do not fit model input width " +
                      std::to_string(model.spec.input_width()));
    }
  }

  const Rng root(cfg.seed);
  Rng shuffle_rng = root.fork(streams::kShuffle);
  Rng dropout_rng = root.fork(streams::kDropout);
  AdamState<T> adam;
  TrainResult<T> result{model, {}, std::nullopt};
  Model<T> last_good = model;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::string> names;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    if (names.empty()) {
      for_each_parameter(model, [&](std::size_t layer, const char* role, const BasicTensor<T>&) {
        names.push_back(parameter_name(layer, role));
      });
    }
    double loss_sum = 0.0;
    try {
      for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
        const std::size_t e = std::min(order.size(), b + cfg.batch_size);
        const std::span<const std::size_t> idx(order.data() + b, e - b);
        const auto x = gather_rows(train_set.inputs, idx);
        BasicTensor<T> y({idx.size(), 1});
        for (std::size_t k = 0; k < idx.size(); ++k) y[k] = static_cast<T>(train_set.labels[idx[k]]);

        ForwardTrace<T> trace;
        const auto pred = forward(model, x, Mode::training, &dropout_rng, &trace);
        const auto loss = bce_loss(pred, y);
        if (!std::isfinite(loss.loss)) throw NumericError("loss became non-finite");
        loss_sum += loss.loss * static_cast<double>(idx.size());
        const auto grads = backward(model, trace, loss.grad);
        adam_step(parameter_tensors(model), grads, adam, cfg.adam, names);
      }
    } catch (const NumericError& err) {
      throw TrainingAborted<T>(std::string(err.what()) + " during epoch " + std::to_string(epoch), last_good,
                               result.logs);
    }

    if (cfg.prune_hook && cfg.prune_hook->after_epoch == epoch) {
      auto [pruned, report] = prune_model(model, cfg.prune_hook->fraction);
      model = std::move(pruned);
      result.prune_report = std::move(report);
      adam = AdamState<T>{};
      names.clear();
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(order.size());
    log.test_auroc = dataset_auroc(model, test_set);
    if (cfg.record_timing) {
      log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    result.logs.push_back(log);
    last_good = model;
  }
  result.model = std::move(model);
  return result;
}

}  // namespace condense
