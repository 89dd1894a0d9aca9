#include <gtest/gtest.h>

#include <cmath>

#include "condense/training.hpp"

using namespace condense;

namespace {

// Two Gaussian blobs in `features` dimensions, separated along every axis.
Dataset<float> blobs(std::size_t n, std::size_t features, std::uint64_t seed, double shift = 2.0) {
  Rng rng(seed);
  Dataset<float> d;
  d.inputs = Tensor({n, features});
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    d.labels.push_back(y);
    for (std::size_t f = 0; f < features; ++f) {
      d.inputs.at(i, f) = static_cast<float>(rng.normal() * 0.5 + (y ? shift : -shift) * 0.5);
    }
  }
  return d;
}

// Sequences whose label decides the sign of a drift on the first feature.
Dataset<float> drifting_sequences(std::size_t n, std::size_t steps, std::size_t features, std::uint64_t seed) {
  Rng rng(seed);
  Dataset<float> d;
  d.inputs = Tensor({n, steps, features});
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    d.labels.push_back(y);
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t f = 0; f < features; ++f) {
        const double drift = f == 0 ? (y ? 1.0 : -1.0) * static_cast<double>(t + 1) / static_cast<double>(steps) : 0.0;
        d.inputs.at(i, t, f) = static_cast<float>(drift + 0.3 * rng.normal());
      }
    }
  }
  return d;
}

}  // namespace

TEST(Bce, MatchesClosedForm) {
  const BasicTensor<double> p({2, 1}, {0.8, 0.3});
  const BasicTensor<double> y({2, 1}, {1.0, 0.0});
  const auto r = bce_loss(p, y);
  EXPECT_NEAR(r.loss, -(std::log(0.8) + std::log(0.7)) / 2.0, 1e-15);
  EXPECT_NEAR(r.grad[0], -1.0 / 0.8 / 2.0, 1e-15);
  EXPECT_NEAR(r.grad[1], 1.0 / 0.7 / 2.0, 1e-15);
}

TEST(Bce, ClampsExtremePredictions) {
  const BasicTensor<double> p({2, 1}, {0.0, 1.0});
  const BasicTensor<double> y({2, 1}, {1.0, 0.0});
  const auto r = bce_loss(p, y);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_NEAR(r.loss, -std::log(kPredictionClamp), 1e-9);
  EXPECT_TRUE(r.grad.all_finite());
}

TEST(Bce, RejectsBadLabelsAndShapes) {
  EXPECT_THROW(bce_loss(BasicTensor<double>({1, 1}, {0.5}), BasicTensor<double>({1, 1}, {0.5})), DataError);
  EXPECT_THROW(bce_loss(BasicTensor<double>({2, 1}), BasicTensor<double>({1, 1})), DimensionError);
}

TEST(Adam, TwoStepsMatchHandUnrolledUpdate) {
  BasicTensor<double> w({2}, {0.5, -1.0});
  const double g1[2] = {0.2, -0.4}, g2[2] = {-0.1, 0.3};
  AdamState<double> state;
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  adam_step<double>({&w}, {BasicTensor<double>({2}, {g1[0], g1[1]})}, state, cfg);
  adam_step<double>({&w}, {BasicTensor<double>({2}, {g2[0], g2[1]})}, state, cfg);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8, lr = 0.01;
  const double start[2] = {0.5, -1.0};
  for (int i = 0; i < 2; ++i) {
    const double m1 = (1 - b1) * g1[i], v1 = (1 - b2) * g1[i] * g1[i];
    const double x1 = start[i] - lr * (m1 / (1 - b1)) / (std::sqrt(v1 / (1 - b2)) + eps);
    const double m2 = b1 * m1 + (1 - b1) * g2[i], v2 = b2 * v1 + (1 - b2) * g2[i] * g2[i];
    const double x2 = x1 - lr * (m2 / (1 - b1 * b1)) / (std::sqrt(v2 / (1 - b2 * b2)) + eps);
    EXPECT_NEAR(w[i], x2, 1e-15);
  }
  EXPECT_EQ(state.step, 2u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  BasicTensor<double> w({3}, {0.0, 0.0, 0.0});
  AdamState<double> state;
  adam_step<double>({&w}, {BasicTensor<double>({3}, {5.0, -0.01, 100.0})}, state, AdamConfig{});
  EXPECT_NEAR(w[0], -0.001, 1e-9);
  EXPECT_NEAR(w[1], 0.001, 1e-9);
  EXPECT_NEAR(w[2], -0.001, 1e-9);
}

TEST(Adam, NonFiniteGradientNamesTensor) {
  BasicTensor<double> w({1}, {0.0});
  AdamState<double> state;
  try {
    adam_step<double>({&w}, {BasicTensor<double>({1}, {std::nan("")})}, state, AdamConfig{}, {"layer3.weight"});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer3.weight"), std::string::npos);
  }
}

TEST(Training, SeparableToyReachesLowLoss) {
  const auto train_set = blobs(200, 4, 1, 4.0);
  const auto test_set = blobs(100, 4, 2, 4.0);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 16;
  cfg.adam.learning_rate = 0.01;
  const auto r = train(init_model<float>(dnn_model_spec(4, {8}, 0.0f), 1), train_set, test_set, cfg);
  EXPECT_LT(r.logs.back().train_loss, 0.1);
  EXPECT_GT(r.logs.back().test_auroc, 0.99);
}

TEST(Training, LossDecreasesAcrossSeeds) {
  const auto train_set = blobs(120, 3, 5);
  const auto test_set = blobs(60, 3, 6);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = seed;
    cfg.adam.learning_rate = 0.01;
    const auto r = train(init_model<float>(dnn_model_spec(3, {6}, 0.2f), seed), train_set, test_set, cfg);
    EXPECT_LT(r.logs.back().train_loss, r.logs.front().train_loss) << "seed " << seed;
  }
}

TEST(Training, LstmLearnsDriftDirection) {
  const auto train_set = drifting_sequences(80, 5, 2, 3);
  const auto test_set = drifting_sequences(40, 5, 2, 4);
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.adam.learning_rate = 0.01;
  const auto r = train(init_model<float>(lstm_model_spec(2, {4}), 2), train_set, test_set, cfg);
  EXPECT_GT(r.logs.back().test_auroc, 0.95);
}

TEST(Training, IdenticalSeedsGiveIdenticalModels) {
  const auto train_set = drifting_sequences(30, 4, 3, 7);
  const auto test_set = drifting_sequences(10, 4, 3, 8);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 42;
  cfg.record_timing = false;
  const auto model = init_model<float>(lstm_model_spec(3, {4, 3}), 9);
  const auto a = train(model, train_set, test_set, cfg);
  const auto b = train(model, train_set, test_set, cfg);
  EXPECT_EQ(a.logs, b.logs);
  const auto pa = parameter_tensors(a.model), pb = parameter_tensors(b.model);
  for (std::size_t k = 0; k < pa.size(); ++k) EXPECT_EQ(*pa[k], *pb[k]);
  cfg.seed = 43;
  const auto c = train(model, train_set, test_set, cfg);
  EXPECT_NE(*parameter_tensors(c.model)[0], *pa[0]);
}

TEST(Training, PruneHookShrinksBaselineLstm) {
  Rng rng(1);
  Dataset<float> train_set{Tensor({6, 3, 76}), {0, 1, 0, 1, 0, 1}};
  for (float& v : train_set.inputs.data()) v = static_cast<float>(rng.normal());
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.prune_hook = PruneHook{0.5, 1};
  const auto r = train(init_model<float>(baseline_lstm_spec(), 1), train_set, train_set, cfg);
  ASSERT_TRUE(r.prune_report.has_value());
  EXPECT_EQ(param_count(r.model), 3273u);
  EXPECT_EQ(r.prune_report->total_before, 8081u);
  EXPECT_EQ(r.logs.size(), 2u);
}

TEST(Training, RejectsBadConfigAndMismatchedData) {
  const auto d = blobs(10, 3, 1);
  const auto m = init_model<float>(dnn_model_spec(3, {2}), 1);
  TrainConfig cfg;
  cfg.batch_size = 0;
  EXPECT_THROW(train(m, d, d, cfg), UsageError);
  cfg = TrainConfig{};
  cfg.prune_hook = PruneHook{1.0, 1};
  EXPECT_THROW(train(m, d, d, cfg), UsageError);
  EXPECT_THROW(train(init_model<float>(dnn_model_spec(4, {2}), 1), d, d, TrainConfig{}), DataError);
}

TEST(Training, NonFiniteValuesAbortWithLastGoodModel) {
  auto d = blobs(16, 2, 1);
  const auto model = init_model<float>(dnn_model_spec(2, {4}, 0.0f), 1);
  d.inputs[0] = std::numeric_limits<float>::infinity();
  try {
    train(model, d, blobs(8, 2, 2), TrainConfig{});
    FAIL() << "expected TrainingAborted";
  } catch (const TrainingAborted<float>& e) {
    EXPECT_TRUE(e.logs().empty());
    const auto a = parameter_tensors(e.last_good()), b = parameter_tensors(model);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(*a[k], *b[k]);
  }
}
