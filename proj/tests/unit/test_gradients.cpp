#include <gtest/gtest.h>

#include "support/oracles.hpp"

using namespace condense;

namespace {

void check_spec(const ModelSpec& spec, std::size_t steps) {
  std::size_t checked = 0, kinks = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto c = oracle::make_grad_case(spec, seed, 2, steps);
    const auto r = oracle::check_gradients(c, 1000 + seed);
    EXPECT_LT(r.worst, 1e-4) << "seed " << seed;
    EXPECT_GT(r.checked, 0u);
    checked += r.checked;
    kinks += r.kinks;
  }
  // Kink crossings are rare; a systematic mismatch would not hide behind them.
  EXPECT_LE(kinks * 100, checked) << kinks << " of " << checked + kinks << " coordinates straddle a ReLU kink";
}

}  // namespace

TEST(Gradients, DenseMatchesFiniteDifferences) { check_spec(dnn_model_spec(3, {3, 2}, 0.5f), 0); }

TEST(Gradients, SingleLayerLstmMatchesFiniteDifferences) { check_spec(lstm_model_spec(2, {3}), 4); }

TEST(Gradients, StackedLstmMatchesFiniteDifferences) { check_spec(lstm_model_spec(2, {3, 2}), 4); }

TEST(Gradients, HLstmMatchesFiniteDifferences) { check_spec(hlstm_model_spec(2, 3, 2), 4); }

TEST(Gradients, KinkDetectionFlagsStraddledRelu) {
  // hLSTM seed 9 has a hidden pre-activation within 1e-5 of zero.
  const auto c = oracle::make_grad_case(hlstm_model_spec(2, 3, 2), 9, 2, 4);
  const auto r = oracle::check_gradients(c, 1009);
  EXPECT_GT(r.kinks, 0u);
  EXPECT_LT(r.worst, 1e-4);
}

TEST(Gradients, BackwardWithoutForwardRaises) {
  const auto m = init_model<double>(dnn_model_spec(2, {2}), 1);
  EXPECT_THROW(backward(m, ForwardTrace<double>{}, BasicTensor<double>({1, 1})), ModelError);
}

TEST(Gradients, OrderMatchesCanonicalParameterOrder) {
  const auto c = oracle::make_grad_case(hlstm_model_spec(2, 3, 2), 3, 2, 3);
  Rng rng(1);
  ForwardTrace<double> trace;
  const auto pred = forward(c.model, c.x, Mode::training, &rng, &trace);
  const auto grads = backward(c.model, trace, bce_loss(pred, c.y).grad);
  const auto params = parameter_tensors(c.model);
  ASSERT_EQ(grads.size(), params.size());
  for (std::size_t k = 0; k < grads.size(); ++k) EXPECT_EQ(grads[k].shape(), params[k]->shape());
}
