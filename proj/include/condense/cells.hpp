#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "condense/tensor.hpp"

namespace condense {

/// Gate block order inside every four-gate tensor: input, forget, cell, output.
namespace gate {
inline constexpr std::size_t kInput = 0;
inline constexpr std::size_t kForget = 1;
inline constexpr std::size_t kCell = 2;
inline constexpr std::size_t kOutput = 3;
inline constexpr std::size_t kCount = 4;
}  // namespace gate

template <typename T>
struct DenseParams {
  BasicTensor<T> weight;  // [in x out]
  BasicTensor<T> bias;    // [out]
};

/// Plain LSTM parameters; gate blocks are concatenated along the columns.
template <typename T>
struct LstmParams {
  BasicTensor<T> kernel;            // [in x 4u]
  BasicTensor<T> recurrent_kernel;  // [u x 4u]
  BasicTensor<T> bias;              // [4u]

  std::size_t input_dim() const { return kernel.dim(0); }
  std::size_t units() const { return recurrent_kernel.dim(0); }
};

/// Hidden-layer LSTM parameters. Each gate first maps [x, h] through a ReLU
/// layer of width hdim (input kernel plus hidden kernel, no bias), then
/// applies its own recurrent kernel and bias.
template <typename T>
struct HLstmParams {
  BasicTensor<T> kernel;            // [in x 4d]
  BasicTensor<T> hidden_kernel;     // [u x 4d]
  BasicTensor<T> recurrent_kernel;  // [4 x d x u]
  BasicTensor<T> bias;              // [4u]

  std::size_t input_dim() const { return kernel.dim(0); }
  std::size_t hdim() const { return recurrent_kernel.dim(1); }
  std::size_t units() const { return recurrent_kernel.dim(2); }
};

template <typename T>
struct LstmState {
  BasicTensor<T> h;  // [batch x units]
  BasicTensor<T> c;  // [batch x units]

  static LstmState zeros(std::size_t batch, std::size_t units) {
    return {BasicTensor<T>({batch, units}), BasicTensor<T>({batch, units})};
  }
};

/// Intermediates of one recurrent step, kept for the backward pass.
template <typename T>
struct CellCache {
  BasicTensor<T> x;
  BasicTensor<T> h_prev;
  BasicTensor<T> c_prev;
  BasicTensor<T> gates;       // post-activation, [batch x 4u]
  BasicTensor<T> tanh_c;      // [batch x u]
  BasicTensor<T> hidden_pre;  // hLSTM: x K + h H
  BasicTensor<T> hidden;      // hLSTM: ReLU(hidden_pre)
  std::vector<std::uint8_t> active;  // per row; empty means every row active
};

namespace detail {

template <typename T>
void check_state(const LstmState<T>& prev, std::size_t batch, std::size_t units) {
  if (prev.h.shape() != Shape{batch, units} || prev.c.shape() != Shape{batch, units}) {
    throw DimensionError("recurrent state " + shape_string(prev.h.shape()) + "/" +
                         shape_string(prev.c.shape()) + " does not match batch " +
                         std::to_string(batch) + " x units " + std::to_string(units));
  }
}

inline bool row_active(const std::vector<std::uint8_t>& active, std::size_t r) {
  return active.empty() || active[r] != 0;
}

/// Gate nonlinearities and the c/h update from pre-activations z [batch x 4u].
template <typename T>
LstmState<T> finish_step(const BasicTensor<T>& z, const LstmState<T>& prev,
                         const std::vector<std::uint8_t>& active, CellCache<T>* cache) {
  const std::size_t batch = z.dim(0);
  const std::size_t u = z.dim(1) / gate::kCount;
  BasicTensor<T> gates({batch, 4 * u});
  BasicTensor<T> tanh_c({batch, u});
  LstmState<T> next{prev.h, prev.c};
  for (std::size_t r = 0; r < batch; ++r) {
    if (!row_active(active, r)) continue;
    for (std::size_t j = 0; j < u; ++j) {
      const T ig = sigmoid(z.at(r, gate::kInput * u + j));
      const T fg = sigmoid(z.at(r, gate::kForget * u + j));
      const T gg = std::tanh(z.at(r, gate::kCell * u + j));
      const T og = sigmoid(z.at(r, gate::kOutput * u + j));
      const T c = fg * prev.c.at(r, j) + ig * gg;
      const T tc = std::tanh(c);
      gates.at(r, gate::kInput * u + j) = ig;
      gates.at(r, gate::kForget * u + j) = fg;
      gates.at(r, gate::kCell * u + j) = gg;
      gates.at(r, gate::kOutput * u + j) = og;
      tanh_c.at(r, j) = tc;
      next.c.at(r, j) = c;
      next.h.at(r, j) = og * tc;
    }
  }
  if (!next.c.all_finite() || !next.h.all_finite()) {
    throw NumericError("recurrent step produced a non-finite state");
  }
  if (cache) {
    cache->h_prev = prev.h;
    cache->c_prev = prev.c;
    cache->gates = std::move(gates);
    cache->tanh_c = std::move(tanh_c);
    cache->active = active;
  }
  return next;
}

/// Reverse of finish_step. Returns dz [batch x 4u]; writes the state
/// gradients that bypass the gates (carried rows and the forget path).
template <typename T>
BasicTensor<T> finish_step_backward(const CellCache<T>& cache, const BasicTensor<T>& dh,
                                    const BasicTensor<T>& dc, BasicTensor<T>& dh_prev_direct,
                                    BasicTensor<T>& dc_prev) {
  const std::size_t batch = dh.dim(0);
  const std::size_t u = dh.dim(1);
  BasicTensor<T> dz({batch, 4 * u});
  dh_prev_direct = BasicTensor<T>({batch, u});
  dc_prev = BasicTensor<T>({batch, u});
  for (std::size_t r = 0; r < batch; ++r) {
    if (!row_active(cache.active, r)) {
      for (std::size_t j = 0; j < u; ++j) {
        dh_prev_direct.at(r, j) = dh.at(r, j);
        dc_prev.at(r, j) = dc.at(r, j);
      }
      continue;
    }
    for (std::size_t j = 0; j < u; ++j) {
      const T ig = cache.gates.at(r, gate::kInput * u + j);
      const T fg = cache.gates.at(r, gate::kForget * u + j);
      const T gg = cache.gates.at(r, gate::kCell * u + j);
      const T og = cache.gates.at(r, gate::kOutput * u + j);
      const T tc = cache.tanh_c.at(r, j);
      const T dct = dc.at(r, j) + dh.at(r, j) * og * (T{1} - tc * tc);
      const T d_o = dh.at(r, j) * tc;
      const T d_i = dct * gg;
      const T d_g = dct * ig;
      const T d_f = dct * cache.c_prev.at(r, j);
      dc_prev.at(r, j) = dct * fg;
      dz.at(r, gate::kInput * u + j) = d_i * ig * (T{1} - ig);
      dz.at(r, gate::kForget * u + j) = d_f * fg * (T{1} - fg);
      dz.at(r, gate::kCell * u + j) = d_g * (T{1} - gg * gg);
      dz.at(r, gate::kOutput * u + j) = d_o * og * (T{1} - og);
    }
  }
  return dz;
}

template <typename T>
BasicTensor<T> lstm_preactivation(const LstmParams<T>& p, const BasicTensor<T>& x,
                                  const BasicTensor<T>& h) {
  if (x.rank() != 2 || x.dim(1) != p.input_dim()) {
    throw DimensionError("lstm input " + shape_string(x.shape()) + " does not match kernel " +
                         shape_string(p.kernel.shape()));
  }
  BasicTensor<T> z = matmul(x, p.kernel);
  accumulate(z, matmul(h, p.recurrent_kernel));
  add_row_vector(z, p.bias);
  return z;
}

/// hLSTM pre-activations. Per gate g: ReLU(x K_g + h H_g) R_g + b_g.
template <typename T>
BasicTensor<T> hlstm_preactivation(const HLstmParams<T>& p, const BasicTensor<T>& x,
                                   const BasicTensor<T>& h, BasicTensor<T>& hidden_pre,
                                   BasicTensor<T>& hidden) {
  if (x.rank() != 2 || x.dim(1) != p.input_dim()) {
    throw DimensionError("hlstm input " + shape_string(x.shape()) + " does not match kernel " +
                         shape_string(p.kernel.shape()));
  }
  const std::size_t batch = x.dim(0), d = p.hdim(), u = p.units();
  hidden_pre = matmul(x, p.kernel);
  accumulate(hidden_pre, matmul(h, p.hidden_kernel));
  hidden = activation(hidden_pre, Activation::relu);
  BasicTensor<T> z({batch, 4 * u});
  for (std::size_t r = 0; r < batch; ++r) {
    for (std::size_t g = 0; g < gate::kCount; ++g) {
      T* zrow = &z.at(r, g * u);
      for (std::size_t q = 0; q < d; ++q) {
        const T a = hidden.at(r, g * d + q);
        const T* rrow = &p.recurrent_kernel.at(g, q, 0);
        for (std::size_t j = 0; j < u; ++j) zrow[j] += a * rrow[j];
      }
    }
  }
  add_row_vector(z, p.bias);
  return z;
}

}  // namespace detail

/// One plain LSTM step:
///   i, f, o = sigmoid(.), g = tanh(.) over x W + h U + b
///   c_t = f * c_{t-1} + i * g,  h_t = o * tanh(c_t)
template <typename T>
LstmState<T> lstm_step(const LstmParams<T>& params, const BasicTensor<T>& x_t,
                       const LstmState<T>& prev) {
  detail::check_state(prev, x_t.rank() == 2 ? x_t.dim(0) : 0, params.units());
  const auto z = detail::lstm_preactivation(params, x_t, prev.h);
  return detail::finish_step<T>(z, prev, {}, nullptr);
}

/// One hidden-layer LSTM step (same state update as lstm_step).
template <typename T>
LstmState<T> hlstm_step(const HLstmParams<T>& params, const BasicTensor<T>& x_t,
                        const LstmState<T>& prev) {
  detail::check_state(prev, x_t.rank() == 2 ? x_t.dim(0) : 0, params.units());
  BasicTensor<T> hidden_pre, hidden;
  const auto z = detail::hlstm_preactivation(params, x_t, prev.h, hidden_pre, hidden);
  return detail::finish_step<T>(z, prev, {}, nullptr);
}

}  // namespace condense
