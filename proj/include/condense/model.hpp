#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "condense/cells.hpp"
#include "condense/model_spec.hpp"
#include "condense/rng.hpp"
#include "condense/tensor.hpp"

namespace condense {

template <typename T>
using LayerParams = std::variant<std::monostate, DenseParams<T>, LstmParams<T>, HLstmParams<T>>;

/// A ModelSpec with bound parameter tensors, one LayerParams per layer.
template <typename T>
struct Model {
  ModelSpec spec;
  std::vector<LayerParams<T>> params;
};

/// Role names and shapes of a layer's parameter tensors, in canonical order.
inline std::vector<std::pair<std::string, Shape>> parameter_shapes(const LayerSpec& l) {
  const std::size_t in = l.input_width, u = l.units, d = l.hdim;
  switch (l.kind) {
    case LayerKind::dense: return {{"weight", {in, u}}, {"bias", {u}}};
    case LayerKind::lstm:
      return {{"kernel", {in, 4 * u}}, {"recurrent_kernel", {u, 4 * u}}, {"bias", {4 * u}}};
    case LayerKind::hlstm:
      return {{"kernel", {in, 4 * d}},
              {"hidden_kernel", {u, 4 * d}},
              {"recurrent_kernel", {4, d, u}},
              {"bias", {4 * u}}};
    case LayerKind::masking:
    case LayerKind::dropout: return {};
  }
  return {};
}

inline std::string parameter_name(std::size_t layer, const std::string& role) {
  return "layer" + std::to_string(layer) + "." + role;
}

/// Visits every parameter tensor in canonical order:
/// fn(layer_index, role, tensor).
template <typename M, typename Fn>
void for_each_parameter(M& model, Fn&& fn) {
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    std::visit(
        [&](auto& p) {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, std::monostate>) {
          } else if constexpr (requires { p.weight; }) {
            fn(i, "weight", p.weight);
            fn(i, "bias", p.bias);
          } else if constexpr (requires { p.hidden_kernel; }) {
            fn(i, "kernel", p.kernel);
            fn(i, "hidden_kernel", p.hidden_kernel);
            fn(i, "recurrent_kernel", p.recurrent_kernel);
            fn(i, "bias", p.bias);
          } else {
            fn(i, "kernel", p.kernel);
            fn(i, "recurrent_kernel", p.recurrent_kernel);
            fn(i, "bias", p.bias);
          }
        },
        model.params[i]);
  }
}

template <typename T>
std::vector<BasicTensor<T>*> parameter_tensors(Model<T>& model) {
  std::vector<BasicTensor<T>*> out;
  for_each_parameter(model, [&](std::size_t, const char*, BasicTensor<T>& t) { out.push_back(&t); });
  return out;
}

template <typename T>
std::vector<const BasicTensor<T>*> parameter_tensors(const Model<T>& model) {
  std::vector<const BasicTensor<T>*> out;
  for_each_parameter(model, [&](std::size_t, const char*, const BasicTensor<T>& t) { out.push_back(&t); });
  return out;
}

template <typename T>
std::size_t param_count(const Model<T>& model) {
  std::size_t n = 0;
  for_each_parameter(model, [&](std::size_t, const char*, const BasicTensor<T>& t) { n += t.size(); });
  return n;
}

/// Builds a LayerParams of the right kind from tensors in canonical order.
template <typename T>
LayerParams<T> make_layer_params(LayerKind kind, std::vector<BasicTensor<T>> t) {
  switch (kind) {
    case LayerKind::dense: return DenseParams<T>{std::move(t.at(0)), std::move(t.at(1))};
    case LayerKind::lstm: return LstmParams<T>{std::move(t.at(0)), std::move(t.at(1)), std::move(t.at(2))};
    case LayerKind::hlstm:
      return HLstmParams<T>{std::move(t.at(0)), std::move(t.at(1)), std::move(t.at(2)), std::move(t.at(3))};
    case LayerKind::masking:
    case LayerKind::dropout: return std::monostate{};
  }
  return std::monostate{};
}

/// Checks the spec and that every bound tensor has the shape the spec implies.
template <typename T>
void validate(const Model<T>& model) {
  validate(model.spec);
  if (model.params.size() != model.spec.layers.size()) {
    throw ModelError("model has " + std::to_string(model.params.size()) + " parameter slots for " +
                     std::to_string(model.spec.layers.size()) + " layers");
  }
  std::vector<std::vector<Shape>> actual(model.params.size());
  for_each_parameter(model, [&](std::size_t i, const char*, const BasicTensor<T>& t) {
    actual[i].push_back(t.shape());
  });
  for (std::size_t i = 0; i < model.spec.layers.size(); ++i) {
    const auto expected = parameter_shapes(model.spec.layers[i]);
    if (expected.size() != actual[i].size()) {
      throw ModelError("layer " + std::to_string(i) + ": parameter kind does not match spec");
    }
    for (std::size_t k = 0; k < expected.size(); ++k) {
      if (expected[k].second != actual[i][k]) {
        throw ModelError("layer " + std::to_string(i) + "." + expected[k].first + ": shape " +
                         shape_string(actual[i][k]) + " expected " + shape_string(expected[k].second));
      }
    }
  }
}

template <typename U, typename T>
Model<U> model_cast(const Model<T>& model) {
  Model<U> out{model.spec, {}};
  std::vector<std::vector<BasicTensor<U>>> per_layer(model.params.size());
  for_each_parameter(model, [&](std::size_t i, const char*, const BasicTensor<T>& t) {
    per_layer[i].push_back(t.template cast<U>());
  });
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    out.params.push_back(make_layer_params<U>(model.spec.layers[i].kind, std::move(per_layer[i])));
  }
  return out;
}

/// Zero tensors shaped like every parameter, in canonical order.
template <typename T>
std::vector<BasicTensor<T>> zeros_like_parameters(const Model<T>& model) {
  std::vector<BasicTensor<T>> out;
  for (const auto* t : parameter_tensors(model)) out.emplace_back(t->shape());
  return out;
}

// ---------------------------------------------------------------------------
// Initialization

namespace detail {

inline std::vector<double> glorot_uniform(Rng& rng, std::size_t count, std::size_t fan_in,
                                          std::size_t fan_out) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> v(count);
  for (double& x : v) x = rng.uniform(-limit, limit);
  return v;
}

/// rows x cols matrix with orthonormal rows (rows <= cols) or columns.
inline std::vector<double> orthogonal(Rng& rng, std::size_t rows, std::size_t cols) {
  const bool by_rows = rows <= cols;
  const std::size_t n = by_rows ? rows : cols;  // vectors to orthonormalize
  const std::size_t len = by_rows ? cols : rows;
  std::vector<std::vector<double>> vecs(n, std::vector<double>(len));
  for (auto& v : vecs) {
    for (double& x : v) x = rng.normal();
  }
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < a; ++b) {
      double dot = 0.0;
      for (std::size_t k = 0; k < len; ++k) dot += vecs[a][k] * vecs[b][k];
      for (std::size_t k = 0; k < len; ++k) vecs[a][k] -= dot * vecs[b][k];
    }
    double norm = 0.0;
    for (double x : vecs[a]) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : vecs[a]) x /= norm;
  }
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = by_rows ? vecs[r][c] : vecs[c][r];
  }
  return out;
}

template <typename T>
BasicTensor<T> from_doubles(Shape shape, const std::vector<double>& v) {
  return BasicTensor<T>(std::move(shape), std::vector<T>(v.begin(), v.end()));
}

template <typename T>
BasicTensor<T> gate_bias(std::size_t units) {
  BasicTensor<T> b({4 * units});
  for (std::size_t j = 0; j < units; ++j) b[gate::kForget * units + j] = T{1};
  return b;
}

}  // namespace detail

/// Glorot-uniform input/hidden/dense kernels, orthogonal recurrent kernels,
/// zero biases except forget-gate bias 1. Values are drawn in double and
/// rounded, so Model<float> and Model<double> start from the same weights.
template <typename T>
Model<T> init_model(const ModelSpec& spec, std::uint64_t seed) {
  validate(spec);
  Rng rng = Rng(seed).fork(streams::kInit);
  Model<T> model{spec, {}};
  for (const auto& l : spec.layers) {
    const std::size_t in = l.input_width, u = l.units, d = l.hdim;
    switch (l.kind) {
      case LayerKind::dense:
        model.params.push_back(DenseParams<T>{
            detail::from_doubles<T>({in, u}, detail::glorot_uniform(rng, in * u, in, u)),
            BasicTensor<T>({u})});
        break;
      case LayerKind::lstm:
        model.params.push_back(LstmParams<T>{
            detail::from_doubles<T>({in, 4 * u}, detail::glorot_uniform(rng, in * 4 * u, in, 4 * u)),
            detail::from_doubles<T>({u, 4 * u}, detail::orthogonal(rng, u, 4 * u)),
            detail::gate_bias<T>(u)});
        break;
      case LayerKind::hlstm: {
        auto kernel = detail::from_doubles<T>({in, 4 * d}, detail::glorot_uniform(rng, in * 4 * d, in, 4 * d));
        auto hidden = detail::from_doubles<T>({u, 4 * d}, detail::glorot_uniform(rng, u * 4 * d, u, 4 * d));
        std::vector<double> rec;
        for (std::size_t g = 0; g < gate::kCount; ++g) {
          auto block = detail::orthogonal(rng, d, u);
          rec.insert(rec.end(), block.begin(), block.end());
        }
        model.params.push_back(HLstmParams<T>{std::move(kernel), std::move(hidden),
                                              detail::from_doubles<T>({4, d, u}, rec),
                                              detail::gate_bias<T>(u)});
        break;
      }
      case LayerKind::masking:
      case LayerKind::dropout: model.params.push_back(std::monostate{}); break;
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Forward and backward passes

enum class Mode { inference, training };

/// Intermediates recorded by a training-mode forward pass.
template <typename T>
struct ForwardTrace {
  struct Layer {
    std::vector<CellCache<T>> steps;  // recurrent layers
    BasicTensor<T> input;             // dense layers
    BasicTensor<T> output;            // dense layers (post-activation)
    BasicTensor<T> dropout_scale;     // dropout layers in training mode
  };

  bool recorded = false;
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::vector<std::vector<std::uint8_t>> active;  // [t][row]; empty without masking
  std::vector<Layer> layers;
};

namespace detail {

template <typename T>
std::vector<BasicTensor<T>> split_steps(const BasicTensor<T>& x) {
  const std::size_t batch = x.dim(0), steps = x.dim(1), feat = x.dim(2);
  std::vector<BasicTensor<T>> out;
  out.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    BasicTensor<T> s({batch, feat});
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t f = 0; f < feat; ++f) s.at(b, f) = x.at(b, t, f);
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Row b of step t is active unless its feature vector is exactly all zero.
template <typename T>
std::vector<std::vector<std::uint8_t>> step_activity(const std::vector<BasicTensor<T>>& steps) {
  std::vector<std::vector<std::uint8_t>> active;
  for (const auto& s : steps) {
    std::vector<std::uint8_t> rows(s.dim(0), 0);
    for (std::size_t b = 0; b < s.dim(0); ++b) {
      for (T v : s.row(b)) {
        if (v != T{0}) {
          rows[b] = 1;
          break;
        }
      }
    }
    active.push_back(std::move(rows));
  }
  return active;
}

inline std::size_t last_recurrent_index(const ModelSpec& spec) {
  std::size_t last = spec.layers.size();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (is_recurrent(spec.layers[i].kind)) last = i;
  }
  return last;
}

inline bool has_parameters_before(const ModelSpec& spec, std::size_t index) {
  for (std::size_t i = 0; i < index; ++i) {
    if (param_count(spec.layers[i]) > 0) return true;
  }
  return false;
}

}  // namespace detail

/// Runs the model on a batch: x is [batch x T x features] for recurrent
/// models, [batch x features] for static ones. Returns [batch x 1]
/// probabilities. Training mode applies inverted dropout drawn from `rng`
/// and, when `trace` is given, records what backward() needs.
template <typename T>
BasicTensor<T> forward(const Model<T>& model, const BasicTensor<T>& x, Mode mode = Mode::inference,
                       Rng* rng = nullptr, ForwardTrace<T>* trace = nullptr) {
  const ModelSpec& spec = model.spec;
  const bool recurrent = spec.recurrent();
  if (x.empty()) throw DimensionError("empty sequence: input has no timesteps");
  if (recurrent && (x.rank() != 3 || x.dim(2) != spec.input_width())) {
    throw DimensionError("recurrent model expects [batch x T x " + std::to_string(spec.input_width()) +
                         "], got " + shape_string(x.shape()));
  }
  if (!recurrent && (x.rank() != 2 || x.dim(1) != spec.input_width())) {
    throw DimensionError("static model expects [batch x " + std::to_string(spec.input_width()) +
                         "], got " + shape_string(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  const std::size_t last_rec = detail::last_recurrent_index(spec);

  std::vector<BasicTensor<T>> steps;
  BasicTensor<T> flat;
  std::vector<std::vector<std::uint8_t>> active;
  if (recurrent) {
    steps = detail::split_steps(x);
  } else {
    flat = x;
  }
  if (trace) {
    *trace = ForwardTrace<T>{};
    trace->batch = batch;
    trace->seq_len = recurrent ? x.dim(1) : 0;
    trace->layers.resize(spec.layers.size());
  }

  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const LayerSpec& l = spec.layers[li];
    auto* lt = trace ? &trace->layers[li] : nullptr;
    switch (l.kind) {
      case LayerKind::masking:
        active = detail::step_activity(steps);
        break;
      case LayerKind::lstm:
      case LayerKind::hlstm: {
        auto state = LstmState<T>::zeros(batch, l.units);
        std::vector<BasicTensor<T>> outputs;
        static const std::vector<std::uint8_t> kAllActive;
        for (std::size_t t = 0; t < steps.size(); ++t) {
          const auto& act = active.empty() ? kAllActive : active[t];
          CellCache<T>* cache = nullptr;
          if (lt) {
            lt->steps.emplace_back();
            cache = &lt->steps.back();
            cache->x = steps[t];
          }
          if (l.kind == LayerKind::lstm) {
            const auto& p = std::get<LstmParams<T>>(model.params[li]);
            const auto z = detail::lstm_preactivation(p, steps[t], state.h);
            state = detail::finish_step(z, state, act, cache);
          } else {
            const auto& p = std::get<HLstmParams<T>>(model.params[li]);
            BasicTensor<T> pre, hidden;
            const auto z = detail::hlstm_preactivation(p, steps[t], state.h, pre, hidden);
            if (cache) {
              cache->hidden_pre = std::move(pre);
              cache->hidden = std::move(hidden);
            }
            state = detail::finish_step(z, state, act, cache);
          }
          if (li != last_rec) outputs.push_back(state.h);
        }
        if (li == last_rec) {
          flat = std::move(state.h);
          steps.clear();
        } else {
          steps = std::move(outputs);
        }
        break;
      }
      case LayerKind::dropout:
        if (mode == Mode::training && l.dropout_rate > 0.0f) {
          if (!rng) throw ModelError("training-mode dropout needs a random stream");
          const T keep = T{1} - static_cast<T>(l.dropout_rate);
          BasicTensor<T> scale(flat.shape());
          for (T& s : scale.data()) s = rng->bernoulli(static_cast<double>(keep)) ? T{1} / keep : T{0};
          flat = elementwise(flat, scale, ElementwiseOp::mul);
          if (lt) lt->dropout_scale = std::move(scale);
        }
        break;
      case LayerKind::dense: {
        const auto& p = std::get<DenseParams<T>>(model.params[li]);
        BasicTensor<T> y = matmul(flat, p.weight);
        add_row_vector(y, p.bias);
        y = activation(y, spec.is_output_layer(li) ? Activation::sigmoid : Activation::relu);
        if (lt) {
          lt->input = std::move(flat);
          lt->output = y;
        }
        flat = std::move(y);
        break;
      }
    }
  }
  if (trace) {
    trace->active = std::move(active);
    trace->recorded = true;
  }
  return flat;
}

/// Convenience: inference-mode forward pass.
template <typename T>
BasicTensor<T> predict(const Model<T>& model, const BasicTensor<T>& x) {
  return forward(model, x, Mode::inference);
}

/// Reverse-mode gradients of a scalar loss given dL/dprediction [batch x 1].
/// Returns one tensor per parameter, in canonical order. Skipped (masked)
/// timesteps pass state gradients straight through.
template <typename T>
std::vector<BasicTensor<T>> backward(const Model<T>& model, const ForwardTrace<T>& trace,
                                     const BasicTensor<T>& d_pred) {
  if (!trace.recorded) throw ModelError("backward called without a recorded forward pass");
  const ModelSpec& spec = model.spec;
  if (d_pred.shape() != Shape{trace.batch, 1}) {
    throw DimensionError("loss gradient " + shape_string(d_pred.shape()) + " does not match batch " +
                         std::to_string(trace.batch));
  }
  std::vector<std::size_t> offset(spec.layers.size());
  std::size_t count = 0;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    offset[i] = count;
    count += parameter_shapes(spec.layers[i]).size();
  }
  auto grads = zeros_like_parameters(model);
  const std::size_t last_rec = detail::last_recurrent_index(spec);

  BasicTensor<T> g_flat = d_pred;
  std::vector<BasicTensor<T>> g_steps;  // gradients w.r.t. a layer's output sequence

  for (std::size_t li = spec.layers.size(); li-- > 0;) {
    const LayerSpec& l = spec.layers[li];
    const auto& lt = trace.layers[li];
    const bool need_input_grad = detail::has_parameters_before(spec, li);
    switch (l.kind) {
      case LayerKind::masking:
        break;
      case LayerKind::dropout:
        if (!lt.dropout_scale.empty()) g_flat = elementwise(g_flat, lt.dropout_scale, ElementwiseOp::mul);
        break;
      case LayerKind::dense: {
        const auto& p = std::get<DenseParams<T>>(model.params[li]);
        BasicTensor<T> dz = g_flat;
        const bool out = spec.is_output_layer(li);
        for (std::size_t k = 0; k < dz.size(); ++k) {
          const T y = lt.output[k];
          dz[k] *= out ? y * (T{1} - y) : (y > T{0} ? T{1} : T{0});
        }
        accumulate(grads[offset[li]], matmul_tn(lt.input, dz));
        accumulate(grads[offset[li] + 1], sum_rows(dz));
        if (need_input_grad) g_flat = matmul_nt(dz, p.weight);
        break;
      }
      case LayerKind::lstm:
      case LayerKind::hlstm: {
        const std::size_t steps = lt.steps.size();
        const std::size_t u = l.units;
        BasicTensor<T> dh({trace.batch, u});
        BasicTensor<T> dc({trace.batch, u});
        if (li == last_rec) dh = g_flat;
        std::vector<BasicTensor<T>> g_inputs(need_input_grad ? steps : 0);
        for (std::size_t t = steps; t-- > 0;) {
          const auto& cache = lt.steps[t];
          if (li != last_rec) accumulate(dh, g_steps[t]);
          BasicTensor<T> dh_prev, dc_prev;
          const auto dz = detail::finish_step_backward(cache, dh, dc, dh_prev, dc_prev);
          if (l.kind == LayerKind::lstm) {
            const auto& p = std::get<LstmParams<T>>(model.params[li]);
            accumulate(grads[offset[li]], matmul_tn(cache.x, dz));
            accumulate(grads[offset[li] + 1], matmul_tn(cache.h_prev, dz));
            accumulate(grads[offset[li] + 2], sum_rows(dz));
            accumulate(dh_prev, matmul_nt(dz, p.recurrent_kernel));
            if (need_input_grad) g_inputs[t] = matmul_nt(dz, p.kernel);
          } else {
            const auto& p = std::get<HLstmParams<T>>(model.params[li]);
            const std::size_t d = p.hdim();
            auto& d_rec = grads[offset[li] + 2];
            BasicTensor<T> d_hidden({trace.batch, 4 * d});
            for (std::size_t r = 0; r < trace.batch; ++r) {
              for (std::size_t gi = 0; gi < gate::kCount; ++gi) {
                for (std::size_t q = 0; q < d; ++q) {
                  const T a = cache.hidden.at(r, gi * d + q);
                  T acc{0};
                  for (std::size_t j = 0; j < u; ++j) {
                    const T dzv = dz.at(r, gi * u + j);
                    d_rec.at(gi, q, j) += a * dzv;
                    acc += dzv * p.recurrent_kernel.at(gi, q, j);
                  }
                  d_hidden.at(r, gi * d + q) = cache.hidden_pre.at(r, gi * d + q) > T{0} ? acc : T{0};
                }
              }
            }
            accumulate(grads[offset[li]], matmul_tn(cache.x, d_hidden));
            accumulate(grads[offset[li] + 1], matmul_tn(cache.h_prev, d_hidden));
            accumulate(grads[offset[li] + 3], sum_rows(dz));
            accumulate(dh_prev, matmul_nt(d_hidden, p.hidden_kernel));
            if (need_input_grad) g_inputs[t] = matmul_nt(d_hidden, p.kernel);
          }
          dh = std::move(dh_prev);
          dc = std::move(dc_prev);
        }
        g_steps = std::move(g_inputs);
        break;
      }
    }
  }
  for (const auto& g : grads) {
    if (!g.all_finite()) throw NumericError("backward produced a non-finite gradient");
  }
  return grads;
}

}  // namespace condense
