#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "condense/model.hpp"
#include "condense/text.hpp"

namespace condense {

// ---------------------------------------------------------------------------
// Channel pruning

/// Mean absolute incoming weight of output channel `c`.
template <typename T>
double channel_saliency(const DenseParams<T>& p, std::size_t c) {
  if (c >= p.weight.dim(1)) throw DimensionError("dense channel index out of range");
  double sum = 0.0;
  for (std::size_t j = 0; j < p.weight.dim(0); ++j) sum += std::abs(static_cast<double>(p.weight.at(j, c)));
  return sum / static_cast<double>(p.weight.dim(0));
}

/// Mean absolute weight over unit c's column in all four input kernel blocks
/// and all four recurrent kernel blocks. Biases are not included.
template <typename T>
double channel_saliency(const LstmParams<T>& p, std::size_t c) {
  const std::size_t u = p.units();
  if (c >= u) throw DimensionError("lstm unit index out of range");
  double sum = 0.0;
  for (std::size_t g = 0; g < gate::kCount; ++g) {
    for (std::size_t j = 0; j < p.input_dim(); ++j) sum += std::abs(static_cast<double>(p.kernel.at(j, g * u + c)));
    for (std::size_t j = 0; j < u; ++j) sum += std::abs(static_cast<double>(p.recurrent_kernel.at(j, g * u + c)));
  }
  return sum / static_cast<double>(gate::kCount * (p.input_dim() + u));
}

struct LayerPruneRecord {
  std::size_t layer = 0;
  LayerKind kind = LayerKind::dense;
  std::vector<double> saliency;      // per original channel
  std::vector<std::size_t> removed;  // sorted original indices
  std::size_t params_before = 0;
  std::size_t params_after = 0;
};

struct PruneReport {
  double fraction = 0.0;
  std::vector<LayerPruneRecord> layers;  // prunable layers only
  std::size_t total_before = 0;
  std::size_t total_after = 0;
};

/// Hidden dense layers and plain LSTM layers can be pruned; the output layer never is.
inline bool is_prunable(const ModelSpec& spec, std::size_t index) {
  const auto kind = spec.layers[index].kind;
  if (kind == LayerKind::lstm) return true;
  return kind == LayerKind::dense && !spec.is_output_layer(index);
}

inline std::vector<std::size_t> prunable_layers(const ModelSpec& spec) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (is_prunable(spec, i)) out.push_back(i);
  }
  return out;
}

template <typename T>
std::vector<double> layer_saliencies(const Model<T>& model, std::size_t index) {
  std::vector<double> s(model.spec.layers[index].units);
  for (std::size_t c = 0; c < s.size(); ++c) {
    if (model.spec.layers[index].kind == LayerKind::lstm) {
      s[c] = channel_saliency(std::get<LstmParams<T>>(model.params[index]), c);
    } else {
      s[c] = channel_saliency(std::get<DenseParams<T>>(model.params[index]), c);
    }
  }
  return s;
}

/// The floor(fraction * n) lowest-saliency channels, ties to the lower index.
inline std::vector<std::size_t> lowest_channels(const std::vector<double>& saliency, double fraction) {
  const std::size_t n = saliency.size();
  const auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return saliency[a] < saliency[b]; });
  std::vector<std::size_t> removed(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(removed.begin(), removed.end());
  return removed;
}

namespace detail {

inline std::vector<std::size_t> complement(std::size_t n, const std::vector<std::size_t>& removed) {
  std::vector<std::size_t> keep;
  std::size_t r = 0;
  for (std::size_t c = 0; c < n; ++c) {
    if (r < removed.size() && removed[r] == c) {
      ++r;
    } else {
      keep.push_back(c);
    }
  }
  return keep;
}

/// Columns to keep of a [rows x 4u] gate-block tensor when keeping units `keep`.
inline std::vector<std::size_t> gate_columns(std::size_t units, const std::vector<std::size_t>& keep) {
  std::vector<std::size_t> cols;
  for (std::size_t g = 0; g < gate::kCount; ++g) {
    for (std::size_t c : keep) cols.push_back(g * units + c);
  }
  return cols;
}

template <typename T>
BasicTensor<T> select_2d(const BasicTensor<T>& t, const std::vector<std::size_t>& rows,
                         const std::vector<std::size_t>& cols) {
  BasicTensor<T> out({rows.size(), cols.size()});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) out.at(r, c) = t.at(rows[r], cols[c]);
  }
  return out;
}

template <typename T>
BasicTensor<T> select_1d(const BasicTensor<T>& t, const std::vector<std::size_t>& idx) {
  BasicTensor<T> out({idx.size()});
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = t[idx[i]];
  return out;
}

inline std::vector<std::size_t> iota_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

/// Index of the next layer after `index` that owns parameters (the consumer
/// of its output channels).
inline std::size_t consumer_of(const ModelSpec& spec, std::size_t index) {
  for (std::size_t i = index + 1; i < spec.layers.size(); ++i) {
    if (param_count(spec.layers[i]) > 0) return i;
  }
  return spec.layers.size();
}

/// Removes whole channels given per-layer removal sets (indexed by layer;
/// empty for layers left intact). Incoming weights, biases, recurrent rows
/// and columns, and every downstream weight reading the channel go with it.
template <typename T>
Model<T> remove_channels(const Model<T>& model, const std::vector<std::vector<std::size_t>>& removed) {
  const ModelSpec& spec = model.spec;
  Model<T> out{spec, {}};
  std::vector<std::size_t> in_keep = iota_n(spec.input_width());
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    LayerSpec& ls = out.spec.layers[li];
    const std::size_t u = spec.layers[li].units;
    const auto out_keep = (ls.kind == LayerKind::masking || ls.kind == LayerKind::dropout)
                              ? in_keep
                              : complement(u, removed[li]);
    ls.input_width = static_cast<std::uint32_t>(in_keep.size());
    ls.units = static_cast<std::uint32_t>(out_keep.size());
    switch (ls.kind) {
      case LayerKind::masking:
      case LayerKind::dropout:
        out.params.push_back(std::monostate{});
        break;
      case LayerKind::dense: {
        const auto& p = std::get<DenseParams<T>>(model.params[li]);
        out.params.push_back(DenseParams<T>{select_2d(p.weight, in_keep, out_keep), select_1d(p.bias, out_keep)});
        break;
      }
      case LayerKind::lstm: {
        const auto& p = std::get<LstmParams<T>>(model.params[li]);
        const auto cols = gate_columns(u, out_keep);
        out.params.push_back(LstmParams<T>{select_2d(p.kernel, in_keep, cols),
                                           select_2d(p.recurrent_kernel, out_keep, cols),
                                           select_1d(p.bias, cols)});
        break;
      }
      case LayerKind::hlstm: {
        auto p = std::get<HLstmParams<T>>(model.params[li]);
        p.kernel = select_2d(p.kernel, in_keep, iota_n(p.kernel.dim(1)));
        out.params.push_back(std::move(p));
        break;
      }
    }
    // Downstream tensors are still indexed by original channel numbers.
    in_keep = out_keep;
  }
  validate(out);
  return out;
}

}  // namespace detail

/// Removes, in every prunable layer, the floor(fraction * n) channels with the
/// lowest saliency. Saliencies are all computed on the input model before any
/// surgery, so the choice in one layer never depends on another's removals.
template <typename T>
std::pair<Model<T>, PruneReport> prune_model(const Model<T>& model, double fraction) {
  validate(model);
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw ModelError("prune fraction must lie in [0, 1), got " + format_number(fraction));
  }
  const auto layers = prunable_layers(model.spec);
  if (layers.empty()) throw ModelError("model has no prunable layers");

  PruneReport report;
  report.fraction = fraction;
  report.total_before = param_count(model.spec);
  std::vector<std::vector<std::size_t>> removed(model.spec.layers.size());
  for (std::size_t li : layers) {
    LayerPruneRecord rec;
    rec.layer = li;
    rec.kind = model.spec.layers[li].kind;
    rec.saliency = layer_saliencies(model, li);
    rec.removed = lowest_channels(rec.saliency, fraction);
    if (rec.removed.size() >= rec.saliency.size()) {
      throw ModelError("pruning would leave layer " + std::to_string(li) + " with no channels");
    }
    removed[li] = rec.removed;
    report.layers.push_back(std::move(rec));
  }
  Model<T> pruned = detail::remove_channels(model, removed);
  for (auto& rec : report.layers) {
    rec.params_before = param_count(model.spec.layers[rec.layer]);
    rec.params_after = param_count(pruned.spec.layers[rec.layer]);
  }
  report.total_after = param_count(pruned.spec);
  return {std::move(pruned), std::move(report)};
}

/// Copy of the original-width model in which every removed channel's
/// outgoing weights are zero: its row in the consuming layer's input kernel
/// and, for LSTM units, its row in the layer's own recurrent kernel. Such a
/// model computes the same function as the pruned one.
template <typename T>
Model<T> pruned_equivalence_mask(const Model<T>& model, const std::vector<std::vector<std::size_t>>& removed) {
  Model<T> out = model;
  for (std::size_t li = 0; li < removed.size() && li < model.spec.layers.size(); ++li) {
    if (removed[li].empty()) continue;
    const std::size_t units = model.spec.layers[li].units;
    for (std::size_t c : removed[li]) {
      if (c >= units) throw DimensionError("removed channel index out of range");
    }
    if (auto* p = std::get_if<LstmParams<T>>(&out.params[li])) {
      for (std::size_t c : removed[li]) {
        for (T& v : p->recurrent_kernel.row(c)) v = T{0};
      }
    }
    const std::size_t consumer = detail::consumer_of(model.spec, li);
    if (consumer >= model.spec.layers.size()) continue;
    std::visit(
        [&](auto& p) {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, DenseParams<T>>) {
            for (std::size_t c : removed[li]) {
              for (T& v : p.weight.row(c)) v = T{0};
            }
          } else if constexpr (!std::is_same_v<P, std::monostate>) {
            for (std::size_t c : removed[li]) {
              for (T& v : p.kernel.row(c)) v = T{0};
            }
          }
        },
        out.params[consumer]);
  }
  return out;
}

template <typename T>
Model<T> pruned_equivalence_mask(const Model<T>& model, const PruneReport& report) {
  std::vector<std::vector<std::size_t>> removed(model.spec.layers.size());
  for (const auto& rec : report.layers) removed.at(rec.layer) = rec.removed;
  return pruned_equivalence_mask(model, removed);
}

/// CSV with header `layer,channel,saliency,removed`, one row per channel.
inline std::string prune_report_csv(const PruneReport& report) {
  std::ostringstream os;
  os << "layer,channel,saliency,removed\n";
  for (const auto& rec : report.layers) {
    std::size_t r = 0;
    for (std::size_t c = 0; c < rec.saliency.size(); ++c) {
      const bool gone = r < rec.removed.size() && rec.removed[r] == c;
      if (gone) ++r;
      os << rec.layer << ',' << c << ',' << format_number(rec.saliency[c]) << ',' << (gone ? 1 : 0) << '\n';
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// 8-bit affine quantization

/// Per-tensor affine code: value = min + code * scale.
struct QuantizedTensor {
  float min = 0.0f;
  float scale = 0.0f;
  std::vector<std::uint8_t> codes;
  Shape shape;

  friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

inline QuantizedTensor quantize(const Tensor& t) {
  if (t.empty()) throw DimensionError("cannot quantize an empty tensor");
  if (!t.all_finite()) throw NumericError("cannot quantize a tensor with non-finite values");
  const auto [lo_it, hi_it] = std::minmax_element(t.data().begin(), t.data().end());
  const float lo = *lo_it, hi = *hi_it;
  QuantizedTensor q;
  q.min = lo;
  q.shape = t.shape();
  q.scale = static_cast<float>((static_cast<double>(hi) - static_cast<double>(lo)) / 255.0);
  q.codes.assign(t.size(), 0);
  if (q.scale > 0.0f) {
    const double scale = q.scale;
    for (std::size_t i = 0; i < t.size(); ++i) {
      // std::round rounds halves away from zero.
      const double code = std::round((static_cast<double>(t[i]) - static_cast<double>(lo)) / scale);
      q.codes[i] = static_cast<std::uint8_t>(std::clamp(code, 0.0, 255.0));
    }
  }
  return q;
}

inline Tensor dequantize(const QuantizedTensor& q) {
  if (q.codes.size() != shape_product(q.shape)) throw DimensionError("quantized payload does not match shape");
  std::vector<float> v(q.codes.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = static_cast<float>(static_cast<double>(q.min) + static_cast<double>(q.codes[i]) * static_cast<double>(q.scale));
  }
  return Tensor(q.shape, std::move(v));
}

/// Every parameter tensor quantized independently, in canonical order.
struct QuantizedModel {
  ModelSpec spec;
  std::vector<QuantizedTensor> tensors;

  friend bool operator==(const QuantizedModel&, const QuantizedModel&) = default;
};

inline std::size_t param_count(const QuantizedModel& q) {
  std::size_t n = 0;
  for (const auto& t : q.tensors) n += t.codes.size();
  return n;
}

inline QuantizedModel quantize_model(const Model<float>& model) {
  validate(model);
  QuantizedModel q{model.spec, {}};
  for (const auto* t : parameter_tensors(model)) q.tensors.push_back(quantize(*t));
  return q;
}

/// Float model for inference; parameters are the dequantized grid values.
inline Model<float> dequantize_model(const QuantizedModel& q) {
  validate(q.spec);
  Model<float> model{q.spec, {}};
  std::size_t next = 0;
  for (const auto& layer : q.spec.layers) {
    const auto shapes = parameter_shapes(layer);
    std::vector<Tensor> tensors;
    for (const auto& [role, shape] : shapes) {
      if (next >= q.tensors.size()) throw ModelError("quantized model is missing tensors");
      if (q.tensors[next].shape != shape) {
        throw ModelError("quantized tensor " + role + " has shape " + shape_string(q.tensors[next].shape) +
                         ", expected " + shape_string(shape));
      }
      tensors.push_back(dequantize(q.tensors[next++]));
    }
    model.params.push_back(make_layer_params<float>(layer.kind, std::move(tensors)));
  }
  if (next != q.tensors.size()) throw ModelError("quantized model has extra tensors");
  return model;
}

}  // namespace condense
