#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "condense/errors.hpp"

namespace condense {

enum class LayerKind : std::uint8_t { masking = 0, dense = 1, lstm = 2, hlstm = 3, dropout = 4 };

inline const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::masking: return "masking";
    case LayerKind::dense: return "dense";
    case LayerKind::lstm: return "lstm";
    case LayerKind::hlstm: return "hlstm";
    case LayerKind::dropout: return "dropout";
  }
  return "unknown";
}

inline bool is_recurrent(LayerKind kind) { return kind == LayerKind::lstm || kind == LayerKind::hlstm; }

/// One layer descriptor. `units` is the output width for every kind; the
/// pass-through kinds (masking, dropout) have units == input_width.
struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::uint32_t input_width = 0;
  std::uint32_t units = 0;
  std::uint32_t hdim = 0;
  float dropout_rate = 0.0f;
  bool masking = false;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Ordered layer graph. Hidden dense layers use ReLU; the final layer is a
/// single-unit dense layer with a sigmoid.
struct ModelSpec {
  std::vector<LayerSpec> layers;

  bool recurrent() const {
    for (const auto& l : layers) {
      if (is_recurrent(l.kind)) return true;
    }
    return false;
  }

  std::size_t input_width() const { return layers.empty() ? 0 : layers.front().input_width; }

  bool is_output_layer(std::size_t index) const { return index + 1 == layers.size(); }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Throws ModelError when widths do not chain or the layer order is not one
/// this library can run.
inline void validate(const ModelSpec& spec) {
  if (spec.layers.empty()) throw ModelError("model has no layers");
  const auto& last = spec.layers.back();
  if (last.kind != LayerKind::dense || last.units != 1) {
    throw ModelError("final layer must be a single-unit dense layer");
  }
  bool seen_static = false;
  std::size_t last_recurrent = spec.layers.size();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (is_recurrent(spec.layers[i].kind)) last_recurrent = i;
  }
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + layer_kind_name(l.kind) + ")";
    if (l.input_width == 0 || l.units == 0) throw ModelError(where + ": widths must be positive");
    if (i > 0 && l.input_width != spec.layers[i - 1].units) {
      throw ModelError(where + ": input width " + std::to_string(l.input_width) +
                       " does not match previous output width " +
                       std::to_string(spec.layers[i - 1].units));
    }
    switch (l.kind) {
      case LayerKind::masking:
        if (i != 0) throw ModelError(where + ": masking must be the first layer");
        if (!spec.recurrent()) throw ModelError(where + ": masking requires a recurrent model");
        if (l.units != l.input_width) throw ModelError(where + ": masking must preserve width");
        break;
      case LayerKind::dropout:
        if (l.units != l.input_width) throw ModelError(where + ": dropout must preserve width");
        if (!(l.dropout_rate >= 0.0f && l.dropout_rate < 1.0f)) {
          throw ModelError(where + ": dropout rate must lie in [0, 1)");
        }
        if (last_recurrent != spec.layers.size() && i < last_recurrent) {
          throw ModelError(where + ": dropout is only supported after the last recurrent layer");
        }
        break;
      case LayerKind::lstm:
      case LayerKind::hlstm:
        if (seen_static) throw ModelError(where + ": recurrent layers must precede dense layers");
        if (l.kind == LayerKind::hlstm && l.hdim == 0) throw ModelError(where + ": hdim must be positive");
        break;
      case LayerKind::dense:
        seen_static = true;
        break;
    }
  }
}

/// Exact trainable parameter count.
inline std::size_t param_count(const LayerSpec& l) {
  const std::size_t in = l.input_width, u = l.units, d = l.hdim;
  switch (l.kind) {
    case LayerKind::dense: return in * u + u;
    case LayerKind::lstm: return 4 * (u * (in + u) + u);
    case LayerKind::hlstm: return 4 * (in * d + u * d + d * u + u);
    case LayerKind::masking:
    case LayerKind::dropout: return 0;
  }
  return 0;
}

inline std::size_t param_count(const ModelSpec& spec) {
  std::size_t total = 0;
  for (const auto& l : spec.layers) total += param_count(l);
  return total;
}

// Architecture builders.

/// masking -> LSTM(units[0]) -> ... -> dropout -> dense(1, sigmoid)
inline ModelSpec lstm_model_spec(std::uint32_t features, const std::vector<std::uint32_t>& units,
                                 float dropout_rate = 0.3f) {
  ModelSpec spec;
  spec.layers.push_back({LayerKind::masking, features, features, 0, 0.0f, true});
  std::uint32_t width = features;
  for (std::uint32_t u : units) {
    spec.layers.push_back({LayerKind::lstm, width, u, 0, 0.0f, false});
    width = u;
  }
  spec.layers.push_back({LayerKind::dropout, width, width, 0, dropout_rate, false});
  spec.layers.push_back({LayerKind::dense, width, 1, 0, 0.0f, false});
  validate(spec);
  return spec;
}

/// masking -> hLSTM(units, hdim) -> dropout -> dense(1, sigmoid)
inline ModelSpec hlstm_model_spec(std::uint32_t features, std::uint32_t units, std::uint32_t hdim,
                                  float dropout_rate = 0.3f) {
  ModelSpec spec;
  spec.layers.push_back({LayerKind::masking, features, features, 0, 0.0f, true});
  spec.layers.push_back({LayerKind::hlstm, features, units, hdim, 0.0f, false});
  spec.layers.push_back({LayerKind::dropout, units, units, 0, dropout_rate, false});
  spec.layers.push_back({LayerKind::dense, units, 1, 0, 0.0f, false});
  validate(spec);
  return spec;
}

/// dense(relu) x N -> dropout -> dense(1, sigmoid)
inline ModelSpec dnn_model_spec(std::uint32_t features, const std::vector<std::uint32_t>& hidden,
                                float dropout_rate = 0.5f) {
  ModelSpec spec;
  std::uint32_t width = features;
  for (std::uint32_t h : hidden) {
    spec.layers.push_back({LayerKind::dense, width, h, 0, 0.0f, false});
    width = h;
  }
  spec.layers.push_back({LayerKind::dropout, width, width, 0, dropout_rate, false});
  spec.layers.push_back({LayerKind::dense, width, 1, 0, 0.0f, false});
  validate(spec);
  return spec;
}

inline ModelSpec baseline_lstm_spec(std::uint32_t features = 76) { return lstm_model_spec(features, {16, 16}); }
inline ModelSpec baseline_hlstm_spec(std::uint32_t features = 76) { return hlstm_model_spec(features, 16, 16); }
inline ModelSpec baseline_dnn_spec(std::uint32_t features = 76) { return dnn_model_spec(features, {256, 128, 64}); }

}  // namespace condense
