#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "condense/model.hpp"
#include "condense/tensor.hpp"

namespace condense {

/// Model-ready samples: inputs is [n x T x F] (sequences) or [n x F] (static).
template <typename T>
struct Dataset {
  BasicTensor<T> inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t feature_width() const { return inputs.empty() ? 0 : inputs.dim(inputs.rank() - 1); }
  bool is_sequence() const { return inputs.rank() == 3; }

  bool has_both_classes() const {
    const auto pos = std::count(labels.begin(), labels.end(), 1);
    return pos > 0 && static_cast<std::size_t>(pos) < labels.size();
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

template <typename T>
Dataset<T> subset(const Dataset<T>& data, std::span<const std::size_t> indices) {
  Dataset<T> out;
  out.inputs = gather_rows(data.inputs, indices);
  for (std::size_t i : indices) out.labels.push_back(data.labels.at(i));
  return out;
}

/// Inference-mode probabilities for every sample, evaluated in chunks.
template <typename T>
std::vector<double> predict_scores(const Model<T>& model, const Dataset<T>& data, std::size_t chunk = 256) {
  std::vector<double> scores;
  scores.reserve(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(data.size(), start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const auto pred = predict(model, gather_rows(data.inputs, std::span<const std::size_t>(idx)));
    for (std::size_t k = 0; k < pred.size(); ++k) scores.push_back(static_cast<double>(pred[k]));
  }
  return scores;
}

}  // namespace condense
