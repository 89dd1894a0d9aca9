#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "condense/errors.hpp"
#include "condense/model_spec.hpp"
#include "condense/text.hpp"
#include "condense/training.hpp"

namespace condense {

/// Every knob of a pipeline run. Parsed from `key = value` lines grouped
/// under [data], [model], [train], [condense] and [output].
struct RunConfig {
  // [data]
  std::string spec;  // variable spec file; empty selects the built-in 76-wide layout
  std::size_t samples = 2000;
  std::uint64_t data_seed = 20240601;
  std::uint64_t split_seed = 20240601;
  double test_fraction = 0.15;
  double interval_hours = 1.0;
  double horizon_hours = 48.0;
  // [model]
  std::string kind = "lstm";  // lstm | hlstm | dnn
  std::vector<std::uint32_t> units{16, 16};      // lstm layer widths
  std::uint32_t hlstm_units = 16;
  std::uint32_t hdim = 16;
  std::vector<std::uint32_t> hidden{256, 128, 64};  // dnn layer widths
  double dropout = -1.0;  // negative selects the kind's default
  std::uint64_t init_seed = 1;
  // [train]
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  double learning_rate = 0.001;
  std::uint64_t train_seed = 1;
  bool record_timing = false;
  // [condense]
  double prune_fraction = 0.0;  // 0 disables pruning during training
  std::size_t prune_after_epoch = 1;
  bool quantize = false;
  // [output]
  std::string name;  // model label in CSVs; empty selects the kind

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

inline std::vector<std::uint32_t> parse_widths(const std::string& s, const std::string& where) {
  std::vector<std::uint32_t> out;
  for (const auto& f : split_csv_line(s)) {
    const auto v = parse_int(f, where);
    if (v < 1 || v > 1'000'000) throw UsageError(where + ": widths must be positive");
    out.push_back(static_cast<std::uint32_t>(v));
  }
  if (out.empty()) throw UsageError(where + ": at least one width required");
  return out;
}

inline std::string join_widths(const std::vector<std::uint32_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

inline bool parse_bool(const std::string& s, const std::string& where) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw UsageError(where + ": expected true or false");
}

template <typename U>
U parse_count(const std::string& s, const std::string& where) {
  const auto v = parse_int(s, where);
  if (v < 0) throw UsageError(where + ": must be non-negative");
  return static_cast<U>(v);
}

}  // namespace detail

/// Applies one `section.key = value` setting; throws UsageError on unknown keys.
inline void set_config_value(RunConfig& c, const std::string& section, const std::string& key,
                             const std::string& value, const std::string& where = "config") {
  using namespace detail;
  const std::string id = section + "." + key;
  const std::string at = where + " (" + id + ")";
  try {
    if (id == "data.spec") c.spec = value;
    else if (id == "data.samples") c.samples = parse_count<std::size_t>(value, at);
    else if (id == "data.seed") c.data_seed = parse_count<std::uint64_t>(value, at);
    else if (id == "data.split_seed") c.split_seed = parse_count<std::uint64_t>(value, at);
    else if (id == "data.test_fraction") c.test_fraction = parse_double(value, at);
    else if (id == "data.interval_hours") c.interval_hours = parse_double(value, at);
    else if (id == "data.horizon_hours") c.horizon_hours = parse_double(value, at);
    else if (id == "model.kind") c.kind = value;
    else if (id == "model.units") c.units = parse_widths(value, at);
    else if (id == "model.hlstm_units") c.hlstm_units = parse_widths(value, at).at(0);
    else if (id == "model.hdim") c.hdim = parse_widths(value, at).at(0);
    else if (id == "model.hidden") c.hidden = parse_widths(value, at);
    else if (id == "model.dropout") c.dropout = parse_double(value, at);
    else if (id == "model.seed") c.init_seed = parse_count<std::uint64_t>(value, at);
    else if (id == "train.epochs") c.epochs = parse_count<std::size_t>(value, at);
    else if (id == "train.batch_size") c.batch_size = parse_count<std::size_t>(value, at);
    else if (id == "train.learning_rate") c.learning_rate = parse_double(value, at);
    else if (id == "train.seed") c.train_seed = parse_count<std::uint64_t>(value, at);
    else if (id == "train.record_timing") c.record_timing = parse_bool(value, at);
    else if (id == "condense.prune_fraction") c.prune_fraction = parse_double(value, at);
    else if (id == "condense.prune_after_epoch") c.prune_after_epoch = parse_count<std::size_t>(value, at);
    else if (id == "condense.quantize") c.quantize = parse_bool(value, at);
    else if (id == "output.name") c.name = value;
    else throw UsageError(where + ": unknown key '" + id + "'");
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
}

inline RunConfig parse_config(std::string_view text, RunConfig base = {}) {
  std::istringstream in{std::string(text)};
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "config line " + std::to_string(line_no);
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw UsageError(where + ": malformed section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section != "data" && section != "model" && section != "train" && section != "condense" &&
          section != "output") {
        throw UsageError(where + ": unknown section '" + section + "'");
      }
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw UsageError(where + ": expected key = value");
    if (section.empty()) throw UsageError(where + ": key outside of a section");
    set_config_value(base, section, trim(t.substr(0, eq)), trim(t.substr(eq + 1)), where);
  }
  return base;
}

inline float default_dropout(const std::string& kind) { return kind == "dnn" ? 0.5f : 0.3f; }

inline std::string model_label(const RunConfig& c) { return c.name.empty() ? c.kind : c.name; }

/// Checks ranges and cross-field consistency.
inline void validate(const RunConfig& c) {
  if (c.samples < 2) throw UsageError("data.samples must be at least 2");
  if (!(c.test_fraction > 0.0 && c.test_fraction < 1.0)) throw UsageError("data.test_fraction must lie in (0, 1)");
  if (!(c.interval_hours > 0.0) || !(c.horizon_hours > 0.0)) throw UsageError("interval and horizon must be positive");
  if (c.kind != "lstm" && c.kind != "hlstm" && c.kind != "dnn") {
    throw UsageError("model.kind must be lstm, hlstm or dnn");
  }
  if (c.dropout >= 1.0) throw UsageError("model.dropout must be below 1");
  if (c.name.find_first_of(",\n\r") != std::string::npos) throw UsageError("output.name must not contain commas");
  if (c.prune_fraction != 0.0) {
    if (!(c.prune_fraction > 0.0 && c.prune_fraction < 1.0)) {
      throw UsageError("condense.prune_fraction must lie in [0, 1)");
    }
    if (c.kind == "hlstm") throw UsageError("hlstm models have no prunable layers");
  }
  TrainConfig t;
  t.epochs = c.epochs;
  t.batch_size = c.batch_size;
  t.adam.learning_rate = c.learning_rate;
  if (c.prune_fraction > 0.0) t.prune_hook = PruneHook{c.prune_fraction, c.prune_after_epoch};
  validate(t);
}

inline ModelSpec model_spec(const RunConfig& c, std::uint32_t features) {
  const float dropout = c.dropout < 0.0 ? default_dropout(c.kind) : static_cast<float>(c.dropout);
  if (c.kind == "lstm") return lstm_model_spec(features, c.units, dropout);
  if (c.kind == "hlstm") return hlstm_model_spec(features, c.hlstm_units, c.hdim, dropout);
  if (c.kind == "dnn") return dnn_model_spec(features, c.hidden, dropout);
  throw UsageError("model.kind must be lstm, hlstm or dnn");
}

inline TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.epochs = c.epochs;
  t.batch_size = c.batch_size;
  t.adam.learning_rate = c.learning_rate;
  t.seed = c.train_seed;
  t.record_timing = c.record_timing;
  if (c.prune_fraction > 0.0) t.prune_hook = PruneHook{c.prune_fraction, c.prune_after_epoch};
  return t;
}

/// Canonical text with every key spelled out; parse_config(format_config(c)) == c.
inline std::string format_config(const RunConfig& c) {
  using detail::join_widths;
  std::ostringstream os;
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << "[data]\n"
     << "spec = " << c.spec << "\n"
     << "samples = " << c.samples << "\n"
     << "seed = " << c.data_seed << "\n"
     << "split_seed = " << c.split_seed << "\n"
     << "test_fraction = " << format_number(c.test_fraction) << "\n"
     << "interval_hours = " << format_number(c.interval_hours) << "\n"
     << "horizon_hours = " << format_number(c.horizon_hours) << "\n\n"
     << "[model]\n"
     << "kind = " << c.kind << "\n"
     << "units = " << join_widths(c.units) << "\n"
     << "hlstm_units = " << c.hlstm_units << "\n"
     << "hdim = " << c.hdim << "\n"
     << "hidden = " << join_widths(c.hidden) << "\n"
     << "dropout = " << format_number(c.dropout) << "\n"
     << "seed = " << c.init_seed << "\n\n"
     << "[train]\n"
     << "epochs = " << c.epochs << "\n"
     << "batch_size = " << c.batch_size << "\n"
     << "learning_rate = " << format_number(c.learning_rate) << "\n"
     << "seed = " << c.train_seed << "\n"
     << "record_timing = " << b(c.record_timing) << "\n\n"
     << "[condense]\n"
     << "prune_fraction = " << format_number(c.prune_fraction) << "\n"
     << "prune_after_epoch = " << c.prune_after_epoch << "\n"
     << "quantize = " << b(c.quantize) << "\n\n"
     << "[output]\n"
     << "name = " << c.name << "\n";
  return os.str();
}

}  // namespace condense
