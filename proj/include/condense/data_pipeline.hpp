#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <cstring>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "condense/dataset.hpp"
#include "condense/model_store.hpp"
#include "condense/rng.hpp"
#include "condense/tensor.hpp"
#include "condense/text.hpp"

namespace condense {

// ---------------------------------------------------------------------------
// Variable specifications

enum class VariableKind { continuous, categorical };

/// One clinical variable. Categorical values are level indices in
/// [0, levels); `normal_value` is the imputation fallback (a level index for
/// categorical variables).
struct VariableSpec {
  std::string name;
  VariableKind kind = VariableKind::continuous;
  std::uint32_t levels = 0;
  double normal_value = 0.0;

  std::size_t encoded_width() const { return kind == VariableKind::continuous ? 1 : levels; }

  friend bool operator==(const VariableSpec&, const VariableSpec&) = default;
};

/// Parses the line-oriented `name,kind,levels,normal_value` format. Blank
/// lines, `#` comments and a header row are skipped.
inline std::vector<VariableSpec> parse_variable_specs(std::string_view text) {
  std::vector<VariableSpec> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t == "name,kind,levels,normal_value") continue;
    const auto f = split_csv_line(t);
    const std::string where = "variable spec line " + std::to_string(line_no);
    if (f.size() != 4) throw DataError(where + ": expected 4 fields");
    VariableSpec v;
    v.name = trim(f[0]);
    if (v.name.empty()) throw DataError(where + ": empty name");
    const std::string kind = trim(f[1]);
    if (kind == "continuous") {
      v.kind = VariableKind::continuous;
    } else if (kind == "categorical") {
      v.kind = VariableKind::categorical;
    } else {
      throw DataError(where + ": unknown kind '" + kind + "'");
    }
    const auto levels = parse_int(f[2], where + " levels");
    v.normal_value = parse_double(f[3], where + " normal_value");
    if (v.kind == VariableKind::categorical) {
      if (levels < 2) throw DataError(where + ": categorical variables need at least 2 levels");
      v.levels = static_cast<std::uint32_t>(levels);
      if (v.normal_value != std::floor(v.normal_value) || v.normal_value < 0 || v.normal_value >= v.levels) {
        throw DataError(where + ": normal level must be an index in [0, levels)");
      }
    } else {
      if (levels != 0) throw DataError(where + ": continuous variables take levels = 0");
      if (!std::isfinite(v.normal_value)) throw DataError(where + ": normal value must be finite");
    }
    for (const auto& prev : out) {
      if (prev.name == v.name) throw DataError(where + ": duplicate variable '" + v.name + "'");
    }
    out.push_back(std::move(v));
  }
  if (out.empty()) throw DataError("variable spec has no variables");
  return out;
}

inline std::vector<VariableSpec> load_variable_specs(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file_bytes(path);
  } catch (const Error&) {
    throw DataError("cannot read variable spec " + path.string());
  }
  return parse_variable_specs(text);
}

inline std::string format_variable_specs(const std::vector<VariableSpec>& specs) {
  std::ostringstream os;
  os << "name,kind,levels,normal_value\n";
  for (const auto& v : specs) {
    os << v.name << ',' << (v.kind == VariableKind::continuous ? "continuous" : "categorical") << ','
       << v.levels << ',' << format_number(v.normal_value) << '\n';
  }
  return os.str();
}

/// The 17-variable layout (12 continuous, 5 categorical) whose encoded width
/// including one mask channel per variable is 76.
inline std::vector<VariableSpec> default_variable_specs() {
  return parse_variable_specs(
      "name,kind,levels,normal_value\n"
      "capillary_refill_rate,categorical,2,0\n"
      "diastolic_blood_pressure,continuous,0,59.0\n"
      "fraction_inspired_oxygen,continuous,0,0.21\n"
      "glascow_coma_scale_eye_opening,categorical,8,4\n"
      "glascow_coma_scale_motor_response,categorical,12,6\n"
      "glascow_coma_scale_total,categorical,13,12\n"
      "glascow_coma_scale_verbal_response,categorical,12,5\n"
      "glucose,continuous,0,128.0\n"
      "heart_rate,continuous,0,86.0\n"
      "height,continuous,0,170.0\n"
      "mean_blood_pressure,continuous,0,77.0\n"
      "oxygen_saturation,continuous,0,98.0\n"
      "respiratory_rate,continuous,0,19.0\n"
      "systolic_blood_pressure,continuous,0,118.0\n"
      "temperature,continuous,0,36.6\n"
      "weight,continuous,0,81.0\n"
      "ph,continuous,0,7.4\n");
}

// ---------------------------------------------------------------------------
// Episodes

struct Observation {
  double time_hours = 0.0;
  std::size_t variable = 0;  // index into the variable spec list
  double value = 0.0;

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct EpisodeRecord {
  std::string sample_id;
  int label = 0;
  std::vector<Observation> observations;

  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

inline void check_value(const VariableSpec& v, double value, const std::string& where) {
  if (!std::isfinite(value)) throw DataError(where + ": value must be finite");
  if (v.kind == VariableKind::categorical &&
      (value != std::floor(value) || value < 0 || value >= static_cast<double>(v.levels))) {
    throw DataError(where + ": '" + v.name + "' level must be an index in [0, " + std::to_string(v.levels) + ")");
  }
}

/// Long-format observations CSV (`sample_id,time_hours,variable,value`).
inline std::string episodes_csv(const std::vector<EpisodeRecord>& episodes, const std::vector<VariableSpec>& specs) {
  std::string out = "sample_id,time_hours,variable,value\n";
  for (const auto& e : episodes) {
    for (const auto& o : e.observations) {
      out += e.sample_id;
      out += ',';
      out += format_number(o.time_hours);
      out += ',';
      out += specs.at(o.variable).name;
      out += ',';
      out += format_number(o.value);
      out += '\n';
    }
  }
  return out;
}

inline std::string labels_csv(const std::vector<EpisodeRecord>& episodes) {
  std::string out = "sample_id,label\n";
  for (const auto& e : episodes) out += e.sample_id + ',' + std::to_string(e.label) + '\n';
  return out;
}

/// Builds episodes from the observations CSV and a `sample_id,label` CSV.
/// Episodes come back sorted by sample id; observations keep file order.
inline std::vector<EpisodeRecord> parse_episodes(const std::vector<std::string>& observation_lines,
                                                 const std::vector<std::string>& label_lines,
                                                 const std::vector<VariableSpec>& specs) {
  std::map<std::string, std::size_t> var_index;
  for (std::size_t i = 0; i < specs.size(); ++i) var_index[specs[i].name] = i;

  std::map<std::string, EpisodeRecord> by_id;
  if (label_lines.empty() || trim(label_lines[0]) != "sample_id,label") {
    throw DataError("labels CSV must start with header 'sample_id,label'");
  }
  for (std::size_t i = 1; i < label_lines.size(); ++i) {
    if (trim(label_lines[i]).empty()) continue;
    const auto f = split_csv_line(label_lines[i]);
    const std::string where = "labels line " + std::to_string(i + 1);
    if (f.size() != 2) throw DataError(where + ": expected 2 fields");
    const auto label = parse_int(f[1], where + " label");
    if (label != 0 && label != 1) throw DataError(where + ": label must be 0 or 1");
    const std::string id = trim(f[0]);
    if (id.empty()) throw DataError(where + ": empty sample id");
    if (by_id.count(id)) throw DataError(where + ": duplicate sample id '" + id + "'");
    by_id[id] = EpisodeRecord{id, static_cast<int>(label), {}};
  }

  if (observation_lines.empty() || trim(observation_lines[0]) != "sample_id,time_hours,variable,value") {
    throw DataError("observations CSV must start with header 'sample_id,time_hours,variable,value'");
  }
  for (std::size_t i = 1; i < observation_lines.size(); ++i) {
    if (trim(observation_lines[i]).empty()) continue;
    const auto f = split_csv_line(observation_lines[i]);
    const std::string where = "observations line " + std::to_string(i + 1);
    if (f.size() != 4) throw DataError(where + ": expected 4 fields");
    const std::string id = trim(f[0]);
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError(where + ": sample '" + id + "' has no label");
    const auto var = var_index.find(trim(f[2]));
    if (var == var_index.end()) throw DataError(where + ": unknown variable '" + trim(f[2]) + "'");
    Observation o;
    o.time_hours = parse_double(f[1], where + " time_hours");
    if (!std::isfinite(o.time_hours)) throw DataError(where + ": time must be finite");
    o.variable = var->second;
    o.value = parse_double(f[3], where + " value");
    check_value(specs[o.variable], o.value, where);
    it->second.observations.push_back(o);
  }
  std::vector<EpisodeRecord> out;
  for (auto& [id, rec] : by_id) out.push_back(std::move(rec));
  return out;
}

// ---------------------------------------------------------------------------
// Resampling and imputation

/// [variable][bin]; nullopt marks a bin without measurements.
using BinnedValues = std::vector<std::vector<std::optional<double>>>;

/// Last observation per half-open bin [k * interval, (k + 1) * interval).
/// Observations at or beyond the horizon are dropped; a negative time rejects
/// the record.
inline BinnedValues resample(const EpisodeRecord& episode, std::size_t variable_count, double interval_hours = 1.0,
                             double horizon_hours = 48.0) {
  if (!(interval_hours > 0.0) || !(horizon_hours > 0.0)) throw DataError("interval and horizon must be positive");
  const double ratio = horizon_hours / interval_hours;
  const auto bins = static_cast<std::size_t>(std::llround(ratio));
  if (bins == 0 || std::abs(ratio - static_cast<double>(bins)) > 1e-9 * ratio) {
    throw DataError("interval must divide the horizon");
  }
  BinnedValues out(variable_count, std::vector<std::optional<double>>(bins));
  std::vector<std::vector<double>> last_time(variable_count, std::vector<double>(bins, -1.0));
  for (const auto& o : episode.observations) {
    if (o.time_hours < 0.0) {
      throw DataError("sample '" + episode.sample_id + "' has an observation at negative time");
    }
    if (o.variable >= variable_count) throw DataError("observation refers to an unknown variable");
    if (o.time_hours >= horizon_hours) continue;
    const auto bin = std::min(bins - 1, static_cast<std::size_t>(std::floor(o.time_hours / interval_hours)));
    if (o.time_hours >= last_time[o.variable][bin]) {
      last_time[o.variable][bin] = o.time_hours;
      out[o.variable][bin] = o.value;
    }
  }
  return out;
}

struct ImputedSeries {
  std::vector<double> values;
  std::vector<std::uint8_t> mask;  // 1 where the bin held a real measurement

  friend bool operator==(const ImputedSeries&, const ImputedSeries&) = default;
};

/// Forward fill; bins before the first measurement take the normal value.
inline ImputedSeries impute(const std::vector<std::optional<double>>& bins, const VariableSpec& spec) {
  ImputedSeries out;
  double carry = spec.normal_value;
  for (const auto& b : bins) {
    if (b) carry = *b;
    out.values.push_back(carry);
    out.mask.push_back(b ? 1 : 0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Encoding and normalization

/// Column layout plus normalization statistics. Columns are, in variable
/// order, one per continuous variable or one per categorical level, followed
/// by one mask column per variable.
struct FeatureSchema {
  std::vector<VariableSpec> variables;
  std::vector<std::string> names;
  std::vector<std::size_t> offset;  // first column of each variable
  std::size_t mask_offset = 0;
  std::vector<double> mean;  // per column; 0 for one-hot and mask columns
  std::vector<double> std;   // per column; 1 for one-hot and mask columns

  std::size_t width() const { return names.size(); }
};

inline FeatureSchema make_schema(const std::vector<VariableSpec>& variables) {
  FeatureSchema s;
  s.variables = variables;
  for (const auto& v : variables) {
    s.offset.push_back(s.names.size());
    if (v.kind == VariableKind::continuous) {
      s.names.push_back(v.name);
    } else {
      for (std::uint32_t k = 0; k < v.levels; ++k) s.names.push_back(v.name + "=" + std::to_string(k));
    }
  }
  s.mask_offset = s.names.size();
  for (const auto& v : variables) s.names.push_back("mask:" + v.name);
  s.mean.assign(s.names.size(), 0.0);
  s.std.assign(s.names.size(), 1.0);
  return s;
}

/// Encoded width: sum of (1 per continuous, k per categorical) + 1 per variable.
inline std::size_t encoded_width(const std::vector<VariableSpec>& variables) {
  std::size_t w = 0;
  for (const auto& v : variables) w += v.encoded_width() + 1;
  return w;
}

struct ImputedEpisode {
  std::string sample_id;
  int label = 0;
  std::vector<ImputedSeries> series;  // per variable
};

inline ImputedEpisode impute_episode(const EpisodeRecord& e, const std::vector<VariableSpec>& variables,
                                     double interval_hours = 1.0, double horizon_hours = 48.0) {
  const auto binned = resample(e, variables.size(), interval_hours, horizon_hours);
  ImputedEpisode out{e.sample_id, e.label, {}};
  for (std::size_t v = 0; v < variables.size(); ++v) out.series.push_back(impute(binned[v], variables[v]));
  return out;
}

/// One sample's encoded [T x F] matrix.
struct FeatureMatrix {
  std::string sample_id;
  int label = 0;
  Tensor values;

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;
};

inline FeatureMatrix encode_episode(const ImputedEpisode& e, const FeatureSchema& schema) {
  const std::size_t bins = e.series.at(0).values.size();
  Tensor x({bins, schema.width()});
  for (std::size_t v = 0; v < schema.variables.size(); ++v) {
    const auto& spec = schema.variables[v];
    const auto& s = e.series[v];
    const std::size_t col = schema.offset[v];
    for (std::size_t t = 0; t < bins; ++t) {
      if (spec.kind == VariableKind::continuous) {
        x.at(t, col) = static_cast<float>((s.values[t] - schema.mean[col]) / schema.std[col]);
      } else {
        x.at(t, col + static_cast<std::size_t>(s.values[t])) = 1.0f;
      }
      x.at(t, schema.mask_offset + v) = static_cast<float>(s.mask[t]);
    }
  }
  return {e.sample_id, e.label, std::move(x)};
}

/// Deterministic hashed split keyed on the sample id and a seed.
inline bool is_test_sample(std::string_view sample_id, std::uint64_t seed, double test_fraction = 0.15) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (char c : sample_id) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001B3ULL;
  }
  std::uint64_t state = h ^ Rng(seed).fork(streams::kSplit).next_u64();
  const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
  return u < test_fraction;
}

struct EncodedCohort {
  FeatureSchema schema;
  std::vector<FeatureMatrix> train;
  std::vector<FeatureMatrix> test;
  std::vector<std::string> warnings;
};

/// z-scores continuous columns with statistics from the training split only
/// (population std over every training bin, after imputation), one-hot
/// encodes categorical columns and appends raw mask columns. Training
/// samples are reduced in sorted-id order.
inline EncodedCohort encode_and_normalize(std::vector<ImputedEpisode> cohort, const std::vector<VariableSpec>& variables,
                                          const std::vector<bool>& is_test) {
  if (is_test.size() != cohort.size()) throw DataError("split flags do not match cohort size");
  std::vector<std::size_t> order(cohort.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return cohort[a].sample_id < cohort[b].sample_id; });

  EncodedCohort out;
  out.schema = make_schema(variables);
  auto& schema = out.schema;
  for (std::size_t v = 0; v < variables.size(); ++v) {
    if (variables[v].kind != VariableKind::continuous) continue;
    double sum = 0.0, count = 0.0;
    for (std::size_t i : order) {
      if (is_test[i]) continue;
      for (double x : cohort[i].series[v].values) {
        sum += x;
        count += 1.0;
      }
    }
    if (count == 0.0) throw DataError("training split is empty");
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t i : order) {
      if (is_test[i]) continue;
      for (double x : cohort[i].series[v].values) sq += (x - mean) * (x - mean);
    }
    double sd = std::sqrt(sq / count);
    if (!(sd > 0.0)) {
      out.warnings.push_back("feature '" + variables[v].name + "' has zero variance; std clamped to 1");
      sd = 1.0;
    }
    schema.mean[schema.offset[v]] = mean;
    schema.std[schema.offset[v]] = sd;
  }
  for (std::size_t i : order) {
    auto m = encode_episode(cohort[i], schema);
    (is_test[i] ? out.test : out.train).push_back(std::move(m));
  }
  return out;
}

/// Per-sample summary for feedforward models: each value column is the mean
/// over bins where its variable was measured (the normalized normal value
/// if never measured); each mask column is the fraction of measured bins.
inline Tensor static_features(const FeatureMatrix& matrix, const FeatureSchema& schema) {
  const Tensor& x = matrix.values;
  const std::size_t bins = x.dim(0);
  Tensor out({schema.width()});
  for (std::size_t v = 0; v < schema.variables.size(); ++v) {
    const auto& spec = schema.variables[v];
    const std::size_t col = schema.offset[v];
    const std::size_t mcol = schema.mask_offset + v;
    std::size_t observed = 0;
    std::vector<double> sums(spec.encoded_width(), 0.0);
    for (std::size_t t = 0; t < bins; ++t) {
      if (x.at(t, mcol) != 1.0f) continue;
      ++observed;
      for (std::size_t k = 0; k < sums.size(); ++k) sums[k] += x.at(t, col + k);
    }
    for (std::size_t k = 0; k < sums.size(); ++k) {
      double value;
      if (observed > 0) {
        value = sums[k] / static_cast<double>(observed);
      } else if (spec.kind == VariableKind::continuous) {
        value = (spec.normal_value - schema.mean[col]) / schema.std[col];
      } else {
        value = k == static_cast<std::size_t>(spec.normal_value) ? 1.0 : 0.0;
      }
      out[col + k] = static_cast<float>(value);
    }
    out[mcol] = static_cast<float>(static_cast<double>(observed) / static_cast<double>(bins));
  }
  return out;
}

inline Dataset<float> sequence_dataset(const std::vector<FeatureMatrix>& matrices) {
  if (matrices.empty()) throw DataError("no samples");
  const Shape s = matrices.front().values.shape();
  std::vector<float> data;
  data.reserve(matrices.size() * shape_product(s));
  Dataset<float> out;
  for (const auto& m : matrices) {
    if (m.values.shape() != s) throw DataError("samples differ in shape");
    data.insert(data.end(), m.values.data().begin(), m.values.data().end());
    out.labels.push_back(m.label);
  }
  out.inputs = Tensor({matrices.size(), s[0], s[1]}, std::move(data));
  return out;
}

inline Dataset<float> static_dataset(const std::vector<FeatureMatrix>& matrices, const FeatureSchema& schema) {
  if (matrices.empty()) throw DataError("no samples");
  std::vector<float> data;
  Dataset<float> out;
  for (const auto& m : matrices) {
    const auto f = static_features(m, schema);
    data.insert(data.end(), f.data().begin(), f.data().end());
    out.labels.push_back(m.label);
  }
  out.inputs = Tensor({matrices.size(), schema.width()}, std::move(data));
  return out;
}

/// Resample, impute, split and encode a cohort in one call.
inline EncodedCohort preprocess(const std::vector<EpisodeRecord>& episodes, const std::vector<VariableSpec>& variables,
                                std::uint64_t split_seed, double test_fraction = 0.15, double interval_hours = 1.0,
                                double horizon_hours = 48.0) {
  std::vector<ImputedEpisode> imputed;
  std::vector<bool> is_test;
  for (const auto& e : episodes) {
    imputed.push_back(impute_episode(e, variables, interval_hours, horizon_hours));
    is_test.push_back(is_test_sample(e.sample_id, split_seed, test_fraction));
  }
  return encode_and_normalize(std::move(imputed), variables, is_test);
}

inline std::string stats_csv(const FeatureSchema& schema) {
  std::string out = "feature,mean,std\n";
  for (std::size_t c = 0; c < schema.width(); ++c) {
    out += schema.names[c] + ',' + format_number(schema.mean[c]) + ',' + format_number(schema.std[c]) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic cohort

struct SyntheticOptions {
  double positive_rate = 0.11;
  double separation = 3.0;  // shift of the latent severity for positives
  double horizon_hours = 48.0;
  double min_missing = 0.3;
  double max_missing = 0.7;
};

struct SyntheticCohort {
  std::vector<EpisodeRecord> episodes;
  std::vector<double> severity;  // latent per-sample driver of the outcome
};

/// Per-variable drift coefficient: how strongly severity moves the variable.
inline double synthetic_effect(std::size_t variable) {
  static constexpr double kEffects[] = {0.9, -0.9, 0.6, -0.6, 0.0};
  return kEffects[variable % 5];
}

/// Generates labelled episodes with irregular observation times. Positives
/// have a latent severity shifted by `separation`; affected variables drift
/// with severity, more strongly later in the stay. Each variable misses a
/// per-sample fraction of hourly bins drawn from [min_missing, max_missing].
inline SyntheticCohort generate_synthetic(std::size_t n, std::uint64_t seed, const std::vector<VariableSpec>& variables,
                                          const SyntheticOptions& opt = {}) {
  if (n < 2) throw UsageError("synthetic cohort needs at least 2 samples");
  Rng rng = Rng(seed).fork(streams::kSynthetic);
  const auto bins = static_cast<std::size_t>(opt.horizon_hours);
  SyntheticCohort out;
  char id[32];
  for (std::size_t i = 0; i < n; ++i) {
    std::snprintf(id, sizeof(id), "P%07zu", i);
    EpisodeRecord e{id, rng.bernoulli(opt.positive_rate) ? 1 : 0, {}};
    const double severity = rng.normal() + opt.separation * e.label;
    for (std::size_t v = 0; v < variables.size(); ++v) {
      const auto& spec = variables[v];
      const double effect = synthetic_effect(v);
      const double missing = rng.uniform(opt.min_missing, opt.max_missing);
      const double offset = 0.3 * rng.normal();
      for (std::size_t b = 0; b < bins; ++b) {
        if (rng.bernoulli(missing)) continue;
        const int readings = rng.bernoulli(0.15) ? 2 : 1;
        for (int r = 0; r < readings; ++r) {
          const double t = std::round((static_cast<double>(b) + rng.uniform()) * 100.0) / 100.0;
          const double ramp = 0.25 + 0.75 * std::min(t, opt.horizon_hours) / opt.horizon_hours;
          double value;
          if (spec.kind == VariableKind::continuous) {
            const double spread = spec.normal_value != 0.0 ? 0.1 * std::abs(spec.normal_value) : 1.0;
            const double z = effect * severity * ramp + offset + 0.5 * rng.normal();
            value = std::round((spec.normal_value + spread * z) * 1000.0) / 1000.0;
          } else {
            const double shift = effect * severity * ramp * static_cast<double>(spec.levels) / 6.0;
            const double level = std::round(spec.normal_value + shift + 0.7 * rng.normal());
            value = std::clamp(level, 0.0, static_cast<double>(spec.levels - 1));
          }
          e.observations.push_back({std::min(t, opt.horizon_hours - 0.01), v, value});
        }
      }
    }
    std::stable_sort(e.observations.begin(), e.observations.end(),
                     [](const Observation& a, const Observation& b) { return a.time_hours < b.time_hours; });
    out.episodes.push_back(std::move(e));
    out.severity.push_back(severity);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset container ("CNND"): feature names, sample ids, then tensors in the
// model-file tensor framing: labels [n], sequences [n x T x F], static [n x F].

struct PreparedSplit {
  std::vector<std::string> feature_names;
  std::vector<std::string> sample_ids;
  Dataset<float> sequences;
  Dataset<float> statics;

  friend bool operator==(const PreparedSplit&, const PreparedSplit&) = default;
};

inline constexpr char kDataMagic[4] = {'C', 'N', 'N', 'D'};

inline PreparedSplit prepare_split(const std::vector<FeatureMatrix>& matrices, const FeatureSchema& schema) {
  PreparedSplit s;
  s.feature_names = schema.names;
  for (const auto& m : matrices) s.sample_ids.push_back(m.sample_id);
  s.sequences = sequence_dataset(matrices);
  s.statics = static_dataset(matrices, schema);
  return s;
}

inline std::string encode_split(const PreparedSplit& s) {
  ByteWriter w;
  w.raw(std::string_view(kDataMagic, 4));
  w.u16(kFormatVersion);
  w.u16(0);
  auto strings = [&](const std::vector<std::string>& v) {
    w.u32(static_cast<std::uint32_t>(v.size()));
    for (const auto& x : v) {
      w.u16(static_cast<std::uint16_t>(x.size()));
      w.raw(x);
    }
  };
  strings(s.feature_names);
  strings(s.sample_ids);
  Tensor labels({s.sequences.labels.size()});
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<float>(s.sequences.labels[i]);
  const std::pair<const char*, const Tensor*> tensors[] = {
      {"labels", &labels}, {"sequences", &s.sequences.inputs}, {"static", &s.statics.inputs}};
  w.u16(3);
  for (const auto& [name, t] : tensors) {
    detail::write_tensor_header(w, name, t->shape());
    for (float v : t->data()) w.f32(v);
  }
  return w.take();
}

inline PreparedSplit decode_split(std::string_view bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 4 || std::memcmp(bytes.data(), kDataMagic, 4) != 0) {
    throw FormatError(FormatErrorCode::bad_magic, "not a dataset file");
  }
  r.raw(4);
  if (r.u16() != kFormatVersion) throw FormatError(FormatErrorCode::version_mismatch, "dataset file");
  r.u16();
  auto strings = [&]() {
    const std::uint32_t n = r.u32();
    r.need(static_cast<std::size_t>(n) * 2);
    std::vector<std::string> v;
    for (std::uint32_t i = 0; i < n; ++i) v.emplace_back(r.raw(r.u16()));
    return v;
  };
  PreparedSplit s;
  s.feature_names = strings();
  s.sample_ids = strings();
  if (r.u16() != 3) throw FormatError(FormatErrorCode::malformed, "dataset file needs 3 tensors");
  std::vector<Tensor> t;
  for (const char* name : {"labels", "sequences", "static"}) {
    const auto h = detail::read_tensor_header(r, 4, 0);
    if (h.name != name) throw FormatError(FormatErrorCode::malformed, "expected tensor " + std::string(name));
    std::vector<float> v(h.count);
    for (float& x : v) x = r.f32();
    t.emplace_back(h.shape, std::move(v));
  }
  if (!r.at_end()) throw FormatError(FormatErrorCode::malformed, "trailing bytes in dataset file");
  const std::size_t n = s.sample_ids.size();
  const std::size_t f = s.feature_names.size();
  if (t[0].shape() != Shape{n} || t[1].rank() != 3 || t[1].dim(0) != n || t[1].dim(2) != f ||
      t[2].shape() != Shape{n, f}) {
    throw FormatError(FormatErrorCode::malformed, "dataset tensors do not match sample and feature counts");
  }
  std::vector<int> labels;
  for (float v : t[0].data()) {
    if (v != 0.0f && v != 1.0f) throw FormatError(FormatErrorCode::malformed, "labels must be 0 or 1");
    labels.push_back(static_cast<int>(v));
  }
  s.sequences = Dataset<float>{std::move(t[1]), labels};
  s.statics = Dataset<float>{std::move(t[2]), std::move(labels)};
  return s;
}

}  // namespace condense
