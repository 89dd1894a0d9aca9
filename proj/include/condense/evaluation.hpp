#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "condense/dataset.hpp"
#include "condense/errors.hpp"
#include "condense/model.hpp"
#include "condense/text.hpp"
#include "condense/training.hpp"

namespace condense {

/// One row of the model comparison table. A zero `quantized_file_bytes`
/// means no quantized variant; a NaN latency means not benchmarked.
struct EvalReport {
  std::string model;
  std::size_t params = 0;
  std::size_t file_bytes = 0;
  std::size_t quantized_file_bytes = 0;
  double inference_us_per_sample = std::numeric_limits<double>::quiet_NaN();
  double test_auroc = 0.0;

  friend bool operator==(const EvalReport& a, const EvalReport& b) {
    auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    return a.model == b.model && a.params == b.params && a.file_bytes == b.file_bytes &&
           a.quantized_file_bytes == b.quantized_file_bytes &&
           same(a.inference_us_per_sample, b.inference_us_per_sample) && same(a.test_auroc, b.test_auroc);
  }
};

inline void validate(const EvalReport& r) {
  if (r.model.empty() || r.model.find_first_of(",\n\r") != std::string::npos) {
    throw DataError("model name must be non-empty and free of commas and newlines");
  }
  if (!(r.test_auroc >= 0.0 && r.test_auroc <= 1.0)) throw DataError("AUROC must lie in [0, 1]");
  if (r.inference_us_per_sample < 0.0) throw DataError("latency must be non-negative");
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw DataError("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Median over `repetitions` timed passes of wall time per sample in
/// microseconds. One untimed warm-up pass precedes the measurements.
template <typename T>
double bench_inference(const Model<T>& model, const Dataset<T>& data, std::size_t repetitions = 5,
                       std::size_t chunk = 256) {
  if (repetitions < 3) throw UsageError("benchmark needs at least 3 repetitions");
  if (data.size() == 0) throw DataError("benchmark dataset is empty");
  volatile double sink = 0.0;
  sink = sink + predict_scores(model, data, chunk).front();
  std::vector<double> per_sample;
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto start = std::chrono::steady_clock::now();
    const auto scores = predict_scores(model, data, chunk);
    const auto stop = std::chrono::steady_clock::now();
    sink = sink + scores.front();
    per_sample.push_back(std::chrono::duration<double, std::micro>(stop - start).count() /
                         static_cast<double>(data.size()));
  }
  return median(per_sample);
}

inline constexpr std::string_view kComparisonHeader =
    "model,params,file_bytes,quantized_file_bytes,inference_us_per_sample,test_auroc";

inline std::string comparison_csv(const std::vector<EvalReport>& reports) {
  std::string out(kComparisonHeader);
  out += '\n';
  for (const auto& r : reports) {
    validate(r);
    out += r.model + ',' + std::to_string(r.params) + ',' + std::to_string(r.file_bytes) + ',' +
           std::to_string(r.quantized_file_bytes) + ',' +
           (std::isnan(r.inference_us_per_sample) ? std::string() : format_number(r.inference_us_per_sample)) +
           ',' + format_number(r.test_auroc) + '\n';
  }
  return out;
}

inline std::vector<EvalReport> parse_comparison_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || trim(line) != kComparisonHeader) {
    throw DataError("comparison CSV must start with header '" + std::string(kComparisonHeader) + "'");
  }
  std::vector<EvalReport> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    const std::string where = "comparison line " + std::to_string(line_no);
    if (f.size() != 6) throw DataError(where + ": expected 6 fields");
    auto count = [&](const std::string& s, const char* what) {
      const auto v = parse_int(s, where + " " + what);
      if (v < 0) throw DataError(where + ": " + what + " must be non-negative");
      return static_cast<std::size_t>(v);
    };
    EvalReport r;
    r.model = trim(f[0]);
    r.params = count(f[1], "params");
    r.file_bytes = count(f[2], "file_bytes");
    r.quantized_file_bytes = count(f[3], "quantized_file_bytes");
    if (!trim(f[4]).empty()) r.inference_us_per_sample = parse_double(f[4], where + " latency");
    r.test_auroc = parse_double(f[5], where + " test_auroc");
    validate(r);
    out.push_back(std::move(r));
  }
  return out;
}

/// Long-format per-epoch log: one row per (model, epoch).
inline std::string epochs_csv(const std::map<std::string, std::vector<EpochLog>>& logs) {
  std::string out = "model,epoch,train_loss,test_auroc,seconds\n";
  for (const auto& [name, rows] : logs) {
    for (const auto& l : rows) {
      out += name + ',' + std::to_string(l.epoch) + ',' + format_number(l.train_loss) + ',' +
             (std::isnan(l.test_auroc) ? std::string() : format_number(l.test_auroc)) + ',' +
             format_number(l.seconds) + '\n';
    }
  }
  return out;
}

inline std::map<std::string, std::vector<EpochLog>> parse_epochs_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || trim(line) != "model,epoch,train_loss,test_auroc,seconds") {
    throw DataError("epoch CSV must start with header 'model,epoch,train_loss,test_auroc,seconds'");
  }
  std::map<std::string, std::vector<EpochLog>> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    const std::string where = "epoch line " + std::to_string(line_no);
    if (f.size() != 5) throw DataError(where + ": expected 5 fields");
    EpochLog l;
    const auto epoch = parse_int(f[1], where + " epoch");
    if (epoch < 1) throw DataError(where + ": epoch must be positive");
    l.epoch = static_cast<std::size_t>(epoch);
    l.train_loss = parse_double(f[2], where + " train_loss");
    if (!trim(f[3]).empty()) l.test_auroc = parse_double(f[3], where + " test_auroc");
    l.seconds = parse_double(f[4], where + " seconds");
    out[trim(f[0])].push_back(l);
  }
  return out;
}

namespace detail {

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

}  // namespace detail

/// Self-contained SVG: bar panels for AUROC, parameters, file size and
/// latency, and a line chart of test AUROC by epoch.
inline std::string report_svg(const std::vector<EvalReport>& reports,
                              const std::map<std::string, std::vector<EpochLog>>& logs) {
  static constexpr const char* kColors[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2",
                                            "#59a14f", "#edc948", "#b07aa1", "#9c755f"};
  const double panel_w = 300, panel_h = 220, pad = 40;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << 2 * panel_w + 3 * pad << "\" height=\""
    << 3 * panel_h + 4 * pad << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  struct Metric {
    const char* title;
    double (*get)(const EvalReport&);
  };
  const Metric metrics[] = {
      {"Test AUROC", [](const EvalReport& r) { return r.test_auroc; }},
      {"Parameters", [](const EvalReport& r) { return static_cast<double>(r.params); }},
      {"File size [bytes]",
       [](const EvalReport& r) {
         return static_cast<double>(r.quantized_file_bytes ? r.quantized_file_bytes : r.file_bytes);
       }},
      {"Inference [us/sample]", [](const EvalReport& r) { return r.inference_us_per_sample; }},
  };
  for (std::size_t m = 0; m < 4; ++m) {
    const double x0 = pad + static_cast<double>(m % 2) * (panel_w + pad);
    const double y0 = pad + static_cast<double>(m / 2) * (panel_h + pad);
    s << "<text x=\"" << x0 << "\" y=\"" << y0 - 8 << "\" font-weight=\"bold\">" << metrics[m].title << "</text>\n";
    s << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << panel_w << "\" height=\"" << panel_h
      << "\" fill=\"none\" stroke=\"#999\"/>\n";
    double top = 0.0;
    for (const auto& r : reports) {
      const double v = metrics[m].get(r);
      if (std::isfinite(v)) top = std::max(top, v);
    }
    if (top <= 0.0) top = 1.0;
    const double slot = reports.empty() ? panel_w : panel_w / static_cast<double>(reports.size());
    for (std::size_t i = 0; i < reports.size(); ++i) {
      const double v = metrics[m].get(reports[i]);
      const double bx = x0 + slot * static_cast<double>(i) + slot * 0.15;
      const double label_y = y0 + panel_h + 12;
      s << "<text x=\"" << bx << "\" y=\"" << label_y << "\">" << detail::xml_escape(reports[i].model) << "</text>\n";
      if (!std::isfinite(v)) continue;
      const double h = (panel_h - 20) * v / top;
      s << "<rect x=\"" << bx << "\" y=\"" << y0 + panel_h - h << "\" width=\"" << slot * 0.7 << "\" height=\"" << h
        << "\" fill=\"" << kColors[i % 8] << "\"/>\n";
      s << "<text x=\"" << bx << "\" y=\"" << y0 + panel_h - h - 3 << "\">"
        << (m == 0 ? detail::fixed(v, 3) : detail::fixed(v, v < 100 ? 1 : 0)) << "</text>\n";
    }
  }

  // Test AUROC by epoch.
  const double x0 = pad, y0 = pad + 2 * (panel_h + pad), w = 2 * panel_w + pad, h = panel_h;
  s << "<text x=\"" << x0 << "\" y=\"" << y0 - 8 << "\" font-weight=\"bold\">Test AUROC by epoch</text>\n";
  s << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << w << "\" height=\"" << h
    << "\" fill=\"none\" stroke=\"#999\"/>\n";
  std::size_t max_epoch = 1;
  double lo = 1.0, hi = 0.0;
  for (const auto& [name, rows] : logs) {
    for (const auto& l : rows) {
      max_epoch = std::max(max_epoch, l.epoch);
      if (std::isfinite(l.test_auroc)) {
        lo = std::min(lo, l.test_auroc);
        hi = std::max(hi, l.test_auroc);
      }
    }
  }
  if (hi < lo) lo = 0.0, hi = 1.0;
  if (hi - lo < 0.01) lo -= 0.005, hi += 0.005;
  s << "<text x=\"" << x0 + 4 << "\" y=\"" << y0 + 12 << "\">" << detail::fixed(hi, 3) << "</text>\n";
  s << "<text x=\"" << x0 + 4 << "\" y=\"" << y0 + h - 4 << "\">" << detail::fixed(lo, 3) << "</text>\n";
  std::size_t k = 0;
  for (const auto& [name, rows] : logs) {
    std::string points;
    for (const auto& l : rows) {
      if (!std::isfinite(l.test_auroc)) continue;
      const double px = x0 + w * (max_epoch > 1 ? static_cast<double>(l.epoch - 1) / static_cast<double>(max_epoch - 1) : 0.5);
      const double py = y0 + h - (h - 10) * (l.test_auroc - lo) / (hi - lo) - 5;
      points += detail::fixed(px, 1) + "," + detail::fixed(py, 1) + " ";
    }
    s << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << kColors[k % 8] << "\" points=\"" << points
      << "\"/>\n";
    s << "<text x=\"" << x0 + w - 120 << "\" y=\"" << y0 + 14 + 13 * static_cast<double>(k) << "\" fill=\""
      << kColors[k % 8] << "\">" << detail::xml_escape(name) << "</text>\n";
    ++k;
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace condense
