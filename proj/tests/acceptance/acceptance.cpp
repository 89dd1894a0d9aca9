// Acceptance suite: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "condense/condensation.hpp"
#include "condense/data_pipeline.hpp"
#include "condense/evaluation.hpp"
#include "condense/metrics.hpp"
#include "condense/model_store.hpp"
#include "condense/training.hpp"
#include "support/oracles.hpp"

using namespace condense;

namespace {

// Tolerances and budgets.
constexpr double kParamSeconds = 1.0;
constexpr double kGradTolerance = 1e-4;
constexpr std::uint64_t kGradSeeds = 20;
constexpr double kGradSeconds = 30.0;
constexpr double kPruneTolerance = 1e-6;
constexpr double kPruneSeconds = 10.0;
constexpr double kQuantRatio = 3.5;
constexpr double kQuantSeconds = 5.0;
constexpr double kAurocTolerance = 1e-12;
constexpr double kBaselineAuroc = 0.85;
constexpr double kVariantMargin = 0.03;
constexpr double kQuantizedMargin = 0.01;
constexpr double kCohortSeconds = 15.0 * 60.0;
constexpr std::size_t kBenchReps = 7;

// Cohort and training settings.
constexpr std::size_t kCohortSize = 2000;
constexpr std::uint64_t kCohortSeed = 20240601;
constexpr std::uint64_t kInitSeed = 1;
constexpr std::uint64_t kTrainSeed = 1;

int failures = 0;

void report(bool pass, int id, const std::string& name, const std::string& detail) {
  std::printf("%s criterion-%d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

Tensor random_tensor(Rng& rng, Shape shape, double scale) {
  Tensor t(std::move(shape));
  for (float& v : t.data()) v = static_cast<float>(rng.uniform(-scale, scale));
  return t;
}

// ---------------------------------------------------------------------------

void parameter_counts() {
  const auto start = std::chrono::steady_clock::now();
  const std::size_t lstm = param_count(baseline_lstm_spec());
  const std::size_t pruned = param_count(prune_model(init_model<float>(baseline_lstm_spec(), 1), 0.5).first);
  const std::size_t hlstm = param_count(hlstm_model_spec(76, 16, 16));
  const std::size_t dnn = param_count(baseline_dnn_spec());
  const double secs = seconds_since(start);
  const bool ok = lstm == 8081 && pruned == 3273 && hlstm == 6993 && dnn == 60929 && secs < kParamSeconds;
  report(ok, 1, "parameter-counts",
         "lstm=" + std::to_string(lstm) + " pruned_lstm=" + std::to_string(pruned) + " hlstm=" +
             std::to_string(hlstm) + " dnn=" + std::to_string(dnn) + " (expect 8081/3273/6993/60929) time=" +
             fmt("%.3fs", secs));
}

void gradient_checks() {
  const auto start = std::chrono::steady_clock::now();
  struct Family {
    const char* name;
    ModelSpec spec;
    std::size_t steps;
  };
  const Family families[] = {
      {"dense", dnn_model_spec(3, {3, 2}, 0.5f), 0},
      {"lstm", lstm_model_spec(2, {3, 2}), 4},
      {"hlstm", hlstm_model_spec(2, 3, 2), 4},
  };
  bool ok = true;
  std::string detail;
  for (const auto& f : families) {
    double worst = 0.0;
    std::size_t checked = 0, kinks = 0;
    for (std::uint64_t seed = 1; seed <= kGradSeeds; ++seed) {
      const auto c = oracle::make_grad_case(f.spec, seed, 2, f.steps);
      const auto r = oracle::check_gradients(c, 1000 + seed);
      worst = std::max(worst, r.worst);
      checked += r.checked;
      kinks += r.kinks;
    }
    ok = ok && worst < kGradTolerance && kinks * 100 <= checked;
    detail += std::string(f.name) + " max_rel_err=" + fmt("%.2e", worst) + " coords=" + std::to_string(checked) +
              " kink_skips=" + std::to_string(kinks) + "; ";
  }
  const double secs = seconds_since(start);
  ok = ok && secs < kGradSeconds;
  report(ok, 2, "gradient-check",
         detail + std::to_string(kGradSeeds) + " seeds each, tol " + fmt("%.0e", kGradTolerance) + ", time=" +
             fmt("%.2fs", secs));
}

void pruning_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  bool ok = true;
  std::string detail;
  for (const auto& spec : {baseline_dnn_spec(), baseline_lstm_spec()}) {
    const auto model = init_model<float>(spec, 3);
    const auto [pruned, rep] = prune_model(model, 0.5);
    const auto masked = pruned_equivalence_mask(model, rep);
    Rng rng = Rng(7).fork(streams::kTest);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      const auto x = spec.recurrent() ? random_tensor(rng, {1, 48, 76}, 2.0) : random_tensor(rng, {1, 76}, 2.0);
      worst = std::max(worst, std::abs(double(predict(pruned, x)[0]) - double(predict(masked, x)[0])));
    }
    ok = ok && worst <= kPruneTolerance;
    detail += std::string(spec.recurrent() ? "lstm" : "dnn") + " max_abs_diff=" + fmt("%.2e", worst) + " params " +
              std::to_string(rep.total_before) + "->" + std::to_string(rep.total_after) + "; ";
  }
  const double secs = seconds_since(start);
  ok = ok && secs < kPruneSeconds;
  report(ok, 3, "pruning-equivalence", detail + "50 inputs each, time=" + fmt("%.2fs", secs));
}

void quantization_bounds() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng = Rng(11).fork(streams::kTest);
  bool bound_ok = true;
  double worst_ratio = 0.0;  // max error / (scale/2 + ulp)
  for (int trial = 0; trial < 100; ++trial) {
    Tensor t;
    if (trial == 0) {
      t = Tensor({5, 4}, -0.731f);
    } else if (trial == 1) {
      t = Tensor({1}, {3.25f});
    } else if (trial == 2) {
      t = Tensor({1, 1}, {-1e-3f});
    } else {
      const double scale = std::pow(10.0, rng.uniform(-4.0, 3.0));
      t = random_tensor(rng, {1 + rng.below(64), 1 + rng.below(64)}, scale);
    }
    const auto q = quantize(t);
    const auto back = dequantize(q);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const float a = std::abs(t[i]), b = std::abs(back[i]);
      const double ulp = std::max(std::nextafter(a, INFINITY) - a, std::nextafter(b, INFINITY) - b);
      const double bound = q.scale / 2.0 + ulp;
      const double err = std::abs(double(t[i]) - double(back[i]));
      if (err > bound) bound_ok = false;
      if (bound > 0) worst_ratio = std::max(worst_ratio, err / bound);
    }
  }
  const auto dnn = init_model<float>(baseline_dnn_spec(), 1);
  const auto q = quantize_model(dnn);
  const double ratio = double(payload_bytes(dnn)) / double(payload_bytes(q));
  const double file_ratio = double(encode_model(dnn).size()) / double(encode_model(q).size());
  const double secs = seconds_since(start);
  const bool ok = bound_ok && ratio >= kQuantRatio && secs < kQuantSeconds;
  report(ok, 4, "quantization-bounds",
         "100 tensors (incl. constant and single-element) max err/(scale/2+ulp)=" + fmt("%.3f", worst_ratio) +
             "; dnn payload " + std::to_string(payload_bytes(dnn)) + "->" + std::to_string(payload_bytes(q)) +
             " bytes ratio=" + fmt("%.3f", ratio) + " (file ratio " + fmt("%.3f", file_ratio) + "), time=" +
             fmt("%.2fs", secs));
}

void auroc_oracle() {
  Rng rng = Rng(13).fork(streams::kTest);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(199);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = trial % 4 == 0 ? double(rng.below(6)) : rng.normal();
      y[i] = rng.bernoulli(0.35) ? 1 : 0;
    }
    y[0] = 0;
    y[n - 1] = 1;
    worst = std::max(worst, std::abs(auroc(std::span<const double>(s), std::span<const int>(y)) -
                                     oracle::auroc_all_pairs(s, y)));
  }
  const std::vector<double> sep = {0.1, 0.2, 0.3, 0.7, 0.8}, tie = {0.4, 0.4, 0.4, 0.4, 0.4};
  const std::vector<int> lab = {0, 0, 0, 1, 1};
  const double a_sep = auroc(std::span<const double>(sep), std::span<const int>(lab));
  const double a_tie = auroc(std::span<const double>(tie), std::span<const int>(lab));
  const bool ok = worst <= kAurocTolerance && a_sep == 1.0 && a_tie == 0.5;
  report(ok, 5, "auroc-oracle",
         "200 instances max |rank - all_pairs|=" + fmt("%.2e", worst) + "; separated=" + fmt("%.3f", a_sep) +
             " all_ties=" + fmt("%.3f", a_tie));
}

// ---------------------------------------------------------------------------
// Full pipeline on the synthetic cohort

struct TrainedModel {
  std::string name;
  Model<float> model;
  bool recurrent = true;
  std::vector<EpochLog> logs;
  double auroc = 0.0;
};

struct PipelineRun {
  std::map<std::string, std::string> files;  // artifact name -> bytes
  std::vector<TrainedModel> models;
  PreparedSplit test;
  std::size_t train_size = 0;
  double seconds = 0.0;
};

PipelineRun run_pipeline() {
  const auto start = std::chrono::steady_clock::now();
  PipelineRun run;
  const auto specs = default_variable_specs();
  const auto cohort = generate_synthetic(kCohortSize, kCohortSeed, specs);
  run.files["episodes.csv"] = episodes_csv(cohort.episodes, specs);
  run.files["labels.csv"] = labels_csv(cohort.episodes);

  const auto enc = preprocess(cohort.episodes, specs, kCohortSeed);
  const auto train_split = prepare_split(enc.train, enc.schema);
  run.test = prepare_split(enc.test, enc.schema);
  run.train_size = train_split.sequences.size();
  run.files["stats.csv"] = stats_csv(enc.schema);
  run.files["train.cnnd"] = encode_split(train_split);
  run.files["test.cnnd"] = encode_split(run.test);

  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 8;
  cfg.adam.learning_rate = 0.001;
  cfg.seed = kTrainSeed;
  cfg.record_timing = false;

  auto fit = [&](const std::string& name, const ModelSpec& spec, const TrainConfig& c) {
    const bool rec = spec.recurrent();
    auto r = train(init_model<float>(spec, kInitSeed), rec ? train_split.sequences : train_split.statics,
                   rec ? run.test.sequences : run.test.statics, c);
    run.files[name + "/model.cnnc"] = encode_model(r.model);
    if (r.prune_report) run.files[name + "/prune_report.csv"] = prune_report_csv(*r.prune_report);
    TrainedModel t{name, std::move(r.model), rec, std::move(r.logs), 0.0};
    t.auroc = dataset_auroc(t.model, rec ? run.test.sequences : run.test.statics);
    std::printf("  trained %-12s params=%-6zu test_auroc=%.4f\n", name.c_str(), param_count(t.model), t.auroc);
    std::fflush(stdout);
    run.models.push_back(std::move(t));
  };

  fit("lstm", baseline_lstm_spec(), cfg);
  TrainConfig pruned_cfg = cfg;
  pruned_cfg.prune_hook = PruneHook{0.5, 1};
  fit("lstm-pruned", baseline_lstm_spec(), pruned_cfg);
  fit("hlstm", baseline_hlstm_spec(), cfg);
  fit("dnn", baseline_dnn_spec(), cfg);

  // Post-training quantization of the DNN, evaluated through a byte round trip.
  const auto q_bytes = encode_model(quantize_model(run.models.back().model));
  run.files["dnn/model.q.cnnc"] = q_bytes;
  TrainedModel tq{"dnn-q", dequantize_model(std::get<QuantizedModel>(decode_model(q_bytes))), false, {}, 0.0};
  tq.auroc = dataset_auroc(tq.model, run.test.statics);
  std::printf("  quantized %-12s params=%-6zu test_auroc=%.4f\n", tq.name.c_str(), param_count(tq.model), tq.auroc);
  run.models.push_back(std::move(tq));

  std::vector<EvalReport> reports;
  std::map<std::string, std::vector<EpochLog>> logs;
  for (const auto& m : run.models) {
    EvalReport r;
    r.model = m.name;
    r.params = param_count(m.model);
    r.file_bytes = encode_model(m.model).size();
    if (m.name == "dnn-q") r.quantized_file_bytes = q_bytes.size();
    r.test_auroc = m.auroc;
    reports.push_back(r);
    if (!m.logs.empty()) logs[m.name] = m.logs;
  }
  run.files["eval.csv"] = comparison_csv(reports);
  run.files["epochs.csv"] = epochs_csv(logs);
  run.files["report.svg"] = report_svg(reports, logs);
  run.seconds = seconds_since(start);
  return run;
}

const TrainedModel& find(const PipelineRun& run, const std::string& name) {
  for (const auto& m : run.models) {
    if (m.name == name) return m;
  }
  throw std::runtime_error("missing model " + name);
}

void cohort_quality(const PipelineRun& run) {
  const double base = find(run, "lstm").auroc, pruned = find(run, "lstm-pruned").auroc;
  const double hl = find(run, "hlstm").auroc, dnn = find(run, "dnn").auroc, dq = find(run, "dnn-q").auroc;
  const bool ok = base >= kBaselineAuroc && pruned >= base - kVariantMargin && hl >= base - kVariantMargin &&
                  std::abs(dq - dnn) <= kQuantizedMargin && run.seconds <= kCohortSeconds;
  report(ok, 6, "synthetic-cohort",
         "n=" + std::to_string(kCohortSize) + " train=" + std::to_string(run.train_size) +
             " test=" + std::to_string(run.test.sequences.size()) + " lstm=" + fmt("%.4f", base) +
             " (>= 0.85) lstm-pruned=" + fmt("%.4f", pruned) + " hlstm=" + fmt("%.4f", hl) + " (>= " +
             fmt("%.4f", base - kVariantMargin) + ") dnn=" + fmt("%.4f", dnn) + " dnn-q=" + fmt("%.4f", dq) +
             " (|diff| <= 0.01) time=" + fmt("%.1fs", run.seconds));
}

void latency_ordering(const PipelineRun& run) {
  std::map<std::string, double> us;
  for (const auto& m : run.models) {
    us[m.name] = bench_inference(m.model, m.recurrent ? run.test.sequences : run.test.statics, kBenchReps);
  }
  const double slowest_dnn = std::max(us["dnn"], us["dnn-q"]);
  const double fastest_lstm = std::min({us["lstm"], us["lstm-pruned"], us["hlstm"]});
  const bool ok = us["lstm-pruned"] < us["lstm"] && slowest_dnn < fastest_lstm;
  std::string detail;
  for (const auto& [name, v] : us) detail += name + "=" + fmt("%.2fus", v) + " ";
  report(ok, 7, "latency-ordering", detail + "(median of " + std::to_string(kBenchReps) + " passes per sample)");
}

void determinism(const PipelineRun& a, const PipelineRun& b) {
  bool ok = a.files.size() == b.files.size();
  std::string differing;
  for (const auto& [name, bytes] : a.files) {
    const auto it = b.files.find(name);
    if (it == b.files.end() || it->second != bytes) {
      ok = false;
      differing += " " + name;
    }
  }
  report(ok, 8, "determinism",
         std::to_string(a.files.size()) + " artifacts compared byte for byte" +
             (differing.empty() ? std::string() : "; differing:" + differing));
}

void write_artifacts(const PipelineRun& run, const std::filesystem::path& dir) {
  for (const auto& [name, bytes] : run.files) {
    const auto path = dir / name;
    std::filesystem::create_directories(path.parent_path());
    std::ofstream(path, std::ios::binary) << bytes;
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path out = argc > 1 ? argv[1] : "acceptance_artifacts";
  try {
    parameter_counts();
    gradient_checks();
    pruning_equivalence();
    quantization_bounds();
    auroc_oracle();
    std::printf("running synthetic pipeline (first pass)\n");
    const auto first = run_pipeline();
    cohort_quality(first);
    latency_ordering(first);
    std::printf("running synthetic pipeline (second pass)\n");
    const auto second = run_pipeline();
    determinism(first, second);
    write_artifacts(first, out);
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
