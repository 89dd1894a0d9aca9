// condense: synth -> preprocess -> train -> prune -> quantize -> eval -> bench -> report

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "condense/condensation.hpp"
#include "condense/config.hpp"
#include "condense/data_pipeline.hpp"
#include "condense/evaluation.hpp"
#include "condense/model_store.hpp"
#include "condense/training.hpp"

namespace fs = std::filesystem;
using namespace condense;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitModel = 4;
constexpr int kExitNumeric = 5;

int fail(int code, const char* kind, std::string message) {
  for (char& c : message) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  std::fprintf(stderr, "error code=%d kind=%s message=%s\n", code, kind, message.c_str());
  return code;
}

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out = ".";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "key = value config file");
  cmd->add_option("--set", c.sets, "override as section.key=value (repeatable)");
  cmd->add_option("--out", c.out, "output directory")->required();
}

RunConfig resolve(const Common& c, RunConfig cfg) {
  if (!c.config_path.empty()) {
    std::string text;
    try {
      text = read_file_bytes(c.config_path);
    } catch (const Error&) {
      throw UsageError("cannot read config " + c.config_path);
    }
    cfg = parse_config(text, cfg);
  }
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    const auto dot = s.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw UsageError("--set expects section.key=value, got '" + s + "'");
    }
    set_config_value(cfg, s.substr(0, dot), trim(s.substr(dot + 1, eq - dot - 1)), trim(s.substr(eq + 1)), "--set");
  }
  validate(cfg);
  return cfg;
}

fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir);
  return fs::path(dir);
}

std::vector<VariableSpec> specs_for(const RunConfig& cfg) {
  return cfg.spec.empty() ? default_variable_specs() : load_variable_specs(cfg.spec);
}

PreparedSplit load_split(const fs::path& path) {
  std::string bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const Error&) {
    throw DataError("cannot read dataset " + path.string());
  }
  return decode_split(bytes);
}

const Dataset<float>& pick(const PreparedSplit& s, const ModelSpec& spec) {
  return spec.recurrent() ? s.sequences : s.statics;
}

/// `name=path` or just `path` (named after the file's directory).
std::pair<std::string, fs::path> named_model(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq != std::string::npos) return {arg.substr(0, eq), fs::path(arg.substr(eq + 1))};
  const fs::path p(arg);
  std::string name = p.parent_path().filename().string();
  if (name.empty() || name == ".") name = p.stem().string();
  if (p.extension() == ".cnnc" && p.stem().extension() == ".q") name += "-q";
  return {name, p};
}

// ---------------------------------------------------------------------------

int cmd_synth(const Common& c, std::size_t n, std::optional<std::uint64_t> seed, const std::string& spec_path) {
  RunConfig base;
  if (!spec_path.empty()) base.spec = spec_path;
  auto cfg = resolve(c, base);
  if (n != std::numeric_limits<std::size_t>::max()) cfg.samples = n;
  if (seed) cfg.data_seed = *seed;
  if (cfg.samples < 2) throw UsageError("--n must be at least 2");
  const auto specs = specs_for(cfg);
  const auto cohort = generate_synthetic(cfg.samples, cfg.data_seed, specs);
  const auto out = prepare_out(c.out);
  write_file_atomic(out / "episodes.csv", episodes_csv(cohort.episodes, specs));
  write_file_atomic(out / "labels.csv", labels_csv(cohort.episodes));
  write_file_atomic(out / "variables.spec", format_variable_specs(specs));
  write_file_atomic(out / "resolved.cfg", format_config(cfg));
  std::printf("samples=%zu variables=%zu encoded_width=%zu\n", cfg.samples, specs.size(), encoded_width(specs));
  return 0;
}

int cmd_preprocess(const Common& c, const std::string& in_dir) {
  RunConfig base;
  const fs::path in(in_dir);
  if (fs::exists(in / "variables.spec")) base.spec = (in / "variables.spec").string();
  const auto cfg = resolve(c, base);
  const auto specs = specs_for(cfg);
  const auto episodes = parse_episodes(read_lines(in / "episodes.csv"), read_lines(in / "labels.csv"), specs);
  const auto enc = preprocess(episodes, specs, cfg.split_seed, cfg.test_fraction, cfg.interval_hours,
                              cfg.horizon_hours);
  if (enc.train.empty() || enc.test.empty()) throw DataError("split left the training or test set empty");
  for (const auto& w : enc.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  const auto out = prepare_out(c.out);
  write_file_atomic(out / "train.cnnd", encode_split(prepare_split(enc.train, enc.schema)));
  write_file_atomic(out / "test.cnnd", encode_split(prepare_split(enc.test, enc.schema)));
  write_file_atomic(out / "stats.csv", stats_csv(enc.schema));
  write_file_atomic(out / "resolved.cfg", format_config(cfg));
  std::printf("train=%zu test=%zu width=%zu\n", enc.train.size(), enc.test.size(), enc.schema.width());
  return 0;
}

int cmd_train(const Common& c, const std::string& data_dir) {
  const auto cfg = resolve(c, RunConfig{});
  const fs::path data(data_dir);
  const auto train_split = load_split(data / "train.cnnd");
  const auto test_split = load_split(data / "test.cnnd");
  const auto spec = model_spec(cfg, static_cast<std::uint32_t>(train_split.feature_names.size()));
  auto model = init_model<float>(spec, cfg.init_seed);
  const auto result = train(std::move(model), pick(train_split, spec), pick(test_split, spec), train_config(cfg));
  const auto out = prepare_out(c.out);
  write_file_atomic(out / "model.cnnc", encode_model(result.model));
  if (result.prune_report) write_file_atomic(out / "prune_report.csv", prune_report_csv(*result.prune_report));
  if (cfg.quantize) write_file_atomic(out / "model.q.cnnc", encode_model(quantize_model(result.model)));
  write_file_atomic(out / "epochs.csv", epochs_csv({{model_label(cfg), result.logs}}));
  write_file_atomic(out / "resolved.cfg", format_config(cfg));
  const auto& last = result.logs.back();
  std::printf("params=%zu final_loss=%s test_auroc=%s\n", param_count(result.model),
              format_number(last.train_loss).c_str(), format_number(last.test_auroc).c_str());
  return 0;
}

int cmd_prune(const Common& c, const std::string& model_path, double fraction) {
  const auto cfg = resolve(c, RunConfig{});
  const auto model = load_float_model(model_path);
  const auto [pruned, report] = prune_model(model, fraction);
  const auto out = prepare_out(c.out);
  write_file_atomic(out / "model.cnnc", encode_model(pruned));
  write_file_atomic(out / "prune_report.csv", prune_report_csv(report));
  write_file_atomic(out / "resolved.cfg", format_config(cfg));
  std::printf("params_before=%zu params_after=%zu\n", report.total_before, report.total_after);
  return 0;
}

int cmd_quantize(const Common& c, const std::string& model_path) {
  const auto cfg = resolve(c, RunConfig{});
  const auto stored = load_model(model_path);
  if (!std::holds_alternative<Model<float>>(stored)) throw ModelError("model is already quantized");
  const auto q = quantize_model(std::get<Model<float>>(stored));
  const auto out = prepare_out(c.out);
  const auto bytes = encode_model(q);
  write_file_atomic(out / "model.q.cnnc", bytes);
  write_file_atomic(out / "resolved.cfg", format_config(cfg));
  std::printf("params=%zu bytes=%zu\n", param_count(q), bytes.size());
  return 0;
}

std::vector<EvalReport> evaluate(const std::string& data_dir, const std::vector<std::string>& models,
                                 std::size_t bench_reps) {
  const auto test_split = load_split(fs::path(data_dir) / "test.cnnd");
  std::vector<EvalReport> reports;
  for (const auto& arg : models) {
    const auto [name, path] = named_model(arg);
    const auto stored = load_model(path);
    EvalReport r;
    r.model = name;
    r.params = param_count(stored);
    Model<float> model;
    if (const auto* q = std::get_if<QuantizedModel>(&stored)) {
      model = dequantize_model(*q);
      r.file_bytes = encode_model(model).size();
      r.quantized_file_bytes = encode_model(*q).size();
    } else {
      model = std::get<Model<float>>(stored);
      r.file_bytes = encode_model(model).size();
    }
    const auto& data = pick(test_split, model.spec);
    if (data.feature_width() != model.spec.input_width()) {
      throw DataError("model " + name + " expects input width " + std::to_string(model.spec.input_width()));
    }
    r.test_auroc = dataset_auroc(model, data);
    if (std::isnan(r.test_auroc)) throw DataError("test set has a single class; AUROC undefined");
    if (bench_reps > 0) r.inference_us_per_sample = bench_inference(model, data, bench_reps);
    reports.push_back(std::move(r));
  }
  return reports;
}

int cmd_eval(const Common& c, const std::string& data_dir, const std::vector<std::string>& models,
             std::size_t bench_reps, const char* file) {
  const auto cfg = resolve(c, RunConfig{});
  const auto reports = evaluate(data_dir, models, bench_reps);
  const auto out = prepare_out(c.out);
  const auto csv = comparison_csv(reports);
  write_file_atomic(out / file, csv);
  write_file_atomic(out / "resolved.cfg", format_config(cfg));
  std::fputs(csv.c_str(), stdout);
  return 0;
}

int cmd_report(const Common& c, const std::string& eval_path, const std::vector<std::string>& epoch_paths) {
  const auto cfg = resolve(c, RunConfig{});
  const auto reports = parse_comparison_csv(read_file_bytes(eval_path));
  std::map<std::string, std::vector<EpochLog>> logs;
  for (const auto& p : epoch_paths) {
    for (auto& [name, rows] : parse_epochs_csv(read_file_bytes(p))) logs[name] = std::move(rows);
  }
  const auto out = prepare_out(c.out);
  write_file_atomic(out / "report.svg", report_svg(reports, logs));
  if (!logs.empty()) write_file_atomic(out / "epochs.csv", epochs_csv(logs));
  write_file_atomic(out / "resolved.cfg", format_config(cfg));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train, prune, quantize and evaluate masked-sequence classifiers"};
  app.require_subcommand(1);

  Common synth_c, pre_c, train_c, prune_c, quant_c, eval_c, bench_c, report_c;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labelled cohort");
  std::size_t n = std::numeric_limits<std::size_t>::max();
  std::optional<std::uint64_t> seed;
  std::string spec_path;
  synth->add_option("--n", n, "number of samples");
  synth->add_option("--seed", seed, "generator seed");
  synth->add_option("--spec", spec_path, "variable spec file (default: built-in 76-wide layout)");
  add_common(synth, synth_c);

  auto* pre = app.add_subcommand("preprocess", "Resample, impute, split and encode a cohort");
  std::string pre_in;
  pre->add_option("--in", pre_in, "directory with episodes.csv, labels.csv and optionally variables.spec")
      ->required();
  add_common(pre, pre_c);

  auto* trn = app.add_subcommand("train", "Train a model on a preprocessed cohort");
  std::string train_data;
  trn->add_option("--data", train_data, "directory with train.cnnd and test.cnnd")->required();
  add_common(trn, train_c);

  auto* prn = app.add_subcommand("prune", "Remove the lowest-saliency channels");
  std::string prune_model_path;
  double fraction = 0.5;
  prn->add_option("--model", prune_model_path, "float model file")->required();
  prn->add_option("--fraction", fraction, "fraction of channels removed per prunable layer");
  add_common(prn, prune_c);

  auto* qnt = app.add_subcommand("quantize", "8-bit post-training quantization");
  std::string quant_model_path;
  qnt->add_option("--model", quant_model_path, "float model file")->required();
  add_common(qnt, quant_c);

  auto* evl = app.add_subcommand("eval", "Score models on the test split");
  std::string eval_data;
  std::vector<std::string> eval_models;
  std::size_t eval_reps = 0;
  evl->add_option("--data", eval_data, "directory with test.cnnd")->required();
  evl->add_option("--model", eval_models, "[name=]model file (repeatable)")->required();
  evl->add_option("--bench-reps", eval_reps, "also time inference with this many repetitions (>= 3)");
  add_common(evl, eval_c);

  auto* bch = app.add_subcommand("bench", "Time inference per sample");
  std::string bench_data;
  std::vector<std::string> bench_models;
  std::size_t bench_reps = 5;
  bch->add_option("--data", bench_data, "directory with test.cnnd")->required();
  bch->add_option("--model", bench_models, "[name=]model file (repeatable)")->required();
  bch->add_option("--reps", bench_reps, "timed repetitions (>= 3)");
  add_common(bch, bench_c);

  auto* rpt = app.add_subcommand("report", "Render the comparison and epoch curves as SVG");
  std::string report_eval;
  std::vector<std::string> report_epochs;
  rpt->add_option("--eval", report_eval, "comparison CSV")->required();
  rpt->add_option("--epochs", report_epochs, "epoch CSV (repeatable)");
  add_common(rpt, report_c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kExitUsage, "usage", e.what());
  }

  try {
    if (*synth) {
      if (n == 0) throw UsageError("--n must be at least 2");
      return cmd_synth(synth_c, n, seed, spec_path);
    }
    if (*pre) return cmd_preprocess(pre_c, pre_in);
    if (*trn) return cmd_train(train_c, train_data);
    if (*prn) return cmd_prune(prune_c, prune_model_path, fraction);
    if (*qnt) return cmd_quantize(quant_c, quant_model_path);
    if (*evl) {
      if (eval_reps > 0 && eval_reps < 3) throw UsageError("--bench-reps must be at least 3");
      return cmd_eval(eval_c, eval_data, eval_models, eval_reps, "eval.csv");
    }
    if (*bch) {
      if (bench_reps < 3) throw UsageError("--reps must be at least 3");
      return cmd_eval(bench_c, bench_data, bench_models, bench_reps, "bench.csv");
    }
    if (*rpt) return cmd_report(report_c, report_eval, report_epochs);
  } catch (const UsageError& e) {
    return fail(kExitUsage, "usage", e.what());
  } catch (const FormatError& e) {
    return fail(kExitModel, "format", e.what());
  } catch (const ModelError& e) {
    return fail(kExitModel, "model", e.what());
  } catch (const DimensionError& e) {
    return fail(kExitModel, "model", e.what());
  } catch (const NumericError& e) {
    return fail(kExitNumeric, "numeric", e.what());
  } catch (const DataError& e) {
    return fail(kExitData, "data", e.what());
  } catch (const Error& e) {
    return fail(kExitData, "io", e.what());
  } catch (const std::exception& e) {
    return fail(kExitData, "io", e.what());
  }
  return fail(kExitUsage, "usage", "no subcommand");
}
