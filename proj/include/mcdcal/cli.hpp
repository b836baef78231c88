#pragma once

// Command-line surface. Exit codes: 0 success, 1 validation error (bad flags,
// malformed or inconsistent input, oracle mismatch), 2 I/O error.

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mcdcal/binned_metrics.hpp"
#include "mcdcal/demo.hpp"
#include "mcdcal/io.hpp"
#include "mcdcal/reference.hpp"
#include "mcdcal/rejection.hpp"
#include "mcdcal/temp_fit.hpp"

namespace mcdcal::cli {

enum ExitCode : int { kOk = 0, kValidationError = 1, kIoError = 2 };

namespace detail {

struct Options {
  // shared
  std::size_t bins = kDefaultBins;
  std::size_t passes = 25;
  std::uint64_t seed = 0;
  double t_min = FitConfig{}.t_min;
  double t_max = FitConfig{}.t_max;
  double beta = 0.0;
  std::string format;
  std::string input;
  std::string output;
  std::string temperature;
  // demo
  std::string out_dir;
  DemoConfig demo;
  // fit
  std::size_t grid_points = FitConfig{}.grid_points;
  // reliability
  std::string axis = "both";
  // reject
  std::size_t steps = 100;
  // oracle
  std::size_t instances = 1000;
};

class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) {
    if (!path.empty() && path != "-") file_ = io::open_output(path);
    os_ = file_ ? &*file_ : &fallback;
    path_ = path;
  }
  std::ostream& stream() { return *os_; }
  void finish() {
    os_->flush();
    if (!*os_) throw IoError("failed writing '" + path_ + "'");
  }

 private:
  std::optional<std::ofstream> file_;
  std::ostream* os_ = nullptr;
  std::string path_;
};

inline std::string resolve_format(const std::string& requested, const char* fallback) {
  const std::string f = requested.empty() ? fallback : requested;
  if (f != "json" && f != "csv") throw InvalidInput("--format must be json or csv");
  return f;
}

inline FitConfig fit_config(const Options& o) {
  FitConfig cfg;
  cfg.t_min = o.t_min;
  cfg.t_max = o.t_max;
  cfg.grid_points = o.grid_points;
  return cfg;
}

inline std::vector<LogitSampleSet> read_sets(const std::string& path) {
  auto dump = io::read_logit_dump(path);
  if (dump.sets.empty()) throw InvalidInput("'" + path + "' contains no records");
  return std::move(dump.sets);
}

inline std::optional<double> maybe_temperature(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return io::read_temperature(path).t();
}

inline int run_demo_cmd(const Options& o, std::ostream& out) {
  DemoConfig cfg = o.demo;
  cfg.seed = o.seed;
  cfg.n_passes = o.passes;
  cfg.train.cp_beta = o.beta;
  const auto result = run_demo(cfg);

  const std::filesystem::path dir(o.out_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  io::write_json_file(dir / "model.json", io::checkpoint_json(result.net));
  io::write_logit_dump(dir / "val.jsonl", result.validation);
  io::write_logit_dump(dir / "test.jsonl", result.test);
  io::Json summary;
  summary["format_version"] = io::kFormatVersion;
  summary["tool_version"] = io::kToolVersion;
  summary["train_accuracy"] = result.train_accuracy;
  summary["config"] = demo_config_json(cfg);
  io::write_json_file(dir / "demo.json", summary);

  out << "trained toy net: train accuracy " << io::format_double(result.train_accuracy) << '\n'
      << "wrote " << (dir / "model.json").string() << ", " << (dir / "val.jsonl").string() << ", "
      << (dir / "test.jsonl").string() << '\n';
  return kOk;
}

inline int run_fit_cmd(const Options& o, std::ostream& out) {
  const auto format = resolve_format(o.format, "json");
  const auto sets = read_sets(o.input);
  const auto cfg = fit_config(o);
  const auto t = fit_temperature(sets, cfg);
  Output dst(o.output, out);
  if (format == "json") {
    io::write_json(dst.stream(), io::temperature_json(t, cfg, sets.size()));
    dst.stream() << '\n';
  } else {
    dst.stream() << "format_version,temperature,fit_nll,fit_iterations,n" << io::kCrlf << io::kFormatVersion
                 << ',' << io::format_double(t.t()) << ',' << io::format_double(t.fit_nll()) << ','
                 << t.fit_iterations() << ',' << sets.size() << io::kCrlf;
  }
  dst.finish();
  return kOk;
}

inline int run_evaluate_cmd(const Options& o, std::ostream& out) {
  const auto format = resolve_format(o.format, "json");
  const auto sets = read_sets(o.input);
  const double t = maybe_temperature(o.temperature).value_or(1.0);
  auto report = io::make_report(sets, t, o.bins);
  report.config["command"] = "evaluate";
  report.config["input"] = o.input;
  report.config["temperature_file"] = o.temperature;
  report.config["bins"] = o.bins;
  Output dst(o.output, out);
  if (format == "json") {
    io::write_json(dst.stream(), io::report_json(report));
    dst.stream() << '\n';
  } else {
    dst.stream() << "format_version,temperature,n,m_bins,n_passes,ece_uncalibrated,ece_calibrated,"
                    "uce_uncalibrated,uce_calibrated,nll_uncalibrated,nll_calibrated"
                 << io::kCrlf;
    dst.stream() << io::kFormatVersion << ',' << io::format_double(report.temperature) << ',' << report.n << ','
                 << report.m_bins << ',' << report.n_passes << ',' << io::format_double(report.ece_uncalibrated)
                 << ',' << io::format_double(report.ece_calibrated) << ','
                 << io::format_double(report.uce_uncalibrated) << ',' << io::format_double(report.uce_calibrated)
                 << ',' << io::format_double(report.nll_uncalibrated) << ','
                 << io::format_double(report.nll_calibrated) << io::kCrlf;
  }
  dst.finish();
  return kOk;
}

inline int run_reliability_cmd(const Options& o, std::ostream& out) {
  const auto format = resolve_format(o.format, "csv");
  std::vector<Axis> axes;
  if (o.axis == "confidence" || o.axis == "both") axes.push_back(Axis::Confidence);
  if (o.axis == "uncertainty" || o.axis == "both") axes.push_back(Axis::Uncertainty);
  if (axes.empty()) throw InvalidInput("--axis must be confidence, uncertainty or both");

  const auto sets = read_sets(o.input);
  const auto t = maybe_temperature(o.temperature);
  const auto raw = make_records(sets, 1.0);
  std::vector<PredictionRecord> cal;
  if (t) cal = make_records(sets, *t);

  std::vector<io::ReliabilityTable> tables;
  for (const auto axis : axes) {
    tables.push_back({"uncalibrated", reliability_table(raw, o.bins, axis)});
    if (t) tables.push_back({"calibrated", reliability_table(cal, o.bins, axis)});
  }
  Output dst(o.output, out);
  if (format == "csv") {
    io::write_reliability_csv(dst.stream(), tables);
  } else {
    io::write_json(dst.stream(), io::reliability_json(tables));
    dst.stream() << '\n';
  }
  dst.finish();
  return kOk;
}

inline int run_reject_cmd(const Options& o, std::ostream& out) {
  const auto format = resolve_format(o.format, "csv");
  if (o.steps < 1) throw InvalidInput("--steps must be at least 1");
  const auto sets = read_sets(o.input);
  const auto t = maybe_temperature(o.temperature);
  const auto thresholds = default_thresholds(o.steps);

  std::vector<io::RejectionTable> tables;
  tables.push_back({"uncalibrated", reject_sweep(make_records(sets, 1.0), thresholds)});
  if (t) tables.push_back({"calibrated", reject_sweep(make_records(sets, *t), thresholds)});
  Output dst(o.output, out);
  if (format == "csv") {
    io::write_rejection_csv(dst.stream(), tables);
  } else {
    io::write_json(dst.stream(), io::rejection_json(tables));
    dst.stream() << '\n';
  }
  dst.finish();
  return kOk;
}

// Randomized cross-checks of the library against the naive reference routines.
inline int run_oracle_cmd(const Options& o, std::ostream& out) {
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 3.0);
  const std::size_t bin_choices[] = {1, 2, 15, 50};
  std::size_t metric_mismatch = 0;
  std::size_t prob_mismatch = 0;
  std::size_t grad_mismatch = 0;

  for (std::size_t inst = 0; inst < o.instances; ++inst) {
    const std::size_t m = bin_choices[inst % 4];
    const std::size_t n = 1 + rng() % 500;
    std::vector<PredictionRecord> records(n);
    for (auto& r : records) {
      // A quarter of the values sit exactly on bin edges.
      const auto draw = [&] {
        return rng() % 4 == 0 ? static_cast<double>(rng() % (m + 1)) / static_cast<double>(m) : unit(rng);
      };
      r.confidence = draw();
      r.uncertainty = draw();
      r.label = rng() % 3;
      r.predicted = rng() % 3;
    }
    if (ece(records, m) != reference::ece(records, m)) ++metric_mismatch;
    if (uce(records, m) != reference::uce(records, m)) ++metric_mismatch;
  }

  for (std::size_t inst = 0; inst < 100; ++inst) {
    const std::size_t c = 2 + rng() % 8;
    const std::size_t n = 1 + rng() % 25;
    std::vector<LogitSampleSet> sets;
    for (int k = 0; k < 5; ++k) {
      std::vector<double> z(n * c);
      for (double& v : z) v = gauss(rng);
      sets.emplace_back(std::move(z), n, c, rng() % c);
    }
    const double t = std::exp(std::uniform_real_distribution<double>(std::log(0.1), std::log(5.0))(rng));
    for (const auto& s : sets) {
      const auto lib = mc_integrate(s, t);
      const auto ref = reference::mc_integrate(s, t);
      for (std::size_t k = 0; k < c; ++k) {
        if (std::abs(lib[k] - ref[k]) > 1e-12) ++prob_mismatch;
      }
    }
    const double lib_nll = nll(sets, t);
    if (std::abs(lib_nll - reference::nll(sets, t)) > 1e-9 * std::max(1.0, lib_nll)) ++prob_mismatch;
    const double g = nll_grad_t(sets, t);
    const double fd = reference::central_difference([&](double x) { return nll(sets, x); }, t, 1e-4 * t);
    if (std::abs(g - fd) > 1e-5 * std::max(std::abs(g), std::abs(fd)) + 1e-9) ++grad_mismatch;
  }

  out << "ece/uce vs naive binning (" << o.instances << " instances): " << metric_mismatch << " mismatches\n"
      << "mc_integrate/nll vs naive softmax: " << prob_mismatch << " mismatches\n"
      << "nll_grad_t vs central differences: " << grad_mismatch << " mismatches\n";
  return metric_mismatch + prob_mismatch + grad_mismatch == 0 ? kOk : kValidationError;
}

}  // namespace detail

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  detail::Options o;
  CLI::App app{"Calibration of MC dropout uncertainty: ECE/UCE, temperature scaling, rejection curves",
               "mcdcal"};
  app.require_subcommand(1);

  const auto add_bins = [&](CLI::App* sub) {
    sub->add_option("--bins", o.bins, "Number of equal-width bins")->check(CLI::PositiveNumber);
  };
  const auto add_format = [&](CLI::App* sub) {
    sub->add_option("--format", o.format, "Output format")->check(CLI::IsMember({"json", "csv"}));
  };
  const auto add_temperature_bounds = [&](CLI::App* sub) {
    sub->add_option("--t-min", o.t_min, "Lower end of the temperature search range");
    sub->add_option("--t-max", o.t_max, "Upper end of the temperature search range");
  };

  auto* demo = app.add_subcommand("demo", "Train the toy MC dropout model and dump validation/test logits");
  demo->add_option("--out-dir", o.out_dir, "Directory for model.json, val.jsonl, test.jsonl")->required();
  demo->add_option("--seed", o.seed, "Run seed");
  demo->add_option("--passes", o.passes, "MC dropout forward passes per input")->check(CLI::PositiveNumber);
  demo->add_option("--beta", o.beta, "Confidence penalty weight")->check(CLI::NonNegativeNumber);
  demo->add_option("--classes", o.demo.num_classes, "Number of blobs/classes");
  demo->add_option("--dim", o.demo.input_dim, "Input dimension");
  demo->add_option("--hidden", o.demo.hidden_dim, "Hidden width");
  demo->add_option("--dropout", o.demo.dropout_p, "Dropout probability before the output layer");
  demo->add_option("--sigma", o.demo.sigma, "Blob spread");
  demo->add_option("--train-size", o.demo.train_size, "Training points");
  demo->add_option("--val-size", o.demo.val_size, "Validation points");
  demo->add_option("--test-size", o.demo.test_size, "Test points");
  demo->add_option("--epochs", o.demo.train.epochs, "SGD epochs");
  demo->add_option("--batch-size", o.demo.train.batch_size, "Minibatch size");
  demo->add_option("--lr", o.demo.train.learning_rate, "SGD learning rate");

  auto* fit = app.add_subcommand("fit", "Fit the temperature on a validation logit dump");
  fit->add_option("--input", o.input, "Validation logit dump (JSONL)")->required();
  fit->add_option("--output", o.output, "Temperature file (default: stdout)");
  fit->add_option("--grid-points", o.grid_points, "Coarse grid size");
  add_temperature_bounds(fit);
  add_format(fit);

  auto* evaluate = app.add_subcommand("evaluate", "Uncalibrated vs calibrated ECE/UCE report");
  evaluate->add_option("--input", o.input, "Test logit dump (JSONL)")->required();
  evaluate->add_option("--temperature", o.temperature, "Temperature file from `fit` (default: T = 1)");
  evaluate->add_option("--output", o.output, "Report file (default: stdout)");
  add_bins(evaluate);
  add_format(evaluate);

  auto* reliability = app.add_subcommand("reliability", "Per-bin reliability tables");
  reliability->add_option("--input", o.input, "Logit dump (JSONL)")->required();
  reliability->add_option("--temperature", o.temperature, "Temperature file; adds calibrated tables");
  reliability->add_option("--axis", o.axis, "confidence | uncertainty | both")
      ->check(CLI::IsMember({"confidence", "uncertainty", "both"}));
  reliability->add_option("--output", o.output, "Output file (default: stdout)");
  add_bins(reliability);
  add_format(reliability);

  auto* reject = app.add_subcommand("reject", "Top-1 error of retained predictions vs uncertainty threshold");
  reject->add_option("--input", o.input, "Logit dump (JSONL)")->required();
  reject->add_option("--temperature", o.temperature, "Temperature file; adds a calibrated curve");
  reject->add_option("--steps", o.steps, "Threshold steps between 1 and 0");
  reject->add_option("--output", o.output, "Output file (default: stdout)");
  add_format(reject);

  auto* oracle = app.add_subcommand("oracle", "Cross-check library metrics against naive references");
  oracle->add_option("--seed", o.seed, "Seed for the random instances");
  oracle->add_option("--instances", o.instances, "Number of binning instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kValidationError;
  }

  try {
    if (o.t_min <= 0.0 || o.t_max <= o.t_min) throw InvalidInput("require 0 < --t-min < --t-max");
    if (*demo) return detail::run_demo_cmd(o, out);
    if (*fit) return detail::run_fit_cmd(o, out);
    if (*evaluate) return detail::run_evaluate_cmd(o, out);
    if (*reliability) return detail::run_reliability_cmd(o, out);
    if (*reject) return detail::run_reject_cmd(o, out);
    if (*oracle) return detail::run_oracle_cmd(o, out);
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidationError;
  }
  return kValidationError;
}

}  // namespace mcdcal::cli
