#pragma once

// File formats.
//
// Logit dump (UTF-8, one JSON object per line):
//   {"format_version":1,"id":"val-0","label":2,"logits":[[z11,...,z1C],...,[zN1,...,zNC]]}
// Temperature file, calibration report, model checkpoint: single JSON documents.
// Reliability and rejection tables: RFC 4180 CSV with a header row, CRLF line ends.
//
// All doubles are written with 17 significant digits and object fields are
// emitted in a fixed order, so identical inputs give byte-identical files.

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mcdcal/binned_metrics.hpp"
#include "mcdcal/errors.hpp"
#include "mcdcal/prob_core.hpp"
#include "mcdcal/rejection.hpp"
#include "mcdcal/temp_fit.hpp"
#include "mcdcal/toy_model.hpp"

namespace mcdcal::io {

using Json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Low-level writers

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline void write_json(std::ostream& os, const Json& j, int indent, int depth) {
  const auto newline = [&](int d) {
    if (indent < 0) return;
    os << '\n' << std::string(static_cast<std::size_t>(indent * d), ' ');
  };
  switch (j.type()) {
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      if (std::isfinite(v)) {
        os << format_double(v);
      } else {
        os << "null";
      }
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      os << '[';
      bool first = true;
      for (const auto& el : j) {
        if (!first) os << ',';
        first = false;
        newline(depth + 1);
        write_json(os, el, indent, depth + 1);
      }
      newline(depth);
      os << ']';
      return;
    }
    case Json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << '{';
      bool first = true;
      for (const auto& [key, el] : j.items()) {
        if (!first) os << ',';
        first = false;
        newline(depth + 1);
        os << Json(key).dump() << (indent < 0 ? ":" : ": ");
        write_json(os, el, indent, depth + 1);
      }
      newline(depth);
      os << '}';
      return;
    }
    default:
      os << j.dump();
  }
}

}  // namespace detail

/// indent < 0 writes a single line.
inline void write_json(std::ostream& os, const Json& j, int indent = 2) {
  detail::write_json(os, j, indent, 0);
}

inline std::string to_json_string(const Json& j, int indent = 2) {
  std::ostringstream os;
  write_json(os, j, indent);
  return os.str();
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

inline Json read_json_file(const std::filesystem::path& path) {
  auto in = open_input(path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(0, path.string() + ": " + e.what());
  }
}

inline void write_json_file(const std::filesystem::path& path, const Json& j) {
  auto out = open_output(path);
  write_json(out, j);
  out << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Logit dumps

struct LogitDump {
  std::vector<std::string> ids;
  std::vector<LogitSampleSet> sets;
};

inline void write_logit_record(std::ostream& os, const std::string& id, const LogitSampleSet& s) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < s.num_samples(); ++i) {
    const auto z = s.sample(i);
    rows.push_back(Json(std::vector<double>(z.begin(), z.end())));
  }
  Json rec;
  rec["format_version"] = kFormatVersion;
  rec["id"] = id;
  rec["label"] = s.label();
  rec["logits"] = std::move(rows);
  write_json(os, rec, -1);
  os << '\n';
}

inline void write_logit_dump(std::ostream& os, const LogitDump& dump) {
  for (std::size_t i = 0; i < dump.sets.size(); ++i) write_logit_record(os, dump.ids.at(i), dump.sets[i]);
}

inline void write_logit_dump(const std::filesystem::path& path, const LogitDump& dump) {
  auto out = open_output(path);
  write_logit_dump(out, dump);
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

/// Streams one record per non-blank line. Parse failures carry the line number;
/// shape violations (ragged rows, class count drifting across records) raise SchemaError.
inline LogitDump read_logit_dump(std::istream& in) {
  LogitDump dump;
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> classes;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    Json rec;
    try {
      rec = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ParseError(line_no, e.what());
    }
    if (!rec.is_object()) throw ParseError(line_no, "record is not a JSON object");
    if (auto v = rec.find("format_version"); v != rec.end() && (!v->is_number_integer() || *v != kFormatVersion)) {
      throw ParseError(line_no, "unsupported format_version");
    }
    std::string id;
    if (auto it = rec.find("id"); it != rec.end()) {
      if (!it->is_string()) throw ParseError(line_no, "id must be a string");
      id = it->get<std::string>();
    } else {
      id = "line-" + std::to_string(line_no);
    }
    const auto label_it = rec.find("label");
    if (label_it == rec.end() || !label_it->is_number_unsigned()) {
      throw ParseError(line_no, "record '" + id + "': label must be a non-negative integer");
    }
    const auto logits_it = rec.find("logits");
    if (logits_it == rec.end() || !logits_it->is_array() || logits_it->empty()) {
      throw ParseError(line_no, "record '" + id + "': logits must be a nonempty array of rows");
    }

    const auto& rows = *logits_it;
    std::vector<double> flat;
    std::size_t width = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& row = rows[i];
      if (!row.is_array()) throw ParseError(line_no, "record '" + id + "': logits row is not an array");
      if (i == 0) {
        width = row.size();
      } else if (row.size() != width) {
        throw SchemaError("record '" + id + "' (line " + std::to_string(line_no) +
                          "): ragged logits, row " + std::to_string(i) + " has " +
                          std::to_string(row.size()) + " entries, expected " + std::to_string(width));
      }
      for (const auto& v : row) {
        if (!v.is_number()) throw ParseError(line_no, "record '" + id + "': non-numeric logit");
        flat.push_back(v.get<double>());
      }
    }
    if (width < 2) {
      throw SchemaError("record '" + id + "' (line " + std::to_string(line_no) + "): fewer than 2 classes");
    }
    if (classes && *classes != width) {
      throw SchemaError("record '" + id + "' (line " + std::to_string(line_no) + "): " +
                        std::to_string(width) + " classes, file started with " + std::to_string(*classes));
    }
    classes = width;
    const auto label = label_it->get<std::size_t>();
    if (label >= width) {
      throw SchemaError("record '" + id + "' (line " + std::to_string(line_no) + "): label " +
                        std::to_string(label) + " out of range for " + std::to_string(width) + " classes");
    }
    try {
      dump.sets.emplace_back(std::move(flat), rows.size(), width, label);
    } catch (const InvalidInput& e) {
      throw SchemaError("record '" + id + "' (line " + std::to_string(line_no) + "): " + e.what());
    }
    dump.ids.push_back(std::move(id));
  }
  return dump;
}

inline LogitDump read_logit_dump(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_logit_dump(in);
}

// ---------------------------------------------------------------------------
// Temperature file

inline Json fit_config_json(const FitConfig& cfg) {
  Json j;
  j["t_min"] = cfg.t_min;
  j["t_max"] = cfg.t_max;
  j["grid_points"] = cfg.grid_points;
  j["refine_tolerance"] = cfg.refine_tolerance;
  j["max_refine_iters"] = cfg.max_refine_iters;
  return j;
}

inline Json temperature_json(const TemperatureParam& t, const FitConfig& cfg, std::size_t n) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["tool_version"] = kToolVersion;
  j["temperature"] = t.t();
  j["fit_nll"] = t.fit_nll();
  j["fit_iterations"] = t.fit_iterations();
  j["n"] = n;
  j["config"] = fit_config_json(cfg);
  return j;
}

inline TemperatureParam temperature_from_json(const Json& j) {
  try {
    return TemperatureParam(j.at("temperature").get<double>(), j.value("fit_nll", 0.0),
                            j.value("fit_iterations", std::size_t{0}));
  } catch (const Json::exception& e) {
    throw ParseError(0, std::string("temperature file: ") + e.what());
  }
}

inline TemperatureParam read_temperature(const std::filesystem::path& path) {
  return temperature_from_json(read_json_file(path));
}

// ---------------------------------------------------------------------------
// Model checkpoint: dimensions, dropout_p and row-major weight arrays.
//   {"format_version":1,"input_dim":D,"hidden_dim":H,"num_classes":C,"dropout_p":p,
//    "w1":[H*D],"b1":[H],"w2":[C*H],"b2":[C]}

inline Json checkpoint_json(const ToyNet& net) {
  const auto row_major = [](const Eigen::MatrixXd& m) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
    return out;
  };
  Json j;
  j["format_version"] = kFormatVersion;
  j["input_dim"] = net.input_dim();
  j["hidden_dim"] = net.hidden_dim();
  j["num_classes"] = net.num_classes();
  j["dropout_p"] = net.dropout_p;
  j["w1"] = row_major(net.w1);
  j["b1"] = std::vector<double>(net.b1.data(), net.b1.data() + net.b1.size());
  j["w2"] = row_major(net.w2);
  j["b2"] = std::vector<double>(net.b2.data(), net.b2.data() + net.b2.size());
  return j;
}

inline ToyNet checkpoint_from_json(const Json& j) {
  try {
    if (j.at("format_version").get<int>() != kFormatVersion) throw ParseError(0, "unsupported checkpoint version");
    const auto d = j.at("input_dim").get<Eigen::Index>();
    const auto h = j.at("hidden_dim").get<Eigen::Index>();
    const auto c = j.at("num_classes").get<Eigen::Index>();
    const auto matrix = [&](const char* key, Eigen::Index rows, Eigen::Index cols) {
      const auto v = j.at(key).get<std::vector<double>>();
      if (static_cast<Eigen::Index>(v.size()) != rows * cols) {
        throw SchemaError(std::string("checkpoint: '") + key + "' has the wrong length");
      }
      Eigen::MatrixXd m(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index k = 0; k < cols; ++k) m(r, k) = v[static_cast<std::size_t>(r * cols + k)];
      return m;
    };
    ToyNet net;
    net.w1 = matrix("w1", h, d);
    net.b1 = matrix("b1", h, 1);
    net.w2 = matrix("w2", c, h);
    net.b2 = matrix("b2", c, 1);
    net.dropout_p = j.at("dropout_p").get<double>();
    net.validate();
    return net;
  } catch (const Json::exception& e) {
    throw ParseError(0, std::string("checkpoint: ") + e.what());
  } catch (const InvalidInput& e) {
    throw SchemaError(std::string("checkpoint: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Reports

inline Json binned_report_json(const BinnedReport& r) {
  const auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  Json bins = Json::array();
  for (std::size_t k = 0; k < r.bins.size(); ++k) {
    const auto& b = r.bins[k];
    Json jb;
    jb["bin"] = k;
    jb["lower"] = b.lower;
    jb["upper"] = b.upper;
    jb["count"] = b.count;
    jb["mean_confidence"] = opt(b.mean_confidence);
    jb["accuracy"] = opt(b.accuracy);
    jb["mean_uncertainty"] = opt(b.mean_uncertainty);
    jb["error_rate"] = opt(b.error_rate);
    bins.push_back(std::move(jb));
  }
  Json j;
  j["axis"] = to_string(r.axis);
  j["m_bins"] = r.m_bins;
  j["total_n"] = r.total_n;
  j["ece"] = r.ece;
  j["uce"] = r.uce;
  j["bins"] = std::move(bins);
  return j;
}

struct CalibrationReport {
  double temperature = 1.0;
  std::size_t n = 0;
  std::size_t m_bins = kDefaultBins;
  std::size_t n_passes = 0;
  std::size_t num_classes = 0;
  double ece_uncalibrated = 0.0;
  double ece_calibrated = 0.0;
  double uce_uncalibrated = 0.0;
  double uce_calibrated = 0.0;
  double nll_uncalibrated = 0.0;
  double nll_calibrated = 0.0;
  double error_uncalibrated = 0.0;
  double error_calibrated = 0.0;
  BinnedReport confidence_uncalibrated;
  BinnedReport confidence_calibrated;
  BinnedReport uncertainty_uncalibrated;
  BinnedReport uncertainty_calibrated;
  Json config = Json::object();
};

inline double top1_error(std::span<const PredictionRecord> records) {
  std::size_t wrong = 0;
  for (const auto& r : records) wrong += r.correct() ? 0 : 1;
  return static_cast<double>(wrong) / static_cast<double>(records.size());
}

/// Uncalibrated (T = 1) versus calibrated metrics on the same logit samples.
inline CalibrationReport make_report(std::span<const LogitSampleSet> sets, double temperature,
                                     std::size_t m_bins) {
  if (sets.empty()) throw DomainError("cannot report on an empty dump");
  const auto raw = make_records(sets, 1.0);
  const auto cal = make_records(sets, temperature);
  CalibrationReport r;
  r.temperature = temperature;
  r.n = sets.size();
  r.m_bins = m_bins;
  r.n_passes = sets.front().num_samples();
  r.num_classes = sets.front().num_classes();
  r.confidence_uncalibrated = reliability_table(raw, m_bins, Axis::Confidence);
  r.confidence_calibrated = reliability_table(cal, m_bins, Axis::Confidence);
  r.uncertainty_uncalibrated = reliability_table(raw, m_bins, Axis::Uncertainty);
  r.uncertainty_calibrated = reliability_table(cal, m_bins, Axis::Uncertainty);
  r.ece_uncalibrated = r.confidence_uncalibrated.ece;
  r.ece_calibrated = r.confidence_calibrated.ece;
  r.uce_uncalibrated = r.confidence_uncalibrated.uce;
  r.uce_calibrated = r.confidence_calibrated.uce;
  r.nll_uncalibrated = nll(sets, 1.0);
  r.nll_calibrated = nll(sets, temperature);
  r.error_uncalibrated = top1_error(raw);
  r.error_calibrated = top1_error(cal);
  return r;
}

inline Json report_json(const CalibrationReport& r) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["tool_version"] = kToolVersion;
  j["temperature"] = r.temperature;
  j["n"] = r.n;
  j["m_bins"] = r.m_bins;
  j["n_passes"] = r.n_passes;
  j["num_classes"] = r.num_classes;
  j["ece_uncalibrated"] = r.ece_uncalibrated;
  j["ece_calibrated"] = r.ece_calibrated;
  j["uce_uncalibrated"] = r.uce_uncalibrated;
  j["uce_calibrated"] = r.uce_calibrated;
  j["nll_uncalibrated"] = r.nll_uncalibrated;
  j["nll_calibrated"] = r.nll_calibrated;
  j["error_uncalibrated"] = r.error_uncalibrated;
  j["error_calibrated"] = r.error_calibrated;
  Json rel;
  rel["confidence"]["uncalibrated"] = binned_report_json(r.confidence_uncalibrated);
  rel["confidence"]["calibrated"] = binned_report_json(r.confidence_calibrated);
  rel["uncertainty"]["uncalibrated"] = binned_report_json(r.uncertainty_uncalibrated);
  rel["uncertainty"]["calibrated"] = binned_report_json(r.uncertainty_calibrated);
  j["reliability"] = std::move(rel);
  j["config"] = r.config;
  return j;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr std::string_view kCrlf = "\r\n";

struct ReliabilityTable {
  std::string calibration;  // "uncalibrated" | "calibrated"
  BinnedReport report;
};

inline void write_reliability_csv(std::ostream& os, std::span<const ReliabilityTable> tables) {
  os << "format_version,axis,calibration,bin,lower,upper,count,mean_confidence,accuracy,"
        "mean_uncertainty,error_rate"
     << kCrlf;
  const auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  for (const auto& t : tables) {
    for (std::size_t k = 0; k < t.report.bins.size(); ++k) {
      const auto& b = t.report.bins[k];
      os << kFormatVersion << ',' << to_string(t.report.axis) << ',' << t.calibration << ',' << k << ','
         << format_double(b.lower) << ',' << format_double(b.upper) << ',' << b.count << ','
         << opt(b.mean_confidence) << ',' << opt(b.accuracy) << ',' << opt(b.mean_uncertainty) << ','
         << opt(b.error_rate) << kCrlf;
    }
  }
}

namespace detail {

inline std::vector<std::string> split_csv_line(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_optional(const std::string& s, std::size_t line_no) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(line_no, "bad number '" + s + "'");
  }
}

}  // namespace detail

/// Tables in file order. Each table's ece/uce field for its own axis is the
/// weighted re-sum of its per-bin gaps; the cross-axis field is left at 0.
inline std::vector<ReliabilityTable> read_reliability_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "empty reliability CSV");
  const auto header = detail::split_csv_line(line);
  if (header.size() != 11 || header[0] != "format_version") throw ParseError(1, "unexpected reliability CSV header");

  std::vector<ReliabilityTable> tables;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 11) throw ParseError(line_no, "expected 11 fields");
    Axis axis;
    if (f[1] == "confidence") {
      axis = Axis::Confidence;
    } else if (f[1] == "uncertainty") {
      axis = Axis::Uncertainty;
    } else {
      throw ParseError(line_no, "unknown axis '" + f[1] + "'");
    }
    if (tables.empty() || tables.back().calibration != f[2] || tables.back().report.axis != axis) {
      ReliabilityTable t;
      t.calibration = f[2];
      t.report.axis = axis;
      tables.push_back(std::move(t));
    }
    auto& report = tables.back().report;
    BinStats b;
    b.lower = detail::parse_optional(f[4], line_no).value_or(0.0);
    b.upper = detail::parse_optional(f[5], line_no).value_or(0.0);
    b.count = static_cast<std::size_t>(detail::parse_optional(f[6], line_no).value_or(0.0));
    b.mean_confidence = detail::parse_optional(f[7], line_no);
    b.accuracy = detail::parse_optional(f[8], line_no);
    b.mean_uncertainty = detail::parse_optional(f[9], line_no);
    b.error_rate = detail::parse_optional(f[10], line_no);
    if (b.count > 0 && !(b.mean_confidence && b.accuracy && b.mean_uncertainty && b.error_rate)) {
      throw ParseError(line_no, "nonempty bin with missing statistics");
    }
    report.bins.push_back(b);
    report.total_n += b.count;
    report.m_bins = report.bins.size();
  }
  for (auto& t : tables) {
    const double err = resum_gaps(t.report);
    (t.report.axis == Axis::Confidence ? t.report.ece : t.report.uce) = err;
  }
  return tables;
}

struct RejectionTable {
  std::string calibration;
  RejectionCurve curve;
};

inline void write_rejection_csv(std::ostream& os, std::span<const RejectionTable> tables) {
  os << "format_version,calibration,threshold,retained_count,retained_fraction,top1_error" << kCrlf;
  for (const auto& t : tables) {
    for (const auto& p : t.curve.points) {
      os << kFormatVersion << ',' << t.calibration << ',' << format_double(p.threshold) << ','
         << p.retained_count << ',' << format_double(p.retained_fraction) << ','
         << (p.top1_error ? format_double(*p.top1_error) : std::string()) << kCrlf;
    }
  }
}

inline Json rejection_json(std::span<const RejectionTable> tables) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["curves"] = Json::array();
  for (const auto& t : tables) {
    Json c;
    c["calibration"] = t.calibration;
    c["total_n"] = t.curve.total_n;
    c["points"] = Json::array();
    for (const auto& p : t.curve.points) {
      Json jp;
      jp["threshold"] = p.threshold;
      jp["retained_count"] = p.retained_count;
      jp["retained_fraction"] = p.retained_fraction;
      jp["top1_error"] = p.top1_error ? Json(*p.top1_error) : Json(nullptr);
      c["points"].push_back(std::move(jp));
    }
    j["curves"].push_back(std::move(c));
  }
  return j;
}

inline Json reliability_json(std::span<const ReliabilityTable> tables) {
  Json j;
  j["format_version"] = kFormatVersion;
  j["tables"] = Json::array();
  for (const auto& t : tables) {
    Json jt;
    jt["calibration"] = t.calibration;
    jt["table"] = binned_report_json(t.report);
    j["tables"].push_back(std::move(jt));
  }
  return j;
}

}  // namespace mcdcal::io
