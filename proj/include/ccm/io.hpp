#pragma once

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ccm/core.hpp"
#include "ccm/density.hpp"
#include "ccm/es.hpp"
#include "ccm/metrics.hpp"
#include "ccm/synth.hpp"

namespace ccm {

using Json = nlohmann::ordered_json;

// Shortest round-trip formatting, so emitted files are deterministic and
// re-parse to the exact same doubles.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& field) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{}) throw data_error("csv: cannot parse number '" + field + "'");
  return v;
}

/// Numeric table with a mandatory header row. UTF-8, comma delimiter,
/// '.' decimal separator.
struct CsvTable {
  std::vector<std::string> columns;
  Matrix values;  // rows x columns

  long column_index(const std::string& name) const {
    for (std::size_t j = 0; j < columns.size(); ++j)
      if (columns[j] == name) return static_cast<long>(j);
    return -1;
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw data_error("csv: missing header row in " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  CsvTable table;
  table.columns = split_csv_line(line);
  if (table.columns.empty()) throw data_error("csv: empty header in " + path);

  std::vector<double> data;
  long rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != table.columns.size())
      throw data_error("csv: row " + std::to_string(rows + 1) + " has " +
                       std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(table.columns.size()) + " in " + path);
    for (const auto& f : fields) data.push_back(parse_double(f));
    ++rows;
  }
  if (rows == 0) throw data_error("csv: no data rows in " + path);
  table.values = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      data.data(), rows, static_cast<long>(table.columns.size()));
  return table;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& columns,
                      const Matrix& values) {
  if (values.cols() != static_cast<long>(columns.size()))
    throw data_error("csv: header width does not match value columns");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write file: " + path);
  for (std::size_t j = 0; j < columns.size(); ++j) {
    if (j) out << ',';
    out << columns[j];
  }
  out << '\n';
  for (long i = 0; i < values.rows(); ++i) {
    for (long j = 0; j < values.cols(); ++j) {
      if (j) out << ',';
      out << format_double(values(i, j));
    }
    out << '\n';
  }
}

/// Splits a table into features (every column but the target) and targets.
inline Dataset dataset_from_csv(const CsvTable& table, const std::string& target_column) {
  const long t = table.column_index(target_column);
  if (t < 0) throw data_error("csv: no column named '" + target_column + "'");
  if (table.columns.size() < 2)
    throw data_error("csv: need at least one feature column beside the target");
  Matrix pts(table.values.rows(), table.values.cols() - 1);
  std::vector<std::string> names;
  long c = 0;
  for (long j = 0; j < table.values.cols(); ++j) {
    if (j == t) continue;
    pts.col(c) = table.values.col(j);
    names.push_back(table.columns[j]);
    ++c;
  }
  return Dataset(std::move(pts), table.values.col(t), std::move(names));
}

/// Reads a precomputed prediction matrix; a column matching target_column,
/// when present, is split off and returned as the targets.
inline std::pair<PredictionMatrix, std::optional<Vector>> predictions_from_csv(
    const CsvTable& table, const std::string& target_column) {
  const long t = table.column_index(target_column);
  std::optional<Vector> target;
  Matrix a(table.values.rows(), t >= 0 ? table.values.cols() - 1 : table.values.cols());
  std::vector<std::string> names;
  long c = 0;
  for (long j = 0; j < table.values.cols(); ++j) {
    if (j == t) {
      target = table.values.col(j);
      continue;
    }
    a.col(c) = table.values.col(j);
    names.push_back(table.columns[j]);
    ++c;
  }
  if (names.empty()) throw data_error("csv: prediction file has no model columns");
  return {PredictionMatrix(std::move(a), std::move(names)), std::move(target)};
}

// ---------------------------------------------------------------------------
// Weights report (JSON)

struct WeightsReport {
  std::vector<std::string> models;
  Vector alpha;
  double rmse = 0.0;
  std::optional<double> wrmse;
  std::string solver;  // "qp" | "es"
  long iterations = 0;
  std::optional<double> kkt_residual;
  bool converged = true;
  std::vector<std::string> active_models;
  std::uint64_t seed = 0;
  Json config_echo = Json::object();
  std::optional<double> test_rmse;
  std::optional<Json> roc;
};

inline WeightsReport make_weights_report(const FitReport& fit,
                                         const std::vector<std::string>& models,
                                         std::uint64_t seed, Json config_echo) {
  WeightsReport r;
  r.models = models;
  r.alpha = fit.alpha.alpha;
  r.rmse = fit.rmse;
  r.wrmse = fit.wrmse;
  r.solver = solver_name(fit.solver);
  r.iterations = fit.iterations;
  r.kkt_residual = fit.kkt_residual;
  r.converged = fit.converged;
  r.active_models = fit.active_models;
  r.seed = seed;
  r.config_echo = std::move(config_echo);
  return r;
}

inline Json to_json(const WeightsReport& r) {
  Json j;
  j["models"] = r.models;
  j["alpha"] = std::vector<double>(r.alpha.data(), r.alpha.data() + r.alpha.size());
  j["rmse"] = r.rmse;
  j["wrmse"] = r.wrmse ? Json(*r.wrmse) : Json(nullptr);
  j["solver"] = r.solver;
  j["iterations"] = r.iterations;
  j["kkt_residual"] = r.kkt_residual ? Json(*r.kkt_residual) : Json(nullptr);
  j["converged"] = r.converged;
  j["active_models"] = r.active_models;
  j["seed"] = r.seed;
  j["config_echo"] = r.config_echo;
  if (r.test_rmse) j["test_rmse"] = *r.test_rmse;
  if (r.roc) j["roc"] = *r.roc;
  return j;
}

inline WeightsReport weights_report_from_json(const Json& j) {
  try {
    WeightsReport r;
    r.models = j.at("models").get<std::vector<std::string>>();
    const auto a = j.at("alpha").get<std::vector<double>>();
    r.alpha = Eigen::Map<const Vector>(a.data(), static_cast<long>(a.size()));
    r.rmse = j.at("rmse").get<double>();
    if (!j.at("wrmse").is_null()) r.wrmse = j.at("wrmse").get<double>();
    r.solver = j.at("solver").get<std::string>();
    r.iterations = j.at("iterations").get<long>();
    if (!j.at("kkt_residual").is_null()) r.kkt_residual = j.at("kkt_residual").get<double>();
    r.converged = j.at("converged").get<bool>();
    r.active_models = j.at("active_models").get<std::vector<std::string>>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_echo = j.at("config_echo");
    if (j.contains("test_rmse")) r.test_rmse = j.at("test_rmse").get<double>();
    if (j.contains("roc")) r.roc = j.at("roc");
    if (r.alpha.size() != static_cast<long>(r.models.size()))
      throw data_error("weights report: alpha length does not match models");
    return r;
  } catch (const Json::exception& e) {
    throw data_error(std::string("weights report: malformed json: ") + e.what());
  }
}

inline void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot write file: " + path);
  out << j.dump(2) << '\n';
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open file: " + path);
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw data_error("malformed json in " + path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Landscape (JSON)

inline Json landscape_to_json(const MsgLandscape& land) {
  Json j;
  j["dim"] = land.dim;
  Json domain = Json::array();
  for (const auto& [lo, hi] : land.domain) domain.push_back({lo, hi});
  j["domain"] = domain;
  Json comps = Json::array();
  for (const auto& c : land.components) {
    Json jc;
    jc["mean"] = std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size());
    Json cov = Json::array();
    for (long r = 0; r < c.covariance.rows(); ++r) {
      Json row = Json::array();
      for (long q = 0; q < c.covariance.cols(); ++q) row.push_back(c.covariance(r, q));
      cov.push_back(row);
    }
    jc["covariance"] = cov;
    jc["amplitude"] = c.amplitude;
    comps.push_back(jc);
  }
  j["components"] = comps;
  return j;
}

inline MsgLandscape landscape_from_json(const Json& j) {
  try {
    MsgLandscape land;
    land.dim = j.at("dim").get<int>();
    for (const auto& b : j.at("domain"))
      land.domain.emplace_back(b.at(0).get<double>(), b.at(1).get<double>());
    for (const auto& jc : j.at("components")) {
      MsgComponent c;
      const auto mean = jc.at("mean").get<std::vector<double>>();
      c.mean = Eigen::Map<const Vector>(mean.data(), static_cast<long>(mean.size()));
      const auto& cov = jc.at("covariance");
      c.covariance = Matrix(land.dim, land.dim);
      for (long r = 0; r < land.dim; ++r)
        for (long q = 0; q < land.dim; ++q) c.covariance(r, q) = cov.at(r).at(q).get<double>();
      c.amplitude = jc.at("amplitude").get<double>();
      land.components.push_back(std::move(c));
    }
    return land;
  } catch (const Json::exception& e) {
    throw data_error(std::string("landscape: malformed json: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Plot-ready CSV artifacts

inline void write_density_csv(const std::string& path, const DensityResult& result) {
  const long n = result.raw_density.size();
  Matrix rows(n, 3);
  for (long i = 0; i < n; ++i) {
    rows(i, 0) = static_cast<double>(i);
    rows(i, 1) = result.raw_density[i];
    rows(i, 2) = result.weights.beta[i];
  }
  write_csv(path, {"point_index", "raw_density", "beta"}, rows);
}

inline void write_es_trace_csv(const std::string& path, const EsTrace& trace) {
  if (trace.evaluations.empty()) throw data_error("es trace: empty");
  const long s = trace.evaluations.front().first.size();
  Matrix rows(static_cast<long>(trace.evaluations.size()), s + 2);
  std::vector<std::string> cols = {"evaluation_index"};
  for (long j = 0; j < s; ++j) cols.push_back("alpha_" + std::to_string(j + 1));
  cols.push_back("objective");
  for (std::size_t i = 0; i < trace.evaluations.size(); ++i) {
    rows(static_cast<long>(i), 0) = static_cast<double>(i);
    rows.block(static_cast<long>(i), 1, 1, s) = trace.evaluations[i].first.alpha.transpose();
    rows(static_cast<long>(i), s + 1) = trace.evaluations[i].second;
  }
  write_csv(path, cols, rows);
}

inline void write_roc_csv(const std::string& path, const RocCurve& curve) {
  Matrix rows(static_cast<long>(curve.points.size()), 3);
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    rows(static_cast<long>(i), 0) = curve.points[i].threshold;
    rows(static_cast<long>(i), 1) = curve.points[i].fpr;
    rows(static_cast<long>(i), 2) = curve.points[i].tpr;
  }
  write_csv(path, {"threshold", "fpr", "tpr"}, rows);
}

inline Json roc_summary_json(const RocCurve& curve) {
  Json j;
  j["auc"] = curve.auc;
  j["youden"] = {{"threshold", curve.youden.threshold},
                 {"j", curve.youden.j},
                 {"fpr", curve.youden.fpr},
                 {"tpr", curve.youden.tpr}};
  return j;
}

}  // namespace ccm
