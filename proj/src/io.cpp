#include "qutnn/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qutnn/errors.hpp"

namespace qutnn {

namespace {

using nlohmann::json;

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

double parse_cell(const std::string& raw, std::size_t line, std::size_t column) {
  const std::string tok = trim(raw);
  if (tok.empty()) throw CsvError("empty cell (line " + std::to_string(line) + ", column " +
                                      std::to_string(column) + ")",
                                  line, column);
  const char* begin = tok.data();
  const char* end = tok.data() + tok.size();
  if (*begin == '+') ++begin;  // std::from_chars rejects a leading plus
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    throw CsvError("cannot parse '" + tok + "' as a number (line " + std::to_string(line) +
                       ", column " + std::to_string(column) + ")",
                   line, column);
  }
  if (!std::isfinite(value)) {
    throw CsvError("non-finite value '" + tok + "' (line " + std::to_string(line) +
                       ", column " + std::to_string(column) + ")",
                   line, column);
  }
  return value;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(i, c));
  j["data"] = std::move(data);
  return j;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 ||
      data.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
    throw Error("model: weight block size does not match its shape");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t idx = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = data[idx++];
  return m;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);

  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (table.header.empty()) {
      for (const auto& f : fields) table.header.push_back(trim(f));
      continue;
    }
    if (fields.size() != table.header.size()) {
      const std::size_t col = std::min(fields.size(), table.header.size()) + 1;
      throw CsvError("expected " + std::to_string(table.header.size()) + " columns, got " +
                         std::to_string(fields.size()) + " (line " + std::to_string(line_no) +
                         ", column " + std::to_string(col) + ")",
                     line_no, col);
    }
    std::vector<double> row(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      row[c] = parse_cell(fields[c], line_no, c + 1);
    }
    rows.push_back(std::move(row));
  }
  if (table.header.empty()) throw CsvError("missing header row", 1, 1);

  table.values.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(table.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < rows[i].size(); ++c)
      table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
  return table;
}

Dataset dataset_from_table(const CsvTable& table) {
  if (table.header.size() < 2) {
    throw CsvError("need at least one feature column and the response column", 1, 1);
  }
  Dataset dataset;
  dataset.x = table.values.leftCols(table.values.cols() - 1);
  dataset.y = table.values.rightCols(1).col(0);
  return dataset;
}

Standardization compute_standardization(const Eigen::MatrixXd& x) {
  Standardization s;
  s.means = x.colwise().mean();
  s.scales.resize(x.cols());
  const double denom = x.rows() > 1 ? static_cast<double>(x.rows() - 1) : 1.0;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - s.means[j]).square().sum() / denom;
    const double sd = std::sqrt(var);
    s.scales[j] = sd > 0.0 ? sd : 1.0;
  }
  return s;
}

Eigen::MatrixXd apply_standardization(const Eigen::MatrixXd& x, const Standardization& s) {
  if (x.cols() != s.means.size()) throw ShapeError("standardization width mismatch");
  return (x.rowwise() - s.means.transpose()).array().rowwise() / s.scales.transpose().array();
}

std::string model_to_json(const Model& model) {
  json j;
  j["format"] = "qutnn-model";
  j["format_version"] = 1;
  j["layer_widths"] = model.arch.layer_widths;
  j["activation"] = model.arch.activation.name;
  json weights = json::array();
  for (const auto& w : model.params.weights) weights.push_back(matrix_to_json(w));
  j["weights"] = std::move(weights);
  json biases = json::array();
  for (const auto& b : model.params.hidden_biases)
    biases.push_back(std::vector<double>(b.data(), b.data() + b.size()));
  j["hidden_biases"] = std::move(biases);
  j["output_bias"] = model.params.output_bias;
  if (model.standardization) {
    j["standardization"] = {
        {"means", std::vector<double>(model.standardization->means.data(),
                                      model.standardization->means.data() +
                                          model.standardization->means.size())},
        {"scales", std::vector<double>(model.standardization->scales.data(),
                                       model.standardization->scales.data() +
                                           model.standardization->scales.size())}};
  }
  return j.dump(2) + "\n";
}

Model model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("model: invalid JSON: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != "qutnn-model") {
      throw Error("model: unexpected format tag");
    }
    Model model;
    model.arch.layer_widths = j.at("layer_widths").get<std::vector<Eigen::Index>>();
    model.arch.activation = activation_by_name(j.at("activation").get<std::string>());
    for (const auto& w : j.at("weights")) model.params.weights.push_back(matrix_from_json(w));
    for (const auto& b : j.at("hidden_biases")) {
      const auto v = b.get<std::vector<double>>();
      model.params.hidden_biases.push_back(
          Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    }
    model.params.output_bias = j.at("output_bias").get<double>();
    if (j.contains("standardization")) {
      Standardization s;
      const auto means = j["standardization"].at("means").get<std::vector<double>>();
      const auto scales = j["standardization"].at("scales").get<std::vector<double>>();
      s.means = Eigen::Map<const Eigen::VectorXd>(means.data(),
                                                  static_cast<Eigen::Index>(means.size()));
      s.scales = Eigen::Map<const Eigen::VectorXd>(scales.data(),
                                                   static_cast<Eigen::Index>(scales.size()));
      model.standardization = std::move(s);
    }
    check_shapes(model.params, model.arch);
    return model;
  } catch (const json::exception& e) {
    throw Error(std::string("model: missing or malformed field: ") + e.what());
  }
}

void save_model(const Model& model, const std::string& path) {
  write_file_atomic(path, model_to_json(model));
}

Model load_model(const std::string& path) { return model_from_json(read_file(path)); }

std::string qut_estimate_to_json(const QutEstimate& estimate) {
  json j;
  j["lambda_qut"] = estimate.lambda_qut;
  j["alpha"] = estimate.config.alpha;
  j["mc_samples"] = estimate.config.mc_samples;
  j["seed"] = estimate.config.seed;
  j["sample_min"] = estimate.sample_min;
  j["sample_median"] = estimate.sample_median;
  j["sample_max"] = estimate.sample_max;
  return j.dump(2) + "\n";
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file: " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("short write: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string format_double(double v) { return json(v).dump(); }

std::string recovery_grid_to_csv(const RecoveryGrid& grid) {
  std::ostringstream os;
  os << "h,p1,p2,recovery_probability,mean_rmse,replicates,failures\n";
  for (const auto& cell : grid.results) {
    os << cell.cell.h << ',' << cell.cell.p1 << ',' << cell.cell.p2 << ','
       << format_double(cell.recovery_probability) << ','
       << format_double(cell.mean_generalization_rmse) << ',' << cell.replicates << ','
       << cell.failures << '\n';
  }
  return os.str();
}

std::string predictions_to_csv(const Eigen::VectorXd& preds) {
  std::ostringstream os;
  os << "prediction\n";
  for (Eigen::Index i = 0; i < preds.size(); ++i) os << format_double(preds[i]) << '\n';
  return os.str();
}

std::string support_to_csv(const SupportMask& support) {
  std::ostringstream os;
  os << "kind,index\n";
  for (const auto j : support.selected_features) os << "feature," << j << '\n';
  for (const auto i : support.active_neurons) os << "neuron," << i << '\n';
  return os.str();
}

std::string trace_to_csv(const FitResult& result) {
  std::ostringstream os;
  os << "iter,objective,residual_norm,phase\n";
  for (std::size_t i = 0; i < result.objective_trace.size(); ++i) {
    const char* phase =
        static_cast<int>(i) < result.phase_boundary ? "smooth" : "proximal";
    os << i << ',' << format_double(result.objective_trace[i]) << ','
       << format_double(result.residual_trace[i]) << ',' << phase << '\n';
  }
  return os.str();
}

}  // namespace qutnn
