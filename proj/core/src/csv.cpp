#include "stratarm/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace stratarm {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(trim(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

bool parse_real(const std::string& text, double& out) {
  if (text.empty()) return false;
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

std::optional<std::size_t> CsvTable::find(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == name) return j;
  }
  return std::nullopt;
}

std::vector<double> CsvTable::numeric(const std::string& name) const {
  const auto col = find(name);
  if (!col) throw Error(ErrorCode::kMissingColumn, "column '" + name + "' not found", 0, name);
  std::vector<double> values(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!parse_real(rows[r][*col], values[r])) {
      throw Error(ErrorCode::kNonNumericCell,
                  "row " + std::to_string(r + 1) + ", column '" + name + "': '" +
                      rows[r][*col] + "' is not a finite real",
                  static_cast<long>(r + 1), name);
    }
  }
  return values;
}

std::vector<long> CsvTable::integer(const std::string& name) const {
  const auto col = find(name);
  if (!col) throw Error(ErrorCode::kMissingColumn, "column '" + name + "' not found", 0, name);
  std::vector<long> values(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::string& text = rows[r][*col];
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), values[r]);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
      throw Error(ErrorCode::kNonNumericCell,
                  "row " + std::to_string(r + 1) + ", column '" + name + "': '" + text +
                      "' is not an integer",
                  static_cast<long>(r + 1), name);
    }
  }
  return values;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  long line_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (!have_header) {
      table.header = split_line(line);
      have_header = true;
      continue;
    }
    ++line_no;
    auto cells = split_line(line);
    if (cells.size() != table.header.size()) {
      throw Error(ErrorCode::kNonNumericCell,
                  "row " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                      " cells, header has " + std::to_string(table.header.size()),
                  line_no, "");
    }
    table.rows.push_back(std::move(cells));
  }
  if (!have_header) throw Error(ErrorCode::kEmptyInput, "CSV input has no header row");
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str());
}

namespace {

MatrixXd prefixed_block(const CsvTable& table, const std::string& prefix) {
  std::vector<std::string> names;
  if (!prefix.empty()) {
    for (const auto& name : table.header) {
      if (name.size() > prefix.size() && name.compare(0, prefix.size(), prefix) == 0) {
        names.push_back(name);
      }
    }
  }
  MatrixXd block(static_cast<Index>(table.rows.size()), static_cast<Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto column = table.numeric(names[j]);
    for (std::size_t r = 0; r < column.size(); ++r) {
      block(static_cast<Index>(r), static_cast<Index>(j)) = column[r];
    }
  }
  return block;
}

VectorXd binary_column(const CsvTable& table, const std::string& name) {
  const auto col = table.find(name);
  if (!col) throw Error(ErrorCode::kMissingColumn, "column '" + name + "' not found", 0, name);
  VectorXd out(static_cast<Index>(table.rows.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::string& cell = table.rows[r][*col];
    if (cell == "0") {
      out[static_cast<Index>(r)] = 0.0;
    } else if (cell == "1") {
      out[static_cast<Index>(r)] = 1.0;
    } else {
      throw Error(ErrorCode::kNonBinaryTreatment,
                  "row " + std::to_string(r + 1) + ", column '" + name + "': '" + cell +
                      "' is not 0 or 1",
                  static_cast<long>(r + 1), name);
    }
  }
  return out;
}

}  // namespace

ExperimentData to_experiment_data(const CsvTable& table, const CsvSchema& schema) {
  ExperimentData data;
  const auto n = static_cast<Index>(table.rows.size());
  data.psi = prefixed_block(table, schema.psi_prefix);
  data.h = prefixed_block(table, schema.h_prefix);
  data.z = prefixed_block(table, schema.z_prefix);

  if (table.find(schema.outcome) || schema.require_outcome) {
    const auto y = table.numeric(schema.outcome);
    data.y = Eigen::Map<const VectorXd>(y.data(), n);
  } else {
    data.y = VectorXd::Zero(n);
  }
  if (table.find(schema.treatment) || schema.require_treatment) {
    data.d = binary_column(table, schema.treatment);
  } else {
    data.d = VectorXd::Zero(n);
  }
  if (schema.uptake) data.uptake = binary_column(table, *schema.uptake);
  return data;
}

ExperimentData load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  return to_experiment_data(read_csv(path), schema);
}

}  // namespace stratarm
