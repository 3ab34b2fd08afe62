#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stratarm/data.hpp"

namespace stratarm {

// A header row plus raw string cells; every row has header.size() cells.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> find(const std::string& name) const;
  // Column parsed as finite reals. Throws kMissingColumn / kNonNumericCell.
  std::vector<double> numeric(const std::string& name) const;
  // Column parsed as integers (strata labels, group ids).
  std::vector<long> integer(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

// Name-based binding of columns to ExperimentData fields. Columns whose name
// starts with a prefix are taken in file order.
struct CsvSchema {
  std::string psi_prefix = "psi_";
  std::string h_prefix = "h_";
  std::string z_prefix = "z_";
  std::string outcome = "y";
  std::string treatment = "d";
  std::optional<std::string> uptake;
  bool require_outcome = true;
  bool require_treatment = true;
};

ExperimentData to_experiment_data(const CsvTable& table, const CsvSchema& schema = {});
ExperimentData load_csv(const std::filesystem::path& path, const CsvSchema& schema = {});

}  // namespace stratarm
