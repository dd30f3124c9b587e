#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "trirobust/dataset.hpp"

namespace trirobust::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a header name, or nullopt.
  std::optional<std::size_t> column(const std::string& name) const;
};

// RFC 4180: comma separated, optional double-quoted fields with "" escapes,
// quoted fields may span lines, CRLF or LF line ends, optional UTF-8 BOM.
// Throws ConfigError (row number) on ragged rows or unterminated quotes.
Table parse(std::istream& in);
// Throws IoError when the file cannot be opened.
Table read_file(const std::string& path);

// Quotes a field when it contains a comma, quote, CR or LF.
std::string escape(const std::string& field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

// Builds a dataset from a table. The outcome column may hold empty cells or
// "NA" (missing, delta = 0); covariates must be complete numbers. An empty
// `covariates` list means every column except the outcome. Throws
// MissingColumn naming the column, or ConfigError with row/column.
Dataset to_dataset(const Table& table, const std::string& outcome, const std::vector<std::string>& covariates = {});

}  // namespace trirobust::csv
