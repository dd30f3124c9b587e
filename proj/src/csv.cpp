#include "trirobust/csv.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "trirobust/error.hpp"
#include "trirobust/format.hpp"

namespace trirobust::csv {

std::optional<std::size_t> Table::column(const std::string& name) const {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == name) return j;
  }
  return std::nullopt;
}

Table parse(std::istream& in) {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.rfind("\xEF\xBB\xBF", 0) == 0) text.erase(0, 3);

  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;      // inside a quoted field
  bool was_quoted = false;  // current field started with a quote
  bool any = false;         // current record has content
  std::size_t line = 1;

  auto end_field = [&]() {
    record.push_back(std::move(field));
    field.clear();
    was_quoted = false;
  };
  auto end_record = [&]() {
    end_field();
    // Skip blank lines (a single empty unquoted field).
    if (!(record.size() == 1 && record[0].empty() && !any)) records.push_back(std::move(record));
    record.clear();
    any = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty() || was_quoted) {
          throw Error(ErrorCode::ConfigError, "stray quote inside an unquoted field", records.size());
        }
        quoted = was_quoted = any = true;
        break;
      case ',':
        end_field();
        any = true;
        break;
      case '\r':
        if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        end_record();
        ++line;
        break;
      case '\n':
        end_record();
        ++line;
        break;
      default:
        if (was_quoted) throw Error(ErrorCode::ConfigError, "text after closing quote", records.size());
        field.push_back(c);
        any = true;
    }
  }
  if (quoted) throw Error(ErrorCode::ConfigError, "unterminated quoted field starting before line " + std::to_string(line));
  if (any || !field.empty()) end_record();

  Table table;
  if (records.empty()) throw Error(ErrorCode::ConfigError, "CSV input is empty (no header row)");
  table.header = std::move(records.front());
  for (std::size_t r = 1; r < records.size(); ++r) {
    if (records[r].size() != table.header.size()) {
      throw Error(ErrorCode::ConfigError,
                  "row has " + std::to_string(records[r].size()) + " fields, header has " +
                      std::to_string(table.header.size()),
                  r);
    }
    table.rows.push_back(std::move(records[r]));
  }
  return table;
}

Table read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for reading");
  return parse(in);
}

std::string escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
  for (std::size_t j = 0; j < fields.size(); ++j) {
    if (j) out << ',';
    out << escape(fields[j]);
  }
  out << '\n';
}

Dataset to_dataset(const Table& table, const std::string& outcome, const std::vector<std::string>& covariates) {
  const auto yc = table.column(outcome);
  if (!yc) throw Error(ErrorCode::MissingColumn, "outcome column '" + outcome + "' not found in header");
  std::vector<std::size_t> xc;
  std::vector<std::string> names;
  if (covariates.empty()) {
    for (std::size_t j = 0; j < table.header.size(); ++j) {
      if (j != *yc) {
        xc.push_back(j);
        names.push_back(table.header[j]);
      }
    }
  } else {
    for (const std::string& name : covariates) {
      const auto j = table.column(name);
      if (!j) throw Error(ErrorCode::MissingColumn, "covariate column '" + name + "' not found in header");
      xc.push_back(*j);
      names.push_back(name);
    }
  }

  const std::size_t n = table.rows.size();
  if (n == 0) throw Error(ErrorCode::ConfigError, "CSV input has a header but no data rows");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(xc.size()));
  std::vector<std::uint8_t> delta(n);
  std::vector<std::optional<double>> y(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& row = table.rows[r];
    for (std::size_t k = 0; k < xc.size(); ++k) {
      const auto v = parse_number(row[xc[k]]);
      if (!v || !std::isfinite(*v)) {
        throw Error(ErrorCode::ConfigError,
                    "covariate '" + names[k] + "' is " + (row[xc[k]].empty() ? "missing" : "not a finite number"),
                    r + 1, xc[k] + 1);
      }
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = *v;
    }
    const std::string& cell = row[*yc];
    if (cell.empty() || cell == "NA") {
      delta[r] = 0;
    } else {
      const auto v = parse_number(cell);
      if (!v || !std::isfinite(*v)) {
        throw Error(ErrorCode::ConfigError, "outcome '" + outcome + "' is not a finite number", r + 1, *yc + 1);
      }
      delta[r] = 1;
      y[r] = *v;
    }
  }
  return make_dataset(std::move(x), std::move(delta), std::move(y), std::move(names));
}

}  // namespace trirobust::csv
