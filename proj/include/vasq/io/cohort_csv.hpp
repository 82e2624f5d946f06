#pragma once

// Cohort tables as CSV. Numbers are written with 17 significant digits so a
// write/read cycle reproduces every double bit-exactly.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vasq/stats.hpp"

namespace vasq {

inline constexpr const char* kCohortCsvHeader = "id,sex,age,lung_volume,slpa,slpv,bcpa,bcpv";

inline void write_cohort_csv(const std::filesystem::path& path,
                             const std::vector<SubjectRecord>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw validation_error("cannot write " + path.string());
  out << kCohortCsvHeader << "\n";
  out.precision(17);
  for (const auto& r : rows) {
    if (r.id.find(',') != std::string::npos || r.id.find('"') != std::string::npos)
      throw validation_error("cohort csv: subject id '" + r.id + "' contains ',' or '\"'");
    out << r.id << ',' << r.sex << ',' << r.age << ',' << r.lung_volume << ',' << r.slpa << ','
        << r.slpv << ',' << r.bcpa << ',' << r.bcpv << "\n";
  }
  if (!out) throw validation_error("write failure on " + path.string());
}

namespace detail {

inline double csv_number(const std::string& field, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (end != field.c_str() + field.size() || field.empty())
    throw validation_error(where + ": '" + field + "' is not a number");
  return v;
}

}  // namespace detail

inline std::vector<SubjectRecord> read_cohort_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open cohort file " + path.string());

  std::string line;
  int lineno = 0;
  const std::string name = path.filename().string();
  if (!std::getline(in, line)) throw validation_error(name + ": empty file");
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCohortCsvHeader)
    throw validation_error(name + ":1: expected header '" + kCohortCsvHeader + "', got '" + line +
                           "'");

  std::vector<SubjectRecord> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(lineno);

    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (line.back() == ',') fields.push_back("");
    if (fields.size() != 8)
      throw validation_error(where + ": expected 8 fields, got " + std::to_string(fields.size()));

    SubjectRecord r;
    r.id = fields[0];
    const double sex = detail::csv_number(fields[1], where);
    if (sex != 0.0 && sex != 1.0)
      throw validation_error(where + ": sex must be 0 or 1, got '" + fields[1] + "'");
    r.sex = int(sex);
    r.age = detail::csv_number(fields[2], where);
    r.lung_volume = detail::csv_number(fields[3], where);
    r.slpa = detail::csv_number(fields[4], where);
    r.slpv = detail::csv_number(fields[5], where);
    r.bcpa = detail::csv_number(fields[6], where);
    r.bcpv = detail::csv_number(fields[7], where);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace vasq
