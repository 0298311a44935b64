#include "nngls/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace nngls {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t start = 0;
    while (start < cell.size() && cell[start] == ' ') ++start;
    out.push_back(cell.substr(start));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_cell(const std::string& cell, const std::string& path, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": cannot parse value '" + cell + "'");
  }
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open file: " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument(path + ": empty file");
  table.header = split_line(line);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_line(line);
    if (cells.size() != table.header.size()) {
      throw std::invalid_argument(path + ":" + std::to_string(line_no) + ": expected " +
                                  std::to_string(table.header.size()) + " columns, got " + std::to_string(cells.size()));
    }
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) row[j] = parse_cell(cells[j], path, line_no);
    table.rows.push_back(std::move(row));
  }
  return table;
}

int find_column(const CsvTable& table, const std::string& name, const std::string& path) {
  const auto it = std::find(table.header.begin(), table.header.end(), name);
  if (it == table.header.end()) {
    throw std::invalid_argument(path + ": missing column '" + name + "'");
  }
  return static_cast<int>(it - table.header.begin());
}

int count_x_columns(const CsvTable& table) {
  int d = 0;
  while (std::find(table.header.begin(), table.header.end(), "x" + std::to_string(d + 1)) != table.header.end()) ++d;
  return d;
}

}  // namespace

void SpatialDataset::validate() const {
  if (n() < 1) throw std::invalid_argument("dataset is empty");
  if (Y.size() != n() || S.rows() != n()) {
    throw std::invalid_argument("X, Y, S row counts differ");
  }
  if (S.cols() != 2) throw std::invalid_argument("coordinates must have exactly 2 columns");
  if (!X.allFinite() || !Y.allFinite() || !S.allFinite()) {
    throw std::invalid_argument("dataset contains non-finite entries");
  }
  // exact-duplicate coordinates make the design degenerate; detect via sort
  std::vector<int> idx(static_cast<std::size_t>(n()));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (S(a, 0) != S(b, 0)) return S(a, 0) < S(b, 0);
    return S(a, 1) < S(b, 1);
  });
  for (std::size_t k = 1; k < idx.size(); ++k) {
    if (S(idx[k], 0) == S(idx[k - 1], 0) && S(idx[k], 1) == S(idx[k - 1], 1)) {
      throw std::invalid_argument("degenerate design: duplicate coordinates at rows " + std::to_string(idx[k - 1]) +
                                  " and " + std::to_string(idx[k]));
    }
  }
}

SpatialDataset read_training_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  const int d = count_x_columns(table);
  if (d == 0) throw std::invalid_argument(path + ": missing column 'x1'");
  const int cy = find_column(table, "y", path);
  const int cs1 = find_column(table, "s1", path);
  const int cs2 = find_column(table, "s2", path);
  std::vector<int> cx(d);
  for (int j = 0; j < d; ++j) cx[j] = find_column(table, "x" + std::to_string(j + 1), path);

  const auto n = static_cast<Eigen::Index>(table.rows.size());
  SpatialDataset data;
  data.X.resize(n, d);
  data.Y.resize(n);
  data.S.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    for (int j = 0; j < d; ++j) data.X(i, j) = row[cx[j]];
    data.Y(i) = row[cy];
    data.S(i, 0) = row[cs1];
    data.S(i, 1) = row[cs2];
  }
  data.validate();
  return data;
}

QueryData read_query_csv(const std::string& path) {
  const CsvTable table = read_csv(path);
  const int d = count_x_columns(table);
  if (d == 0) throw std::invalid_argument(path + ": missing column 'x1'");
  const int cs1 = find_column(table, "s1", path);
  const int cs2 = find_column(table, "s2", path);
  std::vector<int> cx(d);
  for (int j = 0; j < d; ++j) cx[j] = find_column(table, "x" + std::to_string(j + 1), path);

  const auto n = static_cast<Eigen::Index>(table.rows.size());
  QueryData q;
  q.X.resize(n, d);
  q.S.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = table.rows[static_cast<std::size_t>(i)];
    for (int j = 0; j < d; ++j) q.X(i, j) = row[cx[j]];
    q.S(i, 0) = row[cs1];
    q.S(i, 1) = row[cs2];
  }
  if (!q.X.allFinite() || !q.S.allFinite()) throw std::invalid_argument(path + ": non-finite entries");
  return q;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_training_csv(const std::string& path, const SpatialDataset& data) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write file: " + path);
  for (Eigen::Index j = 0; j < data.d(); ++j) out << "x" << (j + 1) << ",";
  out << "y,s1,s2\n";
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index j = 0; j < data.d(); ++j) out << format_double(data.X(i, j)) << ",";
    out << format_double(data.Y(i)) << "," << format_double(data.S(i, 0)) << "," << format_double(data.S(i, 1)) << "\n";
  }
}

}  // namespace nngls
