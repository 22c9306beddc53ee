#include "sts/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace sts::io {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_csv(const std::filesystem::path& path, const Table& table) {
  if (table.columns.size() != std::size_t(table.values.cols()))
    throw Error("csv write: header arity does not match the value columns");
  std::string out;
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    if (c) out += ',';
    out += table.columns[c];
  }
  out += '\n';
  for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < table.values.cols(); ++c) {
      if (c) out += ',';
      out += format_double(table.values(r, c));
    }
    out += '\n';
  }
  write_text(path, out);
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, const std::filesystem::path& path) {
  const char* s = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(s, &end);
  if (end == s || *end != '\0')
    throw Error("csv read: unparseable cell '" + cell + "' in " + path.string());
  return v;
}

}  // namespace

Table read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("csv read: " + path.string() + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  Table table;
  table.columns = split_line(line);
  const std::size_t arity = table.columns.size();
  if (arity == 0) throw Error("csv read: " + path.string() + " has an empty header");
  std::vector<double> flat;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != arity)
      throw Error("csv read: ragged row in " + path.string());
    for (const auto& cell : cells) flat.push_back(parse_cell(cell, path));
    ++rows;
  }
  table.values.resize(rows, Eigen::Index(arity));
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < Eigen::Index(arity); ++c)
      table.values(r, c) = flat[std::size_t(r) * arity + std::size_t(c)];
  return table;
}

Table trajectory_table(const numerics::Trajectory& traj, const std::vector<std::string>& names) {
  if (Eigen::Index(names.size()) != traj.dim())
    throw Error("trajectory table: need one name per signal component");
  Table table;
  table.columns.reserve(names.size() + 1);
  table.columns.emplace_back("t");
  table.columns.insert(table.columns.end(), names.begin(), names.end());
  const Eigen::Index n = Eigen::Index(traj.size());
  table.values.resize(n, traj.dim() + 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    table.values(i, 0) = traj.grid().node(std::size_t(i));
    table.values.row(i).tail(traj.dim()) = traj.node(std::size_t(i)).transpose();
  }
  return table;
}

numerics::Trajectory table_trajectory(const Table& table) {
  if (table.cols() < 2) throw Error("trajectory table: need a t column and at least one signal");
  if (table.rows() < 1) throw Error("trajectory table: no records");
  std::vector<double> nodes(std::size_t(table.rows()));
  for (Eigen::Index r = 0; r < table.rows(); ++r) nodes[std::size_t(r)] = table.values(r, 0);
  MatX values = table.values.rightCols(table.cols() - 1).transpose();
  return numerics::Trajectory(numerics::TimeGrid::from_nodes(std::move(nodes)),
                              std::move(values));
}

namespace {

void append_schedule_names(std::vector<std::string>& names, const std::string& prefix,
                           const numerics::MatrixSchedule& ms) {
  for (Eigen::Index f = 0; f < ms.rows * ms.cols; ++f)
    names.push_back(prefix + "_" + std::to_string(f % ms.rows) + "_" +
                    std::to_string(f / ms.rows));
}

}  // namespace

void write_gain_schedule(const std::filesystem::path& path, const lqr::GainSchedule& gains) {
  std::vector<std::string> names;
  append_schedule_names(names, "k", gains.gain);
  append_schedule_names(names, "p", gains.riccati);
  const Eigen::Index nk = gains.gain.traj.dim();
  const Eigen::Index np = gains.riccati.traj.dim();
  const Eigen::Index n = Eigen::Index(gains.gain.traj.size());
  MatX stacked(nk + np, n);
  stacked.topRows(nk) = gains.gain.traj.values();
  stacked.bottomRows(np) = gains.riccati.traj.values();
  write_csv(path, trajectory_table(
                      numerics::Trajectory(gains.gain.traj.grid(), std::move(stacked)), names));
}

lqr::GainSchedule read_gain_schedule(const std::filesystem::path& path) {
  const Table table = read_csv(path);
  const Eigen::Index nk = 4 * 6, np = 6 * 6;
  if (table.cols() != 1 + nk + np || table.columns[0] != "t" || table.columns[1] != "k_0_0")
    throw Error("gain schedule: unexpected layout in " + path.string());
  const auto traj = table_trajectory(table);
  lqr::GainSchedule gains;
  gains.gain = numerics::MatrixSchedule(
      4, 6, numerics::Trajectory(traj.grid(), traj.values().topRows(nk)));
  gains.riccati = numerics::MatrixSchedule(
      6, 6, numerics::Trajectory(traj.grid(), traj.values().bottomRows(np)));
  return gains;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(text.data(), std::streamsize(text.size()));
  if (!out) throw Error("short write to " + path.string());
}

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char byte : data) {
    h ^= byte;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace sts::io
