#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sts/lqr.hpp"
#include "sts/numerics.hpp"
#include "sts/types.hpp"

namespace sts::io {

// 17 significant digits, enough for the parsed value to be bit-identical to
// the one written. All artifact floats go through this.
std::string format_double(double v);

// Rectangular numeric table with a header row, one record per line.
struct Table {
  std::vector<std::string> columns;
  MatX values;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

void write_csv(const std::filesystem::path& path, const Table& table);

// Strict reader: constant arity, every cell a parseable double. Throws Error
// on anything else.
Table read_csv(const std::filesystem::path& path);

// Leading t column plus one named column per signal component.
Table trajectory_table(const numerics::Trajectory& traj, const std::vector<std::string>& names);

// Inverse of trajectory_table; interpolation policy resets to linear.
numerics::Trajectory table_trajectory(const Table& table);

// Gain schedule as one wide table: t, then K entrywise, then P entrywise,
// both in flattened storage order with row/column indices in the header.
// Reload is bitwise.
void write_gain_schedule(const std::filesystem::path& path, const lqr::GainSchedule& gains);
lqr::GainSchedule read_gain_schedule(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

// FNV-1a, the 64-bit variant. Stable, dependency-free fingerprint for
// manifests.
std::uint64_t fnv1a(std::string_view data);
std::string hex64(std::uint64_t v);

}  // namespace sts::io
