#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "stackgrad/errors.hpp"
#include "stackgrad/leader.hpp"
#include "stackgrad/text.hpp"

namespace stackgrad::harness {

namespace fs = std::filesystem;

/// Environment variable naming the root for relative output directories.
inline constexpr const char* kOutputRootEnv = "STACKGRAD_OUT";

/// Absolute paths pass through; relative ones go under $STACKGRAD_OUT when
/// it is set, else under the working directory.
inline fs::path resolve_output_dir(const std::string& dir) {
  const fs::path p(dir);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) return fs::path(root) / p;
  return p;
}

/// Writes through a sibling temp file and renames it into place, so
/// readers never see a partial file.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error("short write to '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

/// Minimal CSV builder: '.' decimals, round-trip doubles, '\n' after every
/// row including the last.
class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) : columns_(header.size()) {
    row_strings(header);
  }

  CsvWriter& cell(const std::string& s) {
    if (fields_ > 0) text_ += ',';
    text_ += s;
    ++fields_;
    return *this;
  }
  CsvWriter& cell(double v) { return cell(format_double(v)); }
  CsvWriter& cell(std::int64_t v) { return cell(std::to_string(v)); }
  CsvWriter& cell(std::uint64_t v) { return cell(std::to_string(v)); }
  CsvWriter& cell(int v) { return cell(std::to_string(v)); }

  void end_row() {
    if (fields_ != columns_)
      throw DimensionMismatch("csv row has " + std::to_string(fields_) + " fields, expected " +
                              std::to_string(columns_));
    text_ += '\n';
    fields_ = 0;
  }

  const std::string& str() const { return text_; }

 private:
  void row_strings(const std::vector<std::string>& cells) {
    for (const auto& c : cells) cell(c);
    end_row();
  }

  std::size_t columns_;
  std::size_t fields_ = 0;
  std::string text_;
};

inline const std::vector<std::string>& trajectory_columns() {
  static const std::vector<std::string> cols{"iteration", "objective",   "violation", "lagrangian",
                                             "ni_residual", "regularized", "wall_ms"};
  return cols;
}

/// Trajectory CSV; wall_ms is written as 0 unless `timing` is set.
inline std::string trajectory_csv(const RunTrajectory& traj, bool timing) {
  CsvWriter w(trajectory_columns());
  for (const auto& r : traj.records) {
    w.cell(r.iteration)
        .cell(r.objective)
        .cell(r.violation)
        .cell(r.lagrangian)
        .cell(r.ni_residual)
        .cell(r.regularized ? 1 : 0)
        .cell(timing ? r.wall_ms : 0.0);
    w.end_row();
  }
  return w.str();
}

}  // namespace stackgrad::harness
