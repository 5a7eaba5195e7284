#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "depcop/copula.hpp"

namespace depcop {

/// Comma-separated table: a header row of variable names, then one numeric
/// row per observation. Blank lines are skipped; a leading UTF-8 BOM and
/// double quotes around names are stripped. Ragged rows, non-numeric or
/// non-finite cells and tables with fewer than two rows throw ParseError with
/// source:line.
ObservationTable parse_csv(std::istream& in, const std::string& source = "<stream>");
ObservationTable load_csv(const std::filesystem::path& path);

/// Plain PGM (P2), m x m pixels, maxval 255. u_i runs left to right, u_j
/// bottom to top. Pixel = round(255 * (1 - mass / max mass)), so empty cells
/// are white and the heaviest cell black.
std::string format_heatmap(const CopulaHistogram& c);
void write_heatmap(const CopulaHistogram& c, const std::filesystem::path& path);

/// Writes to `path` + ".partial" and renames it over `path`. IoError on
/// failure; a failed write leaves at most the .partial file behind.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Shortest decimal that round-trips to the same double.
std::string format_number(double v);

}  // namespace depcop
