#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "wmforge/mip_model.hpp"

namespace wmforge {

/// CPLEX-style LP text (Minimize/Maximize, Subject To, Bounds, Binaries,
/// End). Every variable is listed in Bounds so re-import keeps the
/// original variable order; numbers are printed with 17 significant digits.
void write_lp(const MipModel& model, std::ostream& out);
std::string to_lp_string(const MipModel& model);
void export_lp(const MipModel& model, const std::filesystem::path& path);

/// Parses the subset of LP syntax produced by write_lp (plus the usual
/// shorthands: min/max, st, free, inf). Throws IoError on syntax errors.
MipModel read_lp(std::istream& in);
MipModel parse_lp(const std::string& text);
MipModel import_lp(const std::filesystem::path& path);

}  // namespace wmforge
