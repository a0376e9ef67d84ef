#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "cefopt/milp/model.hpp"

namespace cefopt::milp {

/// Maps a name onto the MPS-safe charset [A-Za-z0-9_.()\[\]-], at most 255 chars.
std::string sanitize_mps_name(std::string_view name);

/// Free-format MPS text. Maximization models carry an OBJSENSE MAX section;
/// the objective constant is written as the negated RHS of the objective row.
std::string to_mps(const Model& model);

/// Writes to_mps(model) to path; throws Error on I/O failure.
void export_mps(const Model& model, const std::filesystem::path& path);

}  // namespace cefopt::milp
