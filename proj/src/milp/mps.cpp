#include "cefopt/milp/mps.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <unordered_set>
#include <vector>

#include "cefopt/error.hpp"

namespace cefopt::milp {

namespace {

std::string num(double v) { return fmt::format("{:.17g}", v); }

bool safe_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c == '_' || c == '.' || c == '(' || c == ')' || c == '[' || c == ']' || c == '-';
}

// Sanitized names, made unique by suffixing the item index on collision.
std::vector<std::string> unique_names(const std::vector<std::string>& raw,
                                      std::unordered_set<std::string>& taken, char prefix) {
  std::vector<std::string> out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    std::string s = raw[i].empty() ? fmt::format("{}{}", prefix, i) : sanitize_mps_name(raw[i]);
    if (taken.contains(s)) {
      s = sanitize_mps_name(fmt::format("{}_{}{}", s.substr(0, 230), prefix, i));
      while (taken.contains(s)) s += "_";
    }
    taken.insert(s);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::string sanitize_mps_name(std::string_view name) {
  std::string s;
  s.reserve(std::min<std::size_t>(name.size(), 255));
  for (char c : name) {
    if (s.size() == 255) break;
    s.push_back(safe_char(c) ? c : '_');
  }
  if (s.empty()) s = "_";
  return s;
}

std::string to_mps(const Model& model) {
  model.validate();
  std::unordered_set<std::string> taken{"OBJ", "RHS", "BND"};
  std::vector<std::string> raw;
  raw.reserve(model.num_rows());
  for (const Constraint& c : model.rows()) raw.push_back(c.name);
  const std::vector<std::string> row_names = unique_names(raw, taken, 'r');
  raw.clear();
  for (const Variable& v : model.vars()) raw.push_back(v.name);
  const std::vector<std::string> col_names = unique_names(raw, taken, 'c');

  // Column-major view of the constraint matrix.
  std::vector<std::vector<std::pair<int, double>>> cols(model.num_vars());
  for (int i = 0; i < model.num_rows(); ++i) {
    for (const Term& t : model.row(i).terms) cols[t.var].emplace_back(i, t.coef);
  }

  const Objective& obj = model.objective();
  std::string out;
  out += "NAME " + sanitize_mps_name(model.name()) + "\n";
  if (obj.sense == ObjSense::Maximize) out += "OBJSENSE\n    MAX\n";
  out += "ROWS\n N  OBJ\n";
  for (int i = 0; i < model.num_rows(); ++i) {
    const char* tag = "L";
    if (model.row(i).sense == Sense::Equal) tag = "E";
    if (model.row(i).sense == Sense::GreaterEqual) tag = "G";
    out += fmt::format(" {}  {}\n", tag, row_names[i]);
  }

  out += "COLUMNS\n";
  for (int j = 0; j < model.num_vars(); ++j) {
    const bool has_obj = obj.coefs[j] != 0.0;
    if (has_obj || cols[j].empty()) {
      out += fmt::format("    {}  OBJ  {}\n", col_names[j], num(obj.coefs[j]));
    }
    for (const auto& [i, a] : cols[j]) {
      out += fmt::format("    {}  {}  {}\n", col_names[j], row_names[i], num(a));
    }
  }

  out += "RHS\n";
  if (obj.constant != 0.0) out += fmt::format("    RHS  OBJ  {}\n", num(-obj.constant));
  for (int i = 0; i < model.num_rows(); ++i) {
    if (model.row(i).rhs != 0.0) {
      out += fmt::format("    RHS  {}  {}\n", row_names[i], num(model.row(i).rhs));
    }
  }

  out += "BOUNDS\n";
  for (int j = 0; j < model.num_vars(); ++j) {
    const Variable& v = model.var(j);
    const std::string& n = col_names[j];
    if (v.kind == VarKind::Binary) {
      out += fmt::format(" BV BND  {}\n", n);
      if (v.lower == v.upper) out += fmt::format(" FX BND  {}  {}\n", n, num(v.lower));
      continue;
    }
    const bool lo_fin = std::isfinite(v.lower);
    const bool up_fin = std::isfinite(v.upper);
    if (lo_fin && up_fin && v.lower == v.upper) {
      out += fmt::format(" FX BND  {}  {}\n", n, num(v.lower));
    } else if (!lo_fin && !up_fin) {
      out += fmt::format(" FR BND  {}\n", n);
    } else {
      if (!lo_fin) {
        out += fmt::format(" MI BND  {}\n", n);
      } else if (v.lower != 0.0) {
        out += fmt::format(" LO BND  {}  {}\n", n, num(v.lower));
      }
      if (up_fin) out += fmt::format(" UP BND  {}  {}\n", n, num(v.upper));
    }
  }
  out += "ENDATA\n";
  return out;
}

void export_mps(const Model& model, const std::filesystem::path& path) {
  const std::string text = to_mps(model);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw Error("write to '" + path.string() + "' failed");
}

}  // namespace cefopt::milp
