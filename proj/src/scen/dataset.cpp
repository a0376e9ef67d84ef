#include "cefopt/scen/dataset.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>
#include <set>
#include <sstream>

#include "cefopt/error.hpp"
#include "cefopt/util/hash.hpp"

namespace cefopt::scen {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using json = nlohmann::json;

namespace {

MatrixXd columns(const std::vector<Sample>& samples, bool x) {
  const std::size_t dim = samples.empty() ? 0 : (x ? samples[0].x.size() : samples[0].y.size());
  MatrixXd m(static_cast<Index>(dim), static_cast<Index>(samples.size()));
  for (std::size_t j = 0; j < samples.size(); ++j) {
    const std::vector<double>& v = x ? samples[j].x : samples[j].y;
    if (v.size() != dim) throw ContractViolation("dataset rows have different widths");
    for (std::size_t i = 0; i < dim; ++i) m(static_cast<Index>(i), static_cast<Index>(j)) = v[i];
  }
  return m;
}

void ensure_scaling(Dataset& d) {
  if (d.scaling.x_min.size() == 0) d.scaling = compute_scaling(d.samples);
}

}  // namespace

MatrixXd Dataset::x_matrix() const { return columns(samples, true); }
MatrixXd Dataset::y_matrix() const { return columns(samples, false); }

snn::Scaling compute_scaling(const std::vector<Sample>& samples) {
  if (samples.empty()) throw ContractViolation("cannot scale an empty dataset");
  auto scale = [](const MatrixXd& m, VectorXd& lo, VectorXd& range) {
    lo = m.rowwise().minCoeff();
    range = m.rowwise().maxCoeff() - lo;
    for (Index i = 0; i < range.size(); ++i) {
      if (!(range(i) > 0.0)) range(i) = 1.0;
    }
  };
  snn::Scaling s;
  scale(columns(samples, true), s.x_min, s.x_range);
  scale(columns(samples, false), s.y_min, s.y_range);
  return s;
}

Dataset normalize(const Dataset& d) {
  Dataset out = d;
  ensure_scaling(out);
  if (d.normalized) return out;
  for (Sample& s : out.samples) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      s.x[i] = (s.x[i] - out.scaling.x_min(static_cast<Index>(i))) / out.scaling.x_range(static_cast<Index>(i));
    }
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      s.y[i] = (s.y[i] - out.scaling.y_min(static_cast<Index>(i))) / out.scaling.y_range(static_cast<Index>(i));
    }
  }
  out.normalized = true;
  return out;
}

Dataset denormalize(const Dataset& d) {
  Dataset out = d;
  if (!d.normalized) return out;
  for (Sample& s : out.samples) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      s.x[i] = out.scaling.x_min(static_cast<Index>(i)) + s.x[i] * out.scaling.x_range(static_cast<Index>(i));
    }
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      s.y[i] = out.scaling.y_min(static_cast<Index>(i)) + s.y[i] * out.scaling.y_range(static_cast<Index>(i));
    }
  }
  out.normalized = false;
  return out;
}

Split split_by_scenario(const Dataset& d, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ContractViolation("test fraction must lie in (0, 1)");
  std::set<int> ids;
  for (const Sample& s : d.samples) ids.insert(s.scenario);
  std::vector<int> order(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(order.size())));
  const std::set<int> test_ids(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
  Split sp{d, d};
  sp.train.samples.clear();
  sp.test.samples.clear();
  for (const Sample& s : d.samples) (test_ids.count(s.scenario) ? sp.test : sp.train).samples.push_back(s);
  return sp;
}

std::string to_csv(const Dataset& d) {
  std::string out = "scenario,period";
  for (std::size_t i = 0; i < d.x_dim(); ++i) out += fmt::format(",x_{}", i);
  for (std::size_t i = 0; i < d.y_dim(); ++i) out += fmt::format(",y_{}", i);
  out += '\n';
  for (const Sample& s : d.samples) {
    out += fmt::format("{},{}", s.scenario, s.period);
    for (double v : s.x) out += fmt::format(",{:.17g}", v);
    for (double v : s.y) out += fmt::format(",{:.17g}", v);
    out += '\n';
  }
  return out;
}

std::string dataset_hash(const Dataset& d) { return util::sha256_hex(to_csv(d)); }

namespace {

std::vector<double> to_vec(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

VectorXd from_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

std::filesystem::path sidecar(const std::filesystem::path& csv) {
  return std::filesystem::path(csv.string() + ".meta.json");
}

double parse_number(std::string_view field, long line) {
  double v = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw ParseError(fmt::format("dataset line {}: malformed number '{}'", line, field));
  }
  if (!std::isfinite(v)) throw ParseError(fmt::format("dataset line {}: non-finite entry", line));
  return v;
}

}  // namespace

void write_dataset(const Dataset& d, const std::filesystem::path& csv_path) {
  if (!csv_path.parent_path().empty()) std::filesystem::create_directories(csv_path.parent_path());
  Dataset phys = denormalize(d);
  ensure_scaling(phys);
  const std::string body = to_csv(phys);
  {
    std::ofstream f(csv_path, std::ios::binary);
    if (!f) throw Error(fmt::format("cannot write {}", csv_path.string()));
    f << body;
  }
  const json meta = {{"kind", phys.meta.kind},
                     {"case_hash", phys.meta.case_hash},
                     {"seed", phys.meta.seed},
                     {"scenarios", phys.meta.scenarios},
                     {"skipped", phys.meta.skipped},
                     {"samples", phys.samples.size()},
                     {"x_dim", phys.x_dim()},
                     {"y_dim", phys.y_dim()},
                     {"content_hash", util::sha256_hex(body)},
                     {"scaling",
                      {{"x_min", to_vec(phys.scaling.x_min)},
                       {"x_range", to_vec(phys.scaling.x_range)},
                       {"y_min", to_vec(phys.scaling.y_min)},
                       {"y_range", to_vec(phys.scaling.y_range)}}}};
  std::ofstream f(sidecar(csv_path));
  if (!f) throw Error(fmt::format("cannot write {}", sidecar(csv_path).string()));
  f << meta.dump(1) << '\n';
}

Dataset read_dataset(const std::filesystem::path& csv_path) {
  std::ifstream f(csv_path, std::ios::binary);
  if (!f) throw ParseError(fmt::format("cannot open dataset {}", csv_path.string()));
  std::ifstream mf(sidecar(csv_path));
  if (!mf) throw ParseError(fmt::format("missing dataset sidecar {}", sidecar(csv_path).string()));
  json meta;
  try {
    meta = json::parse(mf);
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("dataset sidecar: {}", e.what()));
  }
  Dataset d;
  std::size_t nx = 0, ny = 0;
  try {
    d.meta.kind = meta.at("kind").get<std::string>();
    d.meta.case_hash = meta.at("case_hash").get<std::string>();
    d.meta.seed = meta.at("seed").get<std::uint64_t>();
    d.meta.scenarios = meta.at("scenarios").get<long>();
    d.meta.skipped = meta.at("skipped").get<long>();
    nx = meta.at("x_dim").get<std::size_t>();
    ny = meta.at("y_dim").get<std::size_t>();
    const json& s = meta.at("scaling");
    d.scaling = {from_vec(s.at("x_min")), from_vec(s.at("x_range")), from_vec(s.at("y_min")),
                 from_vec(s.at("y_range"))};
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("dataset sidecar: {}", e.what()));
  }
  std::string expected = "scenario,period";
  for (std::size_t i = 0; i < nx; ++i) expected += fmt::format(",x_{}", i);
  for (std::size_t i = 0; i < ny; ++i) expected += fmt::format(",y_{}", i);
  std::string line;
  if (!std::getline(f, line) || line != expected) {
    throw ParseError("dataset line 1: header does not match the sidecar dimensions");
  }
  long lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 2 + nx + ny) {
      throw ParseError(fmt::format("dataset line {}: expected {} fields, found {}", lineno, 2 + nx + ny, fields.size()));
    }
    Sample s;
    s.scenario = static_cast<int>(parse_number(fields[0], lineno));
    s.period = static_cast<int>(parse_number(fields[1], lineno));
    for (std::size_t i = 0; i < nx; ++i) s.x.push_back(parse_number(fields[2 + i], lineno));
    for (std::size_t i = 0; i < ny; ++i) s.y.push_back(parse_number(fields[2 + nx + i], lineno));
    d.samples.push_back(std::move(s));
  }
  if (meta.contains("samples") && meta["samples"].get<std::size_t>() != d.samples.size()) {
    throw ParseError(fmt::format("dataset line {}: file truncated ({} of {} samples)", lineno,
                                 d.samples.size(), meta["samples"].get<std::size_t>()));
  }
  return d;
}

}  // namespace cefopt::scen
