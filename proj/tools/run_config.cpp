#include "run_config.hpp"

#include <fmt/format.h>

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "cefopt/error.hpp"
#include "cefopt/util/hash.hpp"

namespace cefopt::cli {

using json = nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ParseError(fmt::format("config {}: unknown key '{}'", where, key));
  }
}

template <class T>
void read(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError(fmt::format("cannot open {}", path.string()));
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

RunConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("config {}: {}", path.string(), e.what()));
  }
  RunConfig cfg;
  try {
    reject_unknown(j,
                   {"case", "seed", "scenarios", "test_fraction", "split_seed", "load_lo", "load_hi", "cost_spread",
                    "net", "storage_net", "tariff", "solver", "out"},
                   path.string());
    if (j.contains("case")) {
      // Relative case paths are taken from the config file's directory.
      std::filesystem::path p = j.at("case").get<std::string>();
      cfg.case_path = p.is_relative() ? (path.parent_path() / p).lexically_normal().string() : p.string();
    }
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    read(j, "scenarios", cfg.scenarios);
    read(j, "test_fraction", cfg.test_fraction);
    read(j, "split_seed", cfg.split_seed);
    read(j, "load_lo", cfg.load_lo);
    read(j, "load_hi", cfg.load_hi);
    read(j, "cost_spread", cfg.cost_spread);
    if (j.contains("net")) {
      const json& n = j.at("net");
      reject_unknown(n, {"hidden", "sparsity", "epochs", "batch_size", "learning_rate", "final_lr_fraction"}, "net");
      read(n, "hidden", cfg.net.hidden);
      read(n, "sparsity", cfg.net.sparsity);
      read(n, "epochs", cfg.net.epochs);
      read(n, "batch_size", cfg.net.batch_size);
      read(n, "learning_rate", cfg.net.learning_rate);
      read(n, "final_lr_fraction", cfg.net.final_lr_fraction);
    }
    if (j.contains("storage_net")) {
      const json& s = j.at("storage_net");
      reject_unknown(s, {"width", "sparsity", "samples", "epochs"}, "storage_net");
      read(s, "width", cfg.storage.width);
      read(s, "sparsity", cfg.storage.sparsity);
      read(s, "samples", cfg.storage.samples);
      read(s, "epochs", cfg.storage.epochs);
    }
    if (j.contains("tariff")) {
      cfg.tariff.clear();
      for (const json& b : j.at("tariff")) cfg.tariff.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
    }
    if (j.contains("solver")) {
      const json& s = j.at("solver");
      reject_unknown(s, {"gap", "nodes", "time_limit"}, "solver");
      read(s, "gap", cfg.gap);
      read(s, "nodes", cfg.nodes);
      read(s, "time_limit", cfg.time_limit);
    }
    if (j.contains("out")) cfg.out = j.at("out").get<std::string>();
  } catch (const json::exception& e) {
    throw ParseError(fmt::format("config {}: {}", path.string(), e.what()));
  }
  return cfg;
}

std::string config_json(const RunConfig& cfg) {
  json tariff = json::array();
  for (const milp::TariffBlock& b : cfg.tariff) tariff.push_back({b.price, b.cap});
  json j{{"case", cfg.case_path},
         {"scenarios", cfg.scenarios},
         {"test_fraction", cfg.test_fraction},
         {"split_seed", cfg.split_seed},
         {"load_lo", cfg.load_lo},
         {"load_hi", cfg.load_hi},
         {"cost_spread", cfg.cost_spread},
         {"net",
          {{"hidden", cfg.net.hidden},
           {"sparsity", cfg.net.sparsity},
           {"epochs", cfg.net.epochs},
           {"batch_size", cfg.net.batch_size},
           {"learning_rate", cfg.net.learning_rate},
           {"final_lr_fraction", cfg.net.final_lr_fraction}}},
         {"storage_net",
          {{"width", cfg.storage.width},
           {"sparsity", cfg.storage.sparsity},
           {"samples", cfg.storage.samples},
           {"epochs", cfg.storage.epochs}}},
         {"tariff", tariff},
         {"solver", {{"gap", cfg.gap}, {"nodes", cfg.nodes}, {"time_limit", cfg.time_limit}}},
         {"out", cfg.out.string()}};
  if (cfg.seed) j["seed"] = *cfg.seed;
  return j.dump();
}

std::string config_hash(const RunConfig& cfg) {
  // The output location does not change any artifact's content.
  RunConfig key = cfg;
  key.out.clear();
  return util::sha256_hex(config_json(key)).substr(0, 16);
}

milp::BbOptions solver_options(const RunConfig& cfg) {
  milp::BbOptions o;
  o.rel_gap = cfg.gap;
  o.node_limit = cfg.nodes;
  o.time_limit = cfg.time_limit;
  return o;
}

milp::BlockedTariff tariff(const RunConfig& cfg, double dt) {
  milp::BlockedTariff t{cfg.tariff, dt};
  t.validate();
  return t;
}

std::vector<milp::TariffBlock> parse_tariff(const std::string& text) {
  std::vector<milp::TariffBlock> blocks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ParseError(fmt::format("tariff block '{}' is not price:cap", item));
    try {
      std::size_t used = 0;
      const double price = std::stod(item.substr(0, colon), &used);
      const std::string cap_text = item.substr(colon + 1);
      std::size_t used_cap = 0;
      const double cap = std::stod(cap_text, &used_cap);
      if (used != colon || used_cap != cap_text.size()) throw std::invalid_argument(item);
      blocks.push_back({price, cap});
    } catch (const std::logic_error&) {
      throw ParseError(fmt::format("tariff block '{}' is not price:cap", item));
    }
  }
  if (blocks.empty()) throw ParseError("empty tariff");
  return blocks;
}

std::string Provenance::line() const {
  return fmt::format("cefopt {} config {} seed {}", tool_version, config_hash, seed);
}

void stamp_json(const std::filesystem::path& path, const Provenance& p) {
  json j = json::parse(read_file(path));
  j["run"] = {{"tool_version", p.tool_version}, {"config_hash", p.config_hash}, {"seed", p.seed}};
  write_text(path, j.dump(1) + "\n");
}

void stamp_csv(const std::filesystem::path& path, const Provenance& p) {
  write_text(path, "# " + p.line() + "\n" + read_file(path));
}

void stamp_mps(const std::filesystem::path& path, const Provenance& p) {
  write_text(path, "* " + p.line() + "\n" + read_file(path));
}

std::string stamp_svg(const std::string& svg, const Provenance& p) {
  const auto open = svg.find("<svg");
  const auto end = open == std::string::npos ? open : svg.find('>', open);
  if (end == std::string::npos) return svg;
  return svg.substr(0, end + 1) + "<desc>" + p.line() + "</desc>" + svg.substr(end + 1);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(fmt::format("cannot write {}", path.string()));
  f << text;
}

}  // namespace cefopt::cli
