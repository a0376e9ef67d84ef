#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace cefopt::grid {

struct Bus {
  int id = 0;
  double v_min = 0.95;  // p.u.
  double v_max = 1.05;
};

/// Bus references in branches, units and storages are positions in
/// NetworkCase::buses (file bus ids are resolved at load time).
struct Branch {
  std::size_t from = 0;
  std::size_t to = 0;
  double g = 0.0;           // conductance, p.u.
  double b = 0.0;           // susceptance, p.u. (negative for inductive lines)
  double flow_limit = 0.0;  // MW
};

struct Generator {
  std::string name;
  std::size_t bus = 0;
  double p_min = 0.0, p_max = 0.0;         // MW
  double q_min = 0.0, q_max = 0.0;         // MVar
  double ramp_up = 0.0, ramp_down = 0.0;   // MW per period
  double cost_a = 0.0, cost_b = 0.0, cost_c = 0.0;  // $/MW^2h, $/MWh, $/h
  double reserve_cost = 0.0;               // $/MW per period
  double gci = 0.0;                        // tCO2/MWh
  double p_init = -1.0;                    // MW before the horizon; < 0 means unconstrained
};

enum class RenewableKind { PV, WP };

struct Renewable {
  std::string name;
  std::size_t bus = 0;
  RenewableKind kind = RenewableKind::PV;
  double capacity = 0.0;        // MW
  std::vector<double> profile;  // fraction of capacity per period
  double available(std::size_t t) const { return capacity * profile[t]; }
};

struct Load {
  std::string name;
  std::size_t bus = 0;
  std::vector<double> profile;  // nominal MW per period
  double alpha = 0.0;           // $/MWh
  double beta = 0.0;            // $/MW^2h
  double power_factor = 1.0;
  /// Reactive-to-active power ratio tan(acos(pf)).
  double q_ratio() const;
};

struct Storage {
  std::string name;
  std::size_t bus = 0;
  double psi_min = 0.0, psi_max = 0.0;         // MWh
  double p_cha_max = 0.0, p_dis_max = 0.0;     // MW
  double eta_ch = 1.0, eta_dis = 1.0;
  double degradation_price = 0.0;              // $/MWh
  double leakage = 0.0;                        // fraction per period
  double psi0 = 0.0;                           // MWh
  double e0 = 0.0;                             // tCO2/MWh
};

struct NetworkCase {
  std::string name;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::vector<Renewable> renewables;
  std::vector<Load> loads;
  std::vector<Storage> storages;
  std::size_t horizon = 1;
  double dt = 1.0;         // h
  double base_mva = 100.0;

  std::size_t num_buses() const { return buses.size(); }
  /// Buses carrying at least one load, ascending.
  std::vector<std::size_t> load_buses() const;
  double max_gci() const;

  /// Throws ValidationError naming the first broken rule.
  void validate() const;
};

/// Parses and validates a JSON case file (schema in docs/case-schema.md).
NetworkCase load_case(const std::filesystem::path& path);
NetworkCase parse_case(const std::string& json_text, const std::string& origin = "<memory>");

/// Canonical JSON serialization (used for content hashes).
std::string case_to_json(const NetworkCase& c);
/// SHA-256 of case_to_json, hex encoded.
std::string case_hash(const NetworkCase& c);

}  // namespace cefopt::grid
