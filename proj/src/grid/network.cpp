#include "cefopt/grid/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <json.hpp>
#include <queue>
#include <set>
#include <sstream>

#include "cefopt/error.hpp"
#include "cefopt/util/hash.hpp"

namespace cefopt::grid {

using nlohmann::json;

namespace {

class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) fail("", "expected an object");
  }

  double num(const char* key) const {
    const json& v = at(key);
    if (!v.is_number()) fail(key, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) fail(key, "expected a finite number");
    return d;
  }
  double num(const char* key, double fallback) const { return has(key) ? num(key) : fallback; }

  int integer(const char* key) const {
    const json& v = at(key);
    if (!v.is_number_integer()) fail(key, "expected an integer");
    return v.get<int>();
  }

  std::string str(const char* key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_string()) fail(key, "expected a string");
    return v.get<std::string>();
  }

  std::vector<double> numbers(const char* key) const {
    const json& v = at(key);
    if (!v.is_array()) fail(key, "expected an array of numbers");
    std::vector<double> out;
    for (const json& e : v) {
      if (!e.is_number()) fail(key, "expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  Reader sub(const char* key) const { return Reader(at(key), field(key)); }

  bool has(const char* key) const { return obj_.contains(key); }

  void only(std::initializer_list<const char*> keys) const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; })) {
        fail(it.key().c_str(), "unknown field");
      }
    }
  }

  [[noreturn]] void fail(const char* key, const std::string& what) const {
    throw ParseError(field(key) + ": " + what);
  }

 private:
  std::string field(const char* key) const {
    if (key == nullptr || *key == '\0') return path_;
    return path_.empty() ? std::string(key) : path_ + "." + key;
  }
  const json& at(const char* key) const {
    auto it = obj_.find(key);
    if (it == obj_.end()) fail(key, "missing required field");
    return *it;
  }

  const json& obj_;
  std::string path_;
};

const json& array_field(const json& root, const char* key) {
  auto it = root.find(key);
  if (it == root.end()) throw ParseError(std::string(key) + ": missing required field");
  if (!it->is_array()) throw ParseError(std::string(key) + ": expected an array");
  return *it;
}

std::string item(const char* key, std::size_t i) {
  return std::string(key) + "[" + std::to_string(i) + "]";
}

}  // namespace

double Load::q_ratio() const {
  return std::sqrt(std::max(0.0, 1.0 - power_factor * power_factor)) / power_factor;
}

std::vector<std::size_t> NetworkCase::load_buses() const {
  std::set<std::size_t> s;
  for (const Load& l : loads) s.insert(l.bus);
  return {s.begin(), s.end()};
}

double NetworkCase::max_gci() const {
  double m = 0.0;
  for (const Generator& g : generators) m = std::max(m, g.gci);
  return m;
}

void NetworkCase::validate() const {
  auto bad = [](const std::string& msg) { throw ValidationError(msg); };
  if (buses.empty()) bad("case has no buses");
  if (horizon < 1) bad("horizon must be at least 1");
  if (!(dt > 0.0)) bad("dt must be positive");
  if (!(base_mva > 0.0)) bad("base_mva must be positive");
  std::set<int> ids;
  for (const Bus& b : buses) {
    if (!ids.insert(b.id).second) bad("duplicate bus id " + std::to_string(b.id));
    if (b.v_min > b.v_max) bad("v_min <= v_max violated at bus " + std::to_string(b.id));
    if (!(b.v_min > 0.0)) bad("v_min must be positive at bus " + std::to_string(b.id));
  }
  const std::size_t n = buses.size();
  auto check_bus = [&](std::size_t bus, const std::string& who) {
    if (bus >= n) bad(who + " references an unknown bus");
  };
  for (std::size_t k = 0; k < branches.size(); ++k) {
    const Branch& br = branches[k];
    const std::string who = "branch " + std::to_string(k);
    check_bus(br.from, who);
    check_bus(br.to, who);
    if (br.from == br.to) bad(who + " is a self-loop");
    if (br.g == 0.0 && br.b == 0.0) bad(who + " has zero admittance");
    if (!(br.flow_limit > 0.0)) bad(who + " needs a positive flow_limit");
  }
  for (const Generator& g : generators) {
    check_bus(g.bus, "generator " + g.name);
    if (g.p_min > g.p_max) bad("p_min <= p_max violated for generator " + g.name);
    if (g.q_min > g.q_max) bad("q_min <= q_max violated for generator " + g.name);
    if (g.ramp_up < 0.0 || g.ramp_down < 0.0) bad("negative ramp limit for generator " + g.name);
    if (g.gci < 0.0) bad("negative gci for generator " + g.name);
    if (g.cost_a < 0.0) bad("non-convex cost for generator " + g.name);
  }
  for (const Renewable& r : renewables) {
    check_bus(r.bus, "renewable " + r.name);
    if (r.capacity < 0.0) bad("negative capacity for renewable " + r.name);
    if (r.profile.size() != horizon) bad("profile length differs from horizon for renewable " + r.name);
    for (double f : r.profile) {
      if (f < 0.0 || f > 1.0) bad("profile fraction outside [0,1] for renewable " + r.name);
    }
  }
  for (const Load& l : loads) {
    check_bus(l.bus, "load " + l.name);
    if (l.profile.size() != horizon) bad("profile length differs from horizon for load " + l.name);
    for (double p : l.profile) {
      if (p < 0.0) bad("negative demand for load " + l.name);
    }
    if (!(l.alpha > 0.0) || !(l.beta > 0.0)) bad("utility coefficients must be positive for load " + l.name);
    if (!(l.power_factor > 0.0) || l.power_factor > 1.0) bad("power factor out of (0,1] for load " + l.name);
  }
  for (const Storage& s : storages) {
    check_bus(s.bus, "storage " + s.name);
    if (!(s.eta_ch > 0.0) || s.eta_ch > 1.0 || !(s.eta_dis > 0.0) || s.eta_dis > 1.0) {
      bad("efficiency out of (0,1] for storage " + s.name);
    }
    if (!(s.psi_min <= s.psi0 && s.psi0 <= s.psi_max)) {
      bad("psi_min <= psi0 <= psi_max violated for storage " + s.name);
    }
    if (s.psi_min < 0.0) bad("negative psi_min for storage " + s.name);
    if (s.p_cha_max < 0.0 || s.p_dis_max < 0.0) bad("negative power rating for storage " + s.name);
    if (s.leakage < 0.0 || s.leakage >= 1.0) bad("leakage out of [0,1) for storage " + s.name);
    if (s.e0 < 0.0) bad("negative initial intensity for storage " + s.name);
    if (s.degradation_price < 0.0) bad("negative degradation price for storage " + s.name);
  }

  // Connectivity over the branch graph.
  std::vector<std::vector<std::size_t>> adj(n);
  for (const Branch& br : branches) {
    adj[br.from].push_back(br.to);
    adj[br.to].push_back(br.from);
  }
  std::vector<char> seen(n, 0);
  std::queue<std::size_t> q;
  q.push(0);
  seen[0] = 1;
  while (!q.empty()) {
    const std::size_t u = q.front();
    q.pop();
    for (std::size_t v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        q.push(v);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!seen[i]) bad("disconnected bus " + std::to_string(buses[i].id));
  }
}

NetworkCase parse_case(const std::string& json_text, const std::string& origin) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(origin + ": malformed JSON: " + e.what());
  }
  const Reader top(root, "");
  top.only({"name", "base_mva", "buses", "branches", "generators", "renewables", "loads",
            "storages", "horizon", "dt"});

  NetworkCase c;
  c.name = top.str("name", "case");
  c.base_mva = top.num("base_mva", 100.0);
  const int horizon = top.integer("horizon");
  if (horizon < 1) top.fail("horizon", "must be at least 1");
  c.horizon = static_cast<std::size_t>(horizon);
  c.dt = top.num("dt");

  std::map<int, std::size_t> index;
  const json& buses = array_field(root, "buses");
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const Reader r(buses[i], item("buses", i));
    r.only({"id", "v_min", "v_max"});
    Bus b{r.integer("id"), r.num("v_min", 0.95), r.num("v_max", 1.05)};
    if (index.contains(b.id)) throw ValidationError("duplicate bus id " + std::to_string(b.id));
    index[b.id] = i;
    c.buses.push_back(b);
  }
  auto bus_of = [&](const Reader& r, const char* key) {
    const int id = r.integer(key);
    auto it = index.find(id);
    if (it == index.end()) {
      throw ValidationError(r.has(key) ? "unknown bus id " + std::to_string(id) : "missing bus");
    }
    return it->second;
  };

  const json& branches = array_field(root, "branches");
  for (std::size_t k = 0; k < branches.size(); ++k) {
    const Reader r(branches[k], item("branches", k));
    r.only({"from", "to", "g", "b", "flow_limit"});
    c.branches.push_back({bus_of(r, "from"), bus_of(r, "to"), r.num("g", 0.0), r.num("b"),
                          r.num("flow_limit")});
  }

  const json& gens = array_field(root, "generators");
  for (std::size_t k = 0; k < gens.size(); ++k) {
    const Reader r(gens[k], item("generators", k));
    r.only({"name", "bus", "p_min", "p_max", "q_min", "q_max", "ramp_up", "ramp_down", "cost",
            "reserve_cost", "gci", "p_init"});
    Generator g;
    g.name = r.str("name", "G" + std::to_string(k));
    g.bus = bus_of(r, "bus");
    g.p_min = r.num("p_min");
    g.p_max = r.num("p_max");
    g.q_min = r.num("q_min", -g.p_max);
    g.q_max = r.num("q_max", g.p_max);
    g.ramp_up = r.num("ramp_up");
    g.ramp_down = r.num("ramp_down");
    const Reader cost = r.sub("cost");
    cost.only({"a", "b", "c"});
    g.cost_a = cost.num("a");
    g.cost_b = cost.num("b");
    g.cost_c = cost.num("c", 0.0);
    g.reserve_cost = r.num("reserve_cost");
    g.gci = r.num("gci");
    g.p_init = r.num("p_init", -1.0);
    c.generators.push_back(std::move(g));
  }

  const json& rens = array_field(root, "renewables");
  for (std::size_t k = 0; k < rens.size(); ++k) {
    const Reader r(rens[k], item("renewables", k));
    r.only({"name", "bus", "kind", "capacity", "profile"});
    Renewable w;
    w.name = r.str("name", "R" + std::to_string(k));
    w.bus = bus_of(r, "bus");
    const std::string kind = r.str("kind", "");
    if (kind == "PV") {
      w.kind = RenewableKind::PV;
    } else if (kind == "WP") {
      w.kind = RenewableKind::WP;
    } else {
      r.fail("kind", "expected \"PV\" or \"WP\"");
    }
    w.capacity = r.num("capacity");
    w.profile = r.numbers("profile");
    c.renewables.push_back(std::move(w));
  }

  const json& loads = array_field(root, "loads");
  for (std::size_t k = 0; k < loads.size(); ++k) {
    const Reader r(loads[k], item("loads", k));
    r.only({"name", "bus", "profile", "alpha", "beta", "power_factor"});
    Load l;
    l.name = r.str("name", "L" + std::to_string(k));
    l.bus = bus_of(r, "bus");
    l.profile = r.numbers("profile");
    l.alpha = r.num("alpha");
    l.beta = r.num("beta");
    l.power_factor = r.num("power_factor", 1.0);
    c.loads.push_back(std::move(l));
  }

  const json& stores = array_field(root, "storages");
  for (std::size_t k = 0; k < stores.size(); ++k) {
    const Reader r(stores[k], item("storages", k));
    r.only({"name", "bus", "psi_min", "psi_max", "p_cha_max", "p_dis_max", "eta_ch", "eta_dis",
            "degradation_price", "leakage", "psi0", "e0"});
    Storage s;
    s.name = r.str("name", "ES" + std::to_string(k));
    s.bus = bus_of(r, "bus");
    s.psi_min = r.num("psi_min");
    s.psi_max = r.num("psi_max");
    s.p_cha_max = r.num("p_cha_max");
    s.p_dis_max = r.num("p_dis_max");
    s.eta_ch = r.num("eta_ch");
    s.eta_dis = r.num("eta_dis");
    s.degradation_price = r.num("degradation_price");
    s.leakage = r.num("leakage", 0.0);
    s.psi0 = r.num("psi0");
    s.e0 = r.num("e0");
    c.storages.push_back(std::move(s));
  }

  c.validate();
  return c;
}

NetworkCase load_case(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError(path.string() + ": cannot open case file");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_case(ss.str(), path.string());
}

std::string case_to_json(const NetworkCase& c) {
  json root;
  root["name"] = c.name;
  root["base_mva"] = c.base_mva;
  root["horizon"] = c.horizon;
  root["dt"] = c.dt;
  root["buses"] = json::array();
  for (const Bus& b : c.buses) root["buses"].push_back({{"id", b.id}, {"v_min", b.v_min}, {"v_max", b.v_max}});
  auto id = [&](std::size_t bus) { return c.buses[bus].id; };
  root["branches"] = json::array();
  for (const Branch& br : c.branches) {
    root["branches"].push_back({{"from", id(br.from)}, {"to", id(br.to)}, {"g", br.g}, {"b", br.b},
                                {"flow_limit", br.flow_limit}});
  }
  root["generators"] = json::array();
  for (const Generator& g : c.generators) {
    root["generators"].push_back({{"name", g.name}, {"bus", id(g.bus)}, {"p_min", g.p_min},
                                  {"p_max", g.p_max}, {"q_min", g.q_min}, {"q_max", g.q_max},
                                  {"ramp_up", g.ramp_up}, {"ramp_down", g.ramp_down},
                                  {"cost", {{"a", g.cost_a}, {"b", g.cost_b}, {"c", g.cost_c}}},
                                  {"reserve_cost", g.reserve_cost}, {"gci", g.gci},
                                  {"p_init", g.p_init}});
  }
  root["renewables"] = json::array();
  for (const Renewable& r : c.renewables) {
    root["renewables"].push_back({{"name", r.name}, {"bus", id(r.bus)},
                                  {"kind", r.kind == RenewableKind::PV ? "PV" : "WP"},
                                  {"capacity", r.capacity}, {"profile", r.profile}});
  }
  root["loads"] = json::array();
  for (const Load& l : c.loads) {
    root["loads"].push_back({{"name", l.name}, {"bus", id(l.bus)}, {"profile", l.profile},
                             {"alpha", l.alpha}, {"beta", l.beta}, {"power_factor", l.power_factor}});
  }
  root["storages"] = json::array();
  for (const Storage& s : c.storages) {
    root["storages"].push_back({{"name", s.name}, {"bus", id(s.bus)}, {"psi_min", s.psi_min},
                                {"psi_max", s.psi_max}, {"p_cha_max", s.p_cha_max},
                                {"p_dis_max", s.p_dis_max}, {"eta_ch", s.eta_ch},
                                {"eta_dis", s.eta_dis}, {"degradation_price", s.degradation_price},
                                {"leakage", s.leakage}, {"psi0", s.psi0}, {"e0", s.e0}});
  }
  return root.dump();
}

std::string case_hash(const NetworkCase& c) { return util::sha256_hex(case_to_json(c)); }

}  // namespace cefopt::grid
