#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cefopt/error.hpp"
#include "oracles/xml_check.hpp"
#include "run_config.hpp"

using namespace cefopt;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& text) {
  const fs::path p = fs::temp_directory_path() / name;
  std::ofstream(p) << text;
  return p;
}

}  // namespace

TEST_CASE("config: file values, defaults and relative case path") {
  const fs::path p = write_temp("cefopt_cfg.json",
                                R"({"case": "cases/case6.json", "seed": 9, "net": {"hidden": [8, 4]},
                                    "tariff": [[10, 1], [20, 2]], "solver": {"gap": 0.001}})");
  const cli::RunConfig cfg = cli::load_config(p);
  CHECK(cfg.case_path == (fs::temp_directory_path() / "cases/case6.json").lexically_normal().string());
  CHECK(cfg.seed == 9u);
  CHECK(cfg.net.hidden == std::vector<int>{8, 4});
  CHECK(cfg.net.epochs == cli::NetConfig{}.epochs);
  REQUIRE(cfg.tariff.size() == 2);
  CHECK(cfg.tariff[1].price == 20.0);
  CHECK(cfg.gap == 0.001);
  fs::remove(p);
}

TEST_CASE("config: unknown keys and malformed files are input errors") {
  const fs::path a = write_temp("cefopt_cfg_a.json", R"({"sed": 1})");
  const fs::path b = write_temp("cefopt_cfg_b.json", R"({"net": {"width": 4}})");
  const fs::path c = write_temp("cefopt_cfg_c.json", R"({"seed": )");
  CHECK_THROWS_AS(cli::load_config(a), ParseError);
  CHECK_THROWS_AS(cli::load_config(b), ParseError);
  CHECK_THROWS_AS(cli::load_config(c), ParseError);
  CHECK_THROWS_AS(cli::load_config(fs::temp_directory_path() / "cefopt_no_such.json"), ParseError);
  for (const auto& p : {a, b, c}) fs::remove(p);
}

TEST_CASE("config hash: content sensitive, output directory ignored") {
  cli::RunConfig a;
  a.seed = 1;
  cli::RunConfig b = a;
  b.out = "elsewhere";
  CHECK(cli::config_hash(a) == cli::config_hash(b));
  b.seed = 2;
  CHECK(cli::config_hash(a) != cli::config_hash(b));
  CHECK(cli::config_hash(a).size() == 16);
}

TEST_CASE("tariff flag parsing") {
  const auto t = cli::parse_tariff("40:10,60:10.5");
  REQUIRE(t.size() == 2);
  CHECK(t[1].price == 60.0);
  CHECK(t[1].cap == 10.5);
  CHECK_THROWS_AS(cli::parse_tariff("40"), ParseError);
  CHECK_THROWS_AS(cli::parse_tariff("40:x"), ParseError);
  CHECK_THROWS_AS(cli::parse_tariff(""), ParseError);
}

TEST_CASE("provenance stamps") {
  const cli::Provenance p{"1.2.3", "abcd", 5};
  CHECK(p.line() == "cefopt 1.2.3 config abcd seed 5");
  const std::string svg = cli::stamp_svg(R"(<svg xmlns="http://www.w3.org/2000/svg"><g/></svg>)", p);
  CHECK(oracle::xml_well_formed(svg));
  CHECK(svg.find("<desc>cefopt 1.2.3 config abcd seed 5</desc>") != std::string::npos);

  const fs::path csv = write_temp("cefopt_stamp.csv", "a,b\n1,2\n");
  cli::stamp_csv(csv, p);
  std::ifstream f(csv);
  std::string first, second;
  std::getline(f, first);
  std::getline(f, second);
  CHECK(first == "# cefopt 1.2.3 config abcd seed 5");
  CHECK(second == "a,b");
  fs::remove(csv);
}
