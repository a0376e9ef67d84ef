#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cefopt/milp/pwl.hpp"
#include "cefopt/milp/solve.hpp"

namespace cefopt::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kInputError = 2,
  kNumericalFailure = 3,
  kInfeasible = 4,
};

struct NetConfig {
  std::vector<int> hidden{16, 16};
  double sparsity = 0.5;  // hidden-to-hidden and output layers; the input layer stays dense
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 2e-3;
  double final_lr_fraction = 0.01;
};

struct StorageNetConfig {
  int width = 50;
  double sparsity = 0.5;
  int samples = 4000;
  int epochs = 100;
};

/// Effective settings of one run: config file values with flag overrides applied.
struct RunConfig {
  std::string case_path;
  std::optional<std::uint64_t> seed;
  int scenarios = 2000;
  double test_fraction = 0.2;
  std::uint64_t split_seed = 7;
  double load_lo = 0.7, load_hi = 1.3;
  double cost_spread = 0.5;
  NetConfig net;
  StorageNetConfig storage;
  std::vector<milp::TariffBlock> tariff{{40.0, 10.0}, {60.0, 10.0}, {80.0, 20.0}, {100.0, 20.0}};
  double gap = 1e-4;
  long nodes = 1000000;
  double time_limit = 1e30;
  std::filesystem::path out = "runs";
};

/// Reads a JSON config; unknown keys are an input error.
RunConfig load_config(const std::filesystem::path& path);
std::string config_json(const RunConfig& cfg);
/// SHA-256 of the canonical JSON form without the output directory; the first 16 hex digits.
std::string config_hash(const RunConfig& cfg);

milp::BbOptions solver_options(const RunConfig& cfg);
milp::BlockedTariff tariff(const RunConfig& cfg, double dt);

/// "40:10,60:10" -> price:cap blocks.
std::vector<milp::TariffBlock> parse_tariff(const std::string& text);

/// What every artifact records about the run that produced it.
struct Provenance {
  std::string tool_version;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string line() const;  // "cefopt <version> config <hash> seed <n>"
};

/// Adds a "run" object to a JSON artifact.
void stamp_json(const std::filesystem::path& path, const Provenance& p);
/// Prepends a "# ..." provenance line to a CSV artifact.
void stamp_csv(const std::filesystem::path& path, const Provenance& p);
/// Same with an MPS comment line ("* ...").
void stamp_mps(const std::filesystem::path& path, const Provenance& p);
/// Inserts a <desc> element right after the opening <svg> tag.
std::string stamp_svg(const std::string& svg, const Provenance& p);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace cefopt::cli
