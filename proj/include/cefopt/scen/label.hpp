#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cefopt/caem/schedule.hpp"
#include "cefopt/grid/acpf.hpp"
#include "cefopt/milp/solve.hpp"
#include "cefopt/scen/dataset.hpp"
#include "cefopt/scen/scenario.hpp"

namespace cefopt::scen {

struct LabelResult {
  bool ok = false;
  std::string skip_reason;
  std::vector<Sample> samples;  // one per period
  grid::DispatchState state;
};

/// Solves the carbon-blind EM for the scenario and labels every period with
/// the exact load emission rates of the resulting dispatch.
LabelResult label_scenario(const grid::NetworkCase& c, const Scenario& s,
                           const caem::EmOptions& em = {}, const milp::BbOptions& solver = {});

struct GenerateReport {
  long labeled = 0;
  long skipped = 0;
  std::vector<std::string> skip_log;  // "scenario <id>: <reason>"
};

/// Samples n scenarios, labels them and returns the physical dataset.
Dataset generate_dataset(const grid::NetworkCase& c, int n, std::uint64_t seed,
                         GenerateReport* report = nullptr, const SamplingOptions& sampling = {},
                         const caem::EmOptions& em = {});

enum class StorageMode { Discharge, Charge };

/// Training tuples of one storage: x = (psi_now, psi_prev, p, e_prev, e_node),
/// y = e_now from the exact storage carbon step. Intensities are drawn from
/// [0, e_max]; energies stay within the storage limits.
Dataset storage_dataset(const grid::NetworkCase& c, std::size_t storage, StorageMode mode, int n,
                        std::uint64_t seed, double e_max);

}  // namespace cefopt::scen
