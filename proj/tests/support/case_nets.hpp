#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cefopt/caem/schedule.hpp"
#include "cefopt/grid/network.hpp"
#include "cefopt/milp/pwl.hpp"
#include "cefopt/scen/dataset.hpp"
#include "cefopt/scen/label.hpp"
#include "cefopt/snn/net.hpp"

namespace support {

inline cefopt::grid::NetworkCase bundled_case(const std::string& name) {
  return cefopt::grid::load_case(std::filesystem::path(CEFOPT_TEST_DATA) / "data" / "cases" / (name + ".json"));
}

/// 40/60/80/100 $/t blocks of 10, 10, 20 and 20 t/h.
inline cefopt::milp::BlockedTariff reference_tariff(double dt) {
  return {{{40.0, 10.0}, {60.0, 10.0}, {80.0, 20.0}, {100.0, 20.0}}, dt};
}

/// Trains on physical data and attaches scaling and provenance.
inline cefopt::snn::SparseNet fit(const cefopt::scen::Dataset& physical, const std::vector<int>& dims,
                                  const std::vector<double>& sparsity, const cefopt::snn::TrainConfig& cfg) {
  const cefopt::scen::Dataset n = cefopt::scen::normalize(physical);
  cefopt::snn::TrainResult r = cefopt::snn::train_ssgd(n.x_matrix(), n.y_matrix(), dims, sparsity, cfg);
  r.net.scaling = n.scaling;
  r.net.case_hash = physical.meta.case_hash;
  r.net.dataset_hash = cefopt::scen::dataset_hash(physical);
  return std::move(r.net);
}

struct NetSpec {
  std::vector<int> hidden;             // carbon-flow hidden widths
  double sparsity = 0.5;               // hidden-to-hidden and output layers
  int scenarios = 200;
  int epochs = 100;
  int storage_width = 50;
  int storage_samples = 4000;
  int storage_epochs = 100;
};

inline cefopt::snn::TrainConfig train_config(int epochs) {
  cefopt::snn::TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.learning_rate = 2e-3;
  cfg.final_lr_fraction = 0.01;
  return cfg;
}

/// Carbon-flow net plus both storage nets for the first storage of the case.
inline cefopt::caem::CaemNets train_nets(const cefopt::grid::NetworkCase& c, const NetSpec& spec,
                                         const cefopt::scen::Dataset* data = nullptr) {
  using namespace cefopt;
  const scen::Dataset own = data == nullptr ? scen::generate_dataset(c, spec.scenarios, 1) : scen::Dataset{};
  const scen::Dataset& d = data == nullptr ? own : *data;
  std::vector<int> dims{static_cast<int>(d.x_dim())};
  std::vector<double> sparsity{0.0};
  for (int w : spec.hidden) {
    dims.push_back(w);
    if (dims.size() > 2) sparsity.push_back(spec.sparsity);
  }
  dims.push_back(static_cast<int>(d.y_dim()));
  sparsity.push_back(spec.sparsity);
  caem::CaemNets nets{fit(d, dims, sparsity, train_config(spec.epochs)), {}, {}};
  if (!c.storages.empty()) {
    const double e_max = 1.5 * c.max_gci();
    const std::vector<int> es_dims{5, spec.storage_width, 1};
    const std::vector<double> es_sparsity{0.0, spec.sparsity};
    const auto dd = scen::storage_dataset(c, 0, scen::StorageMode::Discharge, spec.storage_samples, 3, e_max);
    const auto dc = scen::storage_dataset(c, 0, scen::StorageMode::Charge, spec.storage_samples, 4, e_max);
    nets.es_dis = fit(dd, es_dims, es_sparsity, train_config(spec.storage_epochs));
    nets.es_cha = fit(dc, es_dims, es_sparsity, train_config(spec.storage_epochs));
  }
  return nets;
}

}  // namespace support
