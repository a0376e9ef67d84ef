#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cefopt/snn/net.hpp"

namespace cefopt::scen {

struct Sample {
  int scenario = 0;
  int period = 0;
  std::vector<double> x;
  std::vector<double> y;
  friend bool operator==(const Sample&, const Sample&) = default;
};

struct DatasetMeta {
  std::string kind = "cef";  // cef, es_dis or es_cha
  std::string case_hash;
  std::uint64_t seed = 0;
  long scenarios = 0;  // requested draws
  long skipped = 0;    // draws without a feasible baseline
};

/// Samples in physical units plus the min-max scales of their columns.
struct Dataset {
  std::vector<Sample> samples;
  snn::Scaling scaling;
  bool normalized = false;
  DatasetMeta meta;

  std::size_t x_dim() const { return samples.empty() ? 0 : samples.front().x.size(); }
  std::size_t y_dim() const { return samples.empty() ? 0 : samples.front().y.size(); }
  /// One sample per column.
  Eigen::MatrixXd x_matrix() const;
  Eigen::MatrixXd y_matrix() const;
};

/// Per-column minimum and range; constant columns get range 1.
snn::Scaling compute_scaling(const std::vector<Sample>& samples);

/// Min-max scaling with stored scales (computed when absent).
Dataset normalize(const Dataset& d);
Dataset denormalize(const Dataset& d);

struct Split {
  Dataset train, test;
};

/// Holds out whole scenarios: a seeded shuffle of scenario ids.
Split split_by_scenario(const Dataset& d, double test_fraction, std::uint64_t seed);

/// CSV with header scenario,period,x_0..,y_0.. and a JSON sidecar <path>.meta.json.
void write_dataset(const Dataset& d, const std::filesystem::path& csv_path);
Dataset read_dataset(const std::filesystem::path& csv_path);

/// SHA-256 of the CSV body as written by write_dataset.
std::string dataset_hash(const Dataset& d);
std::string to_csv(const Dataset& d);

}  // namespace cefopt::scen
