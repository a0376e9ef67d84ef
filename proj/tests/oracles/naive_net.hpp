#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "cefopt/snn/net.hpp"

namespace oracle {

// Scalar loop evaluation, one neuron at a time; masked weights are skipped.
inline std::vector<double> naive_forward(const cefopt::snn::SparseNet& net, const std::vector<double>& x) {
  std::vector<double> v = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& L = net.layers[l];
    std::vector<double> next(static_cast<std::size_t>(L.weight.rows()));
    for (Eigen::Index i = 0; i < L.weight.rows(); ++i) {
      double acc = L.bias(i);
      for (Eigen::Index j = 0; j < L.weight.cols(); ++j) {
        if (L.mask(i, j) != 0.0) acc += L.weight(i, j) * v[static_cast<std::size_t>(j)];
      }
      const bool hidden = l + 1 < net.layers.size();
      next[static_cast<std::size_t>(i)] = hidden ? std::max(0.0, acc) : acc;
    }
    v = std::move(next);
  }
  return v;
}

inline double naive_loss(const cefopt::snn::SparseNet& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  double loss = 0.0;
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    std::vector<double> in(x.col(k).data(), x.col(k).data() + x.rows());
    const std::vector<double> out = naive_forward(net, in);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double d = out[static_cast<std::size_t>(i)] - y(i, k);
      loss += d * d;
    }
  }
  return loss;
}

struct GradCheck {
  double max_rel_error = 0.0;
  long checked = 0;
};

// Central differences with step h on every weight (masked included) and bias.
// Relative error |a - n| / max(1, |a|, |n|) so tiny gradients compare in absolute terms.
inline GradCheck finite_difference_check(cefopt::snn::SparseNet net, const Eigen::MatrixXd& x,
                                         const Eigen::MatrixXd& y, const cefopt::snn::Gradients& g,
                                         double h = 1e-5) {
  GradCheck out;
  auto compare = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + h;
    const double up = naive_loss(net, x, y);
    param = keep - h;
    const double down = naive_loss(net, x, y);
    param = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic - numeric) / scale);
    ++out.checked;
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& L = net.layers[l];
    // Masked weights are probed through a temporarily active mask entry.
    for (Eigen::Index i = 0; i < L.weight.rows(); ++i) {
      for (Eigen::Index j = 0; j < L.weight.cols(); ++j) {
        const double m = L.mask(i, j);
        L.mask(i, j) = 1.0;
        compare(L.weight(i, j), g.weight[l](i, j));
        L.mask(i, j) = m;
      }
      compare(L.bias(i), g.bias[l](i));
    }
  }
  return out;
}

// Random inputs in [0, 1] and targets in [-1, 1].
inline void random_batch(std::mt19937_64& rng, int n_in, int n_out, int batch, Eigen::MatrixXd& x,
                         Eigen::MatrixXd& y) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  x.resize(n_in, batch);
  y.resize(n_out, batch);
  for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = U(rng);
  for (Eigen::Index k = 0; k < y.size(); ++k) y.data()[k] = 2.0 * U(rng) - 1.0;
}

}  // namespace oracle
