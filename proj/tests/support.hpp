// SPDX-License-Identifier: Apache-2.0
//
// Helpers shared by the test binaries.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hmnet/rng.hpp"
#include "hmnet/tensor.hpp"

namespace hmnet::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double scale = 1.0) {
  Tensor t(shape);
  for (auto& v : t.data()) v = scale * (2.0 * rng.uniform() - 1.0);
  return t.set_requires_grad(true), t;
}

/// Largest relative error between the autodiff gradient of `f` with respect
/// to each input and the five-point central difference with step h. The error
/// of one entry is |a - n| / max(|a| + |n|, floor) so tiny gradients are
/// compared absolutely.
inline double gradcheck(const std::function<Tensor(Graph&)>& f, const std::vector<Tensor>& inputs, double h = 1e-3,
                        double floor = 1e-4) {
  Graph g;
  Tensor loss = f(g);
  g.backward(loss);
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());
  double worst = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& t = inputs[k];
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double orig = t[i];
      auto at = [&](double x) {
        t[i] = x;
        Graph gx = Graph::inference();
        return f(gx).item();
      };
      const double numeric = (at(orig - 2 * h) - 8 * at(orig - h) + 8 * at(orig + h) - at(orig + 2 * h)) / (12 * h);
      t[i] = orig;
      const double a = analytic[k].empty() ? 0.0 : analytic[k][i];
      worst = std::max(worst, std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), floor));
    }
  }
  return worst;
}

/// Fresh empty directory under the system temp dir.
inline std::string temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("hmnet_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

inline std::string fixture(const std::string& name) { return std::string(HMNET_SOURCE_DIR) + "/fixtures/" + name; }

}  // namespace hmnet::testing
