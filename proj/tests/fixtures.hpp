#pragma once

#include <string>
#include <vector>

#include "tabsynth/dataset.hpp"

namespace fixtures {

// Isotropic Gaussian blobs, one per class, rows grouped by class.
inline tabsynth::TabularDataset blobs(const std::vector<std::vector<double>>& centres, std::size_t per_class,
                                      double sigma, std::uint64_t seed) {
  tabsynth::Rng rng(seed);
  const std::size_t d = centres.front().size();
  tabsynth::Matrix x(static_cast<Eigen::Index>(centres.size() * per_class), static_cast<Eigen::Index>(d));
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < centres.size(); ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      const auto r = static_cast<Eigen::Index>(c * per_class + i);
      for (std::size_t j = 0; j < d; ++j) x(r, static_cast<Eigen::Index>(j)) = rng.normal(centres[c][j], sigma);
      labels.push_back(std::string(1, static_cast<char>('A' + c)));
    }
  }
  std::vector<std::string> names;
  for (std::size_t j = 0; j < d; ++j) names.push_back("x" + std::to_string(j));
  return {names, x, labels};
}

// Dataset with the given per-class counts, features drawn from N(class index, 1).
inline tabsynth::TabularDataset counted(const std::vector<std::pair<std::string, std::size_t>>& counts,
                                        std::size_t features, std::uint64_t seed) {
  tabsynth::Rng rng(seed);
  std::size_t n = 0;
  for (const auto& c : counts) n += c.second;
  tabsynth::Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(features));
  std::vector<std::string> labels;
  Eigen::Index r = 0;
  double centre = 0.0;
  for (const auto& [name, count] : counts) {
    for (std::size_t i = 0; i < count; ++i, ++r) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(r, j) = rng.normal(centre, 1.0);
      labels.push_back(name);
    }
    centre += 1.0;
  }
  std::vector<std::string> names;
  for (std::size_t j = 0; j < features; ++j) names.push_back("f" + std::to_string(j));
  return {names, x, labels};
}

}  // namespace fixtures
