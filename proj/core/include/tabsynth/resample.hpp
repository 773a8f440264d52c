#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "tabsynth/dataset.hpp"

namespace tabsynth {

enum class Strategy { smote, ros, rus, ctgan };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& name);

/// Per-class target counts for a rebalancer. An empty `targets` map means the
/// strategy default: every non-majority class raised to the majority count
/// for over-samplers, every class cut to the minimum count for RUS.
struct ResamplePlan {
  Strategy strategy = Strategy::smote;
  std::map<std::string, std::size_t> targets;
  std::size_t k_neighbors = 5;
  std::uint64_t seed = 0;
};

/// Resolves the plan's targets against `ds` (filling defaults and classes the
/// plan does not mention) and validates them for the strategy.
std::map<std::string, std::size_t> resolve_targets(const TabularDataset& ds, const ResamplePlan& plan);

/// x_i + lambda (x_nn - x_i).
RowVector smote_point(const RowVector& xi, const RowVector& xnn, double lambda);

/// Originals first (untouched, in order), then per class the synthetic rows
/// x_i + lambda (x_nn - x_i), lambda ~ U[0, 1], x_nn one of the k nearest
/// same-class neighbours of x_i in Euclidean distance.
TabularDataset smote(const TabularDataset& ds, const ResamplePlan& plan);
/// Originals followed by uniform-with-replacement copies of same-class rows.
TabularDataset ros(const TabularDataset& ds, const ResamplePlan& plan);
/// Per class, a uniform subset without replacement; original order kept.
TabularDataset rus(const TabularDataset& ds, const ResamplePlan& plan);

/// Dispatches smote/ros/rus. The ctgan strategy needs a trained model and is
/// handled by augment_with_ctgan; passing it here is an error.
TabularDataset resample(const TabularDataset& ds, const ResamplePlan& plan);

}  // namespace tabsynth
