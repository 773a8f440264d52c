#include "tabsynth/resample.hpp"

#include <algorithm>
#include <iostream>
#include <limits>
#include <numeric>

namespace tabsynth {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::smote: return "smote";
    case Strategy::ros: return "ros";
    case Strategy::rus: return "rus";
    case Strategy::ctgan: return "ctgan";
  }
  return "smote";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "smote") return Strategy::smote;
  if (name == "ros") return Strategy::ros;
  if (name == "rus") return Strategy::rus;
  if (name == "ctgan") return Strategy::ctgan;
  throw Error("unknown resampling strategy '" + name + "'");
}

std::map<std::string, std::size_t> resolve_targets(const TabularDataset& ds, const ResamplePlan& plan) {
  if (ds.empty()) throw Error("resample: empty dataset");
  if (plan.k_neighbors < 1) throw Error("resample: k_neighbors must be at least 1");
  const auto dist = imbalance_ratios(ds);
  std::map<std::string, std::size_t> targets;
  const bool down = plan.strategy == Strategy::rus;
  std::size_t min_count = ds.n_rows();
  for (const auto& [c, n] : dist.counts) min_count = std::min(min_count, n);
  const std::size_t max_count = dist.counts.at(dist.majority_class);
  for (const auto& [c, n] : dist.counts) {
    if (plan.targets.empty()) targets[c] = down ? min_count : std::max(n, max_count);
    else targets[c] = n;
  }
  for (const auto& [c, t] : plan.targets) {
    if (!ds.has_class(c)) throw Error("resample: target for unknown class '" + c + "'");
    const std::size_t n = dist.counts.at(c);
    if (down && t > n) {
      throw Error("resample: RUS target " + std::to_string(t) + " for class '" + c + "' exceeds its count " +
                  std::to_string(n));
    }
    if (!down && t < n) {
      throw Error("resample: over-sampling target " + std::to_string(t) + " for class '" + c +
                  "' is below its count " + std::to_string(n));
    }
    targets[c] = t;
  }
  return targets;
}

RowVector smote_point(const RowVector& xi, const RowVector& xnn, double lambda) {
  if (xi.size() != xnn.size()) throw Error("smote: point width mismatch");
  return xi + lambda * (xnn - xi);
}

TabularDataset smote(const TabularDataset& ds, const ResamplePlan& plan) {
  const auto targets = resolve_targets(ds, plan);
  Rng rng(plan.seed);
  const Matrix& x = ds.rows();
  std::vector<std::vector<double>> synth;
  std::vector<std::string> labels;
  for (const auto& c : ds.classes()) {
    const auto& rows = ds.class_rows(c);
    const std::size_t target = targets.at(c);
    if (target <= rows.size()) continue;
    if (rows.size() < 2) {
      throw Error("smote: class '" + c + "' has a single sample; interpolation needs at least 2");
    }
    std::size_t k = plan.k_neighbors;
    if (k >= rows.size()) {
      k = rows.size() - 1;
      std::cerr << "warning: smote: k_neighbors reduced to " << k << " for class '" << c << "' (" << rows.size()
                << " samples)\n";
    }
    // Brute-force k nearest same-class neighbours of every class row.
    std::vector<std::vector<std::size_t>> neighbours(rows.size());
    std::vector<std::pair<double, std::size_t>> d(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < rows.size(); ++j) {
        d[j] = {j == i ? std::numeric_limits<double>::infinity()
                       : (x.row(static_cast<Eigen::Index>(rows[i])) - x.row(static_cast<Eigen::Index>(rows[j]))).squaredNorm(),
                j};
      }
      std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
      for (std::size_t q = 0; q < k; ++q) neighbours[i].push_back(d[q].second);
    }
    for (std::size_t s = rows.size(); s < target; ++s) {
      const std::size_t i = rng.index(rows.size());
      const std::size_t j = neighbours[i][rng.index(k)];
      const double lambda = rng.uniform();
      const RowVector p =
          smote_point(x.row(static_cast<Eigen::Index>(rows[i])), x.row(static_cast<Eigen::Index>(rows[j])), lambda);
      synth.emplace_back(p.data(), p.data() + p.size());
      labels.push_back(c);
    }
  }
  Matrix extra(static_cast<Eigen::Index>(synth.size()), static_cast<Eigen::Index>(ds.n_features()));
  for (std::size_t r = 0; r < synth.size(); ++r) {
    for (std::size_t f = 0; f < ds.n_features(); ++f) extra(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f)) = synth[r][f];
  }
  return ds.concat(TabularDataset(ds.feature_names(), std::move(extra), std::move(labels)));
}

TabularDataset ros(const TabularDataset& ds, const ResamplePlan& plan) {
  const auto targets = resolve_targets(ds, plan);
  Rng rng(plan.seed);
  std::vector<std::size_t> picks;
  for (const auto& c : ds.classes()) {
    const auto& rows = ds.class_rows(c);
    for (std::size_t s = rows.size(); s < targets.at(c); ++s) picks.push_back(rows[rng.index(rows.size())]);
  }
  return ds.concat(ds.subset(picks));
}

TabularDataset rus(const TabularDataset& ds, const ResamplePlan& plan) {
  ResamplePlan down = plan;
  down.strategy = Strategy::rus;
  const auto targets = resolve_targets(ds, down);
  Rng rng(plan.seed);
  std::vector<std::size_t> keep;
  for (const auto& c : ds.classes()) {
    auto rows = ds.class_rows(c);
    rng.shuffle(rows);
    keep.insert(keep.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(targets.at(c)));
  }
  std::sort(keep.begin(), keep.end());
  return ds.subset(keep);
}

TabularDataset resample(const TabularDataset& ds, const ResamplePlan& plan) {
  switch (plan.strategy) {
    case Strategy::smote: return smote(ds, plan);
    case Strategy::ros: return ros(ds, plan);
    case Strategy::rus: return rus(ds, plan);
    case Strategy::ctgan: break;
  }
  throw Error("resample: the ctgan strategy requires a trained model (see augment_with_ctgan)");
}

}  // namespace tabsynth
