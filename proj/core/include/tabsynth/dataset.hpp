#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tabsynth/common.hpp"

namespace tabsynth {

/// Named continuous features plus one text class label per row.
///
/// Class labels are mapped to dense ids in first-appearance order. The object
/// is immutable after construction; all finite/unique-name checks happen in
/// the constructor.
class TabularDataset {
 public:
  TabularDataset() = default;
  TabularDataset(std::vector<std::string> feature_names, Matrix rows, std::vector<std::string> labels);

  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const Matrix& rows() const { return rows_; }
  const std::vector<std::string>& labels() const { return labels_; }

  std::size_t n_rows() const { return static_cast<std::size_t>(rows_.rows()); }
  std::size_t n_features() const { return feature_names_.size(); }
  bool empty() const { return n_rows() == 0; }

  /// Distinct classes in first-appearance order.
  const std::vector<std::string>& classes() const { return classes_; }
  /// Dense class id of each row (index into classes()).
  const std::vector<int>& class_ids() const { return class_ids_; }
  bool has_class(const std::string& name) const;
  /// Row indices of one class, ascending. Throws Error for an unknown class.
  const std::vector<std::size_t>& class_rows(const std::string& name) const;

  /// Rows at `indices` (duplicates allowed), in the given order.
  TabularDataset subset(const std::vector<std::size_t>& indices) const;
  /// Rows of `extra` appended after this dataset's rows. Schemas must match.
  TabularDataset concat(const TabularDataset& extra) const;
  /// Same labels and names with a replaced feature matrix.
  TabularDataset with_rows(Matrix rows) const;

 private:
  std::vector<std::string> feature_names_;
  Matrix rows_;
  std::vector<std::string> labels_;
  std::vector<std::string> classes_;
  std::vector<int> class_ids_;
  std::map<std::string, std::vector<std::size_t>> class_index_;
};

struct ClassDistribution {
  std::map<std::string, std::size_t> counts;
  std::string majority_class;
  std::map<std::string, double> imbalance_ratios;
};

struct SplitSpec {
  double train_fraction = 0.1;
  bool stratified = true;
  std::uint64_t seed = 0;
};

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

TabularDataset load_csv(const std::filesystem::path& path, const std::string& label_column);
TabularDataset parse_csv(const std::string& text, const std::string& label_column);
/// Writes features in schema order followed by the label column.
std::string to_csv(const TabularDataset& ds, const std::string& label_column = "label");
void save_csv(const TabularDataset& ds, const std::filesystem::path& path,
              const std::string& label_column = "label");

/// Per-class count over the majority count. Majority ties go to the
/// lexicographically smallest class name.
ClassDistribution imbalance_ratios(const TabularDataset& ds);

/// Returns (train, test). Per-class train count is round(fraction * n_c),
/// clamped to [1, n_c - 1]. Both halves keep the original row order.
std::pair<TabularDataset, TabularDataset> stratified_split(const TabularDataset& ds, const SplitSpec& spec);
/// Index form of stratified_split: (train indices, test indices), ascending.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(const TabularDataset& ds,
                                                                            const SplitSpec& spec);

/// Shuffled k-fold partition of {0..n-1}; fold sizes differ by at most one,
/// larger folds first.
std::vector<Fold> kfold_indices(std::size_t n, std::size_t k, std::uint64_t seed);
/// k folds where every class is spread as evenly as possible over the folds.
std::vector<Fold> stratified_kfold(const TabularDataset& ds, std::size_t k, std::uint64_t seed);

/// Order-sensitive hash over rows and labels; used to assert test-set purity.
std::uint64_t content_hash(const TabularDataset& ds);

}  // namespace tabsynth
