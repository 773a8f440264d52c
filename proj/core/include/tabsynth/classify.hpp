#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "tabsynth/common.hpp"
#include "tabsynth/dataset.hpp"

namespace tabsynth {

// All classifiers index classes in lexicographic order of their names, so a
// model does not depend on the order of its training rows. "Smallest class
// id" tie-breaks therefore pick the lexicographically first class.

enum class KnnMetric { manhattan, euclidean };
enum class KnnWeighting { uniform, distance };

struct KnnParams {
  std::size_t k = 10;
  KnnMetric metric = KnnMetric::manhattan;
  KnnWeighting weighting = KnnWeighting::distance;
};

struct ForestParams {
  std::size_t n_estimators = 100;
  std::size_t max_depth = 18;
  double max_features = 0.6;  // fraction of features tried per split
  bool bootstrap = true;
  double max_samples = 0.8;  // fraction of rows drawn per tree
  std::uint64_t seed = 0;
};

struct GbdtParams {
  std::size_t n_rounds = 100;
  std::size_t max_depth = 18;
  double learning_rate = 0.3;
  double l2_lambda = 1.0;
  double min_child_weight = 1.0;
  double subsample = 0.9;  // fraction of rows per round
  double colsample = 1.0;  // fraction of features per tree
  bool bootstrap = true;   // rows drawn with replacement
  std::uint64_t seed = 0;
};

using ClassifierParams = std::variant<KnnParams, ForestParams, GbdtParams>;

/// Node array of a binary tree. Internal nodes send x[feature] <= threshold
/// to `left`. Leaves hold a class distribution (classification) or a single
/// value (regression, stored in value[0]).
struct DecisionTree {
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<double> value;
  };
  std::vector<Node> nodes;
  std::size_t max_depth = 0;

  const std::vector<double>& leaf_value(const double* row) const;
  std::size_t depth() const;
};

struct TreeParams {
  std::size_t max_depth = 18;
  double max_features = 1.0;
};

/// Gini-impurity classification tree over `samples` (row indices into x,
/// duplicates allowed). Candidate thresholds are midpoints between
/// consecutive distinct values; gain ties go to the lowest feature index, then
/// the lowest threshold.
DecisionTree train_gini_tree(const Matrix& x, const std::vector<int>& y, std::size_t n_classes,
                             const std::vector<std::size_t>& samples, const TreeParams& params, Rng& rng);

/// Gini impurity of a count vector.
double gini(const std::vector<double>& counts);
/// Second-order leaf weight -sum(g) / (sum(h) + lambda).
double leaf_weight(double sum_grad, double sum_hess, double lambda);

struct KnnModel {
  KnnParams params;
  std::vector<std::string> classes;
  Matrix rows;
  std::vector<int> labels;
};

struct ForestModel {
  ForestParams params;
  std::vector<std::string> classes;
  std::vector<DecisionTree> trees;
};

struct BoostedModel {
  GbdtParams params;
  std::vector<std::string> classes;
  std::vector<double> base_score;               // log class prior
  std::vector<std::vector<DecisionTree>> trees;  // [round][class]
};

KnnModel knn_train(const TabularDataset& ds, const KnnParams& params);
std::vector<int> knn_predict_ids(const KnnModel& m, const Matrix& rows);
double knn_distance(KnnMetric metric, const double* a, const double* b, std::size_t n);

ForestModel forest_train(const TabularDataset& ds, const ForestParams& params);
std::vector<int> forest_predict_ids(const ForestModel& m, const Matrix& rows);

BoostedModel gbdt_train(const TabularDataset& ds, const GbdtParams& params);
std::vector<int> gbdt_predict_ids(const BoostedModel& m, const Matrix& rows);
/// Raw per-class additive scores (rows x classes).
Matrix gbdt_scores(const BoostedModel& m, const Matrix& rows);

/// A trained model of any of the three kinds.
class Classifier {
 public:
  using Model = std::variant<KnnModel, ForestModel, BoostedModel>;

  static Classifier train(const ClassifierParams& params, const TabularDataset& ds);
  explicit Classifier(Model model) : model_(std::move(model)) {}

  std::vector<std::string> predict(const Matrix& rows) const;
  std::vector<std::string> predict(const TabularDataset& ds) const { return predict(ds.rows()); }
  const std::vector<std::string>& classes() const;
  std::string kind() const;
  const Model& model() const { return model_; }

  std::string serialize() const;
  static Classifier deserialize(const std::string& text);

 private:
  Model model_;
};

std::string classifier_kind(const ClassifierParams& p);
/// Parses "key=value,key=value" into the defaults of `kind` (knn|rf|gbdt).
ClassifierParams parse_classifier_params(const std::string& kind, const std::string& key_values);
/// Canonical "key=value,..." rendering of every parameter.
std::string format_classifier_params(const ClassifierParams& p);
/// Overrides the seed of forest/gbdt params; KNN is unaffected.
ClassifierParams with_seed(ClassifierParams p, std::uint64_t seed);

}  // namespace tabsynth
