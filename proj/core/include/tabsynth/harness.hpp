#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tabsynth/classify.hpp"
#include "tabsynth/ctgan.hpp"
#include "tabsynth/dataset.hpp"
#include "tabsynth/evaluate.hpp"
#include "tabsynth/resample.hpp"

namespace tabsynth {

// --- synthetic benchmark --------------------------------------------------------

struct MixtureComponent {
  double weight = 1.0;
  double mean = 0.0;
  double std = 1.0;
};

struct ClassSpec {
  std::string name;
  std::size_t count = 0;
  std::vector<std::vector<MixtureComponent>> features;  // one mixture per feature
};

struct BenchmarkSpec {
  std::vector<ClassSpec> classes;
  std::size_t n_features = 0;
  std::uint64_t seed = 0;
};

// Seven crop classes over 20 features with counts
// {2000, 20, 1800, 1750, 1100, 2000, 20}. The two minorities (Peas,
// Broadleaf) sit next to a majority class (Soybeans, Canola). Features have
// heterogeneous raw scales and offsets.
BenchmarkSpec crop7_spec(std::uint64_t seed = 2012);
BenchmarkSpec parse_benchmark_name(const std::string& name, std::uint64_t seed);
TabularDataset make_benchmark(const BenchmarkSpec& spec);

// --- random search ------------------------------------------------------------

struct ParamRange {
  enum class Kind { integer, real, log_real, choice };
  std::string name;
  Kind kind = Kind::real;
  double lo = 0.0, hi = 1.0;
  std::vector<std::string> choices;
};

struct SearchSpace {
  std::string kind;  // knn | rf | gbdt
  std::vector<ParamRange> params;
  std::string fixed;  // key=value pairs applied to every candidate
  std::size_t n_candidates = 20;
  std::size_t k_folds = 3;
  std::uint64_t seed = 0;
};

SearchSpace default_search_space(const std::string& kind);

struct SearchCandidate {
  std::string text;  // key=value form
  ClassifierParams params;
  std::vector<double> fold_scores;
  double score = 0.0;  // mean fold micro-sensitivity; -inf when infeasible
  bool feasible = true;
  std::string error;
};

struct SearchResult {
  std::vector<SearchCandidate> candidates;
  std::size_t best = 0;

  const SearchCandidate& best_candidate() const { return candidates.at(best); }
};

// Candidates are drawn uniformly from the space and scored by stratified
// k-fold CV. Ties keep the first sampled candidate. A candidate that cannot be
// trained (e.g. k larger than a fold) is infeasible.
SearchResult random_search(const SearchSpace& space, const TabularDataset& train);

// --- experiment plan -------------------------------------------------------------

struct DatasetSource {
  std::string benchmark;  // preset name, used when csv is empty
  std::uint64_t benchmark_seed = 2012;
  std::filesystem::path csv;
  std::string label_column = "label";
};

struct ResamplerConfig {
  enum class Kind { none, classic, ctgan };
  std::string name;
  Kind kind = Kind::none;
  ResamplePlan plan;        // classic resamplers
  TrainConfig ctgan;        // ctgan
  std::size_t ctgan_add = 1000;  // synthetic rows added to each minority class
};

struct ClassifierConfig {
  std::string name;
  ClassifierParams params;
  std::optional<SearchSpace> search;
};

struct ExperimentPlan {
  DatasetSource dataset;
  SplitSpec split;
  bool standardize = true;
  // Run smote/ros/rus on standardized features (statistics of the training
  // split); synthetic rows are mapped back to the raw scale afterwards.
  bool resample_standardized = false;
  std::vector<ResamplerConfig> resamplers;
  std::vector<ClassifierConfig> classifiers;
  std::vector<std::uint64_t> seeds{1};
  std::uint64_t master_seed = 0;
  std::filesystem::path outputs = "report";
  std::vector<std::string> minority_classes;  // empty: IR <= minority_threshold
  double minority_threshold = 0.1;
  std::size_t fidelity_bins = 30;
  std::vector<std::size_t> synthetic_count_sweep;
  std::size_t workers = 1;
};

ExperimentPlan parse_plan(const std::string& json_text);
ExperimentPlan load_plan(const std::filesystem::path& path);
void validate_plan(const ExperimentPlan& plan);
TabularDataset load_source(const DatasetSource& src);

// --- results ------------------------------------------------------------------

struct CellResult {
  std::string resampler;
  std::string classifier;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::string classifier_params;  // final (possibly tuned) parameters
  std::map<std::string, std::size_t> train_counts;
  std::size_t test_rows = 0;
  ConfusionMatrix confusion;
  MetricSummary metrics;
};

struct FidelityRecord {
  std::string resampler;
  std::uint64_t seed = 0;
  std::string class_name;
  FidelityReport report;
};

struct SweepRow {
  std::size_t count = 0;
  std::size_t train_rows = 0;
  std::map<std::string, double> minority_f1;
  double macro_f1 = 0.0;
  double micro_sensitivity = 0.0;
};

struct ExperimentReport {
  std::vector<std::string> classes;
  std::vector<std::string> minority_classes;
  std::vector<CellResult> cells;
  std::vector<FidelityRecord> fidelity;
  std::vector<SweepRow> sweep;
  std::map<std::string, std::string> files;  // relative path -> content

  bool any_failed() const;
  const CellResult& cell(const std::string& resampler, const std::string& classifier, std::uint64_t seed) const;
};

using ProgressLog = std::function<void(const std::string&)>;

// Runs every (resampler x classifier x seed) cell. Only the training split is
// handed to resamplers and generators; the test split's hash is checked after
// each cell. Failed cells are recorded and the rest continue.
ExperimentReport run_experiment(const ExperimentPlan& plan, const ProgressLog& log = {});

// Trains the plan's first ctgan resampler once (first seed) and evaluates the
// first classifier for every count of synthetic rows per minority class.
std::vector<SweepRow> sweep_synthetic_counts(const ExperimentPlan& plan, const std::vector<std::size_t>& counts,
                                             const ProgressLog& log = {});
std::string sweep_csv(const std::vector<SweepRow>& rows, const std::vector<std::string>& minority);

void write_bundle(const ExperimentReport& report, const std::filesystem::path& dir);

// Feature standardization with statistics from one dataset.
struct Standardizer {
  std::vector<double> mean, scale;

  static Standardizer fit(const TabularDataset& ds);
  TabularDataset apply(const TabularDataset& ds) const;
  TabularDataset invert(const TabularDataset& ds) const;
};

}  // namespace tabsynth
