#pragma once

#include <span>
#include <string>
#include <vector>

#include "tabsynth/dataset.hpp"

namespace tabsynth {

// Rows are true classes, columns predicted classes, both in `classes` order.
struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<std::size_t>> counts;

  std::size_t total() const;
  std::size_t trace() const;
  std::size_t index_of(const std::string& name) const;
  // Each row divided by its sum; all-zero rows stay zero.
  std::vector<std::vector<double>> row_normalized() const;
};

ConfusionMatrix confusion(const std::vector<std::string>& truth, const std::vector<std::string>& predicted,
                          const std::vector<std::string>& classes);

// One-vs-rest counts and rates for a single class. A rate whose denominator
// is zero is reported as 0 and flagged.
struct ClassMetric {
  std::string name;
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double g_mean = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  bool sensitivity_degenerate = false;
  bool specificity_degenerate = false;
  bool precision_degenerate = false;
  bool f1_degenerate = false;

  bool degenerate() const {
    return sensitivity_degenerate || specificity_degenerate || precision_degenerate || f1_degenerate;
  }
};

struct MetricSummary {
  std::vector<ClassMetric> per_class;
  std::size_t total = 0;
  double micro_sensitivity = 0.0;  // trace / total, i.e. accuracy
  double macro_sensitivity = 0.0;
  double macro_g_mean = 0.0;
  double macro_f1 = 0.0;

  const ClassMetric& of(const std::string& name) const;
};

MetricSummary class_metrics(const ConfusionMatrix& cm);

// Textbook two-pass Pearson correlation. NaN when either side has zero
// variance or fewer than two points.
double pearson(std::span<const double> a, std::span<const double> b);

struct FeatureFidelity {
  std::string name;
  double real_mean = 0.0, synth_mean = 0.0;
  double real_std = 0.0, synth_std = 0.0;  // population (divide by n)
  double real_min = 0.0, real_max = 0.0;
  double range_extension = 0.0;  // share of synthetic values outside [real_min, real_max]
  std::vector<double> edges;     // bins + 1 edges over the union range
  std::vector<double> real_freq, synth_freq;
  bool constant = false;  // zero variance on both sides; left out of the correlations
};

struct FidelityReport {
  std::vector<FeatureFidelity> features;
  double mean_correlation = 0.0;
  double std_correlation = 0.0;
  bool mean_correlation_defined = true;
  bool std_correlation_defined = true;
  double mean_range_extension = 0.0;
  std::size_t real_rows = 0, synth_rows = 0;
  std::vector<std::string> notes;
};

FidelityReport fidelity(const TabularDataset& real, const TabularDataset& synth, std::size_t bins = 30);

// Report writers. All output is deterministic text.
std::string confusion_csv(const ConfusionMatrix& cm);
std::string confusion_normalized_csv(const ConfusionMatrix& cm);
std::string metrics_csv(const MetricSummary& m);
std::string fidelity_text(const FidelityReport& r);
std::string fidelity_summary_csv(const FidelityReport& r);
std::string histogram_csv(const FeatureFidelity& f);

}  // namespace tabsynth
