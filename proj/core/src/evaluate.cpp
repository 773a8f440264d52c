#include "tabsynth/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace tabsynth {

std::size_t ConfusionMatrix::total() const {
  std::size_t t = 0;
  for (const auto& row : counts) t = std::accumulate(row.begin(), row.end(), t);
  return t;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
  return t;
}

std::size_t ConfusionMatrix::index_of(const std::string& name) const {
  auto it = std::find(classes.begin(), classes.end(), name);
  if (it == classes.end()) throw Error("confusion matrix: unknown class '" + name + "'");
  return static_cast<std::size_t>(it - classes.begin());
}

std::vector<std::vector<double>> ConfusionMatrix::row_normalized() const {
  std::vector<std::vector<double>> out;
  for (const auto& row : counts) {
    const double s = static_cast<double>(std::accumulate(row.begin(), row.end(), std::size_t{0}));
    std::vector<double> r(row.size(), 0.0);
    if (s > 0) {
      for (std::size_t j = 0; j < row.size(); ++j) r[j] = static_cast<double>(row[j]) / s;
    }
    out.push_back(std::move(r));
  }
  return out;
}

ConfusionMatrix confusion(const std::vector<std::string>& truth, const std::vector<std::string>& predicted,
                          const std::vector<std::string>& classes) {
  if (truth.size() != predicted.size()) {
    throw Error("confusion: " + std::to_string(truth.size()) + " true labels but " +
                std::to_string(predicted.size()) + " predictions");
  }
  if (classes.empty()) throw Error("confusion: empty class list");
  ConfusionMatrix cm;
  cm.classes = classes;
  cm.counts.assign(classes.size(), std::vector<std::size_t>(classes.size(), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) cm.counts[cm.index_of(truth[i])][cm.index_of(predicted[i])] += 1;
  return cm;
}

const ClassMetric& MetricSummary::of(const std::string& name) const {
  for (const auto& m : per_class) {
    if (m.name == name) return m;
  }
  throw Error("metrics: unknown class '" + name + "'");
}

namespace {

double ratio(std::size_t num, std::size_t den, bool& degenerate) {
  if (den == 0) {
    degenerate = true;
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricSummary class_metrics(const ConfusionMatrix& cm) {
  const std::size_t k = cm.classes.size();
  if (k == 0) throw Error("metrics: empty confusion matrix");
  MetricSummary s;
  s.total = cm.total();
  for (std::size_t c = 0; c < k; ++c) {
    ClassMetric m;
    m.name = cm.classes[c];
    m.tp = cm.counts[c][c];
    for (std::size_t j = 0; j < k; ++j) {
      if (j == c) continue;
      m.fn += cm.counts[c][j];
      m.fp += cm.counts[j][c];
    }
    m.tn = s.total - m.tp - m.fn - m.fp;
    m.sensitivity = ratio(m.tp, m.tp + m.fn, m.sensitivity_degenerate);
    m.specificity = ratio(m.tn, m.tn + m.fp, m.specificity_degenerate);
    m.precision = ratio(m.tp, m.tp + m.fp, m.precision_degenerate);
    m.g_mean = std::sqrt(m.sensitivity * m.specificity);
    if (m.precision + m.sensitivity > 0.0) {
      m.f1 = 2.0 * m.precision * m.sensitivity / (m.precision + m.sensitivity);
    } else {
      m.f1_degenerate = true;
    }
    s.per_class.push_back(m);
  }
  s.micro_sensitivity = s.total > 0 ? static_cast<double>(cm.trace()) / static_cast<double>(s.total) : 0.0;
  for (const auto& m : s.per_class) {
    s.macro_sensitivity += m.sensitivity;
    s.macro_g_mean += m.g_mean;
    s.macro_f1 += m.f1;
  }
  s.macro_sensitivity /= static_cast<double>(k);
  s.macro_g_mean /= static_cast<double>(k);
  s.macro_f1 /= static_cast<double>(k);
  return s;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("pearson: length mismatch");
  const std::size_t n = a.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

namespace {

void moments(const Matrix& x, Eigen::Index f, double& mean, double& sd) {
  const double n = static_cast<double>(x.rows());
  mean = x.col(f).sum() / n;
  double ss = 0;
  for (Eigen::Index r = 0; r < x.rows(); ++r) ss += (x(r, f) - mean) * (x(r, f) - mean);
  sd = std::sqrt(ss / n);
}

std::vector<double> histogram(const Matrix& x, Eigen::Index f, const std::vector<double>& edges) {
  const std::size_t bins = edges.size() - 1;
  std::vector<double> h(bins, 0.0);
  const double lo = edges.front();
  const double width = (edges.back() - lo) / static_cast<double>(bins);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    auto b = static_cast<std::ptrdiff_t>(std::floor((x(r, f) - lo) / width));
    b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1);
    h[static_cast<std::size_t>(b)] += 1.0;
  }
  for (auto& v : h) v /= static_cast<double>(x.rows());
  return h;
}

}  // namespace

FidelityReport fidelity(const TabularDataset& real, const TabularDataset& synth, std::size_t bins) {
  if (real.feature_names() != synth.feature_names()) throw Error("fidelity: feature schemas differ");
  if (real.empty() || synth.empty()) throw Error("fidelity: both datasets must be non-empty");
  if (bins < 1) throw Error("fidelity: bins must be at least 1");
  FidelityReport rep;
  rep.real_rows = real.n_rows();
  rep.synth_rows = synth.n_rows();
  const Matrix& xr = real.rows();
  const Matrix& xs = synth.rows();
  std::vector<double> rm, sm, rs, ss;
  for (std::size_t i = 0; i < real.n_features(); ++i) {
    const auto f = static_cast<Eigen::Index>(i);
    FeatureFidelity ff;
    ff.name = real.feature_names()[i];
    moments(xr, f, ff.real_mean, ff.real_std);
    moments(xs, f, ff.synth_mean, ff.synth_std);
    ff.real_min = xr.col(f).minCoeff();
    ff.real_max = xr.col(f).maxCoeff();
    std::size_t outside = 0;
    for (Eigen::Index r = 0; r < xs.rows(); ++r) {
      if (xs(r, f) < ff.real_min || xs(r, f) > ff.real_max) ++outside;
    }
    ff.range_extension = static_cast<double>(outside) / static_cast<double>(xs.rows());
    double lo = std::min(ff.real_min, xs.col(f).minCoeff());
    double hi = std::max(ff.real_max, xs.col(f).maxCoeff());
    if (hi <= lo) {
      lo -= 0.5;
      hi += 0.5;
    }
    for (std::size_t b = 0; b <= bins; ++b) {
      ff.edges.push_back(b == bins ? hi : lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins));
    }
    ff.real_freq = histogram(xr, f, ff.edges);
    ff.synth_freq = histogram(xs, f, ff.edges);
    ff.constant = ff.real_std == 0.0 && ff.synth_std == 0.0;
    if (ff.constant) {
      rep.notes.push_back("feature '" + ff.name + "' is constant in both datasets; excluded from correlations");
    } else {
      rm.push_back(ff.real_mean);
      sm.push_back(ff.synth_mean);
      rs.push_back(ff.real_std);
      ss.push_back(ff.synth_std);
    }
    rep.mean_range_extension += ff.range_extension;
    rep.features.push_back(std::move(ff));
  }
  rep.mean_range_extension /= static_cast<double>(real.n_features());
  if (rm.size() < 2) rep.notes.push_back("fewer than 2 usable features; correlations undefined");
  rep.mean_correlation = pearson(rm, sm);
  rep.std_correlation = pearson(rs, ss);
  rep.mean_correlation_defined = !std::isnan(rep.mean_correlation);
  rep.std_correlation_defined = !std::isnan(rep.std_correlation);
  if (rm.size() >= 2 && !rep.mean_correlation_defined) rep.notes.push_back("mean vectors have zero variance");
  if (rm.size() >= 2 && !rep.std_correlation_defined) rep.notes.push_back("std vectors have zero variance");
  return rep;
}

// --- writers ----------------------------------------------------------------

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string num(double v) { return std::isnan(v) ? "nan" : format_double(v); }

template <class Cell>
std::string matrix_csv(const ConfusionMatrix& cm, Cell cell) {
  std::ostringstream o;
  o << "true\\predicted";
  for (const auto& c : cm.classes) o << ',' << csv_field(c);
  o << '\n';
  for (std::size_t i = 0; i < cm.classes.size(); ++i) {
    o << csv_field(cm.classes[i]);
    for (std::size_t j = 0; j < cm.classes.size(); ++j) o << ',' << cell(i, j);
    o << '\n';
  }
  return o.str();
}

}  // namespace

std::string confusion_csv(const ConfusionMatrix& cm) {
  return matrix_csv(cm, [&](std::size_t i, std::size_t j) { return std::to_string(cm.counts[i][j]); });
}

std::string confusion_normalized_csv(const ConfusionMatrix& cm) {
  const auto n = cm.row_normalized();
  return matrix_csv(cm, [&](std::size_t i, std::size_t j) { return num(n[i][j]); });
}

std::string metrics_csv(const MetricSummary& m) {
  std::ostringstream o;
  o << "class,tp,fn,tn,fp,sensitivity,specificity,g_mean,precision,f1,degenerate\n";
  for (const auto& c : m.per_class) {
    o << csv_field(c.name) << ',' << c.tp << ',' << c.fn << ',' << c.tn << ',' << c.fp << ',' << num(c.sensitivity)
      << ',' << num(c.specificity) << ',' << num(c.g_mean) << ',' << num(c.precision) << ',' << num(c.f1) << ','
      << (c.degenerate() ? 1 : 0) << '\n';
  }
  o << "micro,,,,," << num(m.micro_sensitivity) << ",,,,,\n";
  o << "macro,,,,," << num(m.macro_sensitivity) << ",," << num(m.macro_g_mean) << ",," << num(m.macro_f1) << ",\n";
  return o.str();
}

std::string fidelity_text(const FidelityReport& r) {
  std::ostringstream o;
  o << "real_rows: " << r.real_rows << '\n';
  o << "synthetic_rows: " << r.synth_rows << '\n';
  o << "mean_correlation: " << num(r.mean_correlation) << '\n';
  o << "std_correlation: " << num(r.std_correlation) << '\n';
  o << "mean_range_extension: " << num(r.mean_range_extension) << '\n';
  for (const auto& n : r.notes) o << "note: " << n << '\n';
  for (const auto& f : r.features) {
    o << "feature: " << f.name << " real_mean=" << num(f.real_mean) << " synth_mean=" << num(f.synth_mean)
      << " real_std=" << num(f.real_std) << " synth_std=" << num(f.synth_std)
      << " range_extension=" << num(f.range_extension) << (f.constant ? " constant" : "") << '\n';
  }
  return o.str();
}

std::string fidelity_summary_csv(const FidelityReport& r) {
  std::ostringstream o;
  o << "feature,real_mean,synth_mean,real_std,synth_std,real_min,real_max,range_extension,constant\n";
  for (const auto& f : r.features) {
    o << csv_field(f.name) << ',' << num(f.real_mean) << ',' << num(f.synth_mean) << ',' << num(f.real_std) << ','
      << num(f.synth_std) << ',' << num(f.real_min) << ',' << num(f.real_max) << ',' << num(f.range_extension) << ','
      << (f.constant ? 1 : 0) << '\n';
  }
  return o.str();
}

std::string histogram_csv(const FeatureFidelity& f) {
  std::ostringstream o;
  o << "bin_low,bin_high,real,synthetic\n";
  for (std::size_t b = 0; b + 1 < f.edges.size(); ++b) {
    o << num(f.edges[b]) << ',' << num(f.edges[b + 1]) << ',' << num(f.real_freq[b]) << ',' << num(f.synth_freq[b])
      << '\n';
  }
  return o.str();
}

}  // namespace tabsynth
