// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails. Usage: acceptance [work-dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tabsynth/ctgan.hpp"
#include "tabsynth/evaluate.hpp"
#include "tabsynth/harness.hpp"
#include "tabsynth/neuralnet.hpp"
#include "tabsynth/resample.hpp"
#include "tabsynth/vgmm.hpp"

using namespace tabsynth;

namespace {

// Pinned tolerances.
constexpr double kMetricTol = 1e-12;
constexpr double kLossTol = 1e-12;
constexpr double kGradTol = 1e-4;
constexpr double kRoundTripTol = 1e-9;
constexpr double kWeightTol = 0.05;
constexpr double kSegmentTol = 1e-9;
constexpr double kBaselineMinorityMax = 0.2;
constexpr double kCtganMinorityMin = 0.7;
constexpr double kCtganMicroDropMax = 0.02;
constexpr double kRusMicroDropMin = 0.05;
constexpr double kMeanCorrMin = 0.9;
constexpr double kStdCorrMin = 0.8;

// Runtime budgets in seconds.
constexpr double kBudgetMetrics = 5;
constexpr double kBudgetLosses = 1;
constexpr double kBudgetGradients = 30;
constexpr double kBudgetVgmm = 30;
constexpr double kBudgetExperiment = 600;

// Replicate seeds for the crop experiment; results are averaged over them.
const std::vector<std::uint64_t> kReplicates{1, 2, 3};
constexpr std::uint64_t kMasterSeed = 42;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream o;
  o.precision(precision);
  o << v;
  return o.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// budget <= 0 means unbounded.
Outcome timed(double budget, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = seconds_since(t0);
  o.detail += "; " + fmt(s, 3) + " s";
  if (budget > 0) {
    o.detail += " (budget " + fmt(budget) + " s)";
    if (s > budget) o.pass = false;
  }
  return o;
}

// --- 1 ------------------------------------------------------------------------

Outcome metric_oracle() {
  Rng rng(101);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + rng.index(6);
    const std::size_t n = 1 + rng.index(400);
    std::vector<std::string> names, truth, pred;
    for (std::size_t c = 0; c < k; ++c) names.push_back("k" + std::to_string(c));
    for (std::size_t i = 0; i < n; ++i) {
      truth.push_back(names[rng.index(k)]);
      pred.push_back(names[rng.index(k)]);
    }
    const auto m = class_metrics(confusion(truth, pred, names));
    for (const auto& c : names) {
      double tp = 0, fn = 0, fp = 0, tn = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const bool is = truth[i] == c, said = pred[i] == c;
        tp += is && said;
        fn += is && !said;
        fp += !is && said;
        tn += !is && !said;
      }
      const auto rate = [](double a, double b) { return b == 0 ? 0.0 : a / b; };
      const double sens = rate(tp, tp + fn), spec = rate(tn, tn + fp), prec = rate(tp, tp + fp);
      const double f1 = rate(2 * prec * sens, prec + sens);
      const auto& got = m.of(c);
      for (double d : {got.sensitivity - sens, got.specificity - spec, got.g_mean - std::sqrt(sens * spec),
                       got.f1 - f1}) {
        worst = std::max(worst, std::abs(d));
      }
    }
  }
  return {worst <= kMetricTol, "1000 random label vectors, max abs deviation " + fmt(worst) + " (tol 1e-12)"};
}

// --- 2 ------------------------------------------------------------------------

Outcome loss_arithmetic() {
  const double example = discriminator_loss(std::vector<double>{0.8}, std::vector<double>{0.2});
  Rng rng(202);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 1 + rng.index(128);
    std::vector<double> real(m), fake(m);
    double sd = 0, sg = 0;
    for (std::size_t i = 0; i < m; ++i) {
      real[i] = rng.normal(0.0, 3.0);
      fake[i] = rng.normal(0.0, 3.0);
      sd += fake[i] - real[i];
      sg += fake[i];
    }
    const double ce = rng.uniform(0.0, 2.0);
    worst = std::max(worst, std::abs(discriminator_loss(real, fake) - sd / static_cast<double>(m)));
    worst = std::max(worst, std::abs(generator_loss(fake, ce) - (ce - sg / static_cast<double>(m))));
  }
  const bool ok = worst <= kLossTol && std::abs(example - (-0.6)) <= kLossTol;
  return {ok, "L_D([0.8],[0.2]) = " + fmt(example, 15) + ", 1000 random vectors max deviation " + fmt(worst) +
                  " (tol 1e-12)"};
}

// --- 3 ------------------------------------------------------------------------

Outcome gradient_fidelity() {
  const Activation kinds[] = {Activation::linear, Activation::relu, Activation::leaky_relu, Activation::tanh,
                              Activation::gumbel_softmax};
  double worst = 0;
  std::map<std::string, int> covered;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(3000 + seed);
    const std::size_t in = 2 + rng.index(4);
    std::vector<LayerSpec> spec;
    const std::size_t depth = 2 + rng.index(3);
    for (std::size_t l = 0; l <= depth; ++l) {
      LayerSpec s;
      s.width = 2 + rng.index(5);
      s.activation = kinds[(seed + l) % 5];
      s.residual = l < depth && (seed + l) % 3 == 0;
      s.batch_norm = l < depth && (seed + l) % 4 == 1;
      s.tau = 0.5 + rng.uniform();
      spec.push_back(s);
      covered[to_string(s.activation)]++;
      if (s.residual) covered["residual"]++;
      if (s.batch_norm) covered["batch_norm"]++;
    }
    DenseNet net(in, spec, seed);
    // Random non-zero biases keep pre-activations off the relu kinks.
    for (auto& l : net.mutable_layers()) {
      for (Eigen::Index j = 0; j < l.bias.size(); ++j) l.bias(j) = rng.normal(0.0, 0.5);
      if (!l.batch_norm) continue;
      for (Eigen::Index j = 0; j < l.bn_scale.size(); ++j) {
        l.bn_scale(j) = rng.uniform(0.5, 1.5);
        l.bn_shift(j) = rng.normal(0.0, 0.5);
        l.running_mean(j) = rng.normal(0.0, 0.5);
        l.running_var(j) = rng.uniform(0.5, 2.0);
      }
    }
    Matrix x(6, static_cast<Eigen::Index>(in)), w(6, static_cast<Eigen::Index>(net.output_width()));
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
    for (NormMode mode : {NormMode::batch, NormMode::running}) {
      const auto loss = [&](const DenseNet& n) { return (n.forward(x, nullptr, mode).output.array() * w.array()).sum(); };
      const auto analytic = net.backward(net.forward(x, nullptr, mode), w).tape;
      worst = std::max(worst, relative_error(analytic, numerical_gradient(net, loss, 1e-6)));
    }
  }
  // The critic's gradient penalty has its own parameter gradient.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(3500 + seed);
    const DenseNet critic(5, {{7, Activation::leaky_relu}, {6, Activation::leaky_relu}, {1, Activation::linear}}, seed);
    Matrix x(8, 5);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    const auto numeric =
        numerical_gradient(critic, [&](const DenseNet& n) { return gradient_penalty(n, x).value; }, 1e-5);
    worst = std::max(worst, relative_error(gradient_penalty(critic, x).tape, numeric));
  }
  std::string kinds_seen;
  for (const auto& [k, n] : covered) kinds_seen += (kinds_seen.empty() ? "" : ",") + k;
  const bool all_kinds = covered.size() == 7;
  return {worst <= kGradTol && all_kinds,
          "50 random networks + 10 penalty critics, worst relative error " + fmt(worst) + " (tol 1e-4), covering " +
              kinds_seen};
}

// --- 4 ------------------------------------------------------------------------

Outcome vgmm_round_trip() {
  Rng rng(404);
  Matrix x(5000, 3);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = rng.uniform() < 0.3 ? rng.normal(-4, 0.5) : rng.normal(3, 1.2);
    const double u = rng.uniform();
    x(i, 1) = u < 0.2 ? rng.normal(10, 1) : (u < 0.6 ? rng.normal(20, 2) : rng.normal(35, 3));
    x(i, 2) = rng.normal(0.01, 0.002);
  }
  const TabularDataset ds({"a", "b", "c"}, x, std::vector<std::string>(5000, "r"));
  const auto codec = fit_vgmm(ds, {}, 7);
  const auto enc = codec.encode(ds);
  const auto back = codec.decode(enc);
  double worst = 0;
  std::size_t in_range = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
      const double a = enc.rows(i, static_cast<Eigen::Index>(enc.layout[static_cast<std::size_t>(f)].alpha_offset));
      if (std::abs(a) >= 1.0) continue;
      worst = std::max(worst, std::abs(back.rows()(i, f) - x(i, f)));
      ++in_range;
    }
  }

  std::vector<double> bimodal(5000);
  Rng brng(405);
  for (auto& v : bimodal) v = brng.uniform() < 0.5 ? brng.normal(-5, 1) : brng.normal(5, 1);
  const auto mix = fit_feature_mixture(bimodal, {}, 9);
  std::string weights;
  bool weights_ok = mix.active_count() == 2;
  for (auto k : mix.active_modes()) {
    weights += (weights.empty() ? "" : ",") + fmt(mix.weights[k]);
    weights_ok = weights_ok && std::abs(mix.weights[k] - 0.5) <= kWeightTol;
  }
  return {worst <= kRoundTripTol && weights_ok,
          std::to_string(in_range) + " in-range values, max abs error " + fmt(worst) + " (tol 1e-9); bimodal fit " +
              std::to_string(mix.active_count()) + " modes, weights " + weights + " (0.5 +/- 0.05)"};
}

// --- 5 ------------------------------------------------------------------------

Outcome smote_geometry() {
  Rng rng(505);
  Matrix x(560, 5);
  std::vector<std::string> labels;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const bool minority = i >= 500;
    for (Eigen::Index j = 0; j < 5; ++j) x(i, j) = rng.normal(minority ? 2.0 : 0.0, 1.0);
    labels.push_back(minority ? "min" : "maj");
  }
  const TabularDataset ds({"a", "b", "c", "d", "e"}, x, labels);
  const auto out = smote(ds, {Strategy::smote, {{"min", 1060}}, 5, 55});
  const auto& src = ds.class_rows("min");
  std::vector<std::vector<std::size_t>> nn(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < src.size(); ++j) {
      if (j != i) {
        d.push_back({(x.row(static_cast<Eigen::Index>(src[i])) - x.row(static_cast<Eigen::Index>(src[j]))).squaredNorm(),
                     j});
      }
    }
    std::sort(d.begin(), d.end());
    for (std::size_t q = 0; q < 5; ++q) nn[i].push_back(src[d[q].second]);
  }
  std::size_t synthetic = 0, on_segment = 0;
  double worst = 0;
  for (std::size_t r = ds.n_rows(); r < out.n_rows(); ++r) {
    ++synthetic;
    const RowVector p = out.rows().row(static_cast<Eigen::Index>(r));
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < src.size(); ++i) {
      const RowVector a = x.row(static_cast<Eigen::Index>(src[i]));
      for (std::size_t j : nn[i]) {
        const RowVector ab = x.row(static_cast<Eigen::Index>(j)) - a;
        const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
        best = std::min(best, (p - (a + t * ab)).norm());
      }
    }
    worst = std::max(worst, best);
    on_segment += best <= kSegmentTol;
  }
  return {synthetic == 1000 && on_segment == 1000,
          std::to_string(on_segment) + "/" + std::to_string(synthetic) +
              " points on a source-neighbour segment, max distance " + fmt(worst) + " (tol 1e-9)"};
}

// --- 6, 7, 8, 10 --------------------------------------------------------------

ExperimentPlan crop_experiment() {
  std::ostringstream seeds;
  for (std::size_t i = 0; i < kReplicates.size(); ++i) seeds << (i ? "," : "") << kReplicates[i];
  return parse_plan(R"({"dataset": {"benchmark": "crop7"}, "split": {"train_fraction": 0.1},
    "resamplers": ["none", "rus", {"strategy": "ctgan", "add": 1000}], "classifiers": ["knn"],
    "seeds": [)" + seeds.str() + R"(], "seed": )" + std::to_string(kMasterSeed) + "}");
}

struct Averages {
  double micro = 0;
  double minority = 0;
  std::string per_seed;
};

Averages averages(const ExperimentReport& r, const std::string& resampler) {
  Averages a;
  for (auto s : kReplicates) {
    const auto& cell = r.cell(resampler, "knn", s);
    if (!cell.ok) throw Error("cell " + resampler + "/knn/seed " + std::to_string(s) + " failed: " + cell.error);
    double m = 0;
    for (const auto& c : r.minority_classes) m += cell.metrics.of(c).sensitivity;
    m /= static_cast<double>(r.minority_classes.size());
    a.micro += cell.metrics.micro_sensitivity;
    a.minority += m;
    a.per_seed += (a.per_seed.empty() ? "" : " ") + fmt(m, 3);
  }
  a.micro /= static_cast<double>(kReplicates.size());
  a.minority /= static_cast<double>(kReplicates.size());
  return a;
}

Outcome table5_direction(const ExperimentReport& r, double runtime) {
  const auto base = averages(r, "none"), gan = averages(r, "ctgan");
  const double drop = base.micro - gan.micro;
  const bool ok = base.minority <= kBaselineMinorityMax && gan.minority >= kCtganMinorityMin &&
                  drop <= kCtganMicroDropMax && runtime <= kBudgetExperiment;
  return {ok, "knn minority sensitivity " + fmt(base.minority, 3) + " -> " + fmt(gan.minority, 3) + " (<= 0.2 -> >= 0.7; per seed " +
                  base.per_seed + " -> " + gan.per_seed + "), micro " + fmt(base.micro) + " -> " + fmt(gan.micro) +
                  ", drop " + fmt(drop, 3) + " (<= 0.02); experiment " + fmt(runtime, 3) + " s (budget 600 s)"};
}

Outcome rus_tradeoff(const ExperimentReport& r) {
  const auto base = averages(r, "none"), rus = averages(r, "rus");
  const double drop = base.micro - rus.micro;
  return {rus.minority > base.minority && drop >= kRusMicroDropMin,
          "minority sensitivity " + fmt(base.minority, 3) + " -> " + fmt(rus.minority, 3) + ", micro " + fmt(base.micro) +
              " -> " + fmt(rus.micro) + ", drop " + fmt(drop, 3) + " (>= 0.05)"};
}

Outcome ctgan_fidelity(const ExperimentReport& r) {
  double min_mean = 1, min_std = 1;
  std::size_t records = 0;
  bool defined = true;
  for (const auto& f : r.fidelity) {
    if (f.resampler != "ctgan") continue;
    ++records;
    defined = defined && f.report.mean_correlation_defined && f.report.std_correlation_defined;
    min_mean = std::min(min_mean, f.report.mean_correlation);
    min_std = std::min(min_std, f.report.std_correlation);
  }
  const std::size_t expected = r.minority_classes.size() * kReplicates.size();
  return {records == expected && defined && min_mean >= kMeanCorrMin && min_std >= kStdCorrMin,
          std::to_string(records) + " minority/seed samples, min mean-vector r " + fmt(min_mean) + " (>= 0.9), min std-vector r " +
              fmt(min_std) + " (>= 0.8)"};
}

std::map<std::string, std::string> read_tree(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[std::filesystem::relative(e.path(), dir).generic_string()] = ss.str();
  }
  return out;
}

Outcome determinism(const std::filesystem::path& work, const ExperimentReport& first) {
  const auto a = work / "run-a", b = work / "run-b";
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
  write_bundle(first, a);
  write_bundle(run_experiment(crop_experiment()), b);
  const auto ta = read_tree(a), tb = read_tree(b);
  std::size_t differing = 0;
  for (const auto& [rel, content] : ta) {
    const auto it = tb.find(rel);
    differing += it == tb.end() || it->second != content;
  }
  differing += tb.size() > ta.size() ? tb.size() - ta.size() : 0;
  return {!ta.empty() && ta.size() == tb.size() && differing == 0,
          std::to_string(ta.size()) + " bundle files compared byte for byte, " + std::to_string(differing) + " differ"};
}

// --- 9 ------------------------------------------------------------------------

Outcome ir_bookkeeping() {
  const auto full = make_benchmark(crop7_spec());
  const auto before = imbalance_ratios(full);
  std::vector<std::string> minority;
  for (const auto& [c, ir] : before.imbalance_ratios) {
    if (ir <= 0.1) minority.push_back(c);
  }
  TrainConfig cfg;
  cfg.seed = 909;
  const auto model = train_ctgan(full, cfg);
  std::map<std::string, std::size_t> targets;
  for (const auto& c : minority) targets[c] = before.counts.at(c) + 1000;
  const auto augmented = augment_with_ctgan(model, full, targets, 910);
  const auto after = imbalance_ratios(augmented);

  // Counting oracle: tally labels directly.
  std::map<std::string, std::size_t> tally;
  for (const auto& l : augmented.labels()) ++tally[l];
  std::size_t majority = 0;
  for (const auto& [c, n] : tally) majority = std::max(majority, n);
  bool ok = minority.size() == 2;
  std::string detail;
  for (const auto& c : minority) {
    const double want = static_cast<double>(tally[c]) / static_cast<double>(majority);
    const double expected_ratio = static_cast<double>(before.counts.at(c) + 1000) / static_cast<double>(before.counts.at(c));
    const double ratio = after.imbalance_ratios.at(c) / before.imbalance_ratios.at(c);
    ok = ok && tally[c] == before.counts.at(c) + 1000 && after.imbalance_ratios.at(c) == want &&
         ratio == expected_ratio && after.imbalance_ratios.at(c) > before.imbalance_ratios.at(c);
    detail += (detail.empty() ? "" : ", ") + c + " IR " + fmt(before.imbalance_ratios.at(c)) + " -> " +
              fmt(after.imbalance_ratios.at(c)) + " (oracle " + fmt(want) + ", ratio x" + fmt(ratio) + ")";
  }
  return {ok, detail + "; asserted exact"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::filesystem::path work =
      argc > 1 ? std::filesystem::path(argv[1]) : std::filesystem::temp_directory_path() / "tabsynth-acceptance";
  std::filesystem::create_directories(work);

  int failed = 0;
  const auto report = [&](int id, const std::string& name, const Outcome& o) {
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  };

  report(1, "metric oracle", timed(kBudgetMetrics, metric_oracle));
  report(2, "critic/generator loss arithmetic", timed(kBudgetLosses, loss_arithmetic));
  report(3, "gradient fidelity", timed(kBudgetGradients, gradient_fidelity));
  report(4, "vgmm round trip", timed(kBudgetVgmm, vgmm_round_trip));
  report(5, "smote geometry", timed(0, smote_geometry));

  ExperimentReport experiment;
  double runtime = 0;
  std::string experiment_error;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    experiment = run_experiment(crop_experiment());
    runtime = seconds_since(t0);
  } catch (const std::exception& e) {
    experiment_error = e.what();
  }
  const auto guarded = [&](const std::function<Outcome()>& body) {
    if (!experiment_error.empty()) return Outcome{false, "experiment failed: " + experiment_error};
    try {
      return body();
    } catch (const std::exception& e) {
      return Outcome{false, std::string("exception: ") + e.what()};
    }
  };
  report(6, "ctgan minority recovery on crop7 (knn)", guarded([&] { return table5_direction(experiment, runtime); }));
  report(7, "rus trade-off on crop7 (knn)", guarded([&] { return rus_tradeoff(experiment); }));
  report(8, "ctgan synthetic fidelity on crop7", guarded([&] { return ctgan_fidelity(experiment); }));
  report(9, "imbalance ratio bookkeeping", timed(0, ir_bookkeeping));
  report(10, "report bundle determinism", guarded([&] { return determinism(work, experiment); }));

  std::printf("%d of 10 criteria passed\n", 10 - failed);
  return failed == 0 ? 0 : 1;
}
