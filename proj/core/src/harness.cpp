#include "tabsynth/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

namespace tabsynth {

using json = nlohmann::json;

// --- benchmark ---------------------------------------------------------------------

BenchmarkSpec crop7_spec(std::uint64_t seed) {
  const std::vector<std::string> names{"Corn", "Peas", "Canola", "Soybeans", "Oats", "Wheat", "Broadleaf"};
  const std::vector<std::size_t> counts{2000, 20, 1800, 1750, 1100, 2000, 20};
  constexpr std::size_t kFeatures = 20;
  constexpr double kNeighbourShift = 1.5;
  Rng rng(derive_seed(seed, "crop7"));

  std::vector<std::vector<double>> mean(names.size(), std::vector<double>(kFeatures));
  std::vector<std::vector<double>> sd(names.size(), std::vector<double>(kFeatures));
  for (auto& row : mean) {
    for (auto& v : row) v = rng.normal(0.0, 0.5);
  }
  // Peas sit beside Soybeans and Broadleaf beside Canola, shifted by a fixed
  // amount per feature in a random direction.
  const auto shadow = [&](std::size_t minority, std::size_t host) {
    for (std::size_t f = 0; f < kFeatures; ++f) {
      mean[minority][f] = mean[host][f] + (rng.uniform() < 0.5 ? -kNeighbourShift : kNeighbourShift);
    }
  };
  shadow(1, 3);
  shadow(6, 2);
  for (auto& row : sd) {
    for (auto& v : row) v = rng.uniform(0.6, 1.2);
  }
  std::vector<double> scale(kFeatures), offset(kFeatures);
  for (std::size_t f = 0; f < kFeatures; ++f) {
    scale[f] = std::exp(rng.uniform(std::log(0.1), std::log(10.0)));
    offset[f] = rng.uniform(-10.0, 10.0);
  }

  BenchmarkSpec spec;
  spec.n_features = kFeatures;
  spec.seed = seed;
  for (std::size_t c = 0; c < names.size(); ++c) {
    ClassSpec cs{names[c], counts[c], {}};
    for (std::size_t f = 0; f < kFeatures; ++f) {
      cs.features.push_back({{1.0, offset[f] + scale[f] * mean[c][f], scale[f] * sd[c][f]}});
    }
    spec.classes.push_back(std::move(cs));
  }
  return spec;
}

BenchmarkSpec parse_benchmark_name(const std::string& name, std::uint64_t seed) {
  if (name == "crop7") return crop7_spec(seed);
  throw Error("unknown benchmark preset '" + name + "' (available: crop7)");
}

TabularDataset make_benchmark(const BenchmarkSpec& spec) {
  if (spec.classes.empty()) throw Error("benchmark: no classes");
  if (spec.n_features < 1) throw Error("benchmark: n_features must be at least 1");
  std::set<std::string> seen;
  std::size_t total = 0;
  for (const auto& c : spec.classes) {
    if (c.name.empty() || !seen.insert(c.name).second) throw Error("benchmark: class names must be unique and non-empty");
    if (c.count < 1) throw Error("benchmark: class '" + c.name + "' has count 0");
    if (c.features.size() != spec.n_features) throw Error("benchmark: class '" + c.name + "' has wrong feature count");
    for (const auto& mix : c.features) {
      if (mix.empty()) throw Error("benchmark: empty mixture in class '" + c.name + "'");
      for (const auto& m : mix) {
        if (!(m.std > 0.0) || !(m.weight > 0.0) || !std::isfinite(m.mean)) {
          throw Error("benchmark: mixture components need std > 0, weight > 0 and a finite mean");
        }
      }
    }
    total += c.count;
  }
  std::vector<std::string> names;
  for (std::size_t f = 0; f < spec.n_features; ++f) {
    std::string n = std::to_string(f + 1);
    names.push_back("f" + std::string(n.size() < 2 ? 2 - n.size() : 0, '0') + n);
  }
  Matrix x(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(spec.n_features));
  std::vector<std::string> labels;
  Eigen::Index r = 0;
  for (const auto& c : spec.classes) {
    Rng rng(derive_seed(spec.seed, "class:" + c.name));
    for (std::size_t i = 0; i < c.count; ++i, ++r) {
      for (std::size_t f = 0; f < spec.n_features; ++f) {
        const auto& mix = c.features[f];
        double wsum = 0;
        for (const auto& m : mix) wsum += m.weight;
        double u = rng.uniform() * wsum;
        std::size_t k = 0;
        while (k + 1 < mix.size() && u >= mix[k].weight) u -= mix[k++].weight;
        x(r, static_cast<Eigen::Index>(f)) = rng.normal(mix[k].mean, mix[k].std);
      }
      labels.push_back(c.name);
    }
  }
  return TabularDataset(std::move(names), std::move(x), std::move(labels));
}

// --- standardization -------------------------------------------------------------

Standardizer Standardizer::fit(const TabularDataset& ds) {
  if (ds.empty()) throw Error("standardize: empty dataset");
  Standardizer s;
  const Matrix& x = ds.rows();
  const double n = static_cast<double>(x.rows());
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    const double m = x.col(f).sum() / n;
    const double var = (x.col(f).array() - m).square().sum() / n;
    s.mean.push_back(m);
    s.scale.push_back(var > 0.0 ? std::sqrt(var) : 1.0);
  }
  return s;
}

TabularDataset Standardizer::apply(const TabularDataset& ds) const {
  if (ds.n_features() != mean.size()) throw Error("standardize: width mismatch");
  Matrix x = ds.rows();
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    x.col(f) = (x.col(f).array() - mean[static_cast<std::size_t>(f)]) / scale[static_cast<std::size_t>(f)];
  }
  return ds.with_rows(std::move(x));
}

TabularDataset Standardizer::invert(const TabularDataset& ds) const {
  if (ds.n_features() != mean.size()) throw Error("standardize: width mismatch");
  Matrix x = ds.rows();
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    x.col(f) = x.col(f).array() * scale[static_cast<std::size_t>(f)] + mean[static_cast<std::size_t>(f)];
  }
  return ds.with_rows(std::move(x));
}

// --- random search ---------------------------------------------------------------

SearchSpace default_search_space(const std::string& kind) {
  using K = ParamRange::Kind;
  SearchSpace s;
  s.kind = kind;
  if (kind == "knn") {
    s.params = {{"k", K::integer, 1, 30, {}},
                {"weights", K::choice, 0, 0, {"uniform", "distance"}},
                {"metric", K::choice, 0, 0, {"manhattan", "euclidean"}}};
  } else if (kind == "rf") {
    s.params = {{"n_estimators", K::integer, 50, 200, {}},
                {"max_depth", K::integer, 4, 24, {}},
                {"max_features", K::real, 0.2, 1.0, {}},
                {"max_samples", K::real, 0.5, 1.0, {}}};
  } else if (kind == "gbdt") {
    s.params = {{"n_rounds", K::integer, 20, 150, {}},
                {"max_depth", K::integer, 2, 12, {}},
                {"learning_rate", K::log_real, 0.01, 0.5, {}},
                {"l2_lambda", K::log_real, 0.1, 10.0, {}},
                {"subsample", K::real, 0.5, 1.0, {}}};
  } else {
    throw Error("search: unknown classifier kind '" + kind + "'");
  }
  return s;
}

namespace {

std::string sample_value(const ParamRange& p, Rng& rng) {
  switch (p.kind) {
    case ParamRange::Kind::integer: {
      const auto lo = static_cast<long long>(std::llround(p.lo));
      const auto hi = static_cast<long long>(std::llround(p.hi));
      return std::to_string(lo + static_cast<long long>(rng.index(static_cast<std::size_t>(hi - lo + 1))));
    }
    case ParamRange::Kind::real: return format_double(rng.uniform(p.lo, p.hi));
    case ParamRange::Kind::log_real: return format_double(std::exp(rng.uniform(std::log(p.lo), std::log(p.hi))));
    case ParamRange::Kind::choice: return p.choices[rng.index(p.choices.size())];
  }
  return {};
}

void validate_space(const SearchSpace& s) {
  if (s.n_candidates < 1) throw Error("search: n_candidates must be at least 1");
  if (s.k_folds < 2) throw Error("search: k_folds must be at least 2");
  for (const auto& p : s.params) {
    if (p.kind == ParamRange::Kind::choice) {
      if (p.choices.empty()) throw Error("search: parameter '" + p.name + "' has no choices");
    } else if (!(p.lo <= p.hi) || (p.kind == ParamRange::Kind::log_real && p.lo <= 0.0)) {
      throw Error("search: parameter '" + p.name + "' has an invalid range");
    }
  }
}

double micro_accuracy(const std::vector<std::string>& truth, const std::vector<std::string>& pred) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += truth[i] == pred[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace

SearchResult random_search(const SearchSpace& space, const TabularDataset& train) {
  validate_space(space);
  const auto folds = stratified_kfold(train, space.k_folds, derive_seed(space.seed, "folds"));
  Rng rng(derive_seed(space.seed, "candidates"));
  SearchResult result;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < space.n_candidates; ++i) {
    SearchCandidate cand;
    std::string text = space.fixed;
    for (const auto& p : space.params) {
      if (!text.empty()) text += ',';
      text += p.name + "=" + sample_value(p, rng);
    }
    cand.text = text;
    cand.params = with_seed(parse_classifier_params(space.kind, text), derive_seed(space.seed, "model"));
    try {
      for (const auto& fold : folds) {
        const TabularDataset tr = train.subset(fold.train);
        const TabularDataset va = train.subset(fold.validation);
        const Classifier clf = Classifier::train(cand.params, tr);
        cand.fold_scores.push_back(micro_accuracy(va.labels(), clf.predict(va)));
      }
      cand.score = std::accumulate(cand.fold_scores.begin(), cand.fold_scores.end(), 0.0) /
                   static_cast<double>(cand.fold_scores.size());
    } catch (const Error& e) {
      cand.feasible = false;
      cand.error = e.what();
      cand.fold_scores.clear();
      cand.score = -std::numeric_limits<double>::infinity();
    }
    if (cand.feasible && cand.score > best) {
      best = cand.score;
      result.best = i;
    }
    result.candidates.push_back(std::move(cand));
  }
  if (!std::isfinite(best)) throw Error("search: no feasible candidate (" + result.candidates.front().error + ")");
  return result;
}

// --- plan parsing --------------------------------------------------------------------

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) throw Error("plan: unknown key '" + it.key() + "' in " + where);
  }
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number()) return format_double(v.get<double>());
  throw Error("plan: parameter values must be scalars");
}

std::string params_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (!v.is_object()) throw Error("plan: classifier params must be a string or an object");
  std::string out;
  for (auto it = v.begin(); it != v.end(); ++it) {
    if (!out.empty()) out += ',';
    out += it.key() + "=" + scalar_text(it.value());
  }
  return out;
}

ResamplerConfig parse_resampler(const json& j) {
  ResamplerConfig r;
  std::string strategy;
  if (j.is_string()) {
    strategy = j.get<std::string>();
  } else if (j.is_object()) {
    check_keys(j,
               {"name", "strategy", "k_neighbors", "targets", "add", "epochs", "batch_size", "learning_rate",
                "gumbel_tau", "gradient_penalty_weight", "noise_dim", "generator_widths", "discriminator_widths",
                "max_modes"},
               "resampler");
    strategy = j.at("strategy").get<std::string>();
    if (j.contains("name")) r.name = j["name"].get<std::string>();
  } else {
    throw Error("plan: resampler entries must be strings or objects");
  }
  if (r.name.empty()) r.name = strategy;
  if (strategy == "none") {
    r.kind = ResamplerConfig::Kind::none;
    if (j.is_object() && j.size() > (j.contains("name") ? 2u : 1u)) throw Error("plan: 'none' takes no options");
    return r;
  }
  const Strategy s = parse_strategy(strategy);
  r.plan.strategy = s;
  if (s == Strategy::ctgan) {
    r.kind = ResamplerConfig::Kind::ctgan;
    if (j.is_object()) {
      auto& c = r.ctgan;
      if (j.contains("add")) r.ctgan_add = j["add"].get<std::size_t>();
      if (j.contains("epochs")) c.epochs = j["epochs"].get<std::size_t>();
      if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
      if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
      if (j.contains("gumbel_tau")) c.gumbel_tau = j["gumbel_tau"].get<double>();
      if (j.contains("gradient_penalty_weight")) c.gradient_penalty_weight = j["gradient_penalty_weight"].get<double>();
      if (j.contains("noise_dim")) c.noise_dim = j["noise_dim"].get<std::size_t>();
      if (j.contains("generator_widths")) c.generator_widths = j["generator_widths"].get<std::vector<std::size_t>>();
      if (j.contains("discriminator_widths")) {
        c.discriminator_widths = j["discriminator_widths"].get<std::vector<std::size_t>>();
      }
      if (j.contains("max_modes")) c.vgmm.max_modes = j["max_modes"].get<std::size_t>();
      if (j.contains("k_neighbors") || j.contains("targets")) {
        throw Error("plan: ctgan resamplers take 'add', not 'k_neighbors' or 'targets'");
      }
    }
  } else {
    r.kind = ResamplerConfig::Kind::classic;
    if (j.is_object()) {
      if (j.contains("k_neighbors")) r.plan.k_neighbors = j["k_neighbors"].get<std::size_t>();
      if (j.contains("targets")) r.plan.targets = j["targets"].get<std::map<std::string, std::size_t>>();
      for (const char* k : {"add", "epochs", "batch_size", "learning_rate", "gumbel_tau", "gradient_penalty_weight",
                            "noise_dim", "generator_widths", "discriminator_widths", "max_modes"}) {
        if (j.contains(k)) throw Error(std::string("plan: option '") + k + "' only applies to ctgan");
      }
    }
  }
  return r;
}

SearchSpace parse_search(const json& j, const std::string& kind) {
  SearchSpace s = default_search_space(kind);
  if (j.is_boolean()) {
    if (!j.get<bool>()) throw Error("plan: use omission rather than \"search\": false");
    return s;
  }
  check_keys(j, {"n_candidates", "k_folds", "seed", "params", "fixed"}, "search");
  if (j.contains("n_candidates")) s.n_candidates = j["n_candidates"].get<std::size_t>();
  if (j.contains("k_folds")) s.k_folds = j["k_folds"].get<std::size_t>();
  if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("fixed")) s.fixed = params_text(j["fixed"]);
  if (j.contains("params")) {
    s.params.clear();
    for (const auto& p : j["params"]) {
      check_keys(p, {"name", "type", "range", "choices"}, "search parameter");
      ParamRange r;
      r.name = p.at("name").get<std::string>();
      const std::string type = p.value("type", p.contains("choices") ? "choice" : "real");
      if (type == "integer") r.kind = ParamRange::Kind::integer;
      else if (type == "real") r.kind = ParamRange::Kind::real;
      else if (type == "log_real") r.kind = ParamRange::Kind::log_real;
      else if (type == "choice") r.kind = ParamRange::Kind::choice;
      else throw Error("plan: unknown search parameter type '" + type + "'");
      if (r.kind == ParamRange::Kind::choice) {
        for (const auto& c : p.at("choices")) r.choices.push_back(scalar_text(c));
      } else {
        const auto range = p.at("range").get<std::vector<double>>();
        if (range.size() != 2) throw Error("plan: search range needs [low, high]");
        r.lo = range[0];
        r.hi = range[1];
      }
      s.params.push_back(std::move(r));
    }
  }
  validate_space(s);
  return s;
}

ClassifierConfig parse_classifier(const json& j) {
  ClassifierConfig c;
  std::string kind, params;
  if (j.is_string()) {
    kind = j.get<std::string>();
  } else if (j.is_object()) {
    check_keys(j, {"name", "kind", "params", "search"}, "classifier");
    kind = j.at("kind").get<std::string>();
    if (j.contains("name")) c.name = j["name"].get<std::string>();
    if (j.contains("params")) params = params_text(j["params"]);
    if (j.contains("search")) c.search = parse_search(j["search"], kind);
  } else {
    throw Error("plan: classifier entries must be strings or objects");
  }
  if (c.name.empty()) c.name = kind;
  c.params = parse_classifier_params(kind, params);
  if (c.search && !params.empty()) {
    c.search->fixed = c.search->fixed.empty() ? params : params + "," + c.search->fixed;
  }
  return c;
}

}  // namespace

ExperimentPlan parse_plan(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(std::string("plan: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("plan: top level must be an object");
  try {
    check_keys(j,
               {"dataset", "split", "standardize", "resample_standardized", "resamplers", "classifiers", "seeds", "seed", "outputs",
                "minority_classes", "minority_threshold", "fidelity_bins", "synthetic_count_sweep", "workers"},
               "plan");
    ExperimentPlan p;
    const json& d = j.at("dataset");
    check_keys(d, {"benchmark", "seed", "csv", "label"}, "dataset");
    if (d.contains("csv") == d.contains("benchmark")) throw Error("plan: dataset needs exactly one of csv/benchmark");
    if (d.contains("csv")) p.dataset.csv = d["csv"].get<std::string>();
    if (d.contains("benchmark")) p.dataset.benchmark = d["benchmark"].get<std::string>();
    if (d.contains("seed")) p.dataset.benchmark_seed = d["seed"].get<std::uint64_t>();
    if (d.contains("label")) p.dataset.label_column = d["label"].get<std::string>();
    if (j.contains("split")) {
      check_keys(j["split"], {"train_fraction", "stratified"}, "split");
      p.split.train_fraction = j["split"].value("train_fraction", p.split.train_fraction);
      p.split.stratified = j["split"].value("stratified", p.split.stratified);
    }
    p.standardize = j.value("standardize", p.standardize);
    p.resample_standardized = j.value("resample_standardized", p.resample_standardized);
    for (const auto& r : j.at("resamplers")) p.resamplers.push_back(parse_resampler(r));
    for (const auto& c : j.at("classifiers")) p.classifiers.push_back(parse_classifier(c));
    if (j.contains("seeds")) p.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    p.master_seed = j.value("seed", p.master_seed);
    if (j.contains("outputs")) p.outputs = j["outputs"].get<std::string>();
    if (j.contains("minority_classes")) p.minority_classes = j["minority_classes"].get<std::vector<std::string>>();
    p.minority_threshold = j.value("minority_threshold", p.minority_threshold);
    p.fidelity_bins = j.value("fidelity_bins", p.fidelity_bins);
    if (j.contains("synthetic_count_sweep")) {
      p.synthetic_count_sweep = j["synthetic_count_sweep"].get<std::vector<std::size_t>>();
    }
    p.workers = j.value("workers", p.workers);
    validate_plan(p);
    return p;
  } catch (const json::exception& e) {
    throw Error(std::string("plan: ") + e.what());
  }
}

ExperimentPlan load_plan(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("plan: cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_plan(ss.str());
}

void validate_plan(const ExperimentPlan& p) {
  if (p.resamplers.empty()) throw Error("plan: at least one resampler is required");
  if (p.classifiers.empty()) throw Error("plan: at least one classifier is required");
  if (p.seeds.empty()) throw Error("plan: at least one seed is required");
  if (p.workers < 1) throw Error("plan: workers must be at least 1");
  if (p.fidelity_bins < 1) throw Error("plan: fidelity_bins must be at least 1");
  std::set<std::string> names;
  const auto check_name = [&](const std::string& n, const char* what) {
    if (n.empty() || n.find_first_not_of("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-.") !=
                         std::string::npos) {
      throw Error(std::string("plan: ") + what + " name '" + n + "' must use [A-Za-z0-9_.-]");
    }
  };
  for (const auto& r : p.resamplers) {
    check_name(r.name, "resampler");
    if (!names.insert(r.name).second) throw Error("plan: duplicate resampler name '" + r.name + "'");
  }
  names.clear();
  for (const auto& c : p.classifiers) {
    check_name(c.name, "classifier");
    if (!names.insert(c.name).second) throw Error("plan: duplicate classifier name '" + c.name + "'");
  }
  if (std::set<std::uint64_t>(p.seeds.begin(), p.seeds.end()).size() != p.seeds.size()) {
    throw Error("plan: duplicate seeds");
  }
  if (!p.synthetic_count_sweep.empty() &&
      std::none_of(p.resamplers.begin(), p.resamplers.end(),
                   [](const auto& r) { return r.kind == ResamplerConfig::Kind::ctgan; })) {
    throw Error("plan: synthetic_count_sweep requires a ctgan resampler");
  }
}

TabularDataset load_source(const DatasetSource& src) {
  if (!src.csv.empty()) return load_csv(src.csv, src.label_column);
  return make_benchmark(parse_benchmark_name(src.benchmark, src.benchmark_seed));
}

// --- runner -----------------------------------------------------------------------

bool ExperimentReport::any_failed() const {
  return std::any_of(cells.begin(), cells.end(), [](const CellResult& c) { return !c.ok; });
}

const CellResult& ExperimentReport::cell(const std::string& resampler, const std::string& classifier,
                                         std::uint64_t seed) const {
  for (const auto& c : cells) {
    if (c.resampler == resampler && c.classifier == classifier && c.seed == seed) return c;
  }
  throw Error("report: no cell " + resampler + "/" + classifier + "/" + std::to_string(seed));
}

namespace {

template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct Replicate {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  TabularDataset train, test;
  std::uint64_t test_hash = 0;
};

// Resampled training data of one (resampler, seed) pair.
struct Stage {
  std::size_t resampler = 0, replicate = 0;
  bool ok = false;
  std::string error;
  TabularDataset train_raw;  // resampled, original feature scale
  TabularDataset train, test;  // classifier inputs
  std::optional<CtganModel> model;
  std::vector<FidelityRecord> fidelity;
};

struct Context {
  const ExperimentPlan& plan;
  TabularDataset full;
  std::vector<std::string> classes;
  std::vector<std::string> minority;
  std::vector<Replicate> reps;
};

Context prepare(const ExperimentPlan& plan) {
  validate_plan(plan);
  Context ctx{plan, load_source(plan.dataset), {}, {}, {}};
  ctx.classes = ctx.full.classes();
  std::sort(ctx.classes.begin(), ctx.classes.end());
  if (plan.minority_classes.empty()) {
    for (const auto& [c, ir] : imbalance_ratios(ctx.full).imbalance_ratios) {
      if (ir <= plan.minority_threshold) ctx.minority.push_back(c);
    }
  } else {
    for (const auto& c : plan.minority_classes) {
      if (!ctx.full.has_class(c)) throw Error("plan: minority class '" + c + "' not in the dataset");
      ctx.minority.push_back(c);
    }
  }
  for (auto s : plan.seeds) {
    Replicate r;
    r.seed = s;
    r.stream = mix_seed(plan.master_seed, s);
    SplitSpec sp = plan.split;
    sp.seed = derive_seed(r.stream, "split");
    std::tie(r.train, r.test) = stratified_split(ctx.full, sp);
    r.test_hash = content_hash(r.test);
    ctx.reps.push_back(std::move(r));
  }
  return ctx;
}

std::map<std::string, std::size_t> class_counts(const TabularDataset& ds) {
  std::map<std::string, std::size_t> m;
  for (const auto& c : ds.classes()) m[c] = ds.class_rows(c).size();
  return m;
}

std::map<std::string, std::size_t> minority_targets(const Context& ctx, const TabularDataset& train, std::size_t add) {
  std::map<std::string, std::size_t> t;
  for (const auto& m : ctx.minority) {
    if (train.has_class(m)) t[m] = train.class_rows(m).size() + add;
  }
  return t;
}

void finish_stage(const Context& ctx, Stage& st, const ResamplerConfig& rc, const Replicate& rep) {
  const std::size_t original = rep.train.n_rows();
  if (rc.kind != ResamplerConfig::Kind::none && st.train_raw.n_rows() > original) {
    std::vector<std::size_t> extra(st.train_raw.n_rows() - original);
    std::iota(extra.begin(), extra.end(), original);
    const TabularDataset synth_all = st.train_raw.subset(extra);
    for (const auto& m : ctx.minority) {
      if (!synth_all.has_class(m)) continue;
      const TabularDataset synth = synth_all.subset(synth_all.class_rows(m));
      const TabularDataset real = ctx.full.subset(ctx.full.class_rows(m));
      st.fidelity.push_back({rc.name, rep.seed, m, fidelity(real, synth, ctx.plan.fidelity_bins)});
    }
  }
  if (ctx.plan.standardize) {
    const Standardizer sd = Standardizer::fit(rep.train);
    st.train = sd.apply(st.train_raw);
    st.test = sd.apply(rep.test);
  } else {
    st.train = st.train_raw;
    st.test = rep.test;
  }
}

void run_stage(const Context& ctx, Stage& st, const ProgressLog& log) {
  const ResamplerConfig& rc = ctx.plan.resamplers[st.resampler];
  const Replicate& rep = ctx.reps[st.replicate];
  try {
    switch (rc.kind) {
      case ResamplerConfig::Kind::none: st.train_raw = rep.train; break;
      case ResamplerConfig::Kind::classic: {
        ResamplePlan p = rc.plan;
        p.seed = derive_seed(rep.stream, "resample:" + rc.name);
        if (ctx.plan.resample_standardized && p.strategy != Strategy::rus) {
          // Originals stay bit-exact; only the appended rows are mapped back.
          const Standardizer sd = Standardizer::fit(rep.train);
          const TabularDataset out = resample(sd.apply(rep.train), p);
          std::vector<std::size_t> extra(out.n_rows() - rep.train.n_rows());
          std::iota(extra.begin(), extra.end(), rep.train.n_rows());
          st.train_raw = rep.train.concat(sd.invert(out.subset(extra)));
        } else {
          st.train_raw = resample(rep.train, p);
        }
        break;
      }
      case ResamplerConfig::Kind::ctgan: {
        TrainConfig cfg = rc.ctgan;
        cfg.seed = derive_seed(rep.stream, "ctgan:" + rc.name);
        if (log) log("training ctgan '" + rc.name + "' for seed " + std::to_string(rep.seed));
        st.model = train_ctgan(rep.train, cfg);
        st.train_raw = augment_with_ctgan(*st.model, rep.train, minority_targets(ctx, rep.train, rc.ctgan_add),
                                          derive_seed(rep.stream, "generate:" + rc.name));
        break;
      }
    }
    finish_stage(ctx, st, rc, rep);
    st.ok = true;
  } catch (const std::exception& e) {
    st.ok = false;
    st.error = e.what();
  }
}

CellResult evaluate_cell(const Context& ctx, const Stage& st, const ClassifierConfig& cc, const TabularDataset& train,
                         const std::string& resampler_name) {
  const Replicate& rep = ctx.reps[st.replicate];
  CellResult cell;
  cell.resampler = resampler_name;
  cell.classifier = cc.name;
  cell.seed = rep.seed;
  cell.test_rows = rep.test.n_rows();
  try {
    if (!st.ok) throw Error("resampler failed: " + st.error);
    cell.train_counts = class_counts(train);
    ClassifierParams params = with_seed(cc.params, derive_seed(rep.stream, "classifier:" + cc.name));
    if (cc.search) {
      SearchSpace space = *cc.search;
      space.seed = mix_seed(space.seed, derive_seed(rep.stream, "search:" + cc.name));
      params = random_search(space, train).best_candidate().params;
      params = with_seed(params, derive_seed(rep.stream, "classifier:" + cc.name));
    }
    cell.classifier_params = format_classifier_params(params);
    const Classifier clf = Classifier::train(params, train);
    const auto pred = clf.predict(st.test);
    cell.confusion = confusion(st.test.labels(), pred, ctx.classes);
    cell.metrics = class_metrics(cell.confusion);
    if (content_hash(rep.test) != rep.test_hash) throw Error("test split changed during the cell");
    cell.ok = true;
  } catch (const std::exception& e) {
    cell.ok = false;
    cell.error = e.what();
  }
  return cell;
}

std::vector<SweepRow> run_sweep(const Context& ctx, const Stage& st, const ResamplerConfig& rc,
                                const ClassifierConfig& cc, const std::vector<std::size_t>& counts,
                                const ProgressLog& log) {
  const Replicate& rep = ctx.reps[st.replicate];
  if (!st.ok || !st.model) throw Error("sweep: ctgan stage failed: " + st.error);
  std::vector<SweepRow> rows;
  std::optional<Standardizer> sd;
  if (ctx.plan.standardize) sd = Standardizer::fit(rep.train);
  for (std::size_t count : counts) {
    if (log) log("sweep: " + std::to_string(count) + " synthetic rows per minority class");
    const TabularDataset aug = augment_with_ctgan(*st.model, rep.train, minority_targets(ctx, rep.train, count),
                                                  derive_seed(rep.stream, "generate:" + rc.name));
    const TabularDataset train = sd ? sd->apply(aug) : aug;
    const CellResult cell = evaluate_cell(ctx, st, cc, train, rc.name);
    if (!cell.ok) throw Error("sweep: count " + std::to_string(count) + " failed: " + cell.error);
    SweepRow row;
    row.count = count;
    row.train_rows = aug.n_rows();
    for (const auto& m : ctx.minority) row.minority_f1[m] = cell.metrics.of(m).f1;
    row.macro_f1 = cell.metrics.macro_f1;
    row.micro_sensitivity = cell.metrics.micro_sensitivity;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string num(double v) { return std::isnan(v) ? "nan" : format_double(v); }

std::string cell_dir(const std::string& r, const std::string& c, std::uint64_t seed) {
  return "cells/" + r + "/" + c + "/seed-" + std::to_string(seed) + "/";
}

void render(const Context& ctx, ExperimentReport& rep, const std::vector<Stage>& stages) {
  auto& files = rep.files;
  {
    std::ostringstream o;
    o << "classes," << ctx.classes.size() << '\n';
    for (const auto& c : ctx.classes) o << "class," << c << '\n';
    for (const auto& c : ctx.minority) o << "minority," << c << '\n';
    o << "master_seed," << ctx.plan.master_seed << '\n';
    for (auto s : ctx.plan.seeds) o << "seed," << s << '\n';
    o << "train_fraction," << num(ctx.plan.split.train_fraction) << '\n';
    o << "standardize," << (ctx.plan.standardize ? "true" : "false") << '\n';
    o << "resample_standardized," << (ctx.plan.resample_standardized ? "true" : "false") << '\n';
    files["manifest.csv"] = o.str();
  }
  {
    std::ostringstream o;
    o << "resampler,classifier,seed,status,train_rows,test_rows,micro_sensitivity,macro_sensitivity,macro_g_mean,"
         "macro_f1,minority_sensitivity,classifier_params,error\n";
    for (const auto& c : rep.cells) {
      std::size_t train_rows = 0;
      for (const auto& [k, v] : c.train_counts) train_rows += v;
      o << c.resampler << ',' << c.classifier << ',' << c.seed << ',' << (c.ok ? "ok" : "failed") << ',' << train_rows
        << ',' << c.test_rows << ',';
      if (c.ok) {
        double ms = 0;
        for (const auto& m : ctx.minority) ms += c.metrics.of(m).sensitivity;
        ms = ctx.minority.empty() ? std::numeric_limits<double>::quiet_NaN() : ms / static_cast<double>(ctx.minority.size());
        o << num(c.metrics.micro_sensitivity) << ',' << num(c.metrics.macro_sensitivity) << ','
          << num(c.metrics.macro_g_mean) << ',' << num(c.metrics.macro_f1) << ',' << num(ms) << ",\""
          << c.classifier_params << "\",";
      } else {
        std::string err = c.error;
        std::replace(err.begin(), err.end(), '"', '\'');
        std::replace(err.begin(), err.end(), '\n', ' ');
        o << ",,,,,,\"" << err << '"';
      }
      o << '\n';
    }
    files["summary.csv"] = o.str();
  }
  for (const auto& c : rep.cells) {
    if (!c.ok) continue;
    const std::string d = cell_dir(c.resampler, c.classifier, c.seed);
    files[d + "metrics.csv"] = metrics_csv(c.metrics);
    files[d + "confusion.csv"] = confusion_csv(c.confusion);
    files[d + "confusion_normalized.csv"] = confusion_normalized_csv(c.confusion);
    std::ostringstream o;
    o << "class,train_count\n";
    for (const auto& [k, v] : c.train_counts) o << k << ',' << v << '\n';
    files[d + "train_counts.csv"] = o.str();
  }
  // Seed-averaged grids: rows (classifier, resampler), one column per class.
  const auto grid = [&](auto per_class, auto total, const std::string& total_name) {
    std::ostringstream o;
    o << "classifier,resampler";
    for (const auto& c : ctx.classes) o << ',' << c;
    o << ',' << total_name << ",seeds\n";
    for (const auto& cc : ctx.plan.classifiers) {
      for (const auto& rc : ctx.plan.resamplers) {
        std::vector<double> acc(ctx.classes.size() + 1, 0.0);
        std::size_t n = 0;
        for (const auto& c : rep.cells) {
          if (!c.ok || c.classifier != cc.name || c.resampler != rc.name) continue;
          for (std::size_t i = 0; i < ctx.classes.size(); ++i) acc[i] += per_class(c.metrics.per_class[i]);
          acc.back() += total(c.metrics);
          ++n;
        }
        o << cc.name << ',' << rc.name;
        for (double v : acc) o << ',' << (n ? num(v / static_cast<double>(n)) : "");
        o << ',' << n << '\n';
      }
    }
    return o.str();
  };
  files["sensitivity_grid.csv"] = grid([](const ClassMetric& m) { return m.sensitivity; },
                                       [](const MetricSummary& s) { return s.micro_sensitivity; }, "total");
  files["gmean_table.csv"] = grid([](const ClassMetric& m) { return m.g_mean; },
                                  [](const MetricSummary& s) { return s.macro_g_mean; }, "macro");
  files["f1_table.csv"] = grid([](const ClassMetric& m) { return m.f1; },
                               [](const MetricSummary& s) { return s.macro_f1; }, "macro");
  for (const auto& f : rep.fidelity) {
    const std::string d = "fidelity/" + f.resampler + "/seed-" + std::to_string(f.seed) + "/" + f.class_name + "/";
    files[d + "report.txt"] = fidelity_text(f.report);
    files[d + "features.csv"] = fidelity_summary_csv(f.report);
    for (const auto& ff : f.report.features) files[d + "hist/" + ff.name + ".csv"] = histogram_csv(ff);
  }
  for (const auto& st : stages) {
    if (!st.ok || !st.model) continue;
    const auto& rc = ctx.plan.resamplers[st.resampler];
    const auto& r = ctx.reps[st.replicate];
    const std::string d = "ctgan/" + rc.name + "/seed-" + std::to_string(r.seed) + "/";
    std::ostringstream log;
    log << "epoch,discriminator_loss,generator_loss\n";
    for (const auto& l : st.model->training_log) {
      log << l.epoch << ',' << num(l.discriminator_loss) << ',' << num(l.generator_loss) << '\n';
    }
    files[d + "loss_log.csv"] = log.str();
    const auto before = imbalance_ratios(r.train);
    const auto after = imbalance_ratios(st.train_raw);
    std::ostringstream ir;
    ir << "class,count_before,ir_before,count_after,ir_after\n";
    for (const auto& [c, n] : before.counts) {
      ir << c << ',' << n << ',' << num(before.imbalance_ratios.at(c)) << ',' << after.counts.at(c) << ','
         << num(after.imbalance_ratios.at(c)) << '\n';
    }
    files[d + "ir.csv"] = ir.str();
  }
  if (!rep.sweep.empty()) files["sweep.csv"] = sweep_csv(rep.sweep, ctx.minority);
}

}  // namespace

ExperimentReport run_experiment(const ExperimentPlan& plan, const ProgressLog& log) {
  const Context ctx = prepare(plan);
  std::vector<Stage> stages;
  for (std::size_t r = 0; r < plan.resamplers.size(); ++r) {
    for (std::size_t s = 0; s < ctx.reps.size(); ++s) {
      Stage st;
      st.resampler = r;
      st.replicate = s;
      stages.push_back(std::move(st));
    }
  }
  parallel_for(stages.size(), plan.workers, [&](std::size_t i) { run_stage(ctx, stages[i], log); });

  ExperimentReport report;
  report.classes = ctx.classes;
  report.minority_classes = ctx.minority;
  report.cells.resize(stages.size() * plan.classifiers.size());
  parallel_for(report.cells.size(), plan.workers, [&](std::size_t i) {
    const Stage& st = stages[i / plan.classifiers.size()];
    const ClassifierConfig& cc = plan.classifiers[i % plan.classifiers.size()];
    report.cells[i] = evaluate_cell(ctx, st, cc, st.train, plan.resamplers[st.resampler].name);
    if (log) {
      const auto& c = report.cells[i];
      log("cell " + c.resampler + "/" + c.classifier + "/seed-" + std::to_string(c.seed) + ": " +
          (c.ok ? "ok" : "failed: " + c.error));
    }
  });
  for (const auto& st : stages) report.fidelity.insert(report.fidelity.end(), st.fidelity.begin(), st.fidelity.end());

  if (!plan.synthetic_count_sweep.empty()) {
    for (const auto& st : stages) {
      if (plan.resamplers[st.resampler].kind != ResamplerConfig::Kind::ctgan || st.replicate != 0) continue;
      try {
        report.sweep =
            run_sweep(ctx, st, plan.resamplers[st.resampler], plan.classifiers.front(), plan.synthetic_count_sweep, log);
      } catch (const std::exception& e) {
        CellResult failed;
        failed.resampler = plan.resamplers[st.resampler].name + "-sweep";
        failed.classifier = plan.classifiers.front().name;
        failed.seed = ctx.reps[0].seed;
        failed.error = e.what();
        report.cells.push_back(std::move(failed));
      }
      break;
    }
  }
  render(ctx, report, stages);
  return report;
}

std::vector<SweepRow> sweep_synthetic_counts(const ExperimentPlan& plan, const std::vector<std::size_t>& counts,
                                             const ProgressLog& log) {
  if (counts.empty()) throw Error("sweep: empty count list");
  const Context ctx = prepare(plan);
  for (std::size_t r = 0; r < plan.resamplers.size(); ++r) {
    if (plan.resamplers[r].kind != ResamplerConfig::Kind::ctgan) continue;
    Stage st;
    st.resampler = r;
    st.replicate = 0;
    run_stage(ctx, st, log);
    return run_sweep(ctx, st, plan.resamplers[r], plan.classifiers.front(), counts, log);
  }
  throw Error("sweep: the plan has no ctgan resampler");
}

std::string sweep_csv(const std::vector<SweepRow>& rows, const std::vector<std::string>& minority) {
  std::ostringstream o;
  o << "count,train_rows";
  for (const auto& m : minority) o << ',' << m << "_f1";
  o << ",macro_f1,micro_sensitivity\n";
  for (const auto& r : rows) {
    o << r.count << ',' << r.train_rows;
    for (const auto& m : minority) o << ',' << num(r.minority_f1.at(m));
    o << ',' << num(r.macro_f1) << ',' << num(r.micro_sensitivity) << '\n';
  }
  return o.str();
}

void write_bundle(const ExperimentReport& report, const std::filesystem::path& dir) {
  for (const auto& [rel, content] : report.files) {
    const auto path = dir / rel;
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("report: cannot write '" + path.string() + "'");
    out << content;
  }
}

}  // namespace tabsynth
