#include "tabsynth/classify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace tabsynth {

namespace {

constexpr double kGainTolerance = 1e-12;

std::vector<std::string> sorted_classes(const TabularDataset& ds) {
  auto c = ds.classes();
  std::sort(c.begin(), c.end());
  return c;
}

std::vector<int> label_ids(const TabularDataset& ds, const std::vector<std::string>& classes) {
  std::vector<int> ids;
  ids.reserve(ds.n_rows());
  for (const auto& l : ds.labels()) {
    ids.push_back(static_cast<int>(std::lower_bound(classes.begin(), classes.end(), l) - classes.begin()));
  }
  return ids;
}

int argmax_first(const std::vector<double>& v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

void check_fraction(double v, const char* name) {
  if (!(v > 0.0 && v <= 1.0)) throw Error(std::string("classifier: ") + name + " must lie in (0, 1]");
}

std::size_t ceil_count(double fraction, std::size_t n) {
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9)), 1, n);
}

// Gini classification statistics.
struct GiniPolicy {
  struct Acc {
    std::vector<double> counts;
    double n = 0.0;
  };
  const std::vector<int>* y;
  std::size_t n_classes;

  Acc make() const { return {std::vector<double>(n_classes, 0.0), 0.0}; }
  void add(Acc& a, std::size_t s) const {
    a.counts[static_cast<std::size_t>((*y)[s])] += 1.0;
    a.n += 1.0;
  }
  void remove(Acc& a, std::size_t s) const {
    a.counts[static_cast<std::size_t>((*y)[s])] -= 1.0;
    a.n -= 1.0;
  }
  bool pure(const Acc& a) const { return gini(a.counts) <= 0.0; }
  bool valid(const Acc& l, const Acc& r) const { return l.n > 0.0 && r.n > 0.0; }
  double gain(const Acc& l, const Acc& r, const Acc& p) const {
    return gini(p.counts) - (l.n / p.n) * gini(l.counts) - (r.n / p.n) * gini(r.counts);
  }
  std::vector<double> leaf(const Acc& a) const {
    std::vector<double> v = a.counts;
    for (auto& c : v) c /= a.n;
    return v;
  }
};

// Second-order regression statistics (gradient, hessian).
struct NewtonPolicy {
  struct Acc {
    double g = 0.0, h = 0.0;
  };
  const std::vector<double>* grad;
  const std::vector<double>* hess;
  double lambda;
  double min_child_weight;

  Acc make() const { return {}; }
  void add(Acc& a, std::size_t s) const {
    a.g += (*grad)[s];
    a.h += (*hess)[s];
  }
  void remove(Acc& a, std::size_t s) const {
    a.g -= (*grad)[s];
    a.h -= (*hess)[s];
  }
  bool pure(const Acc&) const { return false; }
  bool valid(const Acc& l, const Acc& r) const { return l.h >= min_child_weight && r.h >= min_child_weight; }
  double score(const Acc& a) const { return a.g * a.g / (a.h + lambda); }
  double gain(const Acc& l, const Acc& r, const Acc& p) const { return 0.5 * (score(l) + score(r) - score(p)); }
  std::vector<double> leaf(const Acc& a) const { return {leaf_weight(a.g, a.h, lambda)}; }
};

template <class Policy>
DecisionTree grow_tree(const Matrix& x, const std::vector<std::size_t>& samples, const std::vector<std::size_t>& pool,
                       std::size_t n_candidates, std::size_t max_depth, Rng& rng, const Policy& pol) {
  if (max_depth < 1) throw Error("decision tree: max_depth must be at least 1");
  if (samples.empty()) throw Error("decision tree: no training samples");
  DecisionTree tree;
  tree.max_depth = max_depth;
  struct Work {
    int node;
    std::vector<std::size_t> samples;
    std::size_t depth;
  };
  std::vector<Work> stack;
  tree.nodes.emplace_back();
  stack.push_back({0, samples, 0});
  std::vector<std::pair<double, std::size_t>> sorted;
  std::vector<std::size_t> features;

  while (!stack.empty()) {
    Work w = std::move(stack.back());
    stack.pop_back();
    auto parent = pol.make();
    for (auto s : w.samples) pol.add(parent, s);
    const auto as_leaf = [&] { tree.nodes[static_cast<std::size_t>(w.node)].value = pol.leaf(parent); };
    if (w.depth >= max_depth || w.samples.size() < 2 || pol.pure(parent)) {
      as_leaf();
      continue;
    }
    features = pool;
    if (n_candidates < features.size()) {
      for (std::size_t i = 0; i < n_candidates; ++i) std::swap(features[i], features[i + rng.index(features.size() - i)]);
      features.resize(n_candidates);
    }
    std::sort(features.begin(), features.end());

    double best_gain = kGainTolerance;
    int best_feature = -1;
    double best_threshold = 0.0;
    for (auto f : features) {
      sorted.clear();
      for (auto s : w.samples) sorted.emplace_back(x(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(f)), s);
      std::sort(sorted.begin(), sorted.end());
      auto left = pol.make();
      auto right = parent;
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        pol.add(left, sorted[i].second);
        pol.remove(right, sorted[i].second);
        if (sorted[i].first == sorted[i + 1].first) continue;
        if (!pol.valid(left, right)) continue;
        const double g = pol.gain(left, right, parent);
        if (g > best_gain + kGainTolerance || (best_feature < 0 && g > best_gain)) {
          best_gain = g;
          best_feature = static_cast<int>(f);
          double mid = 0.5 * (sorted[i].first + sorted[i + 1].first);
          if (mid >= sorted[i + 1].first) mid = sorted[i].first;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0) {
      as_leaf();
      continue;
    }
    std::vector<std::size_t> ls, rs;
    for (auto s : w.samples) {
      (x(static_cast<Eigen::Index>(s), best_feature) <= best_threshold ? ls : rs).push_back(s);
    }
    const int li = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    const int ri = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    auto& node = tree.nodes[static_cast<std::size_t>(w.node)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = li;
    node.right = ri;
    node.value = pol.leaf(parent);
    stack.push_back({ri, std::move(rs), w.depth + 1});
    stack.push_back({li, std::move(ls), w.depth + 1});
  }
  return tree;
}

std::vector<std::size_t> all_features(std::size_t n) {
  std::vector<std::size_t> f(n);
  std::iota(f.begin(), f.end(), 0);
  return f;
}

}  // namespace

// --- trees ----------------------------------------------------------------------

double gini(const std::vector<double>& counts) {
  double n = std::accumulate(counts.begin(), counts.end(), 0.0);
  if (n <= 0.0) return 0.0;
  double s = 0.0;
  for (double c : counts) s += (c / n) * (c / n);
  return std::max(0.0, 1.0 - s);
}

double leaf_weight(double sum_grad, double sum_hess, double lambda) { return -sum_grad / (sum_hess + lambda); }

const std::vector<double>& DecisionTree::leaf_value(const double* row) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    i = static_cast<std::size_t>(row[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right);
  }
  return nodes[i].value;
}

std::size_t DecisionTree::depth() const {
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
  std::size_t best = 0;
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    if (nodes[i].feature >= 0) {
      stack.push_back({static_cast<std::size_t>(nodes[i].left), d + 1});
      stack.push_back({static_cast<std::size_t>(nodes[i].right), d + 1});
    }
  }
  return best;
}

DecisionTree train_gini_tree(const Matrix& x, const std::vector<int>& y, std::size_t n_classes,
                             const std::vector<std::size_t>& samples, const TreeParams& params, Rng& rng) {
  check_fraction(params.max_features, "max_features");
  const std::size_t nf = static_cast<std::size_t>(x.cols());
  GiniPolicy pol{&y, n_classes};
  return grow_tree(x, samples, all_features(nf), ceil_count(params.max_features, nf), params.max_depth, rng, pol);
}

// --- KNN --------------------------------------------------------------------------

double knn_distance(KnnMetric metric, const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  if (metric == KnnMetric::manhattan) {
    for (std::size_t i = 0; i < n; ++i) s += std::abs(a[i] - b[i]);
    return s;
  }
  for (std::size_t i = 0; i < n; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

KnnModel knn_train(const TabularDataset& ds, const KnnParams& params) {
  if (ds.empty()) throw Error("knn: empty training set");
  if (params.k < 1) throw Error("knn: k must be at least 1");
  if (params.k > ds.n_rows()) {
    throw Error("knn: k=" + std::to_string(params.k) + " exceeds the " + std::to_string(ds.n_rows()) + " training rows");
  }
  KnnModel m;
  m.params = params;
  m.classes = sorted_classes(ds);
  m.rows = ds.rows();
  m.labels = label_ids(ds, m.classes);
  return m;
}

std::vector<int> knn_predict_ids(const KnnModel& m, const Matrix& rows) {
  if (m.labels.empty()) throw Error("knn: empty training set");
  if (rows.cols() != m.rows.cols()) throw Error("knn: query width does not match training width");
  const std::size_t n = m.labels.size();
  const std::size_t width = static_cast<std::size_t>(m.rows.cols());
  const std::size_t k = std::min(m.params.k, n);
  struct Cand {
    double d;
    int label;
    std::size_t row;
  };
  // Total order independent of training-row order: distance, label, then
  // the row values themselves.
  auto less = [&](const Cand& a, const Cand& b) {
    if (a.d != b.d) return a.d < b.d;
    if (a.label != b.label) return a.label < b.label;
    const double* ra = m.rows.row(static_cast<Eigen::Index>(a.row)).data();
    const double* rb = m.rows.row(static_cast<Eigen::Index>(b.row)).data();
    return std::lexicographical_compare(ra, ra + width, rb, rb + width);
  };
  std::vector<Cand> cand(n);
  std::vector<double> votes(m.classes.size());
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(rows.rows()));
  for (Eigen::Index q = 0; q < rows.rows(); ++q) {
    const double* qp = rows.row(q).data();
    for (std::size_t i = 0; i < n; ++i) {
      cand[i] = {knn_distance(m.params.metric, qp, m.rows.row(static_cast<Eigen::Index>(i)).data(), width), m.labels[i], i};
    }
    std::nth_element(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k - 1), cand.end(), less);
    std::sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), less);
    std::fill(votes.begin(), votes.end(), 0.0);
    if (cand[0].d == 0.0) {
      for (std::size_t i = 0; i < k && cand[i].d == 0.0; ++i) votes[static_cast<std::size_t>(cand[i].label)] += 1.0;
    } else {
      for (std::size_t i = 0; i < k; ++i) {
        const double w = m.params.weighting == KnnWeighting::distance ? 1.0 / cand[i].d : 1.0;
        votes[static_cast<std::size_t>(cand[i].label)] += w;
      }
    }
    out.push_back(argmax_first(votes));
  }
  return out;
}

// --- random forest ---------------------------------------------------------------

ForestModel forest_train(const TabularDataset& ds, const ForestParams& params) {
  if (ds.empty()) throw Error("forest: empty training data");
  if (params.max_depth < 1) throw Error("forest: max_depth must be at least 1");
  if (params.n_estimators < 1) throw Error("forest: n_estimators must be at least 1");
  check_fraction(params.max_features, "max_features");
  check_fraction(params.max_samples, "max_samples");
  ForestModel m;
  m.params = params;
  m.classes = sorted_classes(ds);
  const auto y = label_ids(ds, m.classes);
  const std::size_t n = ds.n_rows();
  for (std::size_t t = 0; t < params.n_estimators; ++t) {
    Rng rng(mix_seed(params.seed, t));
    std::vector<std::size_t> samples;
    if (params.bootstrap) {
      const std::size_t draw = ceil_count(params.max_samples, n);
      for (std::size_t i = 0; i < draw; ++i) samples.push_back(rng.index(n));
    } else {
      samples.resize(n);
      std::iota(samples.begin(), samples.end(), 0);
    }
    m.trees.push_back(train_gini_tree(ds.rows(), y, m.classes.size(), samples,
                                      TreeParams{params.max_depth, params.max_features}, rng));
  }
  return m;
}

std::vector<int> forest_predict_ids(const ForestModel& m, const Matrix& rows) {
  std::vector<int> out;
  std::vector<double> votes(m.classes.size());
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    std::fill(votes.begin(), votes.end(), 0.0);
    for (const auto& t : m.trees) votes[static_cast<std::size_t>(argmax_first(t.leaf_value(rows.row(r).data())))] += 1.0;
    out.push_back(argmax_first(votes));
  }
  return out;
}

// --- gradient boosting -----------------------------------------------------------

BoostedModel gbdt_train(const TabularDataset& ds, const GbdtParams& params) {
  if (ds.empty()) throw Error("gbdt: empty training data");
  if (params.max_depth < 1) throw Error("gbdt: max_depth must be at least 1");
  if (params.learning_rate < 0.0 || params.l2_lambda < 0.0 || params.min_child_weight < 0.0) {
    throw Error("gbdt: learning_rate, l2_lambda and min_child_weight must be non-negative");
  }
  check_fraction(params.subsample, "subsample");
  check_fraction(params.colsample, "colsample");
  BoostedModel m;
  m.params = params;
  m.classes = sorted_classes(ds);
  if (m.classes.size() < 2) throw Error("gbdt: training data must contain at least 2 classes");
  const std::size_t k = m.classes.size();
  const std::size_t n = ds.n_rows();
  const std::size_t nf = ds.n_features();
  const auto y = label_ids(ds, m.classes);
  for (std::size_t c = 0; c < k; ++c) {
    const double count = static_cast<double>(std::count(y.begin(), y.end(), static_cast<int>(c)));
    m.base_score.push_back(std::log(count / static_cast<double>(n)));
  }
  Matrix scores(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  for (std::size_t c = 0; c < k; ++c) scores.col(static_cast<Eigen::Index>(c)).setConstant(m.base_score[c]);

  std::vector<double> grad(n), hess(n);
  Rng rng(params.seed);
  for (std::size_t round = 0; round < params.n_rounds; ++round) {
    Matrix prob = scores;
    for (Eigen::Index r = 0; r < prob.rows(); ++r) {
      auto row = prob.row(r);
      row.array() -= row.maxCoeff();
      row = row.array().exp().matrix();
      row /= row.sum();
    }
    std::vector<std::size_t> samples;
    const std::size_t draw = ceil_count(params.subsample, n);
    if (params.bootstrap) {
      for (std::size_t i = 0; i < draw; ++i) samples.push_back(rng.index(n));
    } else {
      samples.resize(n);
      std::iota(samples.begin(), samples.end(), 0);
      rng.shuffle(samples);
      samples.resize(draw);
    }
    std::vector<DecisionTree> round_trees;
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t i = 0; i < n; ++i) {
        const double p = prob(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
        grad[i] = p - (y[i] == static_cast<int>(c) ? 1.0 : 0.0);
        hess[i] = std::max(p * (1.0 - p), 1e-16);
      }
      auto pool = all_features(nf);
      rng.shuffle(pool);
      pool.resize(ceil_count(params.colsample, nf));
      std::sort(pool.begin(), pool.end());
      NewtonPolicy pol{&grad, &hess, params.l2_lambda, params.min_child_weight};
      DecisionTree tree = grow_tree(ds.rows(), samples, pool, pool.size(), params.max_depth, rng, pol);
      for (std::size_t i = 0; i < n; ++i) {
        scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) +=
            params.learning_rate * tree.leaf_value(ds.rows().row(static_cast<Eigen::Index>(i)).data())[0];
      }
      round_trees.push_back(std::move(tree));
    }
    m.trees.push_back(std::move(round_trees));
  }
  return m;
}

Matrix gbdt_scores(const BoostedModel& m, const Matrix& rows) {
  const std::size_t k = m.classes.size();
  Matrix scores(rows.rows(), static_cast<Eigen::Index>(k));
  for (std::size_t c = 0; c < k; ++c) scores.col(static_cast<Eigen::Index>(c)).setConstant(m.base_score[c]);
  for (const auto& round : m.trees) {
    for (std::size_t c = 0; c < k; ++c) {
      for (Eigen::Index r = 0; r < rows.rows(); ++r) {
        scores(r, static_cast<Eigen::Index>(c)) += m.params.learning_rate * round[c].leaf_value(rows.row(r).data())[0];
      }
    }
  }
  return scores;
}

std::vector<int> gbdt_predict_ids(const BoostedModel& m, const Matrix& rows) {
  const Matrix scores = gbdt_scores(m, rows);
  std::vector<int> out;
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    std::vector<double> v(scores.row(r).data(), scores.row(r).data() + scores.cols());
    out.push_back(argmax_first(v));
  }
  return out;
}

// --- facade -------------------------------------------------------------------

Classifier Classifier::train(const ClassifierParams& params, const TabularDataset& ds) {
  return std::visit(
      [&](const auto& p) -> Classifier {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, KnnParams>) return Classifier(knn_train(ds, p));
        else if constexpr (std::is_same_v<P, ForestParams>) return Classifier(forest_train(ds, p));
        else return Classifier(gbdt_train(ds, p));
      },
      params);
}

std::vector<std::string> Classifier::predict(const Matrix& rows) const {
  std::vector<int> ids = std::visit(
      [&](const auto& m) -> std::vector<int> {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, KnnModel>) return knn_predict_ids(m, rows);
        else if constexpr (std::is_same_v<M, ForestModel>) return forest_predict_ids(m, rows);
        else return gbdt_predict_ids(m, rows);
      },
      model_);
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(classes()[static_cast<std::size_t>(id)]);
  return out;
}

const std::vector<std::string>& Classifier::classes() const {
  return std::visit([](const auto& m) -> const std::vector<std::string>& { return m.classes; }, model_);
}

std::string Classifier::kind() const {
  switch (model_.index()) {
    case 0: return "knn";
    case 1: return "rf";
    default: return "gbdt";
  }
}

// --- parameters -----------------------------------------------------------------

std::string classifier_kind(const ClassifierParams& p) {
  switch (p.index()) {
    case 0: return "knn";
    case 1: return "rf";
    default: return "gbdt";
  }
}

namespace {

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "True" || v == "1") return true;
  if (v == "false" || v == "False" || v == "0") return false;
  throw Error("classifier: parameter '" + key + "' expects true/false, got '" + v + "'");
}

double parse_real(const std::string& key, const std::string& v) {
  double d = 0;
  if (!parse_double(v, d)) throw Error("classifier: parameter '" + key + "' expects a number, got '" + v + "'");
  return d;
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  double d = parse_real(key, v);
  if (d < 0 || d != std::floor(d)) throw Error("classifier: parameter '" + key + "' expects a count, got '" + v + "'");
  return static_cast<std::size_t>(d);
}

std::uint64_t parse_seed(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    auto s = std::stoull(v, &pos);
    if (pos != v.size()) throw Error("");
    return s;
  } catch (...) {
    throw Error("classifier: parameter '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
}

std::string b(bool v) { return v ? "true" : "false"; }

}  // namespace

ClassifierParams parse_classifier_params(const std::string& kind, const std::string& key_values) {
  std::vector<std::pair<std::string, std::string>> kv;
  for (const auto& item : split(key_values, ',')) {
    auto t = std::string(trim(item));
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) throw Error("classifier: parameter '" + t + "' is not key=value");
    kv.emplace_back(std::string(trim(t.substr(0, eq))), std::string(trim(t.substr(eq + 1))));
  }
  auto unknown = [&](const std::string& key) { return Error("classifier: unknown " + kind + " parameter '" + key + "'"); };
  if (kind == "knn") {
    KnnParams p;
    for (const auto& [k, v] : kv) {
      if (k == "k" || k == "n_neighbors") p.k = parse_count(k, v);
      else if (k == "weights" || k == "weighting") {
        if (v == "distance") p.weighting = KnnWeighting::distance;
        else if (v == "uniform") p.weighting = KnnWeighting::uniform;
        else throw Error("classifier: weights must be uniform or distance");
      } else if (k == "metric") {
        if (v == "manhattan") p.metric = KnnMetric::manhattan;
        else if (v == "euclidean") p.metric = KnnMetric::euclidean;
        else throw Error("classifier: metric must be manhattan or euclidean");
      } else if (k == "seed") {
        parse_seed(k, v);
      } else {
        throw unknown(k);
      }
    }
    if (p.k < 1) throw Error("classifier: k must be at least 1");
    return p;
  }
  if (kind == "rf") {
    ForestParams p;
    for (const auto& [k, v] : kv) {
      if (k == "n_estimators") p.n_estimators = parse_count(k, v);
      else if (k == "max_depth") p.max_depth = parse_count(k, v);
      else if (k == "max_features") p.max_features = parse_real(k, v);
      else if (k == "bootstrap") p.bootstrap = parse_bool(k, v);
      else if (k == "max_samples") p.max_samples = parse_real(k, v);
      else if (k == "seed") p.seed = parse_seed(k, v);
      else throw unknown(k);
    }
    if (p.max_depth < 1) throw Error("classifier: max_depth must be at least 1");
    check_fraction(p.max_features, "max_features");
    check_fraction(p.max_samples, "max_samples");
    return p;
  }
  if (kind == "gbdt") {
    GbdtParams p;
    for (const auto& [k, v] : kv) {
      if (k == "n_rounds" || k == "n_estimators") p.n_rounds = parse_count(k, v);
      else if (k == "max_depth") p.max_depth = parse_count(k, v);
      else if (k == "learning_rate" || k == "eta") p.learning_rate = parse_real(k, v);
      else if (k == "l2_lambda" || k == "lambda") p.l2_lambda = parse_real(k, v);
      else if (k == "min_child_weight") p.min_child_weight = parse_real(k, v);
      else if (k == "subsample" || k == "max_samples") p.subsample = parse_real(k, v);
      else if (k == "colsample" || k == "max_features") p.colsample = parse_real(k, v);
      else if (k == "bootstrap") p.bootstrap = parse_bool(k, v);
      else if (k == "seed") p.seed = parse_seed(k, v);
      else throw unknown(k);
    }
    if (p.max_depth < 1) throw Error("classifier: max_depth must be at least 1");
    check_fraction(p.subsample, "subsample");
    check_fraction(p.colsample, "colsample");
    return p;
  }
  throw Error("classifier: unknown model kind '" + kind + "' (expected knn, rf or gbdt)");
}

std::string format_classifier_params(const ClassifierParams& params) {
  return std::visit(
      [](const auto& p) -> std::string {
        using P = std::decay_t<decltype(p)>;
        std::ostringstream o;
        if constexpr (std::is_same_v<P, KnnParams>) {
          o << "k=" << p.k << ",weights=" << (p.weighting == KnnWeighting::distance ? "distance" : "uniform")
            << ",metric=" << (p.metric == KnnMetric::manhattan ? "manhattan" : "euclidean");
        } else if constexpr (std::is_same_v<P, ForestParams>) {
          o << "n_estimators=" << p.n_estimators << ",max_depth=" << p.max_depth
            << ",max_features=" << format_double(p.max_features) << ",bootstrap=" << b(p.bootstrap)
            << ",max_samples=" << format_double(p.max_samples) << ",seed=" << p.seed;
        } else {
          o << "n_rounds=" << p.n_rounds << ",max_depth=" << p.max_depth
            << ",learning_rate=" << format_double(p.learning_rate) << ",l2_lambda=" << format_double(p.l2_lambda)
            << ",min_child_weight=" << format_double(p.min_child_weight) << ",subsample=" << format_double(p.subsample)
            << ",colsample=" << format_double(p.colsample) << ",bootstrap=" << b(p.bootstrap) << ",seed=" << p.seed;
        }
        return o.str();
      },
      params);
}

ClassifierParams with_seed(ClassifierParams p, std::uint64_t seed) {
  if (auto* f = std::get_if<ForestParams>(&p)) f->seed = seed;
  if (auto* g = std::get_if<GbdtParams>(&p)) g->seed = seed;
  return p;
}

// --- checkpoint -------------------------------------------------------------------

namespace {

void write_tree(std::ostringstream& out, const DecisionTree& t) {
  out << "tree " << t.nodes.size() << ' ' << t.max_depth << "\n";
  for (const auto& n : t.nodes) {
    out << n.feature << ' ' << format_double(n.threshold) << ' ' << n.left << ' ' << n.right << ' ' << n.value.size();
    for (double v : n.value) out << ' ' << format_double(v);
    out << "\n";
  }
}

struct Reader {
  std::istringstream in;
  std::string line;
  std::vector<std::string> next() {
    if (!std::getline(in, line)) throw Error("classifier checkpoint: truncated");
    return split(trim(line), ' ');
  }
  double real(const std::string& s) {
    double d = 0;
    if (!parse_double(s, d)) throw Error("classifier checkpoint: malformed number '" + s + "'");
    return d;
  }
  DecisionTree tree() {
    auto h = next();
    if (h.size() != 3 || h[0] != "tree") throw Error("classifier checkpoint: expected tree header");
    DecisionTree t;
    t.max_depth = std::stoul(h[2]);
    const std::size_t count = std::stoul(h[1]);
    for (std::size_t i = 0; i < count; ++i) {
      auto p = next();
      if (p.size() < 5) throw Error("classifier checkpoint: malformed tree node");
      DecisionTree::Node n;
      n.feature = std::stoi(p[0]);
      n.threshold = real(p[1]);
      n.left = std::stoi(p[2]);
      n.right = std::stoi(p[3]);
      const std::size_t nv = std::stoul(p[4]);
      if (p.size() != 5 + nv) throw Error("classifier checkpoint: malformed tree node values");
      for (std::size_t v = 0; v < nv; ++v) n.value.push_back(real(p[5 + v]));
      t.nodes.push_back(std::move(n));
    }
    return t;
  }
};

}  // namespace

std::string Classifier::serialize() const {
  std::ostringstream out;
  out << "tabsynth-classifier 1\n";
  out << "kind " << kind() << "\n";
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        out << "params " << format_classifier_params(m.params) << "\n";
        out << "classes " << m.classes.size() << "\n";
        for (const auto& c : m.classes) out << c << "\n";
        if constexpr (std::is_same_v<M, KnnModel>) {
          out << "rows " << m.rows.rows() << ' ' << m.rows.cols() << "\n";
          for (Eigen::Index r = 0; r < m.rows.rows(); ++r) {
            out << m.labels[static_cast<std::size_t>(r)];
            for (Eigen::Index c = 0; c < m.rows.cols(); ++c) out << ' ' << format_double(m.rows(r, c));
            out << "\n";
          }
        } else if constexpr (std::is_same_v<M, ForestModel>) {
          out << "trees " << m.trees.size() << "\n";
          for (const auto& t : m.trees) write_tree(out, t);
        } else {
          out << "base";
          for (double v : m.base_score) out << ' ' << format_double(v);
          out << "\nrounds " << m.trees.size() << "\n";
          for (const auto& round : m.trees) {
            for (const auto& t : round) write_tree(out, t);
          }
        }
      },
      model_);
  return out.str();
}

Classifier Classifier::deserialize(const std::string& text) {
  Reader r{std::istringstream(text), {}};
  auto h = r.next();
  if (h.size() != 2 || h[0] != "tabsynth-classifier" || h[1] != "1") throw Error("classifier checkpoint: bad header");
  h = r.next();
  if (h.size() != 2 || h[0] != "kind") throw Error("classifier checkpoint: expected kind");
  const std::string kind = h[1];
  h = r.next();
  if (h.size() != 2 || h[0] != "params") throw Error("classifier checkpoint: expected params");
  ClassifierParams params = parse_classifier_params(kind, h[1]);
  h = r.next();
  if (h.size() != 2 || h[0] != "classes") throw Error("classifier checkpoint: expected classes");
  std::vector<std::string> classes;
  const std::size_t nc = std::stoul(h[1]);
  for (std::size_t i = 0; i < nc; ++i) {
    if (!std::getline(r.in, r.line)) throw Error("classifier checkpoint: truncated class list");
    classes.push_back(r.line);
  }
  if (kind == "knn") {
    KnnModel m;
    m.params = std::get<KnnParams>(params);
    m.classes = classes;
    h = r.next();
    const auto rows = static_cast<Eigen::Index>(std::stol(h.at(1)));
    const auto cols = static_cast<Eigen::Index>(std::stol(h.at(2)));
    m.rows.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      auto p = r.next();
      if (static_cast<Eigen::Index>(p.size()) != cols + 1) throw Error("classifier checkpoint: malformed knn row");
      m.labels.push_back(std::stoi(p[0]));
      for (Eigen::Index c = 0; c < cols; ++c) m.rows(i, c) = r.real(p[static_cast<std::size_t>(c + 1)]);
    }
    return Classifier(std::move(m));
  }
  if (kind == "rf") {
    ForestModel m;
    m.params = std::get<ForestParams>(params);
    m.classes = classes;
    h = r.next();
    const std::size_t n = std::stoul(h.at(1));
    for (std::size_t i = 0; i < n; ++i) m.trees.push_back(r.tree());
    return Classifier(std::move(m));
  }
  BoostedModel m;
  m.params = std::get<GbdtParams>(params);
  m.classes = classes;
  h = r.next();
  if (h.empty() || h[0] != "base" || h.size() != classes.size() + 1) throw Error("classifier checkpoint: expected base");
  for (std::size_t i = 1; i < h.size(); ++i) m.base_score.push_back(r.real(h[i]));
  h = r.next();
  const std::size_t rounds = std::stoul(h.at(1));
  for (std::size_t i = 0; i < rounds; ++i) {
    std::vector<DecisionTree> round;
    for (std::size_t c = 0; c < classes.size(); ++c) round.push_back(r.tree());
    m.trees.push_back(std::move(round));
  }
  return Classifier(std::move(m));
}

}  // namespace tabsynth
