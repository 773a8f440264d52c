#include "tabsynth/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace tabsynth {

TabularDataset::TabularDataset(std::vector<std::string> feature_names, Matrix rows,
                               std::vector<std::string> labels)
    : feature_names_(std::move(feature_names)), rows_(std::move(rows)), labels_(std::move(labels)) {
  std::set<std::string> seen;
  for (const auto& name : feature_names_) {
    if (name.empty()) throw Error("dataset: empty feature name");
    if (!seen.insert(name).second) throw Error("dataset: duplicate feature name '" + name + "'");
  }
  if (static_cast<std::size_t>(rows_.cols()) != feature_names_.size() && rows_.rows() > 0) {
    throw Error("dataset: row width " + std::to_string(rows_.cols()) + " does not match " +
                std::to_string(feature_names_.size()) + " feature names");
  }
  if (rows_.rows() == 0) rows_.resize(0, static_cast<Eigen::Index>(feature_names_.size()));
  if (labels_.size() != n_rows()) {
    throw Error("dataset: " + std::to_string(labels_.size()) + " labels for " + std::to_string(n_rows()) +
                " rows");
  }
  for (Eigen::Index r = 0; r < rows_.rows(); ++r) {
    for (Eigen::Index c = 0; c < rows_.cols(); ++c) {
      if (!std::isfinite(rows_(r, c))) {
        throw Error("dataset: non-finite value at row " + std::to_string(r) + ", feature '" +
                    feature_names_[static_cast<std::size_t>(c)] + "'");
      }
    }
  }
  std::map<std::string, int> ids;
  class_ids_.reserve(labels_.size());
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    auto [it, inserted] = ids.emplace(labels_[i], static_cast<int>(classes_.size()));
    if (inserted) classes_.push_back(labels_[i]);
    class_ids_.push_back(it->second);
    class_index_[labels_[i]].push_back(i);
  }
}

bool TabularDataset::has_class(const std::string& name) const { return class_index_.count(name) > 0; }

const std::vector<std::size_t>& TabularDataset::class_rows(const std::string& name) const {
  auto it = class_index_.find(name);
  if (it == class_index_.end()) throw Error("dataset: unknown class '" + name + "'");
  return it->second;
}

TabularDataset TabularDataset::subset(const std::vector<std::size_t>& indices) const {
  Matrix out(static_cast<Eigen::Index>(indices.size()), rows_.cols());
  std::vector<std::string> labels;
  labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= n_rows()) throw Error("dataset: subset index out of range");
    out.row(static_cast<Eigen::Index>(i)) = rows_.row(static_cast<Eigen::Index>(indices[i]));
    labels.push_back(labels_[indices[i]]);
  }
  return TabularDataset(feature_names_, std::move(out), std::move(labels));
}

TabularDataset TabularDataset::concat(const TabularDataset& extra) const {
  if (extra.feature_names_ != feature_names_) throw Error("dataset: concat with mismatched schema");
  Matrix out(rows_.rows() + extra.rows_.rows(), rows_.cols());
  out.topRows(rows_.rows()) = rows_;
  out.bottomRows(extra.rows_.rows()) = extra.rows_;
  auto labels = labels_;
  labels.insert(labels.end(), extra.labels_.begin(), extra.labels_.end());
  return TabularDataset(feature_names_, std::move(out), std::move(labels));
}

TabularDataset TabularDataset::with_rows(Matrix rows) const {
  return TabularDataset(feature_names_, std::move(rows), labels_);
}

namespace {

// Splits one CSV record; supports double-quoted fields with "" escapes.
std::vector<std::string> parse_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(std::move(cur));
  for (auto& f : fields) f = std::string(trim(f));
  return fields;
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += "\"\"";
    else out.push_back(ch);
  }
  return out + "\"";
}

}  // namespace

TabularDataset parse_csv(const std::string& text, const std::string& label_column) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = parse_record(line);
      break;
    }
  }
  if (header.empty()) throw Error("csv: missing header row");
  if (line_no == 1 && header.front().rfind("\xEF\xBB\xBF", 0) == 0) header.front().erase(0, 3);

  std::set<std::string> seen;
  std::ptrdiff_t label_pos = -1;
  std::vector<std::string> features;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i].empty()) throw Error("csv: empty header name in column " + std::to_string(i + 1));
    if (!seen.insert(header[i]).second) throw Error("csv: duplicate header name '" + header[i] + "'");
    if (header[i] == label_column) label_pos = static_cast<std::ptrdiff_t>(i);
    else features.push_back(header[i]);
  }
  if (label_pos < 0) throw Error("csv: label column '" + label_column + "' not found in header");

  std::vector<double> values;
  std::vector<std::string> labels;
  std::size_t data_row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++data_row;
    auto fields = parse_record(line);
    if (fields.size() != header.size()) {
      throw Error("csv: row " + std::to_string(data_row) + " (line " + std::to_string(line_no) + ") has " +
                  std::to_string(fields.size()) + " fields, expected " + std::to_string(header.size()));
    }
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (static_cast<std::ptrdiff_t>(i) == label_pos) {
        if (fields[i].empty()) throw Error("csv: empty label at row " + std::to_string(data_row));
        labels.push_back(fields[i]);
        continue;
      }
      double v = 0.0;
      if (!parse_double(fields[i], v)) {
        throw Error("csv: row " + std::to_string(data_row) + ", column '" + header[i] +
                    "': cannot parse '" + fields[i] + "' as a finite number");
      }
      values.push_back(v);
    }
  }
  if (labels.empty()) throw Error("csv: dataset has no data rows");
  Matrix rows = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(labels.size()),
                                   static_cast<Eigen::Index>(features.size()));
  return TabularDataset(std::move(features), std::move(rows), std::move(labels));
}

TabularDataset load_csv(const std::filesystem::path& path, const std::string& label_column) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("csv: cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), label_column);
}

std::string to_csv(const TabularDataset& ds, const std::string& label_column) {
  std::string out;
  for (const auto& name : ds.feature_names()) out += quote_if_needed(name) + ",";
  out += quote_if_needed(label_column) + "\n";
  for (std::size_t r = 0; r < ds.n_rows(); ++r) {
    for (std::size_t c = 0; c < ds.n_features(); ++c) {
      out += format_double(ds.rows()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
      out += ',';
    }
    out += quote_if_needed(ds.labels()[r]) + "\n";
  }
  return out;
}

void save_csv(const TabularDataset& ds, const std::filesystem::path& path, const std::string& label_column) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("csv: cannot write '" + path.string() + "'");
  out << to_csv(ds, label_column);
}

ClassDistribution imbalance_ratios(const TabularDataset& ds) {
  if (ds.empty()) throw Error("imbalance_ratios: empty dataset");
  ClassDistribution dist;
  for (const auto& c : ds.classes()) dist.counts[c] = ds.class_rows(c).size();
  std::size_t best = 0;
  // std::map iterates in lexicographic order, so strict '>' keeps the
  // smallest name on ties.
  for (const auto& [name, count] : dist.counts) {
    if (count > best) {
      best = count;
      dist.majority_class = name;
    }
  }
  for (const auto& [name, count] : dist.counts) {
    dist.imbalance_ratios[name] = static_cast<double>(count) / static_cast<double>(best);
  }
  return dist;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(const TabularDataset& ds,
                                                                            const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
    throw Error("split: train_fraction must lie strictly between 0 and 1");
  }
  Rng rng(spec.seed);
  std::vector<std::size_t> train, test;
  auto take = [&](std::vector<std::size_t> idx, std::size_t n_train) {
    rng.shuffle(idx);
    train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  };
  if (spec.stratified) {
    for (const auto& c : ds.classes()) {
      const auto& rows = ds.class_rows(c);
      if (rows.size() < 2) {
        throw Error("split: class '" + c + "' has " + std::to_string(rows.size()) +
                    " sample(s); stratification needs at least 2");
      }
      auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(rows.size())));
      n_train = std::clamp<std::size_t>(n_train, 1, rows.size() - 1);
      take(rows, n_train);
    }
  } else {
    if (ds.n_rows() < 2) throw Error("split: need at least 2 rows");
    std::vector<std::size_t> all(ds.n_rows());
    std::iota(all.begin(), all.end(), 0);
    auto n_train = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(all.size())));
    take(std::move(all), std::clamp<std::size_t>(n_train, 1, ds.n_rows() - 1));
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

std::pair<TabularDataset, TabularDataset> stratified_split(const TabularDataset& ds, const SplitSpec& spec) {
  auto [train, test] = split_indices(ds, spec);
  return {ds.subset(train), ds.subset(test)};
}

std::vector<Fold> kfold_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error("kfold: k must be at least 2");
  if (k > n) throw Error("kfold: k=" + std::to_string(k) + " exceeds n=" + std::to_string(n));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.shuffle(perm);
  std::vector<Fold> folds(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].validation.assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                               perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  for (std::size_t f = 0; f < k; ++f) {
    std::sort(folds[f].validation.begin(), folds[f].validation.end());
    for (std::size_t g = 0; g < k; ++g) {
      if (g != f) folds[f].train.insert(folds[f].train.end(), folds[g].validation.begin(), folds[g].validation.end());
    }
    std::sort(folds[f].train.begin(), folds[f].train.end());
  }
  return folds;
}

std::vector<Fold> stratified_kfold(const TabularDataset& ds, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error("kfold: k must be at least 2");
  std::vector<Fold> folds(k);
  Rng rng(seed);
  // Deal each class round-robin, continuing where the previous class stopped
  // so that overall fold sizes stay balanced.
  std::size_t next = 0;
  for (const auto& c : ds.classes()) {
    auto rows = ds.class_rows(c);
    if (rows.size() < k) {
      throw Error("kfold: class '" + c + "' has " + std::to_string(rows.size()) + " rows, fewer than k=" +
                  std::to_string(k));
    }
    rng.shuffle(rows);
    for (auto r : rows) {
      folds[next].validation.push_back(r);
      next = (next + 1) % k;
    }
  }
  for (std::size_t f = 0; f < k; ++f) {
    std::sort(folds[f].validation.begin(), folds[f].validation.end());
    for (std::size_t g = 0; g < k; ++g) {
      if (g != f) folds[f].train.insert(folds[f].train.end(), folds[g].validation.begin(), folds[g].validation.end());
    }
    std::sort(folds[f].train.begin(), folds[f].train.end());
  }
  return folds;
}

std::uint64_t content_hash(const TabularDataset& ds) {
  std::uint64_t h = 14695981039346656037ULL;
  const auto& m = ds.rows();
  h = fnv1a({reinterpret_cast<const unsigned char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double)}, h);
  for (const auto& l : ds.labels()) {
    h = fnv1a({reinterpret_cast<const unsigned char*>(l.data()), l.size()}, h);
    unsigned char sep = 0;
    h = fnv1a({&sep, 1}, h);
  }
  return h;
}

}  // namespace tabsynth
