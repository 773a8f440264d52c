#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "tabsynth/dataset.hpp"

using namespace tabsynth;

namespace {

std::string header_of(std::size_t features) {
  std::string h;
  for (std::size_t j = 0; j < features; ++j) h += "f" + std::to_string(j) + ",";
  return h + "crop\n";
}

std::vector<std::pair<std::vector<double>, std::string>> sorted_pairs(const TabularDataset& ds) {
  std::vector<std::pair<std::vector<double>, std::string>> out;
  for (std::size_t i = 0; i < ds.n_rows(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    std::vector<double> row(ds.rows().row(r).data(), ds.rows().row(r).data() + ds.n_features());
    out.emplace_back(std::move(row), ds.labels()[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("csv: three rows, two features") {
  const auto ds = parse_csv("f1,f2,label\n1,2,A\n3,4,B\n5,6,A\n", "label");
  CHECK(ds.n_rows() == 3);
  CHECK(ds.n_features() == 2);
  CHECK(ds.feature_names() == std::vector<std::string>{"f1", "f2"});
  CHECK(ds.labels() == std::vector<std::string>{"A", "B", "A"});
  CHECK(ds.rows()(2, 1) == 6.0);
}

TEST_CASE("csv: label column may sit anywhere and is removed from the features") {
  const auto ds = parse_csv("crop,a,b\nPeas,1,2\nWheat,3,4\n", "crop");
  CHECK(ds.feature_names() == std::vector<std::string>{"a", "b"});
  CHECK(ds.rows()(1, 0) == 3.0);
  CHECK(ds.classes() == std::vector<std::string>{"Peas", "Wheat"});
}

TEST_CASE("csv: NaN cell names row and column") {
  try {
    parse_csv("f1,f2,label\n1,2,A\n3,NaN,B\n", "label");
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("f2") != std::string::npos);
  }
}

TEST_CASE("csv: malformed inputs are rejected") {
  CHECK_THROWS_AS(parse_csv("", "label"), Error);
  CHECK_THROWS_AS(parse_csv("f1,label\n", "label"), Error);
  CHECK_THROWS_AS(parse_csv("f1,f1,label\n1,2,A\n", "label"), Error);
  CHECK_THROWS_AS(parse_csv("f1,f2\n1,2\n", "label"), Error);
  CHECK_THROWS_AS(parse_csv("f1,label\n1,A,extra\n", "label"), Error);
  CHECK_THROWS_AS(parse_csv("f1,label\nabc,A\n", "label"), Error);
  CHECK_THROWS_AS(parse_csv("f1,label\ninf,A\n", "label"), Error);
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", "label"), Error);
}

TEST_CASE("csv: 168-feature table") {
  // Two dates x (38 + 46) features per sensor pair.
  const std::size_t features = 2 * (38 + 46);
  std::string text = header_of(features);
  for (int r = 0; r < 4; ++r) {
    for (std::size_t j = 0; j < features; ++j) text += std::to_string(r + j) + ",";
    text += (r % 2 ? "Peas\n" : "Wheat\n");
  }
  const auto ds = parse_csv(text, "crop");
  CHECK(ds.n_features() == 168);
  CHECK(ds.n_rows() == 4);
}

TEST_CASE("csv: write then read reproduces the dataset bit for bit") {
  const auto ds = fixtures::blobs({{0.1, -3.0}, {1e-7, 12345.678}}, 25, 0.3, 7);
  const auto back = parse_csv(to_csv(ds, "crop"), "crop");
  CHECK(back.rows() == ds.rows());
  CHECK(back.labels() == ds.labels());
  const auto path = std::filesystem::temp_directory_path() / "tabsynth_dataset_roundtrip.csv";
  save_csv(ds, path);
  CHECK(load_csv(path, "label").rows() == ds.rows());
  std::filesystem::remove(path);
}

TEST_CASE("dataset: constructor enforces its invariants") {
  Matrix x(2, 2);
  x << 1, 2, 3, 4;
  CHECK_THROWS_AS(TabularDataset({"a", "a"}, x, {"A", "B"}), Error);
  CHECK_THROWS_AS(TabularDataset({"a", ""}, x, {"A", "B"}), Error);
  CHECK_THROWS_AS(TabularDataset({"a", "b"}, x, {"A"}), Error);
  x(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(TabularDataset({"a", "b"}, x, {"A", "B"}), Error);
}

TEST_CASE("dataset: class ids follow first appearance") {
  Matrix x = Matrix::Zero(4, 1);
  const TabularDataset ds({"a"}, x, {"Wheat", "Peas", "Wheat", "Canola"});
  CHECK(ds.classes() == std::vector<std::string>{"Wheat", "Peas", "Canola"});
  CHECK(ds.class_ids() == std::vector<int>{0, 1, 0, 2});
  CHECK(ds.class_rows("Wheat") == std::vector<std::size_t>{0, 2});
  CHECK_THROWS_AS(ds.class_rows("Oats"), Error);
}

TEST_CASE("imbalance ratios") {
  SUBCASE("counts {A:10, B:50}") {
    const auto d = imbalance_ratios(fixtures::counted({{"A", 10}, {"B", 50}}, 1, 1));
    CHECK(d.majority_class == "B");
    CHECK(d.imbalance_ratios.at("A") == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(d.imbalance_ratios.at("B") == 1.0);
  }
  SUBCASE("single class") {
    const auto d = imbalance_ratios(fixtures::counted({{"Only", 3}}, 1, 1));
    CHECK(d.imbalance_ratios.at("Only") == 1.0);
  }
  SUBCASE("majority ties go to the lexicographically first class") {
    const auto d = imbalance_ratios(fixtures::counted({{"Wheat", 5}, {"Corn", 5}, {"Peas", 1}}, 1, 1));
    CHECK(d.majority_class == "Corn");
  }
  SUBCASE("field-survey shape: Wheat majority, two minorities at 0.002") {
    const auto d = imbalance_ratios(fixtures::counted(
        {{"Wheat", 5000}, {"Peas", 10}, {"Broadleaf", 10}, {"Canola", 3000}}, 1, 1));
    CHECK(d.majority_class == "Wheat");
    CHECK(d.imbalance_ratios.at("Wheat") == 1.0);
    CHECK(d.imbalance_ratios.at("Peas") == doctest::Approx(0.002));
    CHECK(d.imbalance_ratios.at("Broadleaf") == doctest::Approx(0.002));
  }
  CHECK_THROWS_AS(imbalance_ratios(TabularDataset{}), Error);
}

TEST_CASE("imbalance ratios: counts sum to n and exactly one class has ratio 1") {
  Rng rng(99);
  for (int t = 0; t < 50; ++t) {
    std::vector<std::pair<std::string, std::size_t>> counts;
    const std::size_t classes = 1 + rng.index(6);
    for (std::size_t c = 0; c < classes; ++c) counts.emplace_back("c" + std::to_string(c), 1 + rng.index(40));
    const auto ds = fixtures::counted(counts, 1, static_cast<std::uint64_t>(t));
    const auto d = imbalance_ratios(ds);
    std::size_t total = 0, ones = 0;
    for (const auto& [c, n] : d.counts) total += n;
    for (const auto& [c, r] : d.imbalance_ratios) ones += (r == 1.0);
    CHECK(total == ds.n_rows());
    CHECK(ones == 1);
  }
}

TEST_CASE("stratified split") {
  SUBCASE("100 A + 100 B at 0.1") {
    const auto ds = fixtures::counted({{"A", 100}, {"B", 100}}, 2, 3);
    const auto [train, test] = stratified_split(ds, {0.1, true, 5});
    CHECK(train.class_rows("A").size() == 10);
    CHECK(train.class_rows("B").size() == 10);
    CHECK(test.n_rows() == 180);
  }
  SUBCASE("counts {A:2000, B:20} at 0.1 match a counting oracle") {
    const auto ds = fixtures::counted({{"A", 2000}, {"B", 20}}, 1, 3);
    const auto [train, test] = stratified_split(ds, {0.1, true, 11});
    std::map<std::string, std::size_t> seen;
    for (const auto& l : train.labels()) ++seen[l];
    CHECK(seen == std::map<std::string, std::size_t>{{"A", 200}, {"B", 2}});
  }
  SUBCASE("same seed gives identical partitions, another seed differs") {
    const auto ds = fixtures::counted({{"A", 50}, {"B", 30}}, 2, 3);
    const auto a = split_indices(ds, {0.3, true, 9});
    const auto b = split_indices(ds, {0.3, true, 9});
    const auto c = split_indices(ds, {0.3, true, 10});
    CHECK(a == b);
    CHECK(a.first != c.first);
  }
  SUBCASE("tiny classes keep one training row") {
    const auto ds = fixtures::counted({{"A", 100}, {"B", 2}}, 1, 3);
    const auto [train, test] = stratified_split(ds, {0.1, true, 1});
    CHECK(train.class_rows("B").size() == 1);
    CHECK(test.class_rows("B").size() == 1);
  }
  SUBCASE("errors") {
    const auto ds = fixtures::counted({{"A", 10}, {"B", 1}}, 1, 3);
    CHECK_THROWS_AS(stratified_split(ds, {0.5, true, 1}), Error);
    CHECK_THROWS_AS(stratified_split(ds, {0.0, true, 1}), Error);
    CHECK_THROWS_AS(stratified_split(ds, {1.0, false, 1}), Error);
  }
}

TEST_CASE("stratified split is a partition of the (row, label) multiset") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto ds = fixtures::counted({{"A", 37}, {"B", 12}, {"C", 5}}, 3, seed);
    for (bool stratified : {true, false}) {
      const auto [train, test] = stratified_split(ds, {0.25, stratified, seed});
      CHECK(train.n_rows() + test.n_rows() == ds.n_rows());
      CHECK(sorted_pairs(train.concat(test)) == sorted_pairs(ds));
      const auto [ti, vi] = split_indices(ds, {0.25, stratified, seed});
      std::set<std::size_t> overlap;
      std::set_intersection(ti.begin(), ti.end(), vi.begin(), vi.end(), std::inserter(overlap, overlap.end()));
      CHECK(overlap.empty());
    }
  }
}

TEST_CASE("kfold indices") {
  auto sizes = [](const std::vector<Fold>& folds) {
    std::vector<std::size_t> s;
    for (const auto& f : folds) s.push_back(f.validation.size());
    return s;
  };
  CHECK(sizes(kfold_indices(9, 3, 1)) == std::vector<std::size_t>{3, 3, 3});
  CHECK(sizes(kfold_indices(10, 3, 1)) == std::vector<std::size_t>{4, 3, 3});
  CHECK_THROWS_AS(kfold_indices(2, 3, 1), Error);
  CHECK_THROWS_AS(kfold_indices(10, 1, 1), Error);
}

TEST_CASE("kfold validation folds partition 0..n-1 (100 random cases)") {
  Rng rng(2024);
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = 2 + rng.index(9);
    const std::size_t n = k + rng.index(200);
    const auto folds = kfold_indices(n, k, static_cast<std::uint64_t>(t));
    REQUIRE(folds.size() == k);
    std::vector<std::size_t> all;
    std::size_t lo = n, hi = 0;
    for (const auto& f : folds) {
      all.insert(all.end(), f.validation.begin(), f.validation.end());
      lo = std::min(lo, f.validation.size());
      hi = std::max(hi, f.validation.size());
      CHECK(f.train.size() + f.validation.size() == n);
    }
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expect(n);
    std::iota(expect.begin(), expect.end(), 0);
    CHECK(all == expect);
    CHECK(hi - lo <= 1);
  }
}

TEST_CASE("stratified kfold spreads each class evenly") {
  const auto ds = fixtures::counted({{"A", 30}, {"B", 7}}, 1, 1);
  const auto folds = stratified_kfold(ds, 3, 4);
  for (const auto& f : folds) {
    std::size_t b = 0;
    for (auto i : f.validation) b += ds.labels()[i] == "B";
    CHECK((b == 2 || b == 3));
  }
  CHECK_THROWS_AS(stratified_kfold(fixtures::counted({{"A", 30}, {"B", 2}}, 1, 1), 3, 4), Error);
}

TEST_CASE("content hash sees values, labels and order") {
  const auto ds = fixtures::counted({{"A", 5}, {"B", 5}}, 2, 1);
  const auto h = content_hash(ds);
  CHECK(content_hash(ds) == h);
  std::vector<std::size_t> rev(ds.n_rows());
  std::iota(rev.rbegin(), rev.rend(), 0);
  CHECK(content_hash(ds.subset(rev)) != h);
  Matrix x = ds.rows();
  x(3, 1) = std::nextafter(x(3, 1), 1e9);
  CHECK(content_hash(ds.with_rows(x)) != h);
}
