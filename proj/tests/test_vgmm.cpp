#include <cmath>
#include <numeric>

#include "doctest.h"
#include "tabsynth/vgmm.hpp"

using namespace tabsynth;

namespace {

// Plain two-component EM, started from the sample extremes and run until the
// log-likelihood stops moving. Independent of the library's fitter.
struct TwoComponent {
  double w[2], mu[2], sd[2];
};

TwoComponent em2(const std::vector<double>& x) {
  TwoComponent t{{0.5, 0.5},
                 {*std::min_element(x.begin(), x.end()), *std::max_element(x.begin(), x.end())},
                 {1.0, 1.0}};
  double prev = -1e300;
  for (int it = 0; it < 10000; ++it) {
    double nk[2] = {0, 0}, sx[2] = {0, 0}, sxx[2] = {0, 0}, ll = 0;
    for (double v : x) {
      double p[2];
      for (int k = 0; k < 2; ++k) {
        const double z = (v - t.mu[k]) / t.sd[k];
        p[k] = t.w[k] * std::exp(-0.5 * z * z) / (t.sd[k] * std::sqrt(2 * M_PI));
      }
      const double s = p[0] + p[1];
      ll += std::log(s);
      for (int k = 0; k < 2; ++k) {
        const double r = p[k] / s;
        nk[k] += r;
        sx[k] += r * v;
        sxx[k] += r * v * v;
      }
    }
    for (int k = 0; k < 2; ++k) {
      t.w[k] = nk[k] / static_cast<double>(x.size());
      t.mu[k] = sx[k] / nk[k];
      t.sd[k] = std::sqrt(sxx[k] / nk[k] - t.mu[k] * t.mu[k]);
    }
    if (std::abs(ll - prev) < 1e-12 * std::abs(ll)) break;
    prev = ll;
  }
  return t;
}

std::vector<double> draw_bimodal(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform() < 0.5 ? rng.normal(-5, 1) : rng.normal(5, 1);
  return v;
}

TabularDataset one_column(const std::vector<double>& v, const std::string& name = "x") {
  Matrix m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return {{name}, m, std::vector<std::string>(v.size(), "A")};
}

FeatureMixture fixed_mixture(std::vector<double> means, std::vector<double> stds) {
  FeatureMixture m;
  m.means = std::move(means);
  m.stds = std::move(stds);
  m.weights.assign(m.means.size(), 1.0 / static_cast<double>(m.means.size()));
  m.active.assign(m.means.size(), true);
  return m;
}

}  // namespace

TEST_CASE("fit: standard normal collapses to one mode") {
  Rng rng(1);
  std::vector<double> v(5000);
  for (auto& x : v) x = rng.normal();
  const auto m = fit_feature_mixture(v, {}, 3);
  REQUIRE(m.active_count() == 1);
  const auto k = m.active_modes().front();
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / 5000.0;
  double var = 0;
  for (double x : v) var += (x - mean) * (x - mean);
  // A single Gaussian's EM fixed point is the sample mean and std.
  CHECK(m.means[k] == doctest::Approx(mean).epsilon(1e-6));
  CHECK(m.stds[k] == doctest::Approx(std::sqrt(var / 5000.0)).epsilon(1e-6));
  CHECK(std::abs(m.means[k]) <= 0.1);
  CHECK(std::abs(m.stds[k] - 1.0) <= 0.1);
}

TEST_CASE("fit: separated bimodal recovers two equal-weight modes") {
  const auto v = draw_bimodal(5000, 2);
  const auto m = fit_feature_mixture(v, {}, 5);
  REQUIRE(m.active_count() == 2);
  const auto oracle = em2(v);
  auto modes = m.active_modes();
  if (m.means[modes[0]] > m.means[modes[1]]) std::swap(modes[0], modes[1]);
  for (int k = 0; k < 2; ++k) {
    CHECK(std::abs(m.weights[modes[k]] - 0.5) <= 0.05);
    CHECK(m.weights[modes[k]] == doctest::Approx(oracle.w[k]).epsilon(1e-3));
    CHECK(m.means[modes[k]] == doctest::Approx(oracle.mu[k]).epsilon(1e-3));
    CHECK(m.stds[modes[k]] == doctest::Approx(oracle.sd[k]).epsilon(1e-3));
  }
}

TEST_CASE("fit: constant feature falls back to a single narrow mode") {
  const auto m = fit_feature_mixture(std::vector<double>(50, 3.0), {}, 1);
  REQUIRE(m.active_count() == 1);
  CHECK(m.means[m.active_modes()[0]] == 3.0);
  CHECK(m.stds[m.active_modes()[0]] == doctest::Approx(3e-6));
  const auto z = fit_feature_mixture(std::vector<double>(50, 0.0), {}, 1);
  CHECK(z.stds[z.active_modes()[0]] == 1e-6);
}

TEST_CASE("fit: weights renormalize after pruning; deterministic per seed") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    std::vector<double> v(600);
    for (auto& x : v) x = rng.uniform() < 0.3 ? rng.normal(0, 0.5) : rng.normal(8, 2);
    const auto m = fit_feature_mixture(v, {}, seed);
    double total = 0;
    for (std::size_t k = 0; k < m.weights.size(); ++k) {
      if (m.active[k]) {
        total += m.weights[k];
        CHECK(m.stds[k] > 0);
      } else {
        CHECK(m.weights[k] == 0.0);
      }
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    const auto again = fit_feature_mixture(v, {}, seed);
    CHECK(again.means == m.means);
    CHECK(again.weights == m.weights);
  }
}

TEST_CASE("fit: errors") {
  CHECK_THROWS_AS(fit_feature_mixture({1, 2, 3}, {}, 1), Error);  // 3 rows < 10 modes
  VgmmOptions o;
  o.max_modes = 0;
  CHECK_THROWS_AS(fit_feature_mixture({1, 2, 3}, o, 1), Error);
}

TEST_CASE("encode: worked values") {
  SUBCASE("single mode (0, 1), value 2 -> alpha 0.5") {
    const VgmmCodec codec({"x"}, {fixed_mixture({0}, {1})}, 1);
    const auto enc = codec.encode(one_column({2.0}));
    CHECK(enc.rows(0, 0) == 0.5);
    CHECK(enc.rows(0, 1) == 1.0);
    CHECK(codec.encoded_width() == 2);
  }
  SUBCASE("tail value clamps to 1") {
    const VgmmCodec codec({"x"}, {fixed_mixture({0}, {1})}, 1);
    CHECK(codec.encode(one_column({12.0})).rows(0, 0) == 1.0);
    CHECK(codec.encode(one_column({-40.0})).rows(0, 0) == -1.0);
  }
  SUBCASE("value at the second mode's mean selects that mode with alpha 0") {
    const VgmmCodec codec({"x"}, {fixed_mixture({-5, 5}, {1, 1})}, 2);
    const auto enc = codec.encode(one_column({5.0}));
    CHECK(enc.rows(0, 0) == 0.0);
    CHECK(enc.rows(0, 1) == 0.0);
    CHECK(enc.rows(0, 2) == 1.0);
  }
  SUBCASE("feature count mismatch") {
    const VgmmCodec codec({"x"}, {fixed_mixture({0}, {1})}, 1);
    Matrix two(1, 2);
    two << 1, 2;
    CHECK_THROWS_AS(codec.encode(TabularDataset({"a", "b"}, two, {"A"})), Error);
  }
}

TEST_CASE("decode: worked values and malformed indicators") {
  const VgmmCodec single({"x"}, {fixed_mixture({0}, {1})}, 1);
  Matrix enc(1, 2);
  enc << 0.5, 1.0;
  CHECK(single.decode_rows(enc)(0, 0) == 2.0);

  const VgmmCodec shifted({"x"}, {fixed_mixture({10}, {0.5})}, 1);
  enc << -1.0, 1.0;
  CHECK(shifted.decode_rows(enc)(0, 0) == 8.0);

  enc << 0.3, 0.0;
  CHECK_THROWS_AS(single.decode_rows(enc), Error);
}

TEST_CASE("encoded rows: one-hot beta, alpha in [-1, 1], width = sum(1 + modes)") {
  Rng rng(4);
  Matrix x(800, 3);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = rng.normal(0, 1);
    x(i, 1) = rng.uniform() < 0.5 ? rng.normal(-4, 0.5) : rng.normal(4, 0.5);
    x(i, 2) = rng.normal(100, 30);
  }
  const TabularDataset ds({"a", "b", "c"}, x, std::vector<std::string>(800, "A"));
  const auto codec = fit_vgmm(ds, {}, 8);
  std::size_t width = 0;
  for (const auto& m : codec.mixtures()) width += 1 + m.active_count();
  CHECK(codec.encoded_width() == width);
  for (Rng* r : {static_cast<Rng*>(nullptr), &rng}) {
    const auto enc = codec.encode(ds, r);
    for (Eigen::Index i = 0; i < enc.rows.rows(); ++i) {
      for (const auto& slot : enc.layout) {
        const double a = enc.rows(i, static_cast<Eigen::Index>(slot.alpha_offset));
        CHECK((a >= -1.0 && a <= 1.0));
        double ones = 0, sum = 0;
        for (std::size_t b = 0; b < slot.beta_width; ++b) {
          const double v = enc.rows(i, static_cast<Eigen::Index>(slot.beta_offset + b));
          ones += v == 1.0;
          sum += v;
        }
        CHECK(ones == 1);
        CHECK(sum == 1);
      }
    }
  }
}

TEST_CASE("round trip: deterministic encode then decode on 5000 mixture rows") {
  Rng rng(5);
  Matrix x(5000, 2);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = rng.uniform() < 0.4 ? rng.normal(-3, 0.7) : rng.normal(6, 1.5);
    x(i, 1) = rng.normal(-20, 4);
  }
  const TabularDataset ds({"a", "b"}, x, std::vector<std::string>(5000, "A"));
  const auto codec = fit_vgmm(ds, {}, 6);
  const auto enc = codec.encode(ds);
  const auto back = codec.decode(enc);
  double worst = 0;
  std::size_t checked = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index f = 0; f < 2; ++f) {
      const double a = enc.rows(i, static_cast<Eigen::Index>(enc.layout[static_cast<std::size_t>(f)].alpha_offset));
      if (std::abs(a) >= 1.0) continue;  // clamped: not invertible by construction
      worst = std::max(worst, std::abs(back.rows()(i, f) - x(i, f)));
      ++checked;
    }
  }
  CHECK(checked > 9900);
  CHECK(worst <= 1e-9);
  CHECK(back.labels() == ds.labels());
}

TEST_CASE("round trip: decode then re-encode reproduces alpha and beta") {
  const VgmmCodec codec({"x", "y"}, {fixed_mixture({-5, 5}, {1, 2}), fixed_mixture({0}, {3})}, 2);
  Rng rng(6);
  Matrix enc = Matrix::Zero(200, 5);
  for (Eigen::Index i = 0; i < enc.rows(); ++i) {
    // Stay well inside each mode so argmax re-selects it.
    enc(i, 0) = rng.uniform(-0.1, 0.1);
    enc(i, 1 + static_cast<Eigen::Index>(rng.index(2))) = 1.0;
    enc(i, 3) = rng.uniform(-0.99, 0.99);
    enc(i, 4) = 1.0;
  }
  const Matrix decoded = codec.decode_rows(enc);
  const TabularDataset ds({"x", "y"}, decoded, std::vector<std::string>(200, "A"));
  const auto again = codec.encode(ds);
  CHECK((again.rows - enc).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("alpha is standardized on data drawn from the fitted mixture") {
  Rng rng(7);
  std::vector<double> v(3000);
  for (auto& x : v) x = rng.uniform() < 0.6 ? rng.normal(2, 0.3) : rng.normal(9, 1.2);
  const auto codec = fit_vgmm(one_column(v), {}, 3);
  const auto& m = codec.mixtures()[0];
  // Resample from the fitted mixture itself.
  std::vector<double> draw(4000);
  const auto modes = m.active_modes();
  for (auto& x : draw) {
    double u = rng.uniform(), acc = 0;
    std::size_t pick = modes.back();
    for (auto k : modes) {
      acc += m.weights[k];
      if (u <= acc) {
        pick = k;
        break;
      }
    }
    x = rng.normal(m.means[pick], m.stds[pick]);
  }
  const auto enc = codec.encode(one_column(draw), &rng);
  for (std::size_t slot = 0; slot < modes.size(); ++slot) {
    double s = 0, ss = 0, n = 0;
    for (Eigen::Index i = 0; i < enc.rows.rows(); ++i) {
      if (enc.rows(i, static_cast<Eigen::Index>(1 + slot)) != 1.0) continue;
      const double a = enc.rows(i, 0);
      s += a;
      ss += a * a;
      n += 1;
    }
    REQUIRE(n > 0);
    const double mean = s / n;
    CHECK(std::abs(mean) <= 0.5);
    CHECK(std::sqrt(ss / n - mean * mean) <= 1.0);
  }
}

TEST_CASE("codec document round trip") {
  const auto codec = fit_vgmm(one_column(draw_bimodal(500, 8), "ndvi"), {}, 9);
  const auto text = codec.serialize();
  const auto back = VgmmCodec::deserialize(text);
  CHECK(back.serialize() == text);
  CHECK(back.encoded_width() == codec.encoded_width());
  CHECK(back.mixtures()[0].means == codec.mixtures()[0].means);
  CHECK_THROWS_AS(VgmmCodec::deserialize("tabsynth-vgmm 99\n"), Error);
}
