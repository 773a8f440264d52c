#include "tabsynth/vgmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace tabsynth {

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kMinStdStandardized = 1e-3;
constexpr double kParamsPerMode = 2.0;  // mean and variance

double log_normal_pdf(double x, double mean, double std) {
  double z = (x - mean) / std;
  return -0.5 * z * z - std::log(std) - kLogSqrt2Pi;
}

struct MixtureState {
  std::vector<double> means, stds, weights;
  std::vector<bool> alive;
};

// Spread candidates over the empirical quantiles, then pick seeds with the
// k-means++ D^2 rule.
std::vector<double> seed_means(const std::vector<double>& sorted, std::size_t k, Rng& rng) {
  const std::size_t n = sorted.size();
  const std::size_t n_cand = std::min<std::size_t>(n, 256);
  std::vector<double> cand(n_cand);
  for (std::size_t i = 0; i < n_cand; ++i) {
    double q = (static_cast<double>(i) + 0.5) / static_cast<double>(n_cand);
    cand[i] = sorted[std::min(n - 1, static_cast<std::size_t>(q * static_cast<double>(n)))];
  }
  std::vector<double> seeds{cand[rng.index(n_cand)]};
  std::vector<double> d2(n_cand);
  while (seeds.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n_cand; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (double s : seeds) best = std::min(best, (cand[i] - s) * (cand[i] - s));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      seeds.push_back(cand[rng.index(n_cand)]);
      continue;
    }
    double u = rng.uniform() * total;
    std::size_t pick = n_cand - 1;
    for (std::size_t i = 0; i < n_cand; ++i) {
      u -= d2[i];
      if (u <= 0.0) {
        pick = i;
        break;
      }
    }
    seeds.push_back(cand[pick]);
  }
  return seeds;
}

// Component-wise EM with minimum-message-length weight annihilation, run on
// standardized data.
MixtureState fit_standardized(const std::vector<double>& x, const VgmmOptions& opt, Rng& rng) {
  const std::size_t n = x.size();
  const std::size_t k = opt.max_modes;
  const double nd = static_cast<double>(n);

  std::vector<double> sorted = x;
  std::sort(sorted.begin(), sorted.end());

  MixtureState s;
  s.means = seed_means(sorted, k, rng);
  s.stds.assign(k, std::sqrt(1.0 / 10.0));
  s.weights.assign(k, 1.0 / static_cast<double>(k));
  s.alive.assign(k, true);

  // pdf[j][i] = N(x_i | j); total[i] = sum_j w_j pdf[j][i]
  std::vector<std::vector<double>> pdf(k, std::vector<double>(n));
  std::vector<double> total(n, 0.0);
  auto component_pdf = [&](std::size_t j) {
    for (std::size_t i = 0; i < n; ++i) pdf[j][i] = std::exp(log_normal_pdf(x[i], s.means[j], s.stds[j]));
  };
  auto refresh_total = [&]() {
    std::fill(total.begin(), total.end(), 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      if (!s.alive[j]) continue;
      const double w = s.weights[j];
      for (std::size_t i = 0; i < n; ++i) total[i] += w * pdf[j][i];
    }
  };
  auto message_length = [&]() {
    double loglik = 0.0;
    for (std::size_t i = 0; i < n; ++i) loglik += std::log(std::max(total[i], 1e-300));
    double alive_count = 0.0, weight_term = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (!s.alive[j]) continue;
      alive_count += 1.0;
      weight_term += std::log(nd * s.weights[j] / 12.0);
    }
    return kParamsPerMode / 2.0 * weight_term + alive_count / 2.0 * std::log(nd / 12.0) +
           alive_count * (kParamsPerMode + 1.0) / 2.0 - loglik;
  };
  auto renormalize = [&]() {
    double sum = 0.0;
    for (std::size_t j = 0; j < k; ++j) sum += s.alive[j] ? s.weights[j] : 0.0;
    for (std::size_t j = 0; j < k; ++j) s.weights[j] = s.alive[j] ? s.weights[j] / sum : 0.0;
  };

  for (std::size_t j = 0; j < k; ++j) component_pdf(j);
  refresh_total();
  MixtureState best = s;
  double best_length = std::numeric_limits<double>::infinity();
  std::vector<double> resp(n);

  while (true) {
    double prev = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t iter = 0; iter < opt.max_iterations; ++iter) {
      for (std::size_t j = 0; j < k; ++j) {
        if (!s.alive[j]) continue;
        double nk = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          resp[i] = total[i] > 0.0 ? s.weights[j] * pdf[j][i] / total[i] : 0.0;
          nk += resp[i];
        }
        s.weights[j] = std::max(0.0, nk - kParamsPerMode / 2.0) / nd;
        if (s.weights[j] <= 0.0) s.alive[j] = false;
        if (std::none_of(s.alive.begin(), s.alive.end(), [](bool a) { return a; })) {
          // Never annihilate the last component.
          s.alive[j] = true;
          s.weights[j] = 1.0;
        }
        renormalize();
        if (s.alive[j]) {
          double mu = 0.0;
          for (std::size_t i = 0; i < n; ++i) mu += resp[i] * x[i];
          mu /= nk;
          double var = 0.0;
          for (std::size_t i = 0; i < n; ++i) var += resp[i] * (x[i] - mu) * (x[i] - mu);
          var /= nk;
          s.means[j] = mu;
          s.stds[j] = std::max(std::sqrt(var), kMinStdStandardized);
          component_pdf(j);
        }
        refresh_total();
      }
      double length = message_length();
      if (!std::isnan(prev) && std::abs(length - prev) < opt.tolerance * std::abs(prev)) break;
      prev = length;
    }
    double length = message_length();
    if (length < best_length) {
      best_length = length;
      best = s;
    }
    std::size_t alive = static_cast<std::size_t>(std::count(s.alive.begin(), s.alive.end(), true));
    if (alive <= 1) break;
    std::size_t weakest = k;
    for (std::size_t j = 0; j < k; ++j) {
      if (s.alive[j] && (weakest == k || s.weights[j] < s.weights[weakest])) weakest = j;
    }
    s.alive[weakest] = false;
    renormalize();
    refresh_total();
  }
  return best;
}

}  // namespace

std::size_t FeatureMixture::active_count() const {
  return static_cast<std::size_t>(std::count(active.begin(), active.end(), true));
}

std::vector<std::size_t> FeatureMixture::active_modes() const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < active.size(); ++j) {
    if (active[j]) out.push_back(j);
  }
  return out;
}

FeatureMixture fit_feature_mixture(const std::vector<double>& values, const VgmmOptions& options,
                                   std::uint64_t seed) {
  if (options.max_modes < 1) throw Error("vgmm: max_modes must be at least 1");
  if (values.size() < options.max_modes) {
    throw Error("vgmm: " + std::to_string(values.size()) + " rows is fewer than max_modes=" +
                std::to_string(options.max_modes));
  }
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double scale = std::sqrt(var / n);

  FeatureMixture mix;
  mix.means.assign(options.max_modes, mean);
  mix.stds.assign(options.max_modes, 1.0);
  mix.weights.assign(options.max_modes, 0.0);
  mix.active.assign(options.max_modes, false);

  if (!(scale > 1e-12 * std::max(1.0, std::abs(mean)))) {
    mix.means[0] = mean;
    mix.stds.assign(options.max_modes, std::max(1e-6, std::abs(mean) * 1e-6));
    mix.weights[0] = 1.0;
    mix.active[0] = true;
    return mix;
  }

  std::vector<double> z(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) z[i] = (values[i] - mean) / scale;
  Rng rng(seed);
  MixtureState fit = fit_standardized(z, options, rng);

  for (std::size_t j = 0; j < options.max_modes; ++j) {
    mix.means[j] = fit.means[j] * scale + mean;
    mix.stds[j] = fit.stds[j] * scale;
    mix.active[j] = fit.alive[j] && fit.weights[j] >= options.prune_threshold;
    mix.weights[j] = mix.active[j] ? fit.weights[j] : 0.0;
  }
  if (mix.active_count() == 0) {
    auto top = static_cast<std::size_t>(std::max_element(fit.weights.begin(), fit.weights.end()) - fit.weights.begin());
    mix.active[top] = true;
    mix.weights[top] = 1.0;
  }
  double sum = std::accumulate(mix.weights.begin(), mix.weights.end(), 0.0);
  for (auto& w : mix.weights) w /= sum;
  return mix;
}

VgmmCodec fit_vgmm(const TabularDataset& ds, const VgmmOptions& options, std::uint64_t seed) {
  if (ds.n_rows() < options.max_modes) {
    throw Error("vgmm: " + std::to_string(ds.n_rows()) + " rows is fewer than max_modes=" +
                std::to_string(options.max_modes));
  }
  std::vector<FeatureMixture> mixtures;
  mixtures.reserve(ds.n_features());
  for (std::size_t f = 0; f < ds.n_features(); ++f) {
    const auto col = ds.rows().col(static_cast<Eigen::Index>(f));
    std::vector<double> values(col.begin(), col.end());
    mixtures.push_back(fit_feature_mixture(values, options, mix_seed(seed, f)));
  }
  return VgmmCodec(ds.feature_names(), std::move(mixtures), options.max_modes);
}

VgmmCodec::VgmmCodec(std::vector<std::string> feature_names, std::vector<FeatureMixture> mixtures,
                     std::size_t max_modes)
    : feature_names_(std::move(feature_names)), mixtures_(std::move(mixtures)), max_modes_(max_modes) {
  if (feature_names_.size() != mixtures_.size()) throw Error("vgmm: feature/mixture count mismatch");
  for (std::size_t f = 0; f < mixtures_.size(); ++f) {
    const auto& m = mixtures_[f];
    if (m.means.size() != m.stds.size() || m.means.size() != m.weights.size() || m.means.size() != m.active.size()) {
      throw Error("vgmm: inconsistent mixture arrays for feature '" + feature_names_[f] + "'");
    }
    if (m.active_count() == 0) throw Error("vgmm: feature '" + feature_names_[f] + "' has no active mode");
    for (double s : m.stds) {
      if (!(s > 0.0)) throw Error("vgmm: non-positive std for feature '" + feature_names_[f] + "'");
    }
    FeatureSlot slot;
    slot.alpha_offset = encoded_width_;
    slot.beta_offset = encoded_width_ + 1;
    slot.beta_width = m.active_count();
    layout_.push_back(slot);
    encoded_width_ += 1 + slot.beta_width;
  }
}

EncodedDataset VgmmCodec::encode(const TabularDataset& ds, Rng* rng) const {
  if (ds.n_features() != n_features()) {
    throw Error("vgmm encode: dataset has " + std::to_string(ds.n_features()) + " features, codec expects " +
                std::to_string(n_features()));
  }
  EncodedDataset enc;
  enc.rows = Matrix::Zero(static_cast<Eigen::Index>(ds.n_rows()), static_cast<Eigen::Index>(encoded_width_));
  enc.layout = layout_;
  enc.labels = ds.labels();
  std::vector<double> logp;
  for (std::size_t f = 0; f < n_features(); ++f) {
    const auto& mix = mixtures_[f];
    const auto modes = mix.active_modes();
    const auto& slot = layout_[f];
    logp.resize(modes.size());
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
      const double c = ds.rows()(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f));
      std::size_t pick = 0;
      for (std::size_t m = 0; m < modes.size(); ++m) {
        logp[m] = std::log(mix.weights[modes[m]]) + log_normal_pdf(c, mix.means[modes[m]], mix.stds[modes[m]]);
        if (logp[m] > logp[pick]) pick = m;
      }
      if (rng != nullptr && modes.size() > 1) {
        const double top = logp[pick];
        double sum = 0.0;
        for (auto& lp : logp) {
          lp = std::exp(lp - top);
          sum += lp;
        }
        double u = rng->uniform() * sum;
        for (std::size_t m = 0; m < modes.size(); ++m) {
          u -= logp[m];
          if (u <= 0.0) {
            pick = m;
            break;
          }
        }
      }
      const std::size_t k = modes[pick];
      const double alpha = std::clamp((c - mix.means[k]) / (4.0 * mix.stds[k]), -1.0, 1.0);
      enc.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(slot.alpha_offset)) = alpha;
      enc.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(slot.beta_offset + pick)) = 1.0;
    }
  }
  return enc;
}

Matrix VgmmCodec::decode_rows(const Matrix& encoded) const {
  if (static_cast<std::size_t>(encoded.cols()) != encoded_width_) {
    throw Error("vgmm decode: encoded width " + std::to_string(encoded.cols()) + " does not match codec width " +
                std::to_string(encoded_width_));
  }
  Matrix out(encoded.rows(), static_cast<Eigen::Index>(n_features()));
  for (std::size_t f = 0; f < n_features(); ++f) {
    const auto& mix = mixtures_[f];
    const auto modes = mix.active_modes();
    const auto& slot = layout_[f];
    for (Eigen::Index r = 0; r < encoded.rows(); ++r) {
      auto beta = encoded.row(r).segment(static_cast<Eigen::Index>(slot.beta_offset),
                                         static_cast<Eigen::Index>(slot.beta_width));
      if ((beta.array() == 0.0).all()) {
        throw Error("vgmm decode: malformed mode indicator (all zeros) at row " + std::to_string(r) +
                    ", feature '" + feature_names_[f] + "'");
      }
      Eigen::Index pick = 0;
      beta.maxCoeff(&pick);
      const std::size_t k = modes[static_cast<std::size_t>(pick)];
      const double alpha = encoded(r, static_cast<Eigen::Index>(slot.alpha_offset));
      out(r, static_cast<Eigen::Index>(f)) = alpha * 4.0 * mix.stds[k] + mix.means[k];
    }
  }
  return out;
}

TabularDataset VgmmCodec::decode(const EncodedDataset& enc) const {
  if (enc.layout.size() != layout_.size()) throw Error("vgmm decode: layout does not match codec");
  for (std::size_t f = 0; f < layout_.size(); ++f) {
    if (enc.layout[f].alpha_offset != layout_[f].alpha_offset || enc.layout[f].beta_width != layout_[f].beta_width) {
      throw Error("vgmm decode: layout does not match codec at feature '" + feature_names_[f] + "'");
    }
  }
  return TabularDataset(feature_names_, decode_rows(enc.rows), enc.labels);
}

std::string VgmmCodec::serialize() const {
  std::ostringstream out;
  out << "tabsynth-vgmm 1\n";
  out << "max_modes " << max_modes_ << "\n";
  out << "features " << mixtures_.size() << "\n";
  for (std::size_t f = 0; f < mixtures_.size(); ++f) {
    const auto& m = mixtures_[f];
    out << "feature " << feature_names_[f] << "\n";
    out << "modes " << m.means.size() << "\n";
    for (std::size_t j = 0; j < m.means.size(); ++j) {
      out << (m.active[j] ? 1 : 0) << ' ' << format_double(m.weights[j]) << ' ' << format_double(m.means[j]) << ' '
          << format_double(m.stds[j]) << "\n";
    }
  }
  return out.str();
}

VgmmCodec VgmmCodec::deserialize(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  auto next = [&](const std::string& key) {
    if (!std::getline(in, line)) throw Error("vgmm: truncated codec document (expected '" + key + "')");
    if (line.rfind(key + " ", 0) != 0) throw Error("vgmm: expected '" + key + "', got '" + line + "'");
    return line.substr(key.size() + 1);
  };
  if (next("tabsynth-vgmm") != "1") throw Error("vgmm: unsupported codec version");
  std::size_t max_modes = std::stoul(next("max_modes"));
  std::size_t n = std::stoul(next("features"));
  std::vector<std::string> names;
  std::vector<FeatureMixture> mixtures;
  for (std::size_t f = 0; f < n; ++f) {
    names.push_back(next("feature"));
    std::size_t modes = std::stoul(next("modes"));
    FeatureMixture m;
    for (std::size_t j = 0; j < modes; ++j) {
      if (!std::getline(in, line)) throw Error("vgmm: truncated mode list");
      auto parts = split(trim(line), ' ');
      double w = 0, mu = 0, sd = 0;
      if (parts.size() != 4 || !parse_double(parts[1], w) || !parse_double(parts[2], mu) || !parse_double(parts[3], sd)) {
        throw Error("vgmm: malformed mode line '" + line + "'");
      }
      m.active.push_back(parts[0] == "1");
      m.weights.push_back(w);
      m.means.push_back(mu);
      m.stds.push_back(sd);
    }
    mixtures.push_back(std::move(m));
  }
  return VgmmCodec(std::move(names), std::move(mixtures), max_modes);
}

}  // namespace tabsynth
