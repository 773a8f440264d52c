#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tabsynth/common.hpp"
#include "tabsynth/dataset.hpp"

namespace tabsynth {

/// One-dimensional Gaussian mixture for a single continuous feature.
/// Inactive modes keep their slot (so mode indices are stable) but carry
/// zero weight and never appear in the encoded representation.
struct FeatureMixture {
  std::vector<double> means;
  std::vector<double> stds;
  std::vector<double> weights;
  std::vector<bool> active;

  std::size_t active_count() const;
  /// Indices of active modes, ascending. Position in this list is the
  /// one-hot slot used by the encoder.
  std::vector<std::size_t> active_modes() const;
};

struct VgmmOptions {
  std::size_t max_modes = 10;
  double prune_threshold = 5e-3;
  double tolerance = 1e-6;  // relative change of the penalized objective
  std::size_t max_iterations = 200;
};

/// Location of one feature inside an encoded row: the scalar alpha followed by
/// a one-hot beta block of `beta_width` slots.
struct FeatureSlot {
  std::size_t alpha_offset = 0;
  std::size_t beta_offset = 0;
  std::size_t beta_width = 0;
};

struct EncodedDataset {
  Matrix rows;
  std::vector<FeatureSlot> layout;
  std::vector<std::string> labels;
};

/// Mode-specific normalization of a table: each value c becomes
/// (alpha, beta) with alpha = clamp((c - mean_k) / (4 std_k), -1, 1) and beta
/// the one-hot indicator of the selected mode k.
class VgmmCodec {
 public:
  VgmmCodec() = default;
  VgmmCodec(std::vector<std::string> feature_names, std::vector<FeatureMixture> mixtures, std::size_t max_modes);

  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const std::vector<FeatureMixture>& mixtures() const { return mixtures_; }
  std::size_t max_modes() const { return max_modes_; }
  std::size_t n_features() const { return mixtures_.size(); }
  std::size_t encoded_width() const { return encoded_width_; }
  const std::vector<FeatureSlot>& layout() const { return layout_; }

  /// Deterministic (argmax responsibility) when `rng` is null, otherwise the
  /// mode is sampled from the posterior responsibilities.
  EncodedDataset encode(const TabularDataset& ds, Rng* rng = nullptr) const;
  TabularDataset decode(const EncodedDataset& enc) const;
  /// Decodes raw encoded rows; the beta block may hold soft scores, the
  /// argmax is taken.
  Matrix decode_rows(const Matrix& encoded) const;

  std::string serialize() const;
  static VgmmCodec deserialize(const std::string& text);

 private:
  std::vector<std::string> feature_names_;
  std::vector<FeatureMixture> mixtures_;
  std::size_t max_modes_ = 0;
  std::size_t encoded_width_ = 0;
  std::vector<FeatureSlot> layout_;
};

/// Fits one mixture to a column of values.
///
/// Components are seeded with k-means++ over quantile-spread candidates and
/// refined by component-wise EM under a Dirichlet-type weight prior
/// (weights ~ max(0, N_k - 1)), which annihilates unsupported components. The
/// component count is then swept down one at a time and the fit with the
/// smallest minimum-message-length score is kept. Finally modes below
/// `prune_threshold` are deactivated and weights renormalized.
FeatureMixture fit_feature_mixture(const std::vector<double>& values, const VgmmOptions& options,
                                   std::uint64_t seed);

/// Fits every feature of `ds` independently.
VgmmCodec fit_vgmm(const TabularDataset& ds, const VgmmOptions& options, std::uint64_t seed);

}  // namespace tabsynth
