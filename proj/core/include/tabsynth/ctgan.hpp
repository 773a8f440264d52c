#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tabsynth/common.hpp"
#include "tabsynth/dataset.hpp"
#include "tabsynth/neuralnet.hpp"
#include "tabsynth/vgmm.hpp"

namespace tabsynth {

/// The conditional vector is a one-hot over class labels only.
struct ConditionalLayout {
  std::vector<std::string> classes;
  std::vector<double> class_frequencies;

  std::size_t class_count() const { return classes.size(); }
  std::size_t condvec_width() const { return classes.size(); }
  int class_id(const std::string& name) const;
};

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 500;  // capped at the number of training rows
  double learning_rate = 2e-3;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double gumbel_tau = 0.2;
  double gradient_penalty_weight = 10.0;  // 0 reproduces the bare critic loss
  std::size_t noise_dim = 128;
  std::vector<std::size_t> generator_widths{255, 255};      // residual blocks
  bool generator_batch_norm = true;
  std::size_t pac = 10;  // rows per critic input
  std::vector<std::size_t> discriminator_widths{255, 255};  // leaky-relu hidden layers
  VgmmOptions vgmm;
  std::uint64_t seed = 0;
};

struct LossRecord {
  std::size_t epoch = 0;
  double discriminator_loss = 0.0;
  double generator_loss = 0.0;
};

struct Condition {
  int class_id = 0;
  RowVector one_hot;
};

/// Generator, critic, codec and conditional layout of a trained model.
struct CtganModel {
  DenseNet generator;      // [noise, cond] -> [encoded row, cond logits]
  DenseNet discriminator;  // pac x [encoded row, cond] -> critic score
  VgmmCodec codec;
  ConditionalLayout layout;
  std::size_t noise_dim = 0;
  std::size_t pac = 1;
  double gumbel_tau = 0.2;
  std::vector<LossRecord> training_log;

  std::size_t encoded_width() const { return codec.encoded_width(); }

  std::string serialize() const;
  static CtganModel deserialize(const std::string& text);
};

/// (1/m) sum_i [D(fake_i) - D(real_i)].
double discriminator_loss(std::span<const double> d_real, std::span<const double> d_fake);
/// -(1/m) sum_i D(fake_i) + ce.
double generator_loss(std::span<const double> d_fake, double ce);
/// Mean of -log p[row, target[row]] over rows of a probability matrix.
double condition_cross_entropy(const Matrix& probabilities, std::span<const int> targets);

/// Class drawn uniformly over the layout's classes.
Condition sample_condition(const ConditionalLayout& layout, Rng& rng);

/// Applies the per-block output activations to raw generator output: tanh on
/// each alpha, gumbel softmax on each beta block and on the condition block.
Matrix activate_generator_output(const VgmmCodec& codec, std::size_t condvec_width, const Matrix& raw, double tau,
                                 Rng& rng);

using TrainProgress = std::function<void(const LossRecord&)>;

CtganModel train_ctgan(const TabularDataset& real, const TrainConfig& cfg, const TrainProgress& progress = {});

/// n synthetic rows of one class, decoded back to the original feature space.
TabularDataset generate(const CtganModel& model, const std::string& class_name, std::size_t n, std::uint64_t seed);

/// Returns `ds` followed by synthetic rows so that each class in `targets`
/// reaches its target count. Targets below the current count add nothing.
TabularDataset augment_with_ctgan(const CtganModel& model, const TabularDataset& ds,
                                  const std::map<std::string, std::size_t>& targets, std::uint64_t seed);

}  // namespace tabsynth
