#include <benchmark/benchmark.h>

#include "tabsynth/classify.hpp"
#include "tabsynth/ctgan.hpp"
#include "tabsynth/harness.hpp"
#include "tabsynth/neuralnet.hpp"
#include "tabsynth/resample.hpp"
#include "tabsynth/vgmm.hpp"

using namespace tabsynth;

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

const TabularDataset& crop_train() {
  static const TabularDataset train =
      stratified_split(make_benchmark(crop7_spec()), {0.1, true, 42}).first;
  return train;
}

// Generator-shaped network: two 255-wide residual blocks with batch norm.
DenseNet generator_like(std::size_t in, std::size_t out) {
  LayerSpec block{255, Activation::relu, true, 1.0};
  block.batch_norm = true;
  return DenseNet(in, {block, block, {out, Activation::linear}}, 1);
}

}  // namespace

static void BM_GeneratorForward(benchmark::State& state) {
  const auto net = generator_like(135, 80);
  const Matrix x = gaussian(state.range(0), 135, 2);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x).output.data());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GeneratorForward)->Arg(100)->Arg(500);

static void BM_GeneratorForwardBackward(benchmark::State& state) {
  const auto net = generator_like(135, 80);
  const Matrix x = gaussian(state.range(0), 135, 3);
  const Matrix g = gaussian(state.range(0), static_cast<Eigen::Index>(net.output_width()), 4);
  for (auto _ : state) {
    const auto pass = net.forward(x);
    benchmark::DoNotOptimize(net.backward(pass, g).tape.weight.front().data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GeneratorForwardBackward)->Arg(100)->Arg(500);

static void BM_GradientPenalty(benchmark::State& state) {
  const DenseNet critic(740, {{255, Activation::leaky_relu}, {255, Activation::leaky_relu}, {1, Activation::linear}}, 5);
  const Matrix x = gaussian(state.range(0), 740, 6);
  for (auto _ : state) benchmark::DoNotOptimize(gradient_penalty(critic, x).value);
}
BENCHMARK(BM_GradientPenalty)->Arg(50);

static void BM_VgmmFit(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(fit_vgmm(crop_train(), {}, 7).encoded_width());
}
BENCHMARK(BM_VgmmFit)->Unit(benchmark::kMillisecond);

static void BM_CtganEpoch(benchmark::State& state) {
  TrainConfig cfg;
  cfg.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train_ctgan(crop_train(), cfg).training_log.size());
}
BENCHMARK(BM_CtganEpoch)->Unit(benchmark::kMillisecond);

static void BM_KnnPredict(benchmark::State& state) {
  const auto model = knn_train(crop_train(), {10, KnnMetric::manhattan, KnnWeighting::distance});
  const Matrix q = gaussian(state.range(0), 20, 8);
  for (auto _ : state) benchmark::DoNotOptimize(knn_predict_ids(model, q).data());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_KnnPredict)->Arg(1000);

static void BM_ForestTrain(benchmark::State& state) {
  ForestParams p;
  p.n_estimators = 20;
  for (auto _ : state) benchmark::DoNotOptimize(forest_train(crop_train(), p).trees.size());
}
BENCHMARK(BM_ForestTrain)->Unit(benchmark::kMillisecond);

static void BM_Smote(benchmark::State& state) {
  ResamplePlan plan;
  for (auto _ : state) benchmark::DoNotOptimize(smote(crop_train(), plan).n_rows());
}
BENCHMARK(BM_Smote)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
