#include <benchmark/benchmark.h>

#include "skinfit/anim.hpp"
#include "skinfit/cnn.hpp"
#include "skinfit/codec.hpp"
#include "skinfit/fitting.hpp"
#include "skinfit/initializers.hpp"
#include "skinfit/metrics.hpp"

using namespace skinfit;

namespace {

const SyntheticRig& rig(std::size_t bones) {
    static std::vector<std::unique_ptr<SyntheticRig>> cache(16);
    if (!cache[bones]) cache[bones] = std::make_unique<SyntheticRig>(make_synthetic_rig(bones, 168, 30, 7));
    return *cache[bones];
}

void BM_LbsSequence(benchmark::State& state) {
    const auto model = rig(static_cast<std::size_t>(state.range(0))).model();
    for (auto _ : state) benchmark::DoNotOptimize(lbs_sequence(model));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(model.vertex_count() * model.frame_count()));
}
BENCHMARK(BM_LbsSequence)->Arg(3)->Arg(8);

void BM_SolveTransforms(benchmark::State& state) {
    const auto& r = rig(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(solve_transforms(r.sequence, r.weights, r.transforms.bone_count()));
}
BENCHMARK(BM_SolveTransforms)->Arg(3)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_SolveWeights(benchmark::State& state) {
    const auto& r = rig(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(solve_weights(r.sequence, r.transforms, r.weights));
}
BENCHMARK(BM_SolveWeights)->Arg(3)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Alternate(benchmark::State& state) {
    const auto& r = rig(3);
    const auto init = extract_weights(labels_to_probabilities(cluster_trajectories(r.sequence, 6, 0)), 1e-3);
    for (auto _ : state) benchmark::DoNotOptimize(alternate(r.sequence, init.weights, init.bone_count));
}
BENCHMARK(BM_Alternate)->Unit(benchmark::kMillisecond);

void BM_CnnForward(benchmark::State& state) {
    const std::size_t len = static_cast<std::size_t>(state.range(0));
    const CnnModel m = CnnModel::initialized(32, len, 0);
    std::vector<double> x(len, 0.25);
    for (auto _ : state) benchmark::DoNotOptimize(cnn_forward(m, x));
}
BENCHMARK(BM_CnnForward)->Arg(90)->Arg(300);

void BM_CnnBackward(benchmark::State& state) {
    const std::size_t len = static_cast<std::size_t>(state.range(0));
    const CnnModel m = CnnModel::initialized(32, len, 0);
    std::vector<double> x(len, 0.25), y(32, 0.0);
    y[3] = 1.0;
    for (auto _ : state) benchmark::DoNotOptimize(cnn_backward(m, x, y));
}
BENCHMARK(BM_CnnBackward)->Arg(90)->Arg(300);

void BM_Evaluate(benchmark::State& state) {
    const auto& r = rig(3);
    const auto approx = lbs_sequence(decode(encode(r.model())));
    for (auto _ : state) benchmark::DoNotOptimize(evaluate(r.sequence, approx, 3));
}
BENCHMARK(BM_Evaluate);

void BM_EncodeDecode(benchmark::State& state) {
    const auto model = rig(3).model();
    for (auto _ : state) benchmark::DoNotOptimize(decode(encode(model)));
}
BENCHMARK(BM_EncodeDecode);

}  // namespace

BENCHMARK_MAIN();
