#include <benchmark/benchmark.h>

#include "wavecast/compile.hpp"
#include "wavecast/harness.hpp"
#include "wavecast/hankel.hpp"
#include "wavecast/learner.hpp"
#include "wavecast/pseudo_lds.hpp"

using namespace wavecast;

namespace {

void BM_BuildHankel(benchmark::State& state) {
    const std::size_t T = std::size_t(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(build_hankel(T));
}
BENCHMARK(BM_BuildHankel)->Arg(64)->Arg(256)->Arg(1024);

void BM_JacobiEigen(benchmark::State& state) {
    const std::size_t T = std::size_t(state.range(0));
    const HankelMatrix z = build_hankel(T);
    for (auto _ : state) benchmark::DoNotOptimize(jacobi_eigen(z.entries));
}
BENCHMARK(BM_JacobiEigen)->Arg(32)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

struct FeatureFixture {
    PseudoDims dims;
    FilterBank bank;
    std::vector<Vec> inputs;
    SeriesHistory history{1, 1};

    FeatureFixture(std::size_t T, std::size_t W, std::size_t k, std::size_t n) {
        dims.W = W;
        dims.k = k;
        dims.n = n;
        dims.m = 2;
        dims.tau = 10;
        dims.lag_offset = 9;
        bank = compute_filter_bank(T, k);
        Rng rng(1);
        inputs = gaussian_inputs(T, n, rng);
        history = SeriesHistory(n, 2);
        for (const Vec& x : inputs) {
            history.push_input(x);
            if (history.steps() < inputs.size()) history.push_output(Vec(2, 0.5));
        }
    }
};

void BM_FeaturesOnline(benchmark::State& state) {
    FeatureFixture fx(512, 16, 8, 10);
    for (auto _ : state)
        benchmark::DoNotOptimize(compute_features(fx.history, fx.bank, fx.dims));
}
BENCHMARK(BM_FeaturesOnline)->Unit(benchmark::kMicrosecond);

void BM_FeaturesBatch(benchmark::State& state) {
    FeatureFixture fx(512, 16, 8, 10);
    for (auto _ : state)
        benchmark::DoNotOptimize(FeatureBatch(fx.inputs, fx.bank, fx.dims));
}
BENCHMARK(BM_FeaturesBatch)->Unit(benchmark::kMillisecond);

void BM_PredictGradient(benchmark::State& state) {
    FeatureFixture fx(512, 16, 8, 10);
    const FeatureVector f = compute_features(fx.history, fx.bank, fx.dims);
    Rng rng(3);
    PseudoLds theta = PseudoLds::zeros(fx.dims);
    for (double& v : theta.M) v = rng.gaussian();
    const Vec y{1.0, -1.0};
    for (auto _ : state) benchmark::DoNotOptimize(gradient(theta, f, y));
}
BENCHMARK(BM_PredictGradient)->Unit(benchmark::kMicrosecond);

void BM_FtrlStep(benchmark::State& state) {
    PseudoDims dims;
    dims.W = 8;
    dims.k = 5;
    dims.n = 4;
    dims.m = 2;
    dims.tau = 4;
    dims.lag_offset = 3;
    const FilterBank bank = compute_filter_bank(256, 5);
    LearnerConfig cfg;
    cfg.mode = LearnerMode::FtrlTheory;
    cfg.eta = 30.0;
    cfg.radius = 100.0;
    cfg.inner_iters = 30;
    Rng rng(5);
    SeriesHistory h(4, 2);
    LearnerState st(dims, cfg);
    std::size_t t = 0;
    for (auto _ : state) {
        h.push_input(rng.gaussian_vec(4));
        const FeatureVector f = compute_features(h, bank, dims);
        const Vec y = rng.gaussian_vec(2);
        ftrl_step(st, f, y);
        h.push_output(y);
        ++t;
    }
    state.SetItemsProcessed(std::int64_t(t));
}
BENCHMARK(BM_FtrlStep)->Unit(benchmark::kMillisecond);

void BM_ProjectOntoBall(benchmark::State& state) {
    PseudoDims dims;
    dims.W = 16;
    dims.k = 8;
    dims.n = 10;
    dims.m = 2;
    dims.tau = 10;
    Rng rng(7);
    PseudoLds theta = PseudoLds::zeros(dims);
    for (double& v : theta.M) v = rng.gaussian();
    for (double& v : theta.N) v = rng.gaussian();
    for (double& v : theta.beta) v = rng.gaussian();
    for (double& v : theta.P) v = rng.gaussian();
    const double radius = 0.25 * composite_norm(theta);
    for (auto _ : state) benchmark::DoNotOptimize(project_onto_ball(theta, radius));
}
BENCHMARK(BM_ProjectOntoBall)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
