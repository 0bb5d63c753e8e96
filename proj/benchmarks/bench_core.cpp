#include <benchmark/benchmark.h>

#include "blocklab/info.hpp"
#include "blocklab/linalg.hpp"
#include "blocklab/matrix.hpp"
#include "blocklab/net.hpp"
#include "blocklab/topology.hpp"

using namespace blocklab;

static void BM_MatmulDense(benchmark::State& state) {
    const std::size_t d = static_cast<std::size_t>(state.range(0));
    SeededRng rng(1);
    const Matrix x = Matrix::gaussian(128, d, rng);
    const Matrix w = Matrix::gaussian(d, d, rng);
    for (auto _ : state) {
        Matrix y = matmul_nt(x, w);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * 128 * d * d);
}
BENCHMARK(BM_MatmulDense)->Arg(256)->Arg(512)->Arg(1024);

static void BM_BlockForward(benchmark::State& state) {
    const std::size_t d = static_cast<std::size_t>(state.range(0));
    NetworkSpec spec;
    spec.input_dim = d;
    LayerSpec layer;
    layer.kind = LayerKind::block_diagonal;
    layer.in_dim = d;
    layer.out_dim = d;
    layer.partition = BlockPartition::contiguous(d, 8);
    spec.layers = {layer};
    SeededRng rng(2);
    const NetworkState s = init_he(spec, rng);
    const Matrix x = Matrix::gaussian(128, d, rng);
    for (auto _ : state) {
        Matrix y = forward(s, spec, x);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * 128 * d * d / 8);
}
BENCHMARK(BM_BlockForward)->Arg(256)->Arg(512)->Arg(1024);

static void BM_SvdValues(benchmark::State& state) {
    const std::size_t d = static_cast<std::size_t>(state.range(0));
    SeededRng rng(3);
    const Matrix m = Matrix::gaussian(d, d, rng);
    for (auto _ : state) {
        auto sigma = svd_values(m);
        benchmark::DoNotOptimize(sigma.data());
    }
}
BENCHMARK(BM_SvdValues)->Arg(64)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_PairwiseNmi(benchmark::State& state) {
    const std::size_t d = static_cast<std::size_t>(state.range(0));
    SeededRng rng(4);
    const Matrix data = Matrix::gaussian(4096, d, rng);
    for (auto _ : state) {
        NmiMatrix c = pairwise_nmi(data, 16);
        benchmark::DoNotOptimize(c.values.data());
    }
}
BENCHMARK(BM_PairwiseNmi)->Arg(32)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

static void BM_MatrixExp(benchmark::State& state) {
    const std::size_t d = static_cast<std::size_t>(state.range(0));
    SeededRng rng(5);
    Matrix m = Matrix::gaussian(d, d, rng);
    m *= 1.0 / operator_norm(m);
    for (auto _ : state) {
        Matrix e = matrix_exp(m);
        benchmark::DoNotOptimize(e.data());
    }
}
BENCHMARK(BM_MatrixExp)->Arg(8)->Arg(32)->Arg(64)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
