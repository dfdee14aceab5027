// Serial reference vs OpenMP kernel comparison.
#include "dualpath/common.hpp"
#include "dualpath/kernels.hpp"

#include <benchmark/benchmark.h>

using namespace dualpath;
namespace ks = dualpath::kernels;

namespace {

struct ConvCase {
    Tensor x;
    std::vector<double> w, b;
    int co, k, stride, pad;
    Tensor y;
};

ConvCase make_case(int n, int ci, int co, int l, int k, int stride) {
    ConvCase c;
    c.x = Tensor(n, ci, l);
    c.co = co;
    c.k = k;
    c.stride = stride;
    c.pad = k / 2;
    c.w.resize(static_cast<std::size_t>(co) * ci * k);
    c.b.assign(static_cast<std::size_t>(co), 0.1);
    Rng rng(7);
    for (auto& v : c.x.v) v = rng.normal();
    for (auto& v : c.w) v = rng.normal();
    c.y = Tensor(n, co, ks::conv_out_len(l, k, stride, c.pad));
    return c;
}

void conv1d_serial(benchmark::State& state) {
    auto c = make_case(8, static_cast<int>(state.range(0)), static_cast<int>(state.range(0)), 2048, 7, 2);
    for (auto _ : state) {
        ks::conv1d_fwd_serial(c.x, c.w, c.b, c.co, c.k, c.stride, c.pad, c.y);
        benchmark::DoNotOptimize(c.y.v.data());
        benchmark::ClobberMemory();
    }
}

void conv1d_omp(benchmark::State& state) {
    auto c = make_case(8, static_cast<int>(state.range(0)), static_cast<int>(state.range(0)), 2048, 7, 2);
    for (auto _ : state) {
        ks::conv1d_fwd_omp(c.x, c.w, c.b, c.co, c.k, c.stride, c.pad, c.y);
        benchmark::DoNotOptimize(c.y.v.data());
        benchmark::ClobberMemory();
    }
}

void conv1d_bwd_params_serial(benchmark::State& state) {
    auto c = make_case(8, static_cast<int>(state.range(0)), static_cast<int>(state.range(0)), 2048, 7, 2);
    std::vector<double> dw(c.w.size(), 0.0), db(c.b.size(), 0.0);
    for (auto _ : state) {
        ks::conv1d_bwd_params_serial(c.x, c.y, c.k, c.stride, c.pad, dw, db);
        benchmark::DoNotOptimize(dw.data());
        benchmark::ClobberMemory();
    }
}

void conv1d_bwd_params_omp(benchmark::State& state) {
    auto c = make_case(8, static_cast<int>(state.range(0)), static_cast<int>(state.range(0)), 2048, 7, 2);
    std::vector<double> dw(c.w.size(), 0.0), db(c.b.size(), 0.0);
    for (auto _ : state) {
        ks::conv1d_bwd_params_omp(c.x, c.y, c.k, c.stride, c.pad, dw, db);
        benchmark::DoNotOptimize(dw.data());
        benchmark::ClobberMemory();
    }
}

void instnorm_serial(benchmark::State& state) {
    const int n = 16, ch = static_cast<int>(state.range(0)), l = 2048;
    Tensor x(n, ch, l), y(n, ch, l), xhat(n, ch, l);
    std::vector<double> gamma(ch, 1.0), beta(ch, 0.0), istd(static_cast<std::size_t>(n) * ch);
    Rng rng(3);
    for (auto& v : x.v) v = rng.normal();
    for (auto _ : state) {
        ks::instnorm_fwd_serial(x, gamma, beta, 1e-5, y, xhat, istd);
        benchmark::DoNotOptimize(y.v.data());
    }
}

void instnorm_omp(benchmark::State& state) {
    const int n = 16, ch = static_cast<int>(state.range(0)), l = 2048;
    Tensor x(n, ch, l), y(n, ch, l), xhat(n, ch, l);
    std::vector<double> gamma(ch, 1.0), beta(ch, 0.0), istd(static_cast<std::size_t>(n) * ch);
    Rng rng(3);
    for (auto& v : x.v) v = rng.normal();
    for (auto _ : state) {
        ks::instnorm_fwd_omp(x, gamma, beta, 1e-5, y, xhat, istd);
        benchmark::DoNotOptimize(y.v.data());
    }
}

}  // namespace

BENCHMARK(conv1d_serial)->Arg(8)->Arg(32)->Arg(64);
BENCHMARK(conv1d_omp)->Arg(8)->Arg(32)->Arg(64);
BENCHMARK(conv1d_bwd_params_serial)->Arg(8)->Arg(32);
BENCHMARK(conv1d_bwd_params_omp)->Arg(8)->Arg(32);
BENCHMARK(instnorm_serial)->Arg(16)->Arg(64);
BENCHMARK(instnorm_omp)->Arg(16)->Arg(64);

BENCHMARK_MAIN();
