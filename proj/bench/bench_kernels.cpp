// serial reference vs OpenMP for the hot kernels
#include "fiolab/factorization.hpp"

#include <benchmark/benchmark.h>

using namespace fiolab;

namespace {

Exec exec_of(const benchmark::State& st) { return st.range(0) ? Exec::parallel : Exec::serial; }

SymbolPtr standard() { return std::make_shared<const StandardSymbol>(StandardSymbol::defaults(2)); }

AveragingSpec halfwave_spec() {
    AveragingSpec A;
    A.phase = make_phase("halfwave", 2);
    A.k_lo = 4;
    A.k_hi = 8;
    return A;
}

void BM_apply_A_band(benchmark::State& st) {
    const AveragingSpec A = halfwave_spec();
    const auto src = delta_source(2, vec2(0.0, 1.0));
    const GridSpec g = GridSpec::box(2, {128, 128, 1}, {2.4, 2.4, 1}, {0.0, 0.0, 0});
    AOptions o;
    o.exec = exec_of(st);
    for (auto _ : st) benchmark::DoNotOptimize(apply_A_band(A, src, 6, g, o));
}

void BM_apply_fio(benchmark::State& st) {
    auto ph = make_phase("varcoef", 2);
    auto a = standard();
    const GridSpec g = GridSpec::cube(2, 64, 2.0);
    auto f = GriddedFunction::sample(g, [](const Vec& x) { return Complex(std::exp(-40 * x.squaredNorm())); });
    for (auto _ : st) benchmark::DoNotOptimize(apply_fio(*ph, *a, f, exec_of(st), false));
}

void BM_apply_S_direct(benchmark::State& st) {
    auto a = standard();
    const AveragingSpec A = halfwave_spec();
    PseudoSymbol s(A.phase, a, A, a->omega_radius());
    const GridSpec g = GridSpec::box(2, {32, 32, 1}, {1.0, 1.0, 1}, {0.0, 0.0, 0});
    auto in = GriddedFunction::sample(g, [](const Vec& x) {
        return std::exp(-30 * x.squaredNorm()) * cis(12.0 * x(1) + x(0));
    });
    for (auto _ : st) benchmark::DoNotOptimize(apply_S_direct(s, in, exec_of(st)));
}

void BM_kernel_row(benchmark::State& st) {
    auto ph = make_phase("cusp", 2);
    DyadicSymbolPiece piece(standard(), ph, 5, 0.25, PieceKind::full);
    KernelRowOptions o;
    o.method = KernelMethod::projective;
    o.exec = exec_of(st);
    for (auto _ : st) benchmark::DoNotOptimize(kernel_row(*ph, piece, vec2(0.05, 0.0), o));
}

}  // namespace

BENCHMARK(BM_apply_A_band)->ArgName("omp")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_apply_fio)->ArgName("omp")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_apply_S_direct)->ArgName("omp")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_kernel_row)->ArgName("omp")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
