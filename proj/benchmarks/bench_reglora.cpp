// SPDX-License-Identifier: Apache-2.0
#include <random>

#include <benchmark/benchmark.h>

#include "forgetlab/reglora.hpp"

using namespace forgetlab::reglora;

namespace {

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
    return m;
}

void BM_SelectKeyElements(benchmark::State& state) {
    std::mt19937_64 rng(1);
    const auto side = state.range(0);
    const Matrix delta = random_matrix(rng, side, side);
    for (auto _ : state) benchmark::DoNotOptimize(select_key_elements(delta, 2.0));
    state.SetItemsProcessed(state.iterations() * delta.size());
}
BENCHMARK(BM_SelectKeyElements)->Arg(64)->Arg(256)->Arg(1024);

void BM_RegLossGrad(benchmark::State& state) {
    std::mt19937_64 rng(2);
    const auto side = state.range(0);
    const LoraAdapter ad{random_matrix(rng, 4, side), random_matrix(rng, side, 4), 1.0};
    auto stack = RegMaskStack::empty(side, side);
    stack = accumulate_mask(stack, select_key_elements(random_matrix(rng, side, side), 2.0));
    for (auto _ : state) benchmark::DoNotOptimize(reg_loss_grad(ad, stack, 2.5e3));
}
BENCHMARK(BM_RegLossGrad)->Arg(64)->Arg(256)->Arg(1024);

void BM_Concentration(benchmark::State& state) {
    std::mt19937_64 rng(3);
    const Matrix delta = random_matrix(rng, state.range(0), state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(update_concentration_stats(delta));
}
BENCHMARK(BM_Concentration)->Arg(64)->Arg(512);

}  // namespace
