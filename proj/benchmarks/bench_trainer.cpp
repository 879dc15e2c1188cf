// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "forgetlab/toy_tasks.hpp"
#include "forgetlab/trainer.hpp"

using namespace forgetlab;

namespace {

void BM_RunSequence(benchmark::State& state) {
    toy::SuiteParams p;
    p.samples_per_task = 500;
    p.style_mix_percent = 20;
    const auto tasks = toy::generate_task_suite(p);
    train::TrainConfig cfg;
    cfg.mode = state.range(0) ? train::Mode::RegLoRA : train::Mode::PlainLoRA;
    for (auto _ : state) benchmark::DoNotOptimize(train::run_sequence(tasks, cfg));
}
BENCHMARK(BM_RunSequence)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
