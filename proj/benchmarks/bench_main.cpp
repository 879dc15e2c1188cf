// SPDX-License-Identifier: Apache-2.0
// The distro's benchmark_main archive carries LTO objects from another GCC; use our own main.
#include <benchmark/benchmark.h>

BENCHMARK_MAIN();
