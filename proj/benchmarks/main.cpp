// The packaged benchmark_main archive carries LTO bytecode from another
// compiler release, so main comes from here.
#include <benchmark/benchmark.h>

BENCHMARK_MAIN();
