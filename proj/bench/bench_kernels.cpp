// Serial reference loops against the OpenMP kernels on student-sized shapes.
// Run with OMP_NUM_THREADS set to compare thread counts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "lrd/kernels.hpp"

namespace {

using lrd::kernels::ConvShape;

struct Buffers {
  ConvShape s;
  std::vector<double> in, w, b, out;

  explicit Buffers(std::size_t batch, std::size_t width) {
    s = {batch, width, width, 40, 5};
    std::mt19937_64 g(1);
    std::normal_distribution<double> n(0.0, 1.0);
    in.resize(s.in_size());
    w.resize(s.weight_size());
    b.resize(s.out_channels);
    out.resize(s.out_size());
    for (auto* v : {&in, &w, &b})
      for (double& x : *v) x = n(g);
  }
};

template <auto Fn>
void forward(benchmark::State& st) {
  Buffers buf(static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)));
  for (auto _ : st) {
    Fn(buf.s, buf.in, buf.w, buf.b, buf.out);
    benchmark::DoNotOptimize(buf.out.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(buf.s.out_size() * buf.s.in_channels * buf.s.taps));
}

template <auto Fn>
void backward_input(benchmark::State& st) {
  Buffers buf(static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)));
  std::vector<double> din(buf.s.in_size());
  for (auto _ : st) {
    Fn(buf.s, buf.out, buf.w, din);
    benchmark::DoNotOptimize(din.data());
  }
}

template <auto Fn>
void backward_params(benchmark::State& st) {
  Buffers buf(static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)));
  std::vector<double> dw(buf.s.weight_size()), db(buf.s.out_channels);
  for (auto _ : st) {
    Fn(buf.s, buf.in, buf.out, dw, db);
    benchmark::DoNotOptimize(dw.data());
  }
}

void shapes(benchmark::internal::Benchmark* b) {
  for (int batch : {1, 64})
    for (int width : {32, 64}) b->Args({batch, width});
}

}  // namespace

BENCHMARK(forward<lrd::kernels::serial::conv1d_forward>)->Name("conv_forward/serial")->Apply(shapes);
BENCHMARK(forward<lrd::kernels::parallel::conv1d_forward>)->Name("conv_forward/omp")->Apply(shapes);
BENCHMARK(backward_input<lrd::kernels::serial::conv1d_backward_input>)->Name("conv_backward_input/serial")->Apply(shapes);
BENCHMARK(backward_input<lrd::kernels::parallel::conv1d_backward_input>)->Name("conv_backward_input/omp")->Apply(shapes);
BENCHMARK(backward_params<lrd::kernels::serial::conv1d_backward_params>)->Name("conv_backward_params/serial")->Apply(shapes);
BENCHMARK(backward_params<lrd::kernels::parallel::conv1d_backward_params>)->Name("conv_backward_params/omp")->Apply(shapes);
BENCHMARK_MAIN();
