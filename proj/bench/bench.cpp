// OpenMP kernels against their serial references.
#include <benchmark/benchmark.h>

#include "wml/dec.hpp"
#include "wml/geometry.hpp"
#include "wml/morse.hpp"
#include "wml/spectral.hpp"

using namespace wml;

namespace {

const geometry::TriMesh& saddle_mesh() {
  static const geometry::TriMesh mesh = geometry::build_mesh(geometry::make_disk(2.0), 0.05);
  return mesh;
}

const morse::PseudoGradientField& saddle_field() {
  static const geometry::SurfaceDomain domain = geometry::make_disk(2.0);
  static const morse::MorseFunction f = morse::saddle_xx_minus_yy();
  static const morse::PseudoGradientField field =
      morse::adapted_field(f, domain, 0.24, morse::find_critical_points(f, domain, 40, 1e-10).points);
  return field;
}

std::vector<spectral::SolveTask> tasks() {
  std::vector<spectral::SolveTask> t;
  for (double T : {4.0, 8.0})
    for (int k = 0; k < 3; ++k) t.push_back({T, k});
  return t;
}

void BM_assemble(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(dec::assemble(saddle_mesh(), morse::saddle_xx_minus_yy(), dec::BoundaryCondition::Absolute));
}

void BM_assemble_serial(benchmark::State& state) {
  for (auto _ : state)
    benchmark::DoNotOptimize(
        dec::assemble_serial(saddle_mesh(), morse::saddle_xx_minus_yy(), dec::BoundaryCondition::Absolute));
}

void BM_basins(benchmark::State& state) {
  const auto mesh = geometry::build_mesh(geometry::make_disk(2.0), 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(morse::classify_basins(saddle_field(), mesh));
}

void BM_basins_serial(benchmark::State& state) {
  const auto mesh = geometry::build_mesh(geometry::make_disk(2.0), 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(morse::classify_basins_serial(saddle_field(), mesh));
}

void BM_solve_batch(benchmark::State& state) {
  const auto as = dec::assemble(saddle_mesh(), morse::saddle_xx_minus_yy(), dec::BoundaryCondition::Absolute);
  const auto t = tasks();
  for (auto _ : state) benchmark::DoNotOptimize(spectral::solve_batch(as, t, 1.0));
}

void BM_solve_batch_serial(benchmark::State& state) {
  const auto as = dec::assemble(saddle_mesh(), morse::saddle_xx_minus_yy(), dec::BoundaryCondition::Absolute);
  const auto t = tasks();
  for (auto _ : state) benchmark::DoNotOptimize(spectral::solve_batch_serial(as, t, 1.0));
}

}  // namespace

BENCHMARK(BM_assemble)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_assemble_serial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_basins)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_basins_serial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_solve_batch)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_solve_batch_serial)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
