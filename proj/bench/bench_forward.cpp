// Serial reference vs OpenMP execution of the 2N independent solves.

#include <benchmark/benchmark.h>

#include "tfde/inversion.hpp"

using namespace tfde;

namespace {

struct Setup {
  SpatialMesh mesh;
  TemporalGrid grid;
  ForwardOperator op;
  CoefficientField q;

  Setup(int dim, int elements)
      : mesh(build_mesh(dim, elements)),
        grid(1.0, 100, 0.3),
        op(mesh, grid, DiffusionTensor::identity(), make_sources(mesh, grid, BasisKind::kTrigonometric, 5),
           default_weight(), dim == 1 ? SegmentSet(SegmentSet::kLambda1) : SegmentSet::all(2)),
        q(interpolate(mesh, [](const Point& p) { return p[0] * (1.0 - p[0]); }), 0.0, 1.0) {}
};

Setup& setup(int dim) {
  static Setup one(1, 300);
  static Setup two(2, 30);
  return dim == 1 ? one : two;
}

void BM_ForwardMap(benchmark::State& state) {
  Setup& s = setup(static_cast<int>(state.range(0)));
  s.op.set_execution(state.range(1) ? Execution::kParallel : Execution::kSerial);
  for (auto _ : state) benchmark::DoNotOptimize(s.op.forward_map(s.q));
}

void BM_Gradient(benchmark::State& state) {
  Setup& s = setup(static_cast<int>(state.range(0)));
  s.op.set_execution(state.range(1) ? Execution::kParallel : Execution::kSerial);
  const InverseProblem problem(s.op, s.op.observations(add_noise(s.op.forward_map(s.q), 1e-3, 1)), {1e-6});
  const CoefficientField q0(Vector::Zero(s.q.size()), 0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(problem.gradient(q0));
}

}  // namespace

BENCHMARK(BM_ForwardMap)->ArgsProduct({{1, 2}, {0, 1}})->ArgNames({"dim", "parallel"})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Gradient)->ArgsProduct({{1, 2}, {0, 1}})->ArgNames({"dim", "parallel"})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
