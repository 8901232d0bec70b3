#include <random>

#include <benchmark/benchmark.h>

#include "hmti/hmti.hpp"

using namespace hmti;

namespace {

LocalTransformer bench_transformer(Eigen::Index d, Eigen::Index p) {
  LocalTransformerConfig cfg;
  cfg.state_dim = d;
  cfg.conditioning_dim = p;
  cfg.init_seed = 1;
  LocalTransformer t(cfg);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  Eigen::VectorXd th = t.params();
  for (Eigen::Index k = 0; k < th.size(); ++k) th(k) += u(rng);
  t.set_params(th);
  return t;
}

InterfaceState ic(Eigen::Index d) {
  return InterfaceState::FromInitialCondition(Eigen::VectorXd::Constant(d, 0.5), Eigen::VectorXd::Constant(d, -0.2));
}

void BM_TransformerPartials(benchmark::State& state) {
  const auto m = static_cast<Eigen::Index>(state.range(0));
  const LocalTransformer t = bench_transformer(3, 0);
  const DgP0Field u(Eigen::MatrixXd::Constant(m, 3, 0.3));
  const P1Field j(Eigen::MatrixXd::Constant(m + 1, 3, -0.1));
  for (auto _ : state) benchmark::DoNotOptimize(t.partials(u, j, {}));
}
BENCHMARK(BM_TransformerPartials)->Arg(4)->Arg(10)->Arg(32);

void BM_NewtonSolveDomain(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const LocalTransformer t = bench_transformer(3, 0);
  const LinearBlocks b = assemble_blocks(m, 0.01);
  const InterfaceState y = ic(3);
  for (auto _ : state) benchmark::DoNotOptimize(newton_solve_domain(y, t, {}, b, {}, initial_guess(y, b)));
}
BENCHMARK(BM_NewtonSolveDomain)->Arg(4)->Arg(10)->Arg(32);

void BM_Rollout(benchmark::State& state) {
  const LocalTransformer t = bench_transformer(3, 0);
  const LinearBlocks b = assemble_blocks(10, 0.01);
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(rollout(ic(3), n, t, {}, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Rollout)->Arg(11)->Arg(110);

void BM_Backward(benchmark::State& state) {
  const LocalTransformer t = bench_transformer(3, 0);
  const LinearBlocks b = assemble_blocks(10, 0.01);
  const auto n = static_cast<std::size_t>(state.range(0));
  const Rollout r = rollout(ic(3), n, t, {}, b);
  LossSpec spec;
  for (std::size_t i = 0; i < n; ++i) spec.targets.push_back(Eigen::MatrixXd::Zero(10, 3));
  const auto cot = loss_and_cotangents(r, spec).cotangents;
  for (auto _ : state) benchmark::DoNotOptimize(backward(r, ic(3), t, {}, b, cot));
}
BENCHMARK(BM_Backward)->Arg(11)->Arg(110);

void BM_HarmonicRollout(benchmark::State& state) {
  HamiltonianModel osc(HamiltonianModel::Kind::Quadratic, 1.0);
  const LinearBlocks b = assemble_blocks(4, 0.05);
  for (auto _ : state) benchmark::DoNotOptimize(rollout(ic(1), 1000, osc, {}, b));
}
BENCHMARK(BM_HarmonicRollout);

}  // namespace
BENCHMARK_MAIN();
