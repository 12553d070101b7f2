#include <benchmark/benchmark.h>

#include <memory>

#include "cfl/algorithms.hpp"
#include "cfl/clustering.hpp"
#include "cfl/data.hpp"
#include "cfl/model.hpp"
#include "cfl/random.hpp"

using namespace cfl;

namespace {

std::vector<ParamVector> gaussian_vectors(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g;
  std::vector<ParamVector> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(dim);
    for (auto& x : v) x = g(rng);
    out.push_back(ParamVector::flat(std::move(v)));
  }
  return out;
}

struct Task {
  std::shared_ptr<const Dataset> data;
  Partition partition;
  TrainTestSplit split;
  ModelSpec spec;
};

Task make_task(int clients_per_cluster) {
  SyntheticSpec s;
  s.clients_per_cluster = clients_per_cluster;
  s.seed = 1;
  auto [d, p] = generate_synthetic(s);
  Task t;
  t.data = std::make_shared<const Dataset>(std::move(d));
  t.partition = p;
  t.split = split_shards(p, 0.2, 2);
  t.spec.n_features = s.n_features;
  t.spec.n_classes = s.n_classes;
  return t;
}

void BM_EStep(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  auto reps = gaussian_vectors(m, 1000, 1);
  auto cents = gaussian_vectors(8, 1000, 2);
  auto w = Weights::uniform(m);
  for (auto _ : state) benchmark::DoNotOptimize(e_step(reps, cents, w));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(m));
}
BENCHMARK(BM_EStep)->Arg(40)->Arg(400);

void BM_MStep(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  auto reps = gaussian_vectors(m, 1000, 3);
  auto prev = gaussian_vectors(8, 1000, 4);
  Assignment a;
  for (std::size_t i = 0; i < m; ++i) a.cluster_of.push_back(static_cast<int>(i % 8));
  auto w = Weights::uniform(m);
  for (auto _ : state) benchmark::DoNotOptimize(m_step(reps, a, w, prev));
}
BENCHMARK(BM_MStep)->Arg(40)->Arg(400);

void BM_LocalUpdate(benchmark::State& state) {
  auto task = make_task(1);
  if (state.range(0) == 1) {
    task.spec.kind = ModelKind::mlp1;
    task.spec.hidden_units = 32;
    task.spec.init = InitKind::gaussian;
  }
  SgdConfig sgd;
  sgd.learning_rate = 0.05;
  auto start = init_params(task.spec);
  ShardView shard{task.data.get(), task.split.train[0]};
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(local_update(start, task.spec, shard, sgd, ++seed));
}
BENCHMARK(BM_LocalUpdate)->Arg(0)->Arg(1);

void BM_WeCFLRound(benchmark::State& state) {
  auto task = make_task(10);
  Strategy s;
  s.kind = StrategyKind::wecfl;
  s.k_clusters = 4;
  s.sgd.learning_rate = 0.05;
  RoundOptions opts;
  opts.threads = static_cast<int>(state.range(0));
  auto st = init_federation(task.data, task.split, task.partition.cluster_of_client, {task.spec, s, 1, 2, 1});
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(wecfl_round(st, s, ++seed, opts));
}
BENCHMARK(BM_WeCFLRound)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
