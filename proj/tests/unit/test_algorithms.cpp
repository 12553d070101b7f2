#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "cfl/algorithms.hpp"
#include "cfl/errors.hpp"
#include "support/generators.hpp"

using namespace cfl;

namespace {

struct Fixture {
  std::shared_ptr<const Dataset> data;
  Partition partition;
  TrainTestSplit split;
  ModelSpec spec;
};

Fixture synthetic_fixture(int clusters, int clients_per_cluster, int samples, double size_ratio = 1.0,
                          std::uint64_t seed = 1) {
  SyntheticSpec s;
  s.n_clusters_true = clusters;
  s.clients_per_cluster = clients_per_cluster;
  s.samples_per_client = samples;
  s.n_features = 6;
  s.n_classes = 4;
  s.size_ratio = size_ratio;
  s.seed = seed;
  auto [d, p] = generate_synthetic(s);
  Fixture f;
  f.data = std::make_shared<const Dataset>(std::move(d));
  f.partition = p;
  f.split = split_shards(p, 0.2, seed + 1);
  f.spec.n_features = 6;
  f.spec.n_classes = 4;
  return f;
}

Strategy make_strategy(StrategyKind kind, int k, double lr = 0.05) {
  Strategy s;
  s.kind = kind;
  s.k_clusters = k;
  s.sgd.learning_rate = lr;
  s.centroid_init = CentroidInit::kmeanspp;
  return s;
}

FederationState start(const Fixture& f, const Strategy& s, std::uint64_t seed = 3) {
  return init_federation(f.data, f.split, f.partition.cluster_of_client, {f.spec, s, seed, seed + 1, 1});
}

// Two clients on a 1-feature, 1-class logistic model (2 parameters) with
// fixed parameters and chosen training-shard sizes.
FederationState two_client_state(std::size_t n0, std::size_t n1, double p0, double p1) {
  Matrix x(n0 + n1, 1, 0.0);
  auto data = std::make_shared<const Dataset>(std::move(x), std::vector<int>(n0 + n1, 0), 1);
  FederationState st;
  st.data = data;
  st.spec.n_features = 1;
  st.spec.n_classes = 1;
  auto layout = make_layout(st.spec);
  std::size_t next = 0;
  for (auto [n, p] : {std::pair{n0, p0}, std::pair{n1, p1}}) {
    ClientState c;
    c.params = ParamVector(layout, p);
    c.shard_weight = static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) c.train.push_back(next++);
    st.clients.push_back(c);
  }
  st.clusters.push_back({ParamVector(layout, 0.0)});
  return st;
}

}  // namespace

TEST_CASE("strategy validation") {
  Strategy s = make_strategy(StrategyKind::fedavg, 2);
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = make_strategy(StrategyKind::ensemble, 3);
  s.ensemble_base = StrategyKind::wecfl;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = make_strategy(StrategyKind::wecfl, 2);
  s.participation = 0.0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  CHECK(parse_strategy_kind("fesem") == StrategyKind::fesem);
  CHECK_THROWS_AS(parse_strategy_kind("kmeans"), ValidationError);
}

TEST_CASE("round functions refuse the wrong strategy kind") {
  auto f = synthetic_fixture(1, 2, 20);
  auto s = make_strategy(StrategyKind::fedavg, 1);
  auto st = start(f, s);
  CHECK_THROWS_AS(wecfl_round(st, s, 0), ValidationError);
  CHECK_NOTHROW(fedavg_round(st, s, 0));
}

TEST_CASE("round steps run in E, M, D, L order") {
  auto f = synthetic_fixture(2, 3, 30);
  auto s = make_strategy(StrategyKind::wecfl, 2);
  auto rec = wecfl_round(start(f, s), s, 9).record;
  CHECK(rec.steps == std::vector<std::string>{"E", "M", "D", "L"});
  CHECK(rec.round == 1);
}

TEST_CASE("wecfl weights by shard size, fesem uniformly") {
  auto st = two_client_state(1, 3, 0.0, 4.0);
  auto w = make_strategy(StrategyKind::wecfl, 1, 0.0);
  auto fe = make_strategy(StrategyKind::fesem, 1, 0.0);
  auto wr = wecfl_round(st, w, 0).state;
  auto fr = fesem_round(st, fe, 0).state;
  CHECK(wr.clusters[0].model[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(fr.clusters[0].model[0] == 2.0);
  // Distribution overwrites both clients with their cluster model.
  CHECK(wr.clients[0].params == wr.clusters[0].model);
  CHECK(wr.clients[1].params == wr.clusters[0].model);
}

TEST_CASE("fedavg with equal weights averages [0] and [4] to [2]") {
  auto st = two_client_state(5, 5, 0.0, 4.0);
  auto s = make_strategy(StrategyKind::fedavg, 1, 0.0);
  CHECK(fedavg_round(st, s, 0).state.clusters[0].model[0] == 2.0);
}

TEST_CASE("equal shard sizes make fesem and wecfl identical") {
  auto f = synthetic_fixture(2, 3, 30);
  auto w = make_strategy(StrategyKind::wecfl, 2);
  auto fe = make_strategy(StrategyKind::fesem, 2);
  auto st = start(f, w);
  for (int t = 1; t <= 3; ++t) {
    auto a = wecfl_round(st, w, t), b = fesem_round(st, fe, t);
    CHECK(a.state.cluster_models() == b.state.cluster_models());
    CHECK(a.record.f_after_l == b.record.f_after_l);
    st = a.state;
  }
}

TEST_CASE("one cluster over identical clients reproduces fedavg exactly") {
  auto f = synthetic_fixture(1, 4, 25);
  // Give every client the same shard.
  for (auto& t : f.split.train) t = f.split.train[0];
  for (auto& t : f.split.test) t = f.split.test[0];
  auto avg = make_strategy(StrategyKind::fedavg, 1);
  auto st = start(f, avg);
  auto w = make_strategy(StrategyKind::wecfl, 1);
  auto fe = make_strategy(StrategyKind::fesem, 1);
  auto a = fedavg_round(st, avg, 5), b = wecfl_round(st, w, 5), c = fesem_round(st, fe, 5);
  CHECK(a.state.cluster_models() == b.state.cluster_models());
  CHECK(a.state.cluster_models() == c.state.cluster_models());
  for (std::size_t i = 0; i < st.n_clients(); ++i) CHECK(a.state.clients[i].params == b.state.clients[i].params);
}

TEST_CASE("fedprox with zero mu is fedavg bit for bit") {
  auto f = synthetic_fixture(2, 3, 30);
  auto avg = make_strategy(StrategyKind::fedavg, 1);
  auto prox = make_strategy(StrategyKind::fedprox, 1);
  prox.sgd.prox_mu = 0.0;
  auto st = start(f, avg);
  auto a = fedavg_round(st, avg, 7), b = fedprox_round(st, prox, 7);
  CHECK(a.state.cluster_models() == b.state.cluster_models());
  for (std::size_t i = 0; i < st.n_clients(); ++i) CHECK(a.state.clients[i].params == b.state.clients[i].params);
}

TEST_CASE("a huge proximal weight shrinks client drift") {
  auto f = synthetic_fixture(2, 3, 30);
  auto free = make_strategy(StrategyKind::fedprox, 1, 1e-3);
  free.sgd.prox_mu = 0.0;
  auto tied = free;
  tied.sgd.prox_mu = 500.0;
  // Move off the zero model first so the local updates have somewhere to go.
  auto st = fedprox_round(start(f, free), free, 1).state;
  auto a = fedprox_round(st, free, 2).state, b = fedprox_round(st, tied, 2).state;
  const auto& global = a.clusters[0].model;
  double drift_free = 0.0, drift_tied = 0.0;
  for (std::size_t i = 0; i < st.n_clients(); ++i) {
    drift_free += squared_distance(a.clients[i].params, global);
    drift_tied += squared_distance(b.clients[i].params, b.clusters[0].model);
  }
  CHECK(drift_tied < drift_free);
}

TEST_CASE("a single client federation tracks its own local updates") {
  auto f = synthetic_fixture(1, 1, 40);
  auto s = make_strategy(StrategyKind::fedavg, 1);
  auto st = start(f, s);
  auto r1 = fedavg_round(st, s, 4);
  auto direct = local_update(st.clients[0].params, st.spec, st.train_view(0), s.sgd, derive_seed(4, {0}));
  CHECK(r1.state.clients[0].params == direct.params);
  auto r2 = fedavg_round(r1.state, s, 5);
  CHECK(r2.state.clusters[0].model == direct.params);
}

TEST_CASE("a frozen learning rate is a fixed point from round two on") {
  auto f = synthetic_fixture(3, 3, 30);
  auto s = make_strategy(StrategyKind::wecfl, 3, 0.0);
  auto st = start(f, s);
  auto r1 = wecfl_round(st, s, 1), r2 = wecfl_round(r1.state, s, 2), r3 = wecfl_round(r2.state, s, 3);
  // Averaging identical copies may move a model by an ulp, nothing more.
  CHECK(r3.record.assignment_snapshot == r2.record.assignment_snapshot);
  for (std::size_t k = 0; k < 3; ++k)
    CHECK(squared_distance(r3.state.clusters[k].model, r2.state.clusters[k].model) <=
          1e-28 * (1.0 + dot(r2.state.clusters[k].model, r2.state.clusters[k].model)));
  CHECK(r3.record.f_after_l <= 1e-28);

  auto avg = make_strategy(StrategyKind::fedavg, 1, 0.0);
  auto a0 = start(f, avg);
  auto a1 = fedavg_round(a0, avg, 1), a2 = fedavg_round(a1.state, avg, 2);
  CHECK(squared_distance(a1.state.clusters[0].model, a2.state.clusters[0].model) <=
        1e-28 * (1.0 + dot(a1.state.clusters[0].model, a1.state.clusters[0].model)));
}

TEST_CASE("wecfl separates two concept clusters within ten rounds") {
  auto f = synthetic_fixture(2, 5, 60);
  auto s = make_strategy(StrategyKind::wecfl, 2);
  auto st = start(f, s);
  double ari = 0.0;
  for (int t = 1; t <= 10 && ari < 1.0; ++t) {
    auto r = wecfl_round(st, s, t);
    ari = r.record.ari_vs_truth;
    st = r.state;
  }
  CHECK(ari == 1.0);
}

TEST_CASE("ifca assigns by the smallest loss") {
  Matrix table(2, 2, std::vector<double>{0.3, 0.9, 0.8, 0.1});
  CHECK(loss_assignment(table).cluster_of == std::vector<int>{0, 1});
  CHECK(loss_assignment(Matrix(3, 1, 0.5)).cluster_of == std::vector<int>{0, 0, 0});
}

TEST_CASE("ifca sends a client to a model that fits its shard perfectly") {
  auto f = synthetic_fixture(2, 2, 20);
  auto s = make_strategy(StrategyKind::ifca, 2, 0.0);
  auto st = start(f, s);
  // Cluster 1 becomes a model with a hugely dominant correct logit for every
  // training sample of client 0, only possible when it sees one class.
  auto& c0 = st.clients[0];
  const int y = st.data->label(c0.train[0]);
  c0.train.erase(std::remove_if(c0.train.begin(), c0.train.end(), [&](auto i) { return st.data->label(i) != y; }),
                 c0.train.end());
  ParamVector perfect(make_layout(st.spec), 0.0);
  perfect.segment(1)[y] = 1e3;
  st.clusters[1].model = perfect;
  st.clusters[0].model = ParamVector(make_layout(st.spec), 0.0);
  auto table = client_loss_table(st);
  CHECK(table(0, 1) < 1e-12);
  CHECK(ifca_round(st, s, 0).record.assignment_snapshot.cluster_of[0] == 1);
}

TEST_CASE("soft voting averages member probabilities") {
  ModelSpec spec;
  spec.n_features = 1;
  spec.n_classes = 2;
  auto layout = make_layout(spec);
  // Bias-only models producing (0.9, 0.1) and (0.2, 0.8) on any input.
  ParamVector a(layout, std::vector<double>{0, 0, std::log(0.9), std::log(0.1)});
  ParamVector b(layout, std::vector<double>{0, 0, std::log(0.2), std::log(0.8)});
  Matrix x(1, 1, 0.7);
  std::vector<ParamVector> both{a, b};
  auto p = ensemble_predict(both, spec, x);
  CHECK(p(0, 0) == doctest::Approx(0.55).epsilon(1e-14));
  CHECK(p(0, 1) == doctest::Approx(0.45).epsilon(1e-14));

  std::vector<ParamVector> one{a}, same{a, a, a};
  CHECK(ensemble_predict(one, spec, x) == forward(a, spec, x));
  auto triple = ensemble_predict(same, spec, x);
  CHECK(triple(0, 0) == doctest::Approx(forward(a, spec, x)(0, 0)).epsilon(1e-15));
}

TEST_CASE("theorem step-size bound") {
  auto w = ParamVector::flat({2.0, 0.0});
  auto c = ParamVector::flat({0.0, 0.0});
  CHECK(theorem_eta_bound(c, c, 10, 1.0) == 0.0);
  CHECK(theorem_eta_bound(w, c, 10, 1.0) == doctest::Approx(0.2));
  CHECK(theorem_eta_bound(w, c, 10, 0.0) == std::numeric_limits<double>::infinity());
}

TEST_CASE("clamped rounds never increase F through aggregation and local update") {
  auto f = synthetic_fixture(3, 4, 40);
  auto s = make_strategy(StrategyKind::wecfl, 3, 0.1);
  s.sgd.momentum = 0.0;
  s.sgd.full_batch = true;
  RoundOptions opts;
  opts.clamp = EtaClamp::f_bound;
  auto st = start(f, s);
  double prev_l = std::numeric_limits<double>::infinity();
  for (int t = 1; t <= 10; ++t) {
    auto r = wecfl_round(st, s, t, opts);
    const double tol = 1e-12 * (1.0 + r.record.f_after_e);
    CHECK(r.record.f_after_e <= prev_l + tol);
    CHECK(r.record.f_after_m <= r.record.f_after_e + tol);
    CHECK(r.record.f_after_l <= r.record.f_after_m + tol);
    prev_l = r.record.f_after_l;
    st = r.state;
  }
}

TEST_CASE("rounds are deterministic across thread counts") {
  auto f = synthetic_fixture(2, 4, 30);
  auto s = make_strategy(StrategyKind::ifca, 2);
  auto st = start(f, s);
  RoundOptions one, many;
  many.threads = 4;
  auto a = ifca_round(st, s, 3, one), b = ifca_round(st, s, 3, many);
  CHECK(a.state.cluster_models() == b.state.cluster_models());
  CHECK(a.record.f_after_l == b.record.f_after_l);
  CHECK(a.record.r_value == b.record.r_value);
}

TEST_CASE("partial participation only updates the sampled clients") {
  auto f = synthetic_fixture(2, 5, 30);
  auto s = make_strategy(StrategyKind::fedavg, 1);
  s.participation = 0.3;
  auto st = start(f, s);
  auto r = fedavg_round(st, s, 11);
  int moved = 0;
  for (std::size_t i = 0; i < st.n_clients(); ++i) moved += !(r.state.clients[i].params == st.clients[i].params);
  CHECK(moved == 3);
}

TEST_CASE("clustered init warms every client up and seeds centroids from them") {
  auto f = synthetic_fixture(2, 3, 30);
  auto s = make_strategy(StrategyKind::wecfl, 2);
  auto st = start(f, s);
  CHECK(st.clusters.size() == 2);
  CHECK_FALSE(st.u_bound.empty());
  for (const auto& c : st.clusters) {
    bool found = false;
    for (const auto& cl : st.clients) found = found || cl.params == c.model;
    CHECK(found);
  }
}
