#include "cfl/algorithms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "cfl/errors.hpp"
#include "cfl/parallel.hpp"
#include "cfl/random.hpp"

namespace cfl {

const char* to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::fedavg: return "fedavg";
    case StrategyKind::fedprox: return "fedprox";
    case StrategyKind::ifca: return "ifca";
    case StrategyKind::fesem: return "fesem";
    case StrategyKind::wecfl: return "wecfl";
    case StrategyKind::ensemble: return "ensemble";
  }
  return "?";
}

StrategyKind parse_strategy_kind(const std::string& s) {
  for (auto k : {StrategyKind::fedavg, StrategyKind::fedprox, StrategyKind::ifca, StrategyKind::fesem,
                 StrategyKind::wecfl, StrategyKind::ensemble}) {
    if (s == to_string(k)) return k;
  }
  throw ValidationError("unknown strategy kind '" + s + "'");
}

void Strategy::validate() const {
  sgd.validate();
  if (k_clusters < 1) throw ValidationError("strategy: k_clusters must be >= 1");
  if ((kind == StrategyKind::fedavg || kind == StrategyKind::fedprox) && k_clusters != 1)
    throw ValidationError("strategy: fedavg/fedprox require k_clusters = 1");
  if (kind == StrategyKind::ensemble && ensemble_base != StrategyKind::fedavg && ensemble_base != StrategyKind::fedprox)
    throw ValidationError("strategy: ensembles wrap only fedavg or fedprox");
  if (!(participation > 0.0 && participation <= 1.0))
    throw ValidationError("strategy: participation must lie in (0, 1]");
}

bool Strategy::clustered() const {
  return kind == StrategyKind::ifca || kind == StrategyKind::fesem || kind == StrategyKind::wecfl;
}

Assignment FederationState::assignment() const {
  Assignment a;
  for (const auto& c : clients) a.cluster_of.push_back(c.cluster);
  return a;
}

std::vector<ParamVector> FederationState::cluster_models() const {
  std::vector<ParamVector> out;
  for (const auto& c : clusters) out.push_back(c.model);
  return out;
}

ParamVector representation(const ParamVector& params, const Strategy& strategy) {
  if (strategy.representation.empty()) return params;
  return restrict_to(params, strategy.representation);
}

Weights effective_weights(const FederationState& state, const Strategy& strategy) {
  if (strategy.kind == StrategyKind::fesem || strategy.weight_mode == WeightMode::uniform)
    return Weights::uniform(state.n_clients());
  // Scaled by the largest weight so equal shards give exactly the uniform weights.
  double top = 0.0;
  for (const auto& c : state.clients) top = std::max(top, c.shard_weight);
  std::vector<double> w;
  for (const auto& c : state.clients) w.push_back(c.shard_weight / top);
  return Weights(std::move(w));
}

double theorem_eta_bound(const ParamVector& client_params, const ParamVector& centroid, int q, double u_estimate) {
  if (q < 1) throw ValidationError("theorem_eta_bound: q must be >= 1");
  if (!(u_estimate >= 0.0)) throw ValidationError("theorem_eta_bound: U must be >= 0");
  const double dist = std::sqrt(squared_distance(client_params, centroid));
  if (dist == 0.0) return 0.0;
  if (u_estimate == 0.0) return std::numeric_limits<double>::infinity();
  return dist / (q * u_estimate);
}

Matrix client_loss_table(const FederationState& state) {
  Matrix table(state.n_clients(), state.clusters.size());
  for (std::size_t i = 0; i < state.n_clients(); ++i)
    for (std::size_t k = 0; k < state.clusters.size(); ++k)
      table(i, k) = loss(state.clusters[k].model, state.spec, state.train_view(i));
  return table;
}

Assignment loss_assignment(const Matrix& loss_table) {
  if (loss_table.cols() == 0) throw ValidationError("loss_assignment: no cluster models");
  Assignment a;
  for (std::size_t i = 0; i < loss_table.rows(); ++i) {
    auto row = loss_table.row(i);
    a.cluster_of.push_back(static_cast<int>(std::min_element(row.begin(), row.end()) - row.begin()));
  }
  return a;
}

Matrix ensemble_predict(std::span<const ParamVector> models, const ModelSpec& spec, const Matrix& features) {
  if (models.empty()) throw ValidationError("ensemble_predict: no models");
  Matrix out = forward(models.front(), spec, features);
  for (std::size_t k = 1; k < models.size(); ++k) {
    require_same_shape(models[k], models.front(), "ensemble_predict");
    Matrix p = forward(models[k], spec, features);
    for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] += p.data()[i];
  }
  for (auto& v : out.data()) v /= static_cast<double>(models.size());
  return out;
}

Matrix ensemble_predict(std::span<const ParamVector> models, const ModelSpec& spec, ShardView shard) {
  Matrix feats(shard.size(), shard.data->n_features());
  for (std::size_t r = 0; r < shard.size(); ++r) {
    auto src = shard.data->row(shard.indices[r]);
    std::copy(src.begin(), src.end(), feats.row(r).begin());
  }
  return ensemble_predict(models, spec, feats);
}

FederationState init_federation(std::shared_ptr<const Dataset> data, const TrainTestSplit& split,
                                std::vector<int> ground_truth, const FederationInit& init) {
  init.strategy.validate();
  if (split.train.size() != split.test.size()) throw ValidationError("init_federation: train/test split mismatch");
  if (!ground_truth.empty() && ground_truth.size() != split.train.size())
    throw ValidationError("init_federation: ground truth length differs from client count");

  FederationState st;
  st.data = std::move(data);
  st.spec = init.spec;
  st.spec.init_seed = init.init_seed;
  st.ground_truth = std::move(ground_truth);
  auto layout = make_layout(st.spec);
  const ParamVector start = init_params(st.spec, layout);
  if (start.size() == 0) throw ValidationError("init_federation: empty model");

  for (std::size_t i = 0; i < split.train.size(); ++i) {
    if (split.train[i].empty()) throw ValidationError("init_federation: client " + std::to_string(i) + " has no training data");
    ClientState c;
    c.params = start;
    c.shard_weight = static_cast<double>(split.train[i].size());
    c.train = split.train[i];
    c.test = split.test[i];
    st.clients.push_back(std::move(c));
  }

  const Strategy& strategy = init.strategy;
  if (!strategy.clustered()) {
    st.clusters.push_back({start});
    return st;
  }

  // Warm-up local update: round 0 of the training seed stream.
  std::vector<LocalUpdateResult> warm(st.n_clients());
  parallel_for(st.n_clients(), init.threads, [&](std::size_t i) {
    warm[i] = local_update(start, st.spec, st.train_view(i), strategy.sgd, derive_seed(init.train_seed, {0, i}));
  });
  std::vector<ParamVector> reps;
  for (std::size_t i = 0; i < st.n_clients(); ++i) {
    st.clients[i].params = std::move(warm[i].params);
    st.u_bound.observe(warm[i].trace);
    reps.push_back(representation(st.clients[i].params, strategy));
  }
  for (auto idx : init_centroid_indices(reps, strategy.k_clusters, strategy.centroid_init,
                                        derive_seed(init.init_seed, {1})))
    st.clusters.push_back({st.clients[idx].params});
  return st;
}

namespace {

constexpr std::uint64_t kParticipationStream = 0xfeedULL;

std::vector<char> sample_participants(std::size_t m, double fraction, std::uint64_t seed) {
  std::vector<char> active(m, 1);
  if (fraction >= 1.0) return active;
  auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(m)));
  n = std::clamp<std::size_t>(n, 1, m);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, {kParticipationStream}));
  std::shuffle(order.begin(), order.end(), rng);
  std::fill(active.begin(), active.end(), 0);
  for (std::size_t j = 0; j < n; ++j) active[order[j]] = 1;
  return active;
}

RoundResult federated_round(const FederationState& in, const Strategy& strategy, std::uint64_t seed,
                            const RoundOptions& opts, StrategyKind mode) {
  strategy.validate();
  if (in.clients.empty()) throw ValidationError("round: federation has no clients");
  if (in.clusters.empty()) throw ValidationError("round: federation has no cluster models");

  RoundResult out{in, {}};
  FederationState& st = out.state;
  RoundRecord& rec = out.record;
  rec.round = in.round + 1;

  const std::size_t m = st.n_clients();
  const std::size_t K = st.clusters.size();
  const Weights lambda = effective_weights(st, strategy);
  const int Q = strategy.sgd.local_steps;
  const auto old_models = st.cluster_models();

  std::vector<ParamVector> reps;
  for (const auto& c : st.clients) reps.push_back(representation(c.params, strategy));
  std::vector<ParamVector> old_centroids;
  for (const auto& mdl : old_models) old_centroids.push_back(representation(mdl, strategy));

  // E: assignment.
  Assignment assignment;
  switch (mode) {
    case StrategyKind::wecfl:
    case StrategyKind::fesem:
      assignment = e_step(reps, old_centroids, lambda);
      break;
    case StrategyKind::ifca: {
      Matrix table(m, K);
      parallel_for(m, opts.threads, [&](std::size_t i) {
        for (std::size_t k = 0; k < K; ++k) table(i, k) = loss(old_models[k], st.spec, st.train_view(i));
      });
      assignment = loss_assignment(table);
      break;
    }
    default:
      assignment.cluster_of.assign(m, 0);
  }
  rec.steps.push_back("E");
  rec.f_after_e = objective_f(reps, assignment, old_centroids, lambda);

  // M: aggregation over participating clients.
  const auto active = sample_participants(m, strategy.participation, seed);
  std::vector<ParamVector> member_params;
  Assignment member_assignment;
  std::vector<double> member_weights;
  for (std::size_t i = 0; i < m; ++i) {
    if (!active[i]) continue;
    member_params.push_back(st.clients[i].params);
    member_assignment.cluster_of.push_back(assignment.cluster_of[i]);
    member_weights.push_back(lambda[i]);
  }
  const Centroids models = m_step(member_params, member_assignment, Weights(member_weights), old_models);
  std::vector<ParamVector> centroids;
  for (const auto& mdl : models) centroids.push_back(representation(mdl, strategy));
  rec.steps.push_back("M");
  rec.f_after_m = objective_f(reps, assignment, centroids, lambda);

  std::vector<ShardView> train_views;
  for (std::size_t i = 0; i < m; ++i) train_views.push_back(st.train_view(i));
  rec.r_after_m = objective_r(models, assignment, train_views, lambda, st.spec);

  // Served-model evaluation on the held-out client shards.
  std::vector<std::vector<int>> preds(m);
  parallel_for(m, opts.threads, [&](std::size_t i) {
    if (!st.clients[i].test.empty()) preds[i] = predict(models[assignment.cluster_of[i]], st.spec, st.test_view(i));
  });
  std::vector<int> all_pred, all_truth;
  for (std::size_t i = 0; i < m; ++i) {
    all_pred.insert(all_pred.end(), preds[i].begin(), preds[i].end());
    for (auto idx : st.clients[i].test) all_truth.push_back(st.data->label(idx));
  }
  if (!all_pred.empty()) {
    rec.micro_acc = micro_accuracy(all_pred, all_truth);
    rec.macro_f1 = macro_f1(all_pred, all_truth, st.spec.n_classes);
  }

  // Clusterability from full-shard gradients at the distributed cluster models.
  std::vector<ParamVector> first_grads(m);
  parallel_for(m, opts.threads, [&](std::size_t i) {
    first_grads[i] = gradient(models[assignment.cluster_of[i]], st.spec, st.train_view(i));
  });
  rec.b_per_cluster.assign(K, std::nullopt);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<ParamVector> grads;
    std::vector<double> w;
    for (std::size_t i = 0; i < m; ++i) {
      if (static_cast<std::size_t>(assignment.cluster_of[i]) != k) continue;
      grads.push_back(first_grads[i]);
      w.push_back(lambda[i]);
    }
    if (!grads.empty()) rec.b_per_cluster[k] = clusterability_b(grads, w);
  }

  const double u_before = st.u_bound.empty() ? 0.0 : st.u_bound.value();
  std::vector<double> dist(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& centroid = centroids[assignment.cluster_of[i]];
    rec.eta_bounds.push_back(theorem_eta_bound(reps[i], centroid, Q, u_before));
    dist[i] = std::sqrt(squared_distance(reps[i], centroid));
  }

  // D: distribution.
  for (std::size_t i = 0; i < m; ++i) {
    st.clients[i].cluster = assignment.cluster_of[i];
    if (active[i]) st.clients[i].params = models[assignment.cluster_of[i]];
  }
  rec.steps.push_back("D");

  // L: local update.
  std::vector<std::optional<double>> beta(m);
  if (opts.clamp == EtaClamp::r_bound) {
    for (std::size_t i = 0; i < m; ++i) {
      beta[i] = opts.beta ? opts.beta : smoothness_bound(st.spec, st.train_view(i));
      if (!beta[i]) throw ValidationError("r_bound clamp needs a smoothness constant for this model kind");
    }
  }
  std::vector<UpdateTrace> traces(m);
  parallel_for(m, opts.threads, [&](std::size_t i) {
    if (!active[i]) return;
    StepSizeFn step_size;
    if (opts.clamp != EtaClamp::none) {
      const double lr = strategy.sgd.learning_rate;
      const double d = dist[i];
      const auto b = rec.b_per_cluster[assignment.cluster_of[i]];
      const auto bt = beta[i];
      step_size = [=, &opts, u = u_before](int, double gnorm) mutable {
        u = std::max(u, gnorm);
        double eta = lr;
        if (u > 0.0) eta = std::min(eta, opts.eta_scale * d / (Q * u));
        if (opts.clamp == EtaClamp::r_bound) {
          const double g2 = gnorm * gnorm;
          const double num = b ? g2 - *b * u * u : -1.0;
          eta = num > 0.0 ? std::min(eta, opts.eta_scale * (2.0 / *bt) * num / g2) : 0.0;
        }
        return std::max(eta, 0.0);
      };
    }
    auto res = local_update(st.clients[i].params, st.spec, st.train_view(i), strategy.sgd,
                            derive_seed(seed, {i}), step_size);
    st.clients[i].params = std::move(res.params);
    traces[i] = std::move(res.trace);
  });
  rec.steps.push_back("L");

  for (const auto& t : traces) st.u_bound.observe(t);
  std::vector<ParamVector> new_reps;
  for (const auto& c : st.clients) new_reps.push_back(representation(c.params, strategy));
  rec.f_after_l = objective_f(new_reps, assignment, centroids, lambda);

  std::vector<double> own_loss(m);
  parallel_for(m, opts.threads, [&](std::size_t i) { own_loss[i] = loss(st.clients[i].params, st.spec, train_views[i]); });
  double r = 0.0;
  for (std::size_t i = 0; i < m; ++i) r += lambda[i] * own_loss[i];
  rec.r_value = r / lambda.total();

  if (strategy.sgd.full_batch && strategy.sgd.prox_mu == 0.0) {
    double acc = 0.0, mass = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (!active[i]) continue;
      double s = 0.0;
      for (double g : traces[i].grad_norms) s += g * g;
      acc += lambda[i] * s / static_cast<double>(traces[i].grad_norms.size());
      mass += lambda[i];
    }
    rec.grad_sq_mean = acc / mass;
  }

  rec.assignment_snapshot = assignment;
  if (!st.ground_truth.empty()) rec.ari_vs_truth = adjusted_rand_index(assignment.cluster_of, st.ground_truth);

  for (std::size_t k = 0; k < K; ++k) st.clusters[k].model = models[k];
  st.round = rec.round;
  return out;
}

void require_kind(const Strategy& s, StrategyKind want, const char* fn) {
  if (s.kind != want) throw ValidationError(std::string(fn) + ": strategy kind is " + to_string(s.kind));
}

}  // namespace

RoundResult wecfl_round(const FederationState& state, const Strategy& strategy, std::uint64_t seed,
                        const RoundOptions& opts) {
  require_kind(strategy, StrategyKind::wecfl, "wecfl_round");
  return federated_round(state, strategy, seed, opts, StrategyKind::wecfl);
}

RoundResult fesem_round(const FederationState& state, const Strategy& strategy, std::uint64_t seed,
                        const RoundOptions& opts) {
  require_kind(strategy, StrategyKind::fesem, "fesem_round");
  return federated_round(state, strategy, seed, opts, StrategyKind::fesem);
}

RoundResult ifca_round(const FederationState& state, const Strategy& strategy, std::uint64_t seed,
                       const RoundOptions& opts) {
  require_kind(strategy, StrategyKind::ifca, "ifca_round");
  return federated_round(state, strategy, seed, opts, StrategyKind::ifca);
}

RoundResult fedavg_round(const FederationState& state, const Strategy& strategy, std::uint64_t seed,
                         const RoundOptions& opts) {
  require_kind(strategy, StrategyKind::fedavg, "fedavg_round");
  return federated_round(state, strategy, seed, opts, StrategyKind::fedavg);
}

RoundResult fedprox_round(const FederationState& state, const Strategy& strategy, std::uint64_t seed,
                          const RoundOptions& opts) {
  require_kind(strategy, StrategyKind::fedprox, "fedprox_round");
  return federated_round(state, strategy, seed, opts, StrategyKind::fedprox);
}

RoundResult run_round(const FederationState& state, const Strategy& strategy, std::uint64_t seed,
                      const RoundOptions& opts) {
  switch (strategy.kind) {
    case StrategyKind::wecfl: return wecfl_round(state, strategy, seed, opts);
    case StrategyKind::fesem: return fesem_round(state, strategy, seed, opts);
    case StrategyKind::ifca: return ifca_round(state, strategy, seed, opts);
    case StrategyKind::fedavg: return fedavg_round(state, strategy, seed, opts);
    case StrategyKind::fedprox: return fedprox_round(state, strategy, seed, opts);
    case StrategyKind::ensemble: {
      Strategy member = strategy;
      member.kind = strategy.ensemble_base;
      member.k_clusters = 1;
      return run_round(state, member, seed, opts);
    }
  }
  throw ValidationError("run_round: unknown strategy kind");
}

}  // namespace cfl
