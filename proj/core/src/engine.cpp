#include "cfl/engine.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "cfl/errors.hpp"
#include "cfl/parallel.hpp"
#include "cfl/random.hpp"
#include "cfl/serialize.hpp"

namespace cfl {

namespace {

// ---- value parsing --------------------------------------------------------

[[noreturn]] void bad_value(const std::string& key, const std::string& v, const char* want) {
  throw ValidationError("config key '" + key + "': '" + v + "' is not " + want);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  // from_chars<double> rejects a leading '+'; accept the common spellings.
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    bad_value(key, v, "a real number");
  }
  if (used != v.size()) bad_value(key, v, "a real number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "a boolean");
}

template <typename E>
E parse_enum(const std::string& key, const std::string& v, std::initializer_list<std::pair<const char*, E>> options) {
  for (const auto& [name, value] : options)
    if (v == name) return value;
  std::string want = "one of {";
  bool first = true;
  for (const auto& [name, value] : options) {
    want += (first ? "" : ", ") + std::string(name);
    first = false;
  }
  want += "}";
  throw ValidationError("config key '" + key + "': '" + v + "' is not " + want);
}

template <typename E>
std::string enum_name(E value, std::initializer_list<std::pair<const char*, E>> options) {
  for (const auto& [name, v] : options)
    if (v == value) return name;
  return "?";
}

const std::initializer_list<std::pair<const char*, DataSource>> kSources = {{"synthetic", DataSource::synthetic},
                                                                           {"idx", DataSource::idx}};
const std::initializer_list<std::pair<const char*, PartitionKind>> kPartitions = {
    {"generator", PartitionKind::generator}, {"dirichlet", PartitionKind::dirichlet}, {"nclass", PartitionKind::nclass}};
const std::initializer_list<std::pair<const char*, ModelKind>> kModels = {{"logistic", ModelKind::logistic},
                                                                         {"mlp1", ModelKind::mlp1}};
const std::initializer_list<std::pair<const char*, InitKind>> kInits = {{"zeros", InitKind::zeros},
                                                                       {"gaussian", InitKind::gaussian}};
const std::initializer_list<std::pair<const char*, WeightMode>> kWeights = {{"shard_size", WeightMode::shard_size},
                                                                           {"uniform", WeightMode::uniform}};
const std::initializer_list<std::pair<const char*, CentroidInit>> kCentroidInit = {
    {"random_clients", CentroidInit::random_clients}, {"kmeanspp", CentroidInit::kmeanspp}};
const std::initializer_list<std::pair<const char*, EtaClamp>> kClamps = {
    {"none", EtaClamp::none}, {"f_bound", EtaClamp::f_bound}, {"r_bound", EtaClamp::r_bound}};

std::string num(double v) { return format_double(v); }
std::string num(int v) { return std::to_string(v); }
std::string num(std::uint64_t v) { return std::to_string(v); }
std::string flag(bool b) { return b ? "true" : "false"; }

struct ParseState {
  ExperimentConfig cfg;
  bool prox_set = false;
};

struct KeySpec {
  const char* key;
  std::function<void(ParseState&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define CFL_INT(KEY, FIELD)                                                                                 \
  KeySpec{KEY, [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.FIELD = parse_number<int>(k, v); }, \
          [](const ExperimentConfig& c) { return num(c.FIELD); }}
#define CFL_U64(KEY, FIELD)                                                                                 \
  KeySpec{KEY,                                                                                              \
          [](ParseState& s, const std::string& k, const std::string& v) {                                   \
            s.cfg.FIELD = parse_number<std::uint64_t>(k, v);                                                \
          },                                                                                                \
          [](const ExperimentConfig& c) { return num(c.FIELD); }}
#define CFL_REAL(KEY, FIELD)                                                                                \
  KeySpec{KEY, [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.FIELD = parse_real(k, v); }, \
          [](const ExperimentConfig& c) { return num(c.FIELD); }}
#define CFL_BOOL(KEY, FIELD)                                                                                \
  KeySpec{KEY, [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.FIELD = parse_bool(k, v); }, \
          [](const ExperimentConfig& c) { return flag(c.FIELD); }}
#define CFL_ENUM(KEY, FIELD, TABLE)                                                                         \
  KeySpec{KEY,                                                                                              \
          [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.FIELD = parse_enum(k, v, TABLE); }, \
          [](const ExperimentConfig& c) { return enum_name(c.FIELD, TABLE); }}

const std::vector<KeySpec>& key_table() {
  static const std::vector<KeySpec> table = {
      CFL_ENUM("data.source", data.source, kSources),
      CFL_INT("data.synthetic.n_clusters_true", data.synthetic.n_clusters_true),
      CFL_INT("data.synthetic.clients_per_cluster", data.synthetic.clients_per_cluster),
      CFL_INT("data.synthetic.samples_per_client", data.synthetic.samples_per_client),
      CFL_INT("data.synthetic.n_features", data.synthetic.n_features),
      CFL_INT("data.synthetic.n_classes", data.synthetic.n_classes),
      CFL_REAL("data.synthetic.cluster_separation", data.synthetic.cluster_separation),
      CFL_REAL("data.synthetic.noise_std", data.synthetic.noise_std),
      CFL_REAL("data.synthetic.class_radius", data.synthetic.class_radius),
      CFL_REAL("data.synthetic.size_ratio", data.synthetic.size_ratio),
      KeySpec{"data.idx.images", [](ParseState& s, const std::string&, const std::string& v) { s.cfg.data.idx_images = v; },
              [](const ExperimentConfig& c) { return c.data.idx_images.string(); }},
      KeySpec{"data.idx.labels", [](ParseState& s, const std::string&, const std::string& v) { s.cfg.data.idx_labels = v; },
              [](const ExperimentConfig& c) { return c.data.idx_labels.string(); }},
      CFL_ENUM("data.partition.kind", data.partition, kPartitions),
      CFL_INT("data.partition.clients", data.clients),
      CFL_INT("data.partition.k_true", data.k_true),
      CFL_REAL("data.partition.alpha_cluster", data.alpha_cluster),
      CFL_REAL("data.partition.alpha_client", data.alpha_client),
      CFL_INT("data.partition.cluster_classes", data.cluster_classes),
      CFL_INT("data.partition.client_classes", data.client_classes),
      CFL_REAL("data.test_fraction", data.test_fraction),
      CFL_ENUM("model.kind", model.kind, kModels),
      CFL_INT("model.hidden_units", model.hidden_units),
      CFL_ENUM("model.init", model.init, kInits),
      CFL_REAL("model.init_std", model.init_std),
      KeySpec{"strategy.kind",
              [](ParseState& s, const std::string&, const std::string& v) { s.cfg.strategy.kind = parse_strategy_kind(v); },
              [](const ExperimentConfig& c) { return std::string(to_string(c.strategy.kind)); }},
      CFL_INT("strategy.k_clusters", strategy.k_clusters),
      CFL_ENUM("strategy.weight_mode", strategy.weight_mode, kWeights),
      KeySpec{"strategy.ensemble_base",
              [](ParseState& s, const std::string&, const std::string& v) {
                s.cfg.strategy.ensemble_base = parse_strategy_kind(v);
              },
              [](const ExperimentConfig& c) { return std::string(to_string(c.strategy.ensemble_base)); }},
      CFL_REAL("strategy.participation", strategy.participation),
      CFL_ENUM("strategy.centroid_init", strategy.centroid_init, kCentroidInit),
      KeySpec{"strategy.representation",
              [](ParseState& s, const std::string&, const std::string& v) {
                s.cfg.strategy.representation.clear();
                if (v != "all")
                  for (auto& name : split(v, ','))
                    if (!name.empty()) s.cfg.strategy.representation.push_back(name);
              },
              [](const ExperimentConfig& c) {
                if (c.strategy.representation.empty()) return std::string("all");
                std::string out;
                for (const auto& n : c.strategy.representation) out += (out.empty() ? "" : ",") + n;
                return out;
              }},
      CFL_REAL("sgd.learning_rate", strategy.sgd.learning_rate),
      CFL_REAL("sgd.momentum", strategy.sgd.momentum),
      CFL_INT("sgd.batch_size", strategy.sgd.batch_size),
      CFL_INT("sgd.local_steps", strategy.sgd.local_steps),
      KeySpec{"sgd.prox_mu",
              [](ParseState& s, const std::string& k, const std::string& v) {
                s.cfg.strategy.sgd.prox_mu = parse_real(k, v);
                s.prox_set = true;
              },
              [](const ExperimentConfig& c) { return num(c.strategy.sgd.prox_mu); }},
      CFL_BOOL("sgd.full_batch", strategy.sgd.full_batch),
      CFL_INT("run.rounds", rounds),
      CFL_INT("run.window", window),
      CFL_INT("run.threads", threads),
      CFL_BOOL("run.early_stop", early_stop),
      CFL_U64("seeds.data", seed_data),
      CFL_U64("seeds.init", seed_init),
      CFL_U64("seeds.train", seed_train),
      CFL_BOOL("theorem.enabled", theorem.enabled),
      CFL_ENUM("theorem.clamp", theorem.clamp, kClamps),
      CFL_REAL("theorem.eta_scale", theorem.eta_scale),
      KeySpec{"theorem.beta",
              [](ParseState& s, const std::string& k, const std::string& v) {
                if (v == "auto")
                  s.cfg.theorem.beta.reset();
                else
                  s.cfg.theorem.beta = parse_real(k, v);
              },
              [](const ExperimentConfig& c) { return c.theorem.beta ? num(*c.theorem.beta) : std::string("auto"); }},
      CFL_REAL("theorem.f_slack", theorem.f_slack),
      CFL_REAL("theorem.r_slack", theorem.r_slack),
  };
  return table;
}

#undef CFL_INT
#undef CFL_U64
#undef CFL_REAL
#undef CFL_BOOL
#undef CFL_ENUM

// Default proximal coefficient for FedProx runs.
constexpr double kFedProxMu = 0.95;

bool uses_fedprox(const Strategy& s) {
  return s.kind == StrategyKind::fedprox ||
         (s.kind == StrategyKind::ensemble && s.ensemble_base == StrategyKind::fedprox);
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& k : key_table()) keys.emplace_back(k.key);
  return keys;
}

ExperimentConfig ExperimentConfig::from_kv(const KeyValueConfig& kv) {
  ParseState state;
  for (const auto& [key, value] : kv.entries()) {
    auto it = std::find_if(key_table().begin(), key_table().end(), [&](const KeySpec& k) { return key == k.key; });
    if (it == key_table().end()) throw ValidationError("unknown config key '" + key + "'");
    it->set(state, key, value);
  }
  if (!state.prox_set && uses_fedprox(state.cfg.strategy)) state.cfg.strategy.sgd.prox_mu = kFedProxMu;
  state.cfg.validate();
  return state.cfg;
}

KeyValueConfig ExperimentConfig::to_kv() const {
  KeyValueConfig kv;
  for (const auto& k : key_table()) kv.set(k.key, k.get(*this));
  return kv;
}

void ExperimentConfig::validate() const {
  if (data.source == DataSource::synthetic) data.synthetic.validate();
  if (data.source == DataSource::idx) {
    if (data.idx_images.empty() || data.idx_labels.empty())
      throw ValidationError("data.idx.images and data.idx.labels are required for an IDX source");
    if (data.partition == PartitionKind::generator)
      throw ValidationError("IDX data needs data.partition.kind = dirichlet or nclass");
  }
  if (!(data.test_fraction >= 0.0 && data.test_fraction < 1.0))
    throw ValidationError("data.test_fraction must lie in [0, 1)");
  strategy.validate();
  if (rounds < 1) throw ValidationError("run.rounds must be >= 1");
  if (window < 1 || window > rounds) throw ValidationError("run.window must lie in [1, run.rounds]");
  if (threads < 1) throw ValidationError("run.threads must be >= 1");
  if (model.kind == ModelKind::mlp1 && model.hidden_units < 1)
    throw ValidationError("model.hidden_units must be >= 1 for mlp1");
  if (theorem.enabled) {
    const auto k = strategy.kind;
    if (k != StrategyKind::wecfl && k != StrategyKind::fesem && k != StrategyKind::fedavg)
      throw ValidationError("theorem checks apply to wecfl, fesem and fedavg only");
    if (strategy.participation != 1.0) throw ValidationError("theorem checks need full participation");
    if (strategy.sgd.prox_mu != 0.0) throw ValidationError("theorem checks need sgd.prox_mu = 0");
    if (!(theorem.eta_scale > 0.0)) throw ValidationError("theorem.eta_scale must be > 0");
    if (theorem.beta && !(*theorem.beta > 0.0)) throw ValidationError("theorem.beta must be > 0");
    if (theorem.clamp == EtaClamp::r_bound && model.kind != ModelKind::logistic && !theorem.beta)
      throw ValidationError("theorem.clamp = r_bound with mlp1 needs an explicit theorem.beta");
  }
}

LoadedData load_data(const DataConfig& cfg, std::uint64_t seed_data) {
  LoadedData out;
  if (cfg.source == DataSource::synthetic) {
    SyntheticSpec spec = cfg.synthetic;
    spec.seed = seed_data;
    auto [dataset, part] = generate_synthetic(spec);
    out.dataset = std::make_shared<const Dataset>(std::move(dataset));
    out.partition = std::move(part);
  } else {
    out.dataset = std::make_shared<const Dataset>(load_idx(cfg.idx_images, cfg.idx_labels));
  }
  const auto part_seed = derive_seed(seed_data, {2});
  switch (cfg.partition) {
    case PartitionKind::generator:
      break;
    case PartitionKind::dirichlet:
      out.partition = dirichlet_partition(*out.dataset, cfg.clients, cfg.k_true, cfg.alpha_cluster, cfg.alpha_client,
                                          part_seed);
      break;
    case PartitionKind::nclass:
      out.partition = nclass_partition(*out.dataset, cfg.clients, cfg.k_true, cfg.cluster_classes, cfg.client_classes,
                                       part_seed);
      break;
  }
  validate_partition(out.partition, out.dataset->size());
  return out;
}

namespace {

// a <= b up to a relative slack. `floor` absorbs cancellation error in
// squared distances, which scales with the parameters, not with F itself.
bool within(double a, double b, double slack, double floor = 0.0) {
  return a <= b + std::max(slack * std::max(std::abs(a), std::abs(b)), floor);
}

// Largest squared parameter norm among clients and cluster models.
double param_scale(const FederationState& st) {
  double s = 0.0;
  for (const auto& c : st.clients) s = std::max(s, dot(c.params, c.params));
  for (const auto& c : st.clusters) s = std::max(s, dot(c.model, c.model));
  return s;
}

void check_theorems(const ExperimentConfig& cfg, const RoundRecord& rec, const RoundRecord* prev, double scale) {
  const auto& th = cfg.theorem;
  const double noise = 64.0 * std::numeric_limits<double>::epsilon() * scale;
  auto fail = [&](const std::string& what, double lhs, double rhs) {
    std::ostringstream msg;
    msg << what << " violated (" << format_double(lhs) << " > "
        << format_double(rhs) << ")";
    throw TheoremViolation(msg.str(), rec.round);
  };
  if (prev && !within(rec.f_after_e, prev->f_after_l, th.f_slack, noise))
    fail("assignment step must not increase F", rec.f_after_e, prev->f_after_l);
  if (!within(rec.f_after_m, rec.f_after_e, th.f_slack, noise))
    fail("aggregation step must not increase F", rec.f_after_m, rec.f_after_e);
  if (!within(rec.f_after_l, rec.f_after_m, th.f_slack, noise))
    fail("clamped local update must not increase F", rec.f_after_l, rec.f_after_m);
  if (th.clamp == EtaClamp::r_bound && prev && !within(rec.r_after_m, prev->r_after_m, th.r_slack))
    fail("R at the aggregation step must not increase", rec.r_after_m, prev->r_after_m);
}

// Soft-vote evaluation of ensemble members over all clients' test shards.
void ensemble_evaluate(const std::vector<FederationState>& members, RoundRecord& rec) {
  const auto& st = members.front();
  std::vector<ParamVector> models;
  for (const auto& m : members) models.push_back(m.clusters.front().model);
  std::vector<int> pred, truth;
  for (std::size_t i = 0; i < st.n_clients(); ++i) {
    if (st.clients[i].test.empty()) continue;
    Matrix probs = ensemble_predict(models, st.spec, st.test_view(i));
    for (std::size_t r = 0; r < probs.rows(); ++r) {
      auto row = probs.row(r);
      pred.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
      truth.push_back(st.data->label(st.clients[i].test[r]));
    }
  }
  if (!pred.empty()) {
    rec.micro_acc = micro_accuracy(pred, truth);
    rec.macro_f1 = macro_f1(pred, truth, st.spec.n_classes);
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg_in, const RoundCallback& on_round) {
  cfg_in.validate();
  ExperimentConfig cfg = cfg_in;
  if (cfg.theorem.enabled) {
    cfg.strategy.sgd.full_batch = true;
    cfg.strategy.sgd.momentum = 0.0;
  }

  auto data = load_data(cfg.data, cfg.seed_data);
  auto split = split_shards(data.partition, cfg.data.test_fraction, derive_seed(cfg.seed_data, {3}));

  ModelSpec spec = cfg.model;
  spec.n_features = static_cast<int>(data.dataset->n_features());
  spec.n_classes = data.dataset->n_classes();

  const bool ensemble = cfg.strategy.kind == StrategyKind::ensemble;
  Strategy member_strategy = cfg.strategy;
  if (ensemble) {
    member_strategy.kind = cfg.strategy.ensemble_base;
    member_strategy.k_clusters = 1;
  }
  const int n_members = ensemble ? cfg.strategy.k_clusters : 1;

  std::vector<FederationState> states;
  for (int e = 0; e < n_members; ++e) {
    FederationInit init{spec, member_strategy,
                        ensemble ? derive_seed(cfg.seed_init, {100, std::uint64_t(e)}) : cfg.seed_init,
                        ensemble ? derive_seed(cfg.seed_train, {100, std::uint64_t(e)}) : cfg.seed_train,
                        cfg.threads};
    states.push_back(init_federation(data.dataset, split, data.partition.cluster_of_client, init));
  }

  RoundOptions opts;
  opts.threads = cfg.threads;
  if (cfg.theorem.enabled) {
    opts.clamp = cfg.theorem.clamp;
    opts.eta_scale = cfg.theorem.eta_scale;
    opts.beta = cfg.theorem.beta;
  }

  ExperimentResult result;
  result.partition = data.partition;
  int quiet_rounds = 0;

  for (int t = 1; t <= cfg.rounds; ++t) {
    std::vector<RoundRecord> member_records;
    const double scale_before = param_scale(states.front());
    for (int e = 0; e < n_members; ++e) {
      const std::uint64_t base = ensemble ? derive_seed(cfg.seed_train, {100, std::uint64_t(e)}) : cfg.seed_train;
      auto res = run_round(states[e], member_strategy, derive_seed(base, {std::uint64_t(t)}), opts);
      states[e] = std::move(res.state);
      member_records.push_back(std::move(res.record));
    }

    RoundRecord rec = member_records.front();
    if (ensemble) {
      // F and R are averaged over members; B and assignment come from member 0.
      auto mean_of = [&](double RoundRecord::*field) {
        double s = 0.0;
        for (const auto& r : member_records) s += r.*field;
        return s / static_cast<double>(member_records.size());
      };
      rec.f_after_e = mean_of(&RoundRecord::f_after_e);
      rec.f_after_m = mean_of(&RoundRecord::f_after_m);
      rec.f_after_l = mean_of(&RoundRecord::f_after_l);
      rec.r_value = mean_of(&RoundRecord::r_value);
      rec.r_after_m = mean_of(&RoundRecord::r_after_m);
      ensemble_evaluate(states, rec);
    }

    std::vector<ParamVector> snapshot;
    for (const auto& st : states)
      for (const auto& c : st.clusters) snapshot.push_back(c.model);
    result.centroid_history.push_back(std::move(snapshot));

    const RoundRecord* prev = result.records.empty() ? nullptr : &result.records.back();
    const double prev_f = prev ? prev->f_after_l : 0.0;
    result.records.push_back(rec);
    if (on_round) on_round(rec);
    if (cfg.theorem.enabled)
      check_theorems(cfg, rec, result.records.size() > 1 ? &result.records[result.records.size() - 2] : nullptr,
                     std::max(scale_before, param_scale(states.front())));

    if (cfg.early_stop && prev) {
      const double change = std::abs(rec.f_after_l - prev_f) / std::max(prev_f, 1e-12);
      quiet_rounds = change < 1e-6 ? quiet_rounds + 1 : 0;
      if (quiet_rounds >= 5) {
        result.summary.stopped_early = true;
        break;
      }
    }
  }

  auto& s = result.summary;
  s.rounds_run = static_cast<int>(result.records.size());
  s.window = std::min(cfg.window, s.rounds_run);
  std::vector<double> acc, f1;
  for (const auto& r : result.records) {
    acc.push_back(r.micro_acc);
    f1.push_back(r.macro_f1);
  }
  s.micro_acc = window_stats(acc, s.window);
  s.macro_f1 = window_stats(f1, s.window);
  s.final_ari = result.records.back().ari_vs_truth;
  for (int i = s.rounds_run - 1; i >= 0 && result.records[i].ari_vs_truth >= 1.0 - 1e-12; --i)
    s.recovery_round = result.records[i].round;

  result.final_states = std::move(states);
  return result;
}

std::vector<ExperimentResult> sweep(const ExperimentConfig& base, const std::string& axis,
                                    const std::vector<std::string>& values, int parallel_runs) {
  const auto keys = config_keys();
  if (std::find(keys.begin(), keys.end(), axis) == keys.end())
    throw ValidationError("sweep: unknown axis '" + axis + "'");
  std::vector<ExperimentConfig> configs;
  for (const auto& v : values) {
    KeyValueConfig kv = base.to_kv();
    kv.set(axis, v);
    configs.push_back(ExperimentConfig::from_kv(kv));
  }
  std::vector<ExperimentResult> results(configs.size());
  parallel_for(configs.size(), parallel_runs, [&](std::size_t i) { results[i] = run_experiment(configs[i]); });
  return results;
}

PartitionStats partition_stats(const Dataset& d, const Partition& p) {
  PartitionStats s;
  s.client_hist = class_histograms(d, p.client_shards);
  s.client_cluster = p.cluster_of_client;
  for (const auto& shard : p.client_shards) s.client_sizes.push_back(shard.size());
  s.cluster_hist.assign(p.n_clusters(), std::vector<std::size_t>(d.n_classes(), 0));
  for (std::size_t i = 0; i < p.n_clients(); ++i)
    for (int c = 0; c < d.n_classes(); ++c) s.cluster_hist[p.cluster_of_client[i]][c] += s.client_hist[i][c];

  auto normalised = [&](std::size_t i) {
    std::vector<double> h(d.n_classes());
    for (int c = 0; c < d.n_classes(); ++c)
      h[c] = static_cast<double>(s.client_hist[i][c]) / static_cast<double>(s.client_sizes[i]);
    return h;
  };
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < p.n_clients(); ++i) {
    auto hi = normalised(i);
    for (std::size_t j = i + 1; j < p.n_clients(); ++j) {
      auto hj = normalised(j);
      double l1 = 0.0;
      for (int c = 0; c < d.n_classes(); ++c) l1 += std::abs(hi[c] - hj[c]);
      if (p.cluster_of_client[i] == p.cluster_of_client[j]) {
        intra += l1;
        ++n_intra;
      } else {
        inter += l1;
        ++n_inter;
      }
    }
  }
  s.intra_cluster_l1 = n_intra ? intra / static_cast<double>(n_intra) : 0.0;
  s.inter_cluster_l1 = n_inter ? inter / static_cast<double>(n_inter) : 0.0;
  return s;
}

std::string partition_stats_csv(const PartitionStats& s) {
  std::ostringstream out;
  const std::size_t C = s.client_hist.empty() ? 0 : s.client_hist.front().size();
  out << "row,id,cluster,total";
  for (std::size_t c = 0; c < C; ++c) out << ",class_" << c;
  out << "\n";
  auto emit = [&](const char* kind, std::size_t id, int cluster, const std::vector<std::size_t>& h) {
    std::size_t total = 0;
    for (auto v : h) total += v;
    out << kind << "," << id << "," << cluster << "," << total;
    for (auto v : h) out << "," << v;
    out << "\n";
  };
  for (std::size_t i = 0; i < s.client_hist.size(); ++i) emit("client", i, s.client_cluster[i], s.client_hist[i]);
  for (std::size_t k = 0; k < s.cluster_hist.size(); ++k) emit("cluster", k, static_cast<int>(k), s.cluster_hist[k]);
  out << "intra_cluster_l1,,," << format_double(s.intra_cluster_l1) << "\n";
  out << "inter_cluster_l1,,," << format_double(s.inter_cluster_l1) << "\n";
  return out.str();
}

nlohmann::json summary_to_json(const ExperimentConfig& cfg, const ExperimentResult& result) {
  const auto& s = result.summary;
  nlohmann::json j{{"strategy", to_string(cfg.strategy.kind)},
                   {"k_clusters", cfg.strategy.k_clusters},
                   {"rounds_run", s.rounds_run},
                   {"window", s.window},
                   {"micro_acc_mean", s.micro_acc.mean},
                   {"micro_acc_window_std", s.micro_acc.stddev},
                   {"macro_f1_mean", s.macro_f1.mean},
                   {"macro_f1_window_std", s.macro_f1.stddev},
                   {"final_ari", s.final_ari},
                   {"stopped_early", s.stopped_early},
                   {"seeds", {{"data", cfg.seed_data}, {"init", cfg.seed_init}, {"train", cfg.seed_train}}}};
  j["recovery_round"] = s.recovery_round ? nlohmann::json(*s.recovery_round) : nlohmann::json(nullptr);
  if (!result.records.empty()) {
    const auto& last = result.records.back();
    j["final"] = {{"f_after_l", last.f_after_l}, {"r_value", last.r_value}, {"micro_acc", last.micro_acc},
                  {"macro_f1", last.macro_f1}};
  }
  return j;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text, std::vector<std::string>& written) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
  written.push_back(path.string());
}

// Pairwise cosine matrix, or empty when any vector is zero.
std::optional<Matrix> cosine_or_empty(const std::vector<ParamVector>& v) {
  try {
    return cosine_similarity_matrix(v);
  } catch (const ValidationError&) {
    return std::nullopt;
  }
}

}  // namespace

std::vector<std::string> write_artifacts(const ExperimentConfig& cfg, const ExperimentResult& result,
                                         const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> written;

  write_text(out_dir / "summary.json", summary_to_json(cfg, result).dump(2) + "\n", written);

  std::string rounds;
  for (const auto& r : result.records) rounds += round_record_to_json(r).dump() + "\n";
  write_text(out_dir / "rounds.jsonl", rounds, written);

  std::string assignments;
  for (std::size_t t = 0; t < result.records.size(); ++t) {
    nlohmann::json centroids = nlohmann::json::array();
    for (const auto& c : result.centroid_history[t])
      centroids.push_back(std::vector<double>(c.values().begin(), c.values().end()));
    assignments += nlohmann::json{{"round", result.records[t].round},
                                  {"assignment", assignment_to_json(result.records[t].assignment_snapshot)},
                                  {"centroids", centroids}}
                       .dump() +
                   "\n";
  }
  write_text(out_dir / "assignments.jsonl", assignments, written);

  const auto& st = result.final_states.front();
  std::ostringstream params;
  params << "client,ground_truth,cluster";
  const std::size_t P = st.clients.front().params.size();
  for (std::size_t p = 0; p < P; ++p) params << ",p" << p;
  params << "\n";
  std::vector<ParamVector> client_vectors;
  for (std::size_t i = 0; i < st.n_clients(); ++i) {
    const auto& c = st.clients[i];
    params << i << "," << (st.ground_truth.empty() ? -1 : st.ground_truth[i]) << "," << c.cluster;
    for (double v : c.params.values()) params << "," << format_double(v);
    params << "\n";
    client_vectors.push_back(c.params);
  }
  write_text(out_dir / "client_params.csv", params.str(), written);

  if (auto m = cosine_or_empty(client_vectors)) write_text(out_dir / "cosine_clients.csv", matrix_to_csv(*m, "client"), written);
  std::vector<ParamVector> cluster_vectors;
  for (const auto& s : result.final_states)
    for (const auto& c : s.clusters) cluster_vectors.push_back(c.model);
  if (auto m = cosine_or_empty(cluster_vectors))
    write_text(out_dir / "cosine_clusters.csv", matrix_to_csv(*m, "cluster"), written);

  write_text(out_dir / "partition_stats.csv", partition_stats_csv(partition_stats(*st.data, result.partition)), written);
  write_text(out_dir / "effective_config.ini", cfg.to_kv().dump(), written);
  return written;
}

}  // namespace cfl
