#include "cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cfl/engine.hpp"
#include "cfl/errors.hpp"
#include "cfl/serialize.hpp"

namespace cfl::cli {

namespace {

struct Invocation {
  std::string config_path;
  std::string output_dir = "out";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed_data, seed_init, seed_train;
  bool quiet = false;
  // sweep only
  std::string axis;
  std::vector<std::string> values;
  int jobs = 1;
};

void add_common(CLI::App* sub, Invocation& inv) {
  sub->add_option("--config", inv.config_path, "Experiment config file")->required();
  sub->add_option("--out", inv.output_dir, "Directory for result files")->capture_default_str();
  sub->add_option("--override", inv.overrides, "key=value applied on top of the config (repeatable)")
      ->allow_extra_args(false);
  sub->add_option("--seed-data", inv.seed_data, "Seed for data generation and partitioning");
  sub->add_option("--seed-init", inv.seed_init, "Seed for model and centroid initialisation");
  sub->add_option("--seed-train", inv.seed_train, "Seed for local training and sampling");
  sub->add_flag("--quiet", inv.quiet, "Do not stream per-round records");
}

ExperimentConfig load_config(const Invocation& inv) {
  if (!std::filesystem::exists(inv.config_path)) throw ValidationError("config file not found: " + inv.config_path);
  auto kv = KeyValueConfig::load(inv.config_path);
  for (const auto& o : inv.overrides) kv.apply_override(o);
  if (inv.seed_data) kv.set("seeds.data", std::to_string(*inv.seed_data));
  if (inv.seed_init) kv.set("seeds.init", std::to_string(*inv.seed_init));
  if (inv.seed_train) kv.set("seeds.train", std::to_string(*inv.seed_train));
  return ExperimentConfig::from_kv(kv);
}

RoundCallback streamer(const Invocation& inv, std::ostream& out) {
  if (inv.quiet) return {};
  return [&out](const RoundRecord& r) { out << round_record_to_json(r).dump() << "\n"; };
}

int run_cmd(const Invocation& inv, std::ostream& out) {
  auto cfg = load_config(inv);
  auto result = run_experiment(cfg, streamer(inv, out));
  write_artifacts(cfg, result, inv.output_dir);
  if (!inv.quiet) out << summary_to_json(cfg, result).dump() << "\n";
  return 0;
}

int check_theorems_cmd(const Invocation& inv, std::ostream& out) {
  auto cfg = load_config(inv);
  cfg.theorem.enabled = true;
  cfg.validate();
  auto result = run_experiment(cfg, streamer(inv, out));
  write_artifacts(cfg, result, inv.output_dir);
  out << "theorem checks passed for " << result.summary.rounds_run << " rounds\n";
  return 0;
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double pop_std(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

int sweep_cmd(const Invocation& inv, std::ostream& out) {
  auto cfg = load_config(inv);
  auto results = sweep(cfg, inv.axis, inv.values, inv.jobs);

  nlohmann::json runs = nlohmann::json::array();
  std::vector<double> run_means, pooled;
  for (std::size_t i = 0; i < results.size(); ++i) {
    auto run_cfg = cfg.to_kv();
    run_cfg.set(inv.axis, inv.values[i]);
    const auto effective = ExperimentConfig::from_kv(run_cfg);
    write_artifacts(effective, results[i], std::filesystem::path(inv.output_dir) / (inv.axis + "=" + inv.values[i]));
    auto j = summary_to_json(effective, results[i]);
    j["value"] = inv.values[i];
    runs.push_back(j);
    run_means.push_back(results[i].summary.micro_acc.mean);
    const auto& recs = results[i].records;
    for (std::size_t r = recs.size() - results[i].summary.window; r < recs.size(); ++r)
      pooled.push_back(recs[r].micro_acc);
  }
  // Both spreads are reported: across runs (one windowed mean per run) and
  // pooled over every windowed round of every run.
  nlohmann::json summary{{"axis", inv.axis},
                         {"runs", runs},
                         {"micro_acc_mean", mean(run_means)},
                         {"micro_acc_std_across_runs", pop_std(run_means)},
                         {"micro_acc_std_pooled", pop_std(pooled)}};
  std::filesystem::create_directories(inv.output_dir);
  std::ofstream f(std::filesystem::path(inv.output_dir) / "sweep_summary.json");
  f << summary.dump(2) << "\n";
  if (!f) throw std::runtime_error("cannot write sweep_summary.json under " + inv.output_dir);
  if (!inv.quiet) out << summary.dump() << "\n";
  return 0;
}

int partition_stats_cmd(const Invocation& inv, std::ostream& out) {
  auto cfg = load_config(inv);
  auto data = load_data(cfg.data, cfg.seed_data);
  auto csv = partition_stats_csv(partition_stats(*data.dataset, data.partition));
  std::filesystem::create_directories(inv.output_dir);
  const auto path = std::filesystem::path(inv.output_dir) / "partition_stats.csv";
  std::ofstream f(path, std::ios::binary);
  f << csv;
  if (!f) throw std::runtime_error("cannot write " + path.string());
  out << csv;
  return 0;
}

}  // namespace

int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Clustered federated learning simulator", "cflsim"};
  app.require_subcommand(1);

  Invocation inv;
  auto* run = app.add_subcommand("run", "Run one experiment and write its result files");
  add_common(run, inv);
  auto* chk = app.add_subcommand("check-theorems", "Run with clamped step sizes and assert the monotonicity guarantees");
  add_common(chk, inv);
  auto* swp = app.add_subcommand("sweep", "Run one experiment per value of a config key");
  add_common(swp, inv);
  swp->add_option("--axis", inv.axis, "Config key to vary, e.g. seeds.train")->required();
  swp->add_option("--values", inv.values, "Comma-separated values")->required()->delimiter(',');
  swp->add_option("--jobs", inv.jobs, "Experiments run concurrently")->check(CLI::PositiveNumber);
  auto* ps = app.add_subcommand("partition-stats", "Print per-client and per-cluster label histograms");
  add_common(ps, inv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return 1;
  }

  try {
    if (run->parsed()) return run_cmd(inv, out);
    if (chk->parsed()) return check_theorems_cmd(inv, out);
    if (swp->parsed()) return sweep_cmd(inv, out);
    if (ps->parsed()) return partition_stats_cmd(inv, out);
  } catch (const TheoremViolation& e) {
    err << "theorem check failed at round " << e.round() << ": " << e.what() << "\n";
    return 3;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace cfl::cli
