// Command-line front end: simulate / tune / compare / verify.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "chainda/sim.hpp"
#include "chainda/verify.hpp"

using namespace chainda;

namespace {

SimConfig config_from(const std::string& path) {
  if (path.empty()) {
    SimConfig cfg;
    cfg.mech.max_patience = cfg.env.max_patience;
    cfg.mech.tau = 3;
    return cfg;
  }
  return load_config(path);
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << content;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic double-auction simulator"};
  app.require_subcommand(1);

  std::string config_path, mechanism, out_path, report_path;
  std::string param, range, mechanisms_csv = "mcafee,greedy";
  std::uint64_t seed = 1;
  int n_trials = 10, n_samples = 11, n_schedules = 20, n_threads = 1;

  CLI::App* simulate = app.add_subcommand("simulate", "Run one mechanism");
  simulate->add_option("--config", config_path, "flat key=value config file");
  simulate->add_option("--mechanism", mechanism, "mechanism name")->required();
  simulate->add_option("--seed", seed, "environment seed");
  simulate->add_option("--trials", n_trials, "number of trials");
  simulate->add_option("--out", out_path, "CSV output path");

  CLI::App* tune_cmd = app.add_subcommand("tune", "Tune one parameter");
  tune_cmd->add_option("--config", config_path, "flat key=value config file");
  tune_cmd->add_option("--mechanism", mechanism, "mechanism name")->required();
  tune_cmd->add_option("--param", param, "parameter name")->required();
  tune_cmd->add_option("--range", range, "LO:HI")->required();
  tune_cmd->add_option("--samples", n_samples, "grid samples per pass");
  tune_cmd->add_option("--trials", n_trials, "trials per grid point");

  CLI::App* compare_cmd =
      app.add_subcommand("compare", "Run several mechanisms on shared trials");
  compare_cmd->add_option("--config", config_path, "flat key=value config file");
  compare_cmd->add_option("--mechanisms", mechanisms_csv, "comma-separated");
  compare_cmd->add_option("--trials", n_trials, "number of trials");
  compare_cmd->add_option("--threads", n_threads, "worker threads");
  compare_cmd->add_option("--out", out_path, "CSV output path");

  CLI::App* verify_cmd =
      app.add_subcommand("verify", "Property checks for one mechanism");
  verify_cmd->add_option("--config", config_path, "flat key=value config file");
  verify_cmd->add_option("--mechanism", mechanism, "mechanism name")
      ->required();
  verify_cmd->add_option("--schedules", n_schedules, "number of schedules");
  verify_cmd->add_option("--seed", seed, "first environment seed");
  verify_cmd->add_option("--report", report_path, "report output path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) {
      SimConfig cfg = config_from(config_path);
      cfg.env.seed = seed;
      std::vector<ResultRow> rows;
      for (int t = 0; t < n_trials; ++t) {
        const auto schedule = generate_schedule(cfg.env, t);
        const TrialResult r = run_trial(mechanism, cfg, schedule, t);
        rows.push_back({t, mechanism, r.metrics, cfg.env.seed});
      }
      const std::string csv = to_csv(rows);
      if (out_path.empty()) {
        std::fputs(csv.c_str(), stdout);
      } else {
        write_file(out_path, csv);
      }
      std::vector<double> eff;
      for (const ResultRow& r : rows) eff.push_back(r.metrics.alloc_eff);
      const MeanWithError m = summarize(eff);
      std::fprintf(stderr, "%s: mean alloc_eff %.4f over %d trials\n",
                   mechanism.c_str(), m.mean, n_trials);
    } else if (tune_cmd->parsed()) {
      const auto colon = range.find(':');
      if (colon == std::string::npos)
        throw std::invalid_argument("--range expects LO:HI");
      const double lo = std::stod(range.substr(0, colon));
      const double hi = std::stod(range.substr(colon + 1));
      const SimConfig cfg = config_from(config_path);
      const double best =
          tune(mechanism, param, lo, hi, cfg, n_samples, n_trials);
      std::printf("%s %s = %.6g\n", mechanism.c_str(), param.c_str(), best);
    } else if (compare_cmd->parsed()) {
      const SimConfig cfg = config_from(config_path);
      const auto rows =
          compare(split_list(mechanisms_csv), cfg, n_trials, n_threads);
      const std::string csv = to_csv(rows);
      if (out_path.empty()) {
        std::fputs(csv.c_str(), stdout);
      } else {
        write_file(out_path, csv);
      }
    } else if (verify_cmd->parsed()) {
      SimConfig cfg = config_from(config_path);
      if (config_path.empty()) {
        // The deviation grid replays every agent's report space, so the
        // default verification market is small; pass --config to scale up.
        cfg.env.n_agents_per_side = 12;
        cfg.env.max_patience = 4;
        cfg.mech.max_patience = 4;
        cfg.mech.tau = 2;
      }
      std::string report;
      long truth_violations = 0;
      int ledger_failures = 0;
      for (int s = 0; s < n_schedules; ++s) {
        cfg.env.seed = seed + static_cast<std::uint64_t>(s);
        const auto schedule = generate_schedule(cfg.env, s);
        const auto violations =
            check_truthful_all(mechanism, cfg, schedule, s);
        truth_violations += static_cast<long>(violations.size());
        for (const TruthViolation& v : violations) {
          report += "schedule " + std::to_string(s) + " agent " +
                    std::to_string(v.agent) + " " + v.deviation + " " +
                    std::to_string(v.truthful_utility) + " -> " +
                    std::to_string(v.deviated_utility) + "\n";
        }
        if (is_chain_mechanism(mechanism)) {
          const MechanismRun run = run_mechanism(mechanism, cfg, schedule, s);
          const LedgerReport lr =
              check_ledgers(run.ledger, run.trades, schedule);
          if (!lr.all_ok()) {
            ++ledger_failures;
            report += "schedule " + std::to_string(s) + " ledger: " +
                      lr.detail + "\n";
          }
        }
      }
      std::string table;
      table += "property,schedules,failures,verdict\n";
      table += "truthful," + std::to_string(n_schedules) + "," +
               std::to_string(truth_violations) + "," +
               (truth_violations == 0 ? "pass" : "fail") + "\n";
      if (is_chain_mechanism(mechanism)) {
        table += "ledgers," + std::to_string(n_schedules) + "," +
                 std::to_string(ledger_failures) + "," +
                 (ledger_failures == 0 ? "pass" : "fail") + "\n";
      }
      if (!report_path.empty()) write_file(report_path, table + report);
      std::fputs(table.c_str(), stdout);
      if (truth_violations != 0 || ledger_failures != 0) return 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
