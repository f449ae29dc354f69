#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "chainda/baselines.hpp"
#include "chainda/chain.hpp"
#include "chainda/core.hpp"

namespace chainda {

enum class PatienceDist { uniform, trunc_exp };

/// Market environment: Poisson arrivals, random side, bounded patience, and
/// valuations drawn about a geometric-Brownian mean path.
struct EnvConfig {
  double arrival_intensity = 2.0;  // agents per period (Poisson rate)
  int max_patience = 6;            // K
  PatienceDist patience_dist = PatienceDist::uniform;
  double volatility = 0.0;   // per-period mean multiplier e^{+-volatility}
  double spread = 0.2;       // total width of the value band about the mean
  double initial_mean = 100.0;
  int n_agents_per_side = 500;
  std::uint64_t seed = 1;

  /// Truncated-exponential rate: 95% of draws fall below max_patience.
  double trunc_exp_alpha() const;

  void check() const;  // throws std::invalid_argument
};

/// Draws agents until both sides have at least n_agents_per_side entrants.
/// Deterministic under (cfg.seed, trial); ids are assigned in draw order.
std::vector<AgentType> generate_schedule(const EnvConfig& cfg,
                                         std::uint64_t trial);

struct TrialMetrics {
  double alloc_eff = 0.0;  // matched true surplus / OPT
  double net_eff = 0.0;    // alloc_eff - revenue
  double revenue = 0.0;    // auctioneer take / OPT
  int n_trades = 0;
  double opt_value = 0.0;
};

struct TrialResult {
  TrialMetrics metrics;
  std::vector<TradeEvent> trades;
};

/// Everything a run needs: the environment plus the mechanism template.
/// The rule inside `mech` carries parameter values (smoothing, window,
/// fixed price); the rule variant itself comes from the mechanism name.
struct SimConfig {
  EnvConfig env;
  MechanismConfig mech;
};

/// Flat key=value text. Unknown keys throw std::invalid_argument.
SimConfig parse_config(const std::string& text);
SimConfig load_config(const std::string& path);

/// True when the name denotes a Chain matching rule (as opposed to a
/// baseline: greedy, blum, naive_tr_da, zip, offline).
bool is_chain_mechanism(const std::string& name);

/// Metrics from a trade list against the schedule's offline optimum.
TrialMetrics compute_metrics(const std::vector<TradeEvent>& trades,
                             const std::vector<AgentType>& schedule,
                             double opt_value);

/// Trades plus the auctioneer's cash/item movements. The ledger is filled
/// for Chain-based mechanisms; baselines settle implicitly at match time.
struct MechanismRun {
  std::vector<TradeEvent> trades;
  std::vector<LedgerEvent> ledger;
};

/// Runs one mechanism over one schedule without computing metrics.
/// `trial` seeds the mechanism's internal randomness.
MechanismRun run_mechanism(const std::string& mechanism, const SimConfig& cfg,
                           const std::vector<AgentType>& schedule,
                           std::uint64_t trial);

/// run_mechanism plus metrics against the schedule's offline optimum.
TrialResult run_trial(const std::string& mechanism, const SimConfig& cfg,
                      const std::vector<AgentType>& schedule,
                      std::uint64_t trial);

struct ResultRow {
  int trial = 0;
  std::string mechanism;
  TrialMetrics metrics;
  std::uint64_t seed = 0;
};

/// Runs every mechanism over the same per-trial schedules. Trials may be
/// executed on several threads; the result order is fixed by (trial,
/// mechanism) regardless.
std::vector<ResultRow> compare(const std::vector<std::string>& mechanisms,
                               const SimConfig& cfg, int n_trials,
                               int n_threads = 1);

/// Columns: trial, mechanism, alloc_eff, net_eff, revenue, n_trades,
/// opt_value, seed. Doubles are printed round-trip exactly.
std::string to_csv(const std::vector<ResultRow>& rows);
std::vector<ResultRow> parse_csv(const std::string& text);

struct MeanWithError {
  double mean = 0.0;
  std::optional<double> se;  // absent with fewer than two samples
};

MeanWithError summarize(const std::vector<double>& samples);

/// Three-pass grid search: sample the range uniformly, smooth each value
/// with its immediate neighbors, then narrow to the smoothed argmax's
/// neighborhood and repeat. Throws std::invalid_argument on an empty range.
double tune_grid(const std::function<double(double)>& objective, double lo,
                 double hi, int n_samples, int n_passes = 3);

/// Sets a tunable parameter by name: tau, window, ewma_lambda, fixed_price,
/// initial_price, arrival_intensity, volatility. Throws on unknown names.
void apply_param(SimConfig& cfg, const std::string& name, double value);

/// Tunes one parameter for mean allocative efficiency over n_trials seeds.
double tune(const std::string& mechanism, const std::string& param, double lo,
            double hi, const SimConfig& cfg, int n_samples, int n_trials = 10,
            int n_passes = 3);

}  // namespace chainda
