#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "chainda/chain.hpp"
#include "chainda/core.hpp"
#include "chainda/rules.hpp"

namespace chainda {

// ---------------------------------------------------------------------------
// Greedy online matcher: orders both sides by competitiveness and pairs
// best-against-best while the pair yields non-negative surplus. Payments
// clear at the midpoint, so auctioneer revenue is zero.
Clearing greedy_match(std::span<const RuleOffer> bids,
                      std::span<const RuleOffer> asks);

// ---------------------------------------------------------------------------
// Exact offline optimum: maximum-weight bipartite matching over
// positive-surplus buyer/seller pairs whose activity intervals overlap
// (a_i <= d_j and a_j <= d_i). Period-by-period ordering is not constrained.
struct OfflineResult {
  double value = 0.0;
  std::vector<std::pair<AgentId, AgentId>> matching;  // (buyer, seller)
};

OfflineResult offline_optimal(const std::vector<AgentType>& schedule);

/// Exhaustive-enumeration oracle for cross-checking offline_optimal.
/// Intended for instances with at most ~8 agents per side.
OfflineResult offline_brute_force(const std::vector<AgentType>& schedule);

// ---------------------------------------------------------------------------
// Blum-style worst-case fixed price: a single price drawn from the
// distribution D(x) = (1/r) ln((x - w_min) / ((r-1) w_min)) on
// [r w_min, w_max], where r solves r = ln((w_max - w_min) / ((r-1) w_min)).
struct BlumPriceRule {
  double w_min = 0.0;
  double w_max = 0.0;
  double r = 0.0;
};

/// Solves the fixed point. Throws std::invalid_argument unless
/// w_max > w_min > 0.
BlumPriceRule make_blum_rule(double w_min, double w_max);

/// Inverse-CDF sample: x = w_min + (r-1) w_min e^{r u} for u in [0, 1].
double blum_price(const BlumPriceRule& rule, double u);

// ---------------------------------------------------------------------------
// The naive dynamic trade-reduction DA: re-runs the static tr-DA on the
// active offers every period, with immediate settlement and no admission
// pricing or survivor gating. Not truthful; kept as the manipulation demo.
struct NaiveOutcome {
  std::vector<TradeEvent> trades;
};

NaiveOutcome naive_dynamic(const std::vector<AgentType>& schedule);

// ---------------------------------------------------------------------------
// ZIP open-outcry market. Offers are driven by adaptive protocol agents
// that maintain per-patience-category profit margins; each period the
// market matches the most competitive declared bids and asks while the
// pair has non-negative declared surplus, priced at the pair's declared
// midpoint. The protocol agents train over `trials - 1` replays of the
// schedule; the last trial is the measured one.
struct ZipConfig {
  int n_protocol_agents = 5;
  int trials = 11;  // 10 training replays + 1 measured
};

struct ZipOutcome {
  std::vector<TradeEvent> trades;  // measured trial
  double true_surplus = 0.0;       // sum of w_b + w_s over measured trades
};

ZipOutcome zip_market_run(const std::vector<AgentType>& schedule,
                          int max_patience, std::uint64_t seed,
                          std::uint64_t trial, const ZipConfig& cfg = {});

/// Patience category index (0 = low, 1 = medium, 2 = high); the categories
/// evenly partition [0, max_patience].
int zip_patience_category(int patience, int max_patience);

/// Learning-rate schedule: r = 1 - (r0 + (trial-1) r+ + (t/t_end)^2 r+)
/// with r+ = (1 - r0) / (training_trials + 1), clamped to [0, 1].
double zip_learning_rate(int trial, int period, int t_end,
                         int training_trials = 10, double r0 = 0.7);

/// Category-margin update: (1 - r) category + r offer.
double zip_margin_update(double r, double category_margin, double offer_margin);

}  // namespace chainda
