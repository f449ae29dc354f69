#pragma once

#include <functional>
#include <span>
#include <string>

#include "chainda/core.hpp"

namespace chainda {

/// One offer as seen by a single-period matching rule: a value, a
/// departs-this-period flag (used only by strong no-trade constructions),
/// and an ordering rank drawn from the mechanism's random event.
struct RuleOffer {
  AgentId id = 0;
  double value = 0.0;       // signed: > 0 bids, <= 0 asks
  bool departs_now = false;
  std::uint64_t rank = 0;   // lower rank = examined earlier / wins ties
};

enum class RuleVariant {
  tr_da,
  mcafee,
  simple_match,     // mean of the full history as the price
  price_based,
  windowed_mcafee,
  active_mcafee,
};

enum class PriceVariant {
  ewma,
  median,
  clearing,
  history_mcafee,
  fixed,
};

struct RuleConfig {
  RuleVariant variant = RuleVariant::mcafee;
  PriceVariant price_variant = PriceVariant::ewma;
  double lambda = 0.05;       // EWMA smoothing, (0, 1]
  int window = 150;           // history window (entries for price stats,
                              // periods for windowed-McAfee)
  double fixed_price = 0.0;   // p* for the fixed-price rule
  double initial_price = 0.0; // p^0 fallback before any history

  bool price_based() const {
    return variant == RuleVariant::price_based ||
           variant == RuleVariant::simple_match;
  }
  void check() const;
};

/// Rule-variant names as they appear in config files.
std::string rule_name(const RuleConfig& cfg);
RuleConfig rule_from_name(const std::string& name);

// ---------------------------------------------------------------------------
// Static trade-reduction DA.
// Sorts both sides by value, finds the last efficient pair m, trades the
// first m-1 pairs at (w_bm, -w_sm). Quorum: at least 2 bids and 2 asks.
Clearing trade_reduction(std::span<const RuleOffer> bids,
                         std::span<const RuleOffer> asks);

/// No-trade set for the trade-reduction rule: losers that cannot trade for
/// any reported value (probed with +inf bids / -epsilon asks).
std::set<AgentId> tr_da_no_trade(std::span<const RuleOffer> bids,
                                 std::span<const RuleOffer> asks);

/// Valid strong no-trade construction for tr-DA: everything when there is
/// no quorum, empty otherwise.
std::set<AgentId> tr_da_snt(std::span<const RuleOffer> bids,
                            std::span<const RuleOffer> asks);

// ---------------------------------------------------------------------------
// McAfee's static DA. Case I clears m pairs at the single price
// p_{m+1} = (b_{m+1} - s_{m+1})/2; Case II trade-reduces to m-1 pairs at
// (b_m, -s_m). Ties broken by rank. The Clearing's prices field carries the
// (buy, sell) prices used.
Clearing mcafee(std::span<const RuleOffer> bids, std::span<const RuleOffer> asks);

std::set<AgentId> mcafee_no_trade(std::span<const RuleOffer> bids,
                                  std::span<const RuleOffer> asks);

/// SNT := everything when min(|bids|,|asks|) < 2, empty otherwise.
std::set<AgentId> mcafee_snt(std::span<const RuleOffer> bids,
                             std::span<const RuleOffer> asks);

/// Price an extra probe offer would face under a competition-based rule:
/// insert a bid with value +inf (probe buyer) or an ask with value 0 (probe
/// seller), re-run the rule and report the probe's payment. Returns +inf
/// when even the unbeatable probe could not trade: an offer present in that
/// book would have left the market empty-handed no matter its report, so a
/// later arrival whose window covers the period must be turned away.
double competitive_probe_price(RuleVariant variant,
                               std::span<const RuleOffer> bids,
                               std::span<const RuleOffer> asks,
                               Side probe_side);

// ---------------------------------------------------------------------------
// Price statistics for the price-based rules.

struct PriceState {
  double price = 0.0;  // p^{t-1}, carried forward when a statistic is undefined
};

/// Computes p^t for the configured price variant and updates state.
/// EWMA consumes the history's new entries; windowed variants read the
/// last `window` entries.
double determine_price(History& history, const RuleConfig& cfg, PriceState& state);

// ---------------------------------------------------------------------------
// The Match procedure for price-based rules: a random two-phase scan that
// pairs willing bids and asks at price p, then derives NT and SNT from the
// terminating case. E^t information enters through RuleOffer::departs_now.
struct PriceMatchResult {
  Clearing clearing;
  // Offers whose value was checked against the price at some point during
  // the scan (feeds the admission-probability bookkeeping).
  std::set<AgentId> examined_bids;
  std::set<AgentId> examined_asks;
};

/// With `construct_snt` set, unmatched offers enter NT only if replaying
/// the scan with their most competitive possible report still leaves them
/// unmatched: an offer that passed up a counterpart it could have taken is
/// priced out, never parked in SNT, so no report can buy survival.
PriceMatchResult price_match(double price, std::span<const RuleOffer> bids,
                             std::span<const RuleOffer> asks,
                             bool construct_snt = true);

/// SimpleMatch: like price_match but with the mean of the whole history as
/// the price and no NT/SNT construction (losers simply lose).
Clearing simple_match(const History& history, double fallback_price,
                      std::span<const RuleOffer> bids,
                      std::span<const RuleOffer> asks);

// ---------------------------------------------------------------------------
// Windowed-McAfee: run McAfee on the active offers augmented with recent
// history entries; only active members of the McAfee trade set trade, in a
// random balanced subset, at the augmented prices. Active-McAfee is the
// variant that augments with all unexpired traded/priced-out offers.
struct AugmentedOffers {
  std::vector<RuleOffer> bids;  // history offers appended after actives
  std::vector<RuleOffer> asks;
};

/// subset_rank orders active candidates when one side must be thinned.
Clearing windowed_mcafee(const AugmentedOffers& augmented,
                         std::span<const RuleOffer> active_bids,
                         std::span<const RuleOffer> active_asks);

/// Three-case SNT for windowed/active McAfee; counts are for the augmented
/// sets.
std::set<AgentId> windowed_mcafee_snt(std::span<const RuleOffer> active_bids,
                                      std::span<const RuleOffer> active_asks,
                                      std::size_t augmented_bid_count,
                                      std::size_t augmented_ask_count);

// ---------------------------------------------------------------------------
// Critical price z_i: the agent-independent threshold such that agent i
// wins iff its reported value strictly exceeds z_i (and pays z_i when it
// wins). Computed by bisection over counterfactual values of i, holding the
// random event (ranks) fixed.
//
// `run` replays the rule with agent i's value replaced and returns the
// Clearing. Throws std::runtime_error if the win region is not a threshold
// (which would falsify truthfulness of the rule).
double critical_price(const std::function<Clearing(double)>& run, AgentId agent,
                      Side side, double probe_magnitude);

}  // namespace chainda
