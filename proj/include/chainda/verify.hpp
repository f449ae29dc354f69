#pragma once

#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "chainda/sim.hpp"

namespace chainda {

// ---------------------------------------------------------------------------
// Truthfulness by counterfactual replay.

/// A single-agent misreport. Only no-early-arrival reports are generated:
/// the deviated arrival never precedes the true one.
struct Deviation {
  AgentType report;
  std::string label;
};

/// Value shifts (a multiplier grid plus boundary probes at observed prices),
/// arrival delays, and departure shifts, all kept inside the feasible report
/// space. `strong_feasibility` forbids departure extensions.
std::vector<Deviation> deviation_grid(const AgentType& truth, int max_patience,
                                      bool strong_feasibility,
                                      const std::vector<double>& observed_prices);

/// Quasi-linear utility of `truth` when the mechanism saw `report`.
/// Buyers value delivery only if it happens by their true departure;
/// sellers value payments only if received by their true departure.
/// `immediate_settlement` marks mechanisms that settle at the match period
/// rather than at the reported departure.
double agent_utility(const AgentType& truth, const AgentType& report,
                     const std::vector<TradeEvent>& trades,
                     bool immediate_settlement);

struct TruthViolation {
  AgentId agent = 0;
  std::string deviation;
  double truthful_utility = 0.0;
  double deviated_utility = 0.0;
};

/// Replays the trial with one agent's report swapped for each grid
/// deviation, holding the mechanism randomness fixed, and flags strict
/// utility gains.
std::vector<TruthViolation> check_truthful(const std::string& mechanism,
                                           const SimConfig& cfg,
                                           const std::vector<AgentType>& schedule,
                                           AgentId agent, std::uint64_t trial);

/// check_truthful over every agent in the schedule.
std::vector<TruthViolation> check_truthful_all(
    const std::string& mechanism, const SimConfig& cfg,
    const std::vector<AgentType>& schedule, std::uint64_t trial);

// ---------------------------------------------------------------------------
// Strong-no-trade construction validity.

/// A candidate (NT, SNT) construction over a single-period order book.
struct SntConstruction {
  std::string name;
  std::function<std::set<AgentId>(std::span<const RuleOffer>,
                                  std::span<const RuleOffer>)>
      nt;
  std::function<std::set<AgentId>(std::span<const RuleOffer>,
                                  std::span<const RuleOffer>)>
      snt;
};

/// The construction each shipped rule actually uses. `price` feeds the
/// price-based variants.
SntConstruction shipped_snt(RuleVariant variant, double price = 0.0);

/// The (generally invalid) candidate SNT := NT.
SntConstruction snt_as_nt(RuleVariant variant, double price = 0.0);

/// Dictatorial construction: SNT = {dictator} when the dictator is in NT.
SntConstruction dictatorial_snt(RuleVariant variant, AgentId dictator,
                                double price = 0.0);

struct SntViolation {
  AgentId agent = 0;
  char condition = 'a';
  std::string probe;
};

/// Probes every non-departing agent with a value grid (plus removal from
/// the market, for condition (b)) and flags membership changes forbidden by
/// the strong-no-trade conditions.
std::vector<SntViolation> check_snt_valid(const SntConstruction& construction,
                                          std::span<const RuleOffer> bids,
                                          std::span<const RuleOffer> asks);

// ---------------------------------------------------------------------------
// Ledger properties: no-deficit, feasibility, individual rationality.

struct LedgerReport {
  bool no_deficit = true;  // running cash never negative at a period close
  bool feasible = true;    // running item escrow never negative
  bool ir = true;          // no truthful agent ends with negative utility
  std::string detail;

  bool all_ok() const { return no_deficit && feasible && ir; }
};

LedgerReport check_ledgers(const std::vector<LedgerEvent>& ledger,
                           const std::vector<TradeEvent>& trades,
                           const std::vector<AgentType>& schedule);

// ---------------------------------------------------------------------------
// Critical-price characterization.

struct PriceCharReport {
  bool threshold_ok = true;  // win region upward-closed, payment = threshold
  bool monotone_ok = true;   // threshold non-decreasing for tighter intervals
  double critical = kPosInf; // threshold magnitude at the truthful interval
  std::string detail;

  bool all_ok() const { return threshold_ok && monotone_ok; }
};

/// Estimates the agent's critical price by bisection over reported values
/// (randomness held fixed), checks the realized payment against it, and
/// checks monotonicity over a grid of tightened (arrival, departure)
/// reports.
PriceCharReport check_price_characterization(
    const std::string& mechanism, const SimConfig& cfg,
    const std::vector<AgentType>& schedule, AgentId agent,
    std::uint64_t trial);

}  // namespace chainda
