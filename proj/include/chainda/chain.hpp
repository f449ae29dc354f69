#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "chainda/core.hpp"
#include "chainda/rules.hpp"

namespace chainda {

struct MechanismConfig {
  RuleConfig rule;
  int tau = 1;            // clearing duration: match every tau-th period
  int max_patience = 2;   // the market constant K
  bool strong_feasibility = false;  // settle at match instead of departure

  void check() const;
};

/// Everything later periods need to reconstruct the price an absent agent
/// would have faced in this period.
struct PeriodRecord {
  int period = 0;
  bool cleared = false;
  // Price-based rules: the single candidate price p^t.
  double price = 0.0;
  // Competition-based rules: price faced by one extra infinity-bid / zero-ask
  // (+inf when even the probe could not trade; unset only on primed records
  // that predate the simulation).
  std::optional<double> probe_buy;
  std::optional<double> probe_sell;
  // Price-based rules: whether one extra offer of the side was guaranteed
  // either a counterpart at p^t or survival into the next period. If not,
  // an arrival in this period could have left empty-handed at any report,
  // so the admission price for later arrivals covering it is +inf.
  bool buy_admissible = true;
  bool sell_admissible = true;
  // Bookkeeping about the realized examination (diagnostic only).
  bool snt_nondep_buyers = false;   // SNT holds a buyer departing later
  bool snt_nondep_sellers = false;
  int checked_bids_not_snt = 0;
  int checked_asks_not_snt = 0;
  int bids_present = 0;
  int asks_present = 0;
};

struct TradeEvent {
  AgentId buyer = 0;
  AgentId seller = 0;
  int period = 0;
  double buyer_payment = 0.0;
  double seller_payment = 0.0;  // negative: paid to the seller
};

/// Cash/item movement from the auctioneer's point of view.
struct LedgerEvent {
  int period = 0;
  AgentId agent = 0;
  double cash_delta = 0.0;  // positive: collected by the auctioneer
  int item_delta = 0;       // positive: item taken into escrow
};

/// The dynamic double auction: admission pricing on arrival, one matching
/// event per clearing period, survivors via strong no-trade, and delayed
/// settlement at reported departures.
class Chain {
 public:
  Chain(const MechanismConfig& config, std::uint64_t seed, std::uint64_t trial,
        double initial_price = 0.0);

  /// Admission decision for an agent arriving in the upcoming period
  /// (current_period() + 1). Throws std::logic_error if the reported
  /// arrival is any other period, std::invalid_argument on a malformed
  /// report.
  enum class Admission { admitted, rejected };
  Admission on_arrival(const AgentType& agent);

  /// Advances to the next period: runs the matching event (on clearing
  /// periods), expiry, and settlement.
  void step();

  /// Convenience: admit this period's arrivals, then step.
  void step(const std::vector<AgentType>& arrivals);

  int current_period() const { return period_; }

  /// Admission price q for an agent reporting (arrival, departure) of the
  /// given side, from the logged pre-arrival periods. -inf when there are
  /// no candidate periods.
  double admission_price(const AgentType& agent) const;

  /// The price the agent would have faced in earlier period t' (sign-flipped
  /// for sellers), or nullopt when the agent would have been in SNT^{t'}.
  std::optional<double> counterfactual_price(int t_prime, Side side,
                                             AgentId id) const;

  void settle(int period);

  // Results and inspection.
  const OrderBook& book() const { return book_; }
  const History& history() const { return history_; }
  const std::vector<PeriodRecord>& records() const { return records_; }
  const std::vector<TradeEvent>& trades() const { return trades_; }
  const std::vector<LedgerEvent>& ledger() const { return ledger_; }
  const MechanismConfig& config() const { return config_; }
  double current_price() const { return price_state_.price; }

  /// Test hook: pre-load a record for an already-elapsed period and move
  /// the clock past it. Records must stay contiguous.
  void prime(const PeriodRecord& rec);

  /// Test hook: overrides the random scan order (period, id) -> rank.
  std::function<std::uint64_t(int, AgentId)> scan_rank;

 private:
  bool clearing_period(int t) const { return (t - 1) % config_.tau == 0; }
  Clearing run_rule(int t, const std::vector<RuleOffer>& bids,
                    const std::vector<RuleOffer>& asks, PeriodRecord& rec);
  std::uint64_t offer_rank(int t, AgentId id, RandomSource::Purpose purpose) const;
  AugmentedOffers augment(int t, const std::vector<RuleOffer>& bids,
                          const std::vector<RuleOffer>& asks) const;
  void retire(AgentId id, int t, OfferState state, ExitReason reason);

  MechanismConfig config_;
  RandomSource rng_;
  int period_ = 0;
  OrderBook book_;
  History history_;
  PriceState price_state_;
  std::vector<PeriodRecord> records_;
  std::vector<TradeEvent> trades_;
  std::vector<LedgerEvent> ledger_;
  // Deferred transfers keyed by reported departure: (period, agent,
  // cash_delta, item_delta).
  std::vector<LedgerEvent> escrow_;
};

}  // namespace chainda
