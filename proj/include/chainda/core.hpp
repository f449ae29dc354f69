#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace chainda {

using AgentId = std::int32_t;

inline constexpr double kTolerance = 1e-9;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kPosInf = std::numeric_limits<double>::infinity();

/// Id of the counterfactual probe offer used for competitive pricing.
/// Real agent ids are positive.
inline constexpr AgentId kProbeId = -1;

enum class Side { buyer, seller };

inline Side opposite(Side s) { return s == Side::buyer ? Side::seller : Side::buyer; }
inline const char* to_string(Side s) { return s == Side::buyer ? "buyer" : "seller"; }

/// An agent's (possibly reported) type: arrival, departure, value for trade.
/// Buyers have value > 0, sellers value <= 0.
struct AgentType {
  AgentId id = 0;
  Side side = Side::buyer;
  int arrival = 1;
  int departure = 1;
  double value = 0.0;

  int patience() const { return departure - arrival; }
};

/// Throws std::invalid_argument on a malformed type. max_patience is the
/// market constant K.
void validate_agent(const AgentType& agent, int max_patience);

enum class OfferState { active, matched, priced_out, expired };

/// A live market record: the reported type plus lifecycle state and
/// settlement bookkeeping.
struct Offer {
  AgentType agent;
  OfferState state = OfferState::active;
  double admission_price = kNegInf;  // q_i
  std::optional<int> match_period;
  std::optional<double> payment;          // positive = paid by agent
  std::optional<int> settlement_period;   // the reported departure
};

enum class ExitReason { traded, expired, priced_out };
inline const char* to_string(ExitReason r) {
  switch (r) {
    case ExitReason::traded: return "traded";
    case ExitReason::expired: return "expired";
    case ExitReason::priced_out: return "priced_out";
  }
  return "?";
}

struct HistoryEntry {
  AgentId id = 0;
  double value = 0.0;  // signed: negative for asks
  Side side = Side::buyer;
  int departure = 0;   // reported departure, used by history-augmented rules
  int entry_period = 0;
  ExitReason reason = ExitReason::expired;
};

/// Time-ordered log of offers that left the active set. Each offer enters
/// at most once; entry periods are non-decreasing.
class History {
 public:
  void append(const HistoryEntry& e);

  const std::vector<HistoryEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(AgentId id) const { return seen_.count(id) > 0; }

  /// Entries appended since the last consume_new() call. Used by the EWMA
  /// price, which folds entries in the order they enter the history.
  std::vector<HistoryEntry> consume_new();

  /// The most recent `count` entries (all of them if count >= size).
  std::vector<HistoryEntry> last(std::size_t count) const;

  /// Entries with entry_period in [from, to].
  std::vector<HistoryEntry> entered_between(int from, int to) const;

 private:
  std::vector<HistoryEntry> entries_;
  std::set<AgentId> seen_;
  std::size_t cursor_ = 0;
};

/// Result of one single-period matching-rule invocation.
struct Clearing {
  std::vector<std::pair<AgentId, AgentId>> pairs;  // (buyer, seller)
  std::map<AgentId, double> payments;              // matched ids only
  std::set<AgentId> nt;                            // no-trade set
  std::set<AgentId> snt;                           // strong no-trade set
  // Period prices: single price for price-based rules (both entries equal),
  // buy/sell pair for competition-based rules.
  std::optional<std::pair<double, double>> prices;

  bool matched(AgentId id) const { return payments.count(id) > 0; }
};

/// Deterministic keyed randomness. All draws are a pure function of
/// (seed, trial, period, purpose, extra) so identical configurations replay
/// byte-identically and a draw never depends on a reported value.
class RandomSource {
 public:
  RandomSource(std::uint64_t seed, std::uint64_t trial)
      : seed_(seed), trial_(trial) {}

  enum class Purpose : std::uint64_t {
    scan = 1,       // per-period agent ordering in matching rules
    rho = 2,        // admission-probability coin
    subset = 3,     // windowed-McAfee random subset
    env = 4,        // schedule generation
    blum = 5,       // Blum price draw
    zip = 6,        // ZIP agent assignment and parameters
    tie = 7,        // value tie-breaking
  };

  std::uint64_t key(int period, Purpose purpose, std::uint64_t extra = 0) const;

  /// Uniform in [0, 1).
  double uniform(int period, Purpose purpose, std::uint64_t extra = 0) const;

  /// Ordering rank for an agent: a seed-derived permutation of identifiers,
  /// independent of any report.
  std::uint64_t rank(int period, Purpose purpose, AgentId id) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t trial() const { return trial_; }

 private:
  std::uint64_t seed_;
  std::uint64_t trial_;
};

/// Active-offer book. Ids are unique across the life of a trial.
class OrderBook {
 public:
  /// Inserts an active offer. Throws std::invalid_argument on duplicate id.
  void insert(const Offer& offer);

  bool contains(AgentId id) const { return index_.count(id) > 0; }
  Offer& at(AgentId id);
  const Offer& at(AgentId id) const;

  /// Ids of active offers, in insertion order.
  std::vector<AgentId> active_ids() const;

  /// Active offers with reported departure == period (the set E^t). The
  /// offers are not yet marked expired; that happens after the period's
  /// match, via mark().
  std::vector<AgentId> expiring(int period) const;

  void mark(AgentId id, OfferState state);

  std::size_t active_count() const;

 private:
  std::vector<Offer> offers_;
  std::map<AgentId, std::size_t> index_;
};

}  // namespace chainda
