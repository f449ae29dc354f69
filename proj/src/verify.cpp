#include "chainda/verify.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace chainda {

namespace {

constexpr double kUtilityTol = 1e-6;

const TradeEvent* find_trade(const std::vector<TradeEvent>& trades,
                             AgentId id) {
  for (const TradeEvent& t : trades) {
    if (t.buyer == id || t.seller == id) return &t;
  }
  return nullptr;
}

}  // namespace

std::vector<Deviation> deviation_grid(const AgentType& truth, int max_patience,
                                      bool strong_feasibility,
                                      const std::vector<double>& observed_prices) {
  std::vector<Deviation> grid;
  const auto push = [&](AgentType report, std::string label) {
    if (report.departure < report.arrival) return;
    if (report.arrival < truth.arrival) return;  // no early arrival
    if (report.departure - report.arrival > max_patience) return;
    if (strong_feasibility && report.departure > truth.departure) return;
    if (truth.side == Side::buyer && !(report.value > 0.0)) return;
    if (truth.side == Side::seller && report.value > 0.0) return;
    if (report.arrival == truth.arrival &&
        report.departure == truth.departure && report.value == truth.value) {
      return;  // not a deviation
    }
    grid.push_back({report, std::move(label)});
  };

  // Value shifts.
  std::vector<double> magnitudes;
  for (double f : {0.5, 0.9, 0.99, 1.01, 1.1, 2.0}) {
    magnitudes.push_back(std::abs(truth.value) * f);
  }
  for (double p : observed_prices) {
    magnitudes.push_back(std::abs(p) - 10.0 * kTolerance);
    magnitudes.push_back(std::abs(p) + 10.0 * kTolerance);
  }
  for (double m : magnitudes) {
    AgentType report = truth;
    report.value = truth.side == Side::buyer ? m : -m;
    std::ostringstream label;
    label << "value_shift to " << report.value;
    push(report, label.str());
  }

  // Arrival delays (patience otherwise unchanged in departure terms).
  for (int delay = 1; delay <= max_patience; ++delay) {
    AgentType report = truth;
    report.arrival = truth.arrival + delay;
    push(report, "arrival_delay +" + std::to_string(delay));
  }

  // Departure shifts.
  for (int shift : {-2, -1, 1, 2}) {
    AgentType report = truth;
    report.departure = truth.departure + shift;
    push(report, "departure_shift " + std::to_string(shift));
  }
  return grid;
}

double agent_utility(const AgentType& truth, const AgentType& report,
                     const std::vector<TradeEvent>& trades,
                     bool immediate_settlement) {
  const TradeEvent* trade = find_trade(trades, truth.id);
  if (trade == nullptr) return 0.0;
  const int settlement =
      immediate_settlement ? trade->period : report.departure;
  const bool on_time = settlement <= truth.departure;
  if (truth.side == Side::buyer) {
    return (on_time ? truth.value : 0.0) - trade->buyer_payment;
  }
  // Seller: parts with the item (cost |w|) and values the payment only if
  // it arrives before its true departure.
  return truth.value + (on_time ? -trade->seller_payment : 0.0);
}

namespace {

bool settles_immediately(const std::string& mechanism, const SimConfig& cfg) {
  if (!is_chain_mechanism(mechanism) && mechanism != "blum") return true;
  return cfg.mech.strong_feasibility;
}

std::vector<AgentType> with_report(const std::vector<AgentType>& schedule,
                                   const AgentType& report) {
  std::vector<AgentType> out(schedule);
  for (AgentType& a : out) {
    if (a.id == report.id) a = report;
  }
  return out;
}

}  // namespace

std::vector<TruthViolation> check_truthful(const std::string& mechanism,
                                           const SimConfig& cfg,
                                           const std::vector<AgentType>& schedule,
                                           AgentId agent, std::uint64_t trial) {
  std::vector<TruthViolation> violations;
  const AgentType* truth = nullptr;
  for (const AgentType& a : schedule) {
    if (a.id == agent) truth = &a;
  }
  if (truth == nullptr) return violations;

  const bool immediate = settles_immediately(mechanism, cfg);
  const MechanismRun truthful = run_mechanism(mechanism, cfg, schedule, trial);
  const double base = agent_utility(*truth, *truth, truthful.trades, immediate);

  std::vector<double> prices;
  for (const TradeEvent& t : truthful.trades) {
    prices.push_back(std::abs(t.buyer_payment));
    prices.push_back(std::abs(t.seller_payment));
  }

  for (const Deviation& dev :
       deviation_grid(*truth, cfg.mech.max_patience,
                      cfg.mech.strong_feasibility, prices)) {
    const MechanismRun replay =
        run_mechanism(mechanism, cfg, with_report(schedule, dev.report), trial);
    const double utility =
        agent_utility(*truth, dev.report, replay.trades, immediate);
    if (utility > base + kUtilityTol) {
      violations.push_back({agent, dev.label, base, utility});
    }
  }
  return violations;
}

std::vector<TruthViolation> check_truthful_all(
    const std::string& mechanism, const SimConfig& cfg,
    const std::vector<AgentType>& schedule, std::uint64_t trial) {
  std::vector<TruthViolation> violations;
  for (const AgentType& a : schedule) {
    auto found = check_truthful(mechanism, cfg, schedule, a.id, trial);
    violations.insert(violations.end(), found.begin(), found.end());
  }
  return violations;
}

// ---------------------------------------------------------------------------
// Strong-no-trade validity.

namespace {

using OfferVec = std::vector<RuleOffer>;

// Literal no-trade for a price-based rule: replace the agent's value with
// the most willing one and see whether it still fails to match.
std::set<AgentId> price_based_nt(double price, std::span<const RuleOffer> bids,
                                 std::span<const RuleOffer> asks) {
  std::set<AgentId> nt;
  const Clearing base = price_match(price, bids, asks).clearing;
  const auto cannot_trade = [&](const RuleOffer& probe, bool is_bid) {
    OfferVec b(bids.begin(), bids.end());
    OfferVec s(asks.begin(), asks.end());
    for (RuleOffer& o : is_bid ? b : s) {
      if (o.id == probe.id) o.value = is_bid ? kPosInf : -10.0 * kTolerance;
    }
    return !price_match(price, b, s).clearing.matched(probe.id);
  };
  for (const RuleOffer& o : bids) {
    if (!base.matched(o.id) && cannot_trade(o, true)) nt.insert(o.id);
  }
  for (const RuleOffer& o : asks) {
    if (!base.matched(o.id) && cannot_trade(o, false)) nt.insert(o.id);
  }
  return nt;
}

}  // namespace

SntConstruction shipped_snt(RuleVariant variant, double price) {
  SntConstruction c;
  switch (variant) {
    case RuleVariant::tr_da:
      c.name = "tr_da";
      c.nt = [](auto b, auto s) { return tr_da_no_trade(b, s); };
      c.snt = [](auto b, auto s) { return tr_da_snt(b, s); };
      break;
    case RuleVariant::mcafee:
      c.name = "mcafee";
      c.nt = [](auto b, auto s) { return mcafee_no_trade(b, s); };
      c.snt = [](auto b, auto s) { return mcafee_snt(b, s); };
      break;
    case RuleVariant::price_based:
    case RuleVariant::simple_match:
      c.name = "price_based";
      c.nt = [price](auto b, auto s) {
        return price_match(price, b, s).clearing.nt;
      };
      c.snt = [price](auto b, auto s) {
        return price_match(price, b, s).clearing.snt;
      };
      break;
    case RuleVariant::windowed_mcafee:
    case RuleVariant::active_mcafee:
      // No history augmentation in the standalone checker; NT mirrors the
      // mechanism, which survives exactly its SNT.
      c.name = "windowed_mcafee";
      c.nt = [](auto b, auto s) {
        return windowed_mcafee_snt(b, s, b.size(), s.size());
      };
      c.snt = [](auto b, auto s) {
        return windowed_mcafee_snt(b, s, b.size(), s.size());
      };
      break;
  }
  return c;
}

SntConstruction snt_as_nt(RuleVariant variant, double price) {
  SntConstruction c;
  c.name = "snt_as_nt";
  switch (variant) {
    case RuleVariant::tr_da:
      c.nt = [](auto b, auto s) { return tr_da_no_trade(b, s); };
      break;
    case RuleVariant::mcafee:
      c.nt = [](auto b, auto s) { return mcafee_no_trade(b, s); };
      break;
    default:
      c.nt = [price](auto b, auto s) { return price_based_nt(price, b, s); };
      break;
  }
  c.snt = c.nt;
  return c;
}

SntConstruction dictatorial_snt(RuleVariant variant, AgentId dictator,
                                double price) {
  SntConstruction c = snt_as_nt(variant, price);
  c.name = "dictatorial";
  const auto nt = c.nt;
  c.snt = [nt, dictator](std::span<const RuleOffer> b,
                         std::span<const RuleOffer> s) {
    std::set<AgentId> out;
    if (nt(b, s).count(dictator) > 0) out.insert(dictator);
    return out;
  };
  return c;
}

namespace {

std::set<AgentId> surviving_members(const std::set<AgentId>& snt,
                                    std::span<const RuleOffer> bids,
                                    std::span<const RuleOffer> asks,
                                    AgentId except) {
  std::set<AgentId> out;
  const auto fold = [&](std::span<const RuleOffer> side) {
    for (const RuleOffer& o : side) {
      if (o.id != except && !o.departs_now && snt.count(o.id) > 0) {
        out.insert(o.id);
      }
    }
  };
  fold(bids);
  fold(asks);
  return out;
}

std::vector<double> probe_magnitudes(std::span<const RuleOffer> bids,
                                     std::span<const RuleOffer> asks) {
  std::vector<double> mags{1e-6, 1e6};
  const auto fold = [&](std::span<const RuleOffer> side) {
    for (const RuleOffer& o : side) {
      const double m = std::abs(o.value);
      mags.push_back(m);
      mags.push_back(m + 0.5);
      if (m > 0.5) mags.push_back(m - 0.5);
    }
  };
  fold(bids);
  fold(asks);
  return mags;
}

}  // namespace

std::vector<SntViolation> check_snt_valid(const SntConstruction& construction,
                                          std::span<const RuleOffer> bids,
                                          std::span<const RuleOffer> asks) {
  std::vector<SntViolation> violations;
  const std::set<AgentId> base_nt = construction.nt(bids, asks);
  const std::set<AgentId> base_snt = construction.snt(bids, asks);
  const std::vector<double> mags = probe_magnitudes(bids, asks);

  const auto probe_state = [&](AgentId id, bool is_bid, double value,
                               bool present, OfferVec* b, OfferVec* s) {
    b->assign(bids.begin(), bids.end());
    s->assign(asks.begin(), asks.end());
    OfferVec& side = is_bid ? *b : *s;
    if (!present) {
      std::erase_if(side, [id](const RuleOffer& o) { return o.id == id; });
      return;
    }
    for (RuleOffer& o : side) {
      if (o.id == id) o.value = value;
    }
  };

  const auto check_agent = [&](const RuleOffer& agent, bool is_bid) {
    if (agent.departs_now) return;  // conditions apply only when d > t
    const bool in_nt = base_nt.count(agent.id) > 0;
    const bool in_snt = base_snt.count(agent.id) > 0;
    const std::set<AgentId> base_others =
        surviving_members(base_snt, bids, asks, agent.id);

    OfferVec b, s;
    for (double m : mags) {
      const double value = is_bid ? m : -m;
      if (value == agent.value) continue;
      probe_state(agent.id, is_bid, value, true, &b, &s);
      std::ostringstream label;
      label << "value " << value;
      if (in_nt) {
        const bool now_snt = construction.snt(b, s).count(agent.id) > 0;
        if (now_snt != in_snt) {
          violations.push_back({agent.id, 'a', label.str()});
        }
      }
      if (in_snt &&
          surviving_members(construction.snt(b, s), b, s, agent.id) !=
              base_others) {
        violations.push_back({agent.id, 'b', label.str()});
      }
    }
    if (in_snt) {
      probe_state(agent.id, is_bid, 0.0, false, &b, &s);
      if (surviving_members(construction.snt(b, s), b, s, agent.id) !=
          base_others) {
        violations.push_back({agent.id, 'b', "absent"});
      }
    }
  };

  for (const RuleOffer& o : bids) check_agent(o, true);
  for (const RuleOffer& o : asks) check_agent(o, false);
  return violations;
}

// ---------------------------------------------------------------------------
// Ledgers.

LedgerReport check_ledgers(const std::vector<LedgerEvent>& ledger,
                           const std::vector<TradeEvent>& trades,
                           const std::vector<AgentType>& schedule) {
  LedgerReport report;
  std::ostringstream detail;

  // Defs. 1-2: running sums, checked at the close of every period.
  std::map<int, std::pair<double, int>> by_period;  // period -> (cash, items)
  for (const LedgerEvent& e : ledger) {
    by_period[e.period].first += e.cash_delta;
    by_period[e.period].second += e.item_delta;
  }
  double cash = 0.0;
  int items = 0;
  for (const auto& [period, delta] : by_period) {
    cash += delta.first;
    items += delta.second;
    if (cash < -kTolerance && report.no_deficit) {
      report.no_deficit = false;
      detail << "deficit " << -cash << " at period " << period << "; ";
    }
    if (items < 0 && report.feasible) {
      report.feasible = false;
      detail << "short " << -items << " items at period " << period << "; ";
    }
  }

  // Def. 3: individual rationality for truthful agents.
  std::map<AgentId, const AgentType*> types;
  for (const AgentType& a : schedule) types[a.id] = &a;
  for (const TradeEvent& t : trades) {
    const auto check = [&](AgentId id, double payment) {
      const auto it = types.find(id);
      if (it == types.end()) return;
      const double utility = it->second->value - payment;
      if (utility < -kTolerance && report.ir) {
        report.ir = false;
        detail << "agent " << id << " utility " << utility << "; ";
      }
    };
    check(t.buyer, t.buyer_payment);
    check(t.seller, t.seller_payment);
  }
  report.detail = detail.str();
  return report;
}

// ---------------------------------------------------------------------------
// Critical-price characterization.

PriceCharReport check_price_characterization(
    const std::string& mechanism, const SimConfig& cfg,
    const std::vector<AgentType>& schedule, AgentId agent,
    std::uint64_t trial) {
  PriceCharReport report;
  std::ostringstream detail;
  const AgentType* truth = nullptr;
  double max_mag = 1.0;
  for (const AgentType& a : schedule) {
    if (a.id == agent) truth = &a;
    max_mag = std::max(max_mag, std::abs(a.value));
  }
  if (truth == nullptr) {
    report.threshold_ok = false;
    report.detail = "agent not in schedule";
    return report;
  }

  const auto outcome = [&](const AgentType& rep) -> const TradeEvent* {
    static thread_local std::vector<TradeEvent> trades;
    trades =
        run_mechanism(mechanism, cfg, with_report(schedule, rep), trial).trades;
    return find_trade(trades, agent);
  };

  // Bisection threshold for reported value magnitude at a given interval.
  const auto threshold = [&](int arrival, int departure) -> double {
    AgentType rep = *truth;
    rep.arrival = arrival;
    rep.departure = departure;
    const auto wins = [&](double mag) {
      rep.value = truth->side == Side::buyer ? mag : -mag;
      return outcome(rep) != nullptr;
    };
    double hi = 4.0 * max_mag;
    if (!wins(hi)) return kPosInf;
    double lo = 1e-9;
    if (wins(lo)) return lo;
    for (int iter = 0; iter < 60; ++iter) {
      const double mid = (lo + hi) / 2.0;
      (wins(mid) ? hi : lo) = mid;
    }
    return (lo + hi) / 2.0;
  };

  const double z = threshold(truth->arrival, truth->departure);
  report.critical = z;

  // Value-independence: winners above the threshold pay the threshold.
  if (std::isfinite(z)) {
    for (double mag : {z * 1.02 + 0.01, z * 1.5 + 0.01}) {
      AgentType rep = *truth;
      rep.value = truth->side == Side::buyer ? mag : -mag;
      const TradeEvent* t = outcome(rep);
      if (t == nullptr) {
        report.threshold_ok = false;
        detail << "loses above threshold at " << mag << "; ";
        continue;
      }
      const double paid =
          truth->side == Side::buyer ? t->buyer_payment : -t->seller_payment;
      if (std::abs(paid - z) > 1e-5 * std::max(1.0, z)) {
        report.threshold_ok = false;
        detail << "payment " << paid << " != threshold " << z << "; ";
      }
    }
  }

  // Monotonicity: tightening the reported interval never lowers the
  // threshold.
  for (int arrival = truth->arrival; arrival <= truth->departure; ++arrival) {
    for (int departure = arrival; departure <= truth->departure; ++departure) {
      if (arrival == truth->arrival && departure == truth->departure) continue;
      const double tighter = threshold(arrival, departure);
      if (tighter < z - 1e-6) {
        report.monotone_ok = false;
        detail << "threshold " << tighter << " < " << z << " at ["
               << arrival << "," << departure << "]; ";
      }
    }
  }
  report.detail = detail.str();
  return report;
}

}  // namespace chainda
