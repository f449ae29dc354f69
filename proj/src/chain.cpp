#include "chainda/chain.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace chainda {

void MechanismConfig::check() const {
  rule.check();
  if (tau < 1) throw std::invalid_argument("mechanism config: tau must be >= 1");
  if (max_patience < 0)
    throw std::invalid_argument("mechanism config: K must be non-negative");
}

namespace {

bool competition_based(RuleVariant v) {
  return v == RuleVariant::tr_da || v == RuleVariant::mcafee ||
         v == RuleVariant::windowed_mcafee || v == RuleVariant::active_mcafee;
}

// Decide whether one extra offer of each side, arriving this period, could
// have been left with nothing regardless of its report. An extra willing
// offer is certain to trade when a willing counterpart went unmatched (the
// match count was limited by this side). Under Match it instead survives
// the period -- merging with a later arrival -- when a willing offer of its
// side departs (SNT spans the side) or every unmatched counterpart departs.
// Everything else depends on the scan position the arrival would have
// drawn, so the only safe admission price for later windows is +inf.
void admissibility(double p, const std::vector<RuleOffer>& bids,
                   const std::vector<RuleOffer>& asks, const Clearing& c,
                   bool with_survival, PeriodRecord& rec) {
  bool leftover_willing_bid = false, leftover_willing_ask = false;
  bool willing_dep_bid = false, willing_dep_ask = false;
  // Only offers that are gone after this period (departing, or retired
  // because they are outside SNT) may vouch for the admissibility of later
  // arrivals. Neither a survivor's report nor its mere presence may steer
  // admission: either channel lets a still-live agent (or an agent weighing
  // a delayed arrival against its own truthful presence here) move prices
  // or counterpart supply in its favor.
  const auto dead = [&](const RuleOffer& o) {
    return o.departs_now || c.snt.count(o.id) == 0;
  };
  for (const auto& o : bids) {
    if (c.matched(o.id)) continue;
    if (o.value >= p - kTolerance && dead(o)) {
      leftover_willing_bid = true;
      if (o.departs_now) willing_dep_bid = true;
    }
  }
  for (const auto& o : asks) {
    if (c.matched(o.id)) continue;
    if (o.value >= -p - kTolerance && dead(o)) {
      leftover_willing_ask = true;
      if (o.departs_now) willing_dep_ask = true;
    }
  }
  rec.buy_admissible = leftover_willing_ask || (with_survival && willing_dep_bid);
  rec.sell_admissible = leftover_willing_bid || (with_survival && willing_dep_ask);
}

}  // namespace

Chain::Chain(const MechanismConfig& config, std::uint64_t seed,
             std::uint64_t trial, double initial_price)
    : config_(config), rng_(seed, trial) {
  config_.check();
  price_state_.price =
      initial_price != 0.0 ? initial_price : config_.rule.initial_price;
}

std::uint64_t Chain::offer_rank(int t, AgentId id,
                                RandomSource::Purpose purpose) const {
  if (scan_rank) return scan_rank(t, id);
  return rng_.rank(t, purpose, id);
}

std::optional<double> Chain::counterfactual_price(int t_prime, Side side,
                                                  AgentId) const {
  if (t_prime < 1 || t_prime > static_cast<int>(records_.size()))
    return std::nullopt;
  const PeriodRecord& rec = records_[static_cast<std::size_t>(t_prime - 1)];
  if (!rec.cleared) return std::nullopt;
  if (competition_based(config_.rule.variant))
    return side == Side::buyer ? rec.probe_buy : rec.probe_sell;

  // Price-based: the agent is held to p^{t'} unconditionally, and to +inf
  // for periods in which an arrival could have been examined and retired
  // with no counterpart available at any report. Charging the price only
  // with the probability that Match would have examined the offer admits
  // some arrivals below a price they already slept through -- a patient
  // agent could gain by arriving late.
  if (side == Side::buyer) return rec.buy_admissible ? rec.price : kPosInf;
  return rec.sell_admissible ? -rec.price : kPosInf;
}

double Chain::admission_price(const AgentType& agent) const {
  double q = kNegInf;
  int lo = std::max(1, agent.departure - config_.max_patience);
  int hi = agent.arrival - 1;
  for (int t = lo; t <= hi; ++t) {
    auto p = counterfactual_price(t, agent.side, agent.id);
    if (p.has_value()) q = std::max(q, *p);
  }
  return q;
}

Chain::Admission Chain::on_arrival(const AgentType& agent) {
  validate_agent(agent, config_.max_patience);
  if (agent.arrival != period_ + 1)
    throw std::logic_error("chain: report must arrive in the current period");
  Offer offer;
  offer.agent = agent;
  offer.admission_price = admission_price(agent);
  if (agent.value >= offer.admission_price - kTolerance) {
    book_.insert(offer);
    return Admission::admitted;
  }
  offer.state = OfferState::priced_out;
  book_.insert(offer);
  // Enters the history ahead of this period's price computation.
  history_.append({agent.id, agent.value, agent.side, agent.departure,
                   agent.arrival, ExitReason::priced_out});
  return Admission::rejected;
}

void Chain::retire(AgentId id, int t, OfferState state, ExitReason reason) {
  const AgentType& a = book_.at(id).agent;
  history_.append({a.id, a.value, a.side, a.departure, t, reason});
  book_.mark(id, state);
}

AugmentedOffers Chain::augment(int t, const std::vector<RuleOffer>& bids,
                               const std::vector<RuleOffer>& asks) const {
  AugmentedOffers aug;
  aug.bids = bids;
  aug.asks = asks;
  std::vector<HistoryEntry> extra;
  if (config_.rule.variant == RuleVariant::windowed_mcafee) {
    if (config_.rule.window > 0)
      extra = history_.entered_between(t - config_.rule.window + 1, t);
  } else {  // active-McAfee: all unexpired traded or priced-out offers
    for (const auto& e : history_.entries())
      if (e.reason != ExitReason::expired && e.departure >= t) extra.push_back(e);
  }
  for (const auto& e : extra) {
    RuleOffer o{e.id, e.value, false,
                offer_rank(t, e.id, RandomSource::Purpose::scan)};
    (e.side == Side::buyer ? aug.bids : aug.asks).push_back(o);
  }
  return aug;
}

Clearing Chain::run_rule(int t, const std::vector<RuleOffer>& bids,
                         const std::vector<RuleOffer>& asks, PeriodRecord& rec) {
  switch (config_.rule.variant) {
    // Competition-based rules clear on a pure time schedule and every offer
    // present leaves the market (matched, or retired for good): an empty SNT
    // set is trivially valid, and it is the only construction whose survival
    // decisions cannot feed one agent's report into another agent's future
    // admission. The probe prices recorded here are therefore computed on a
    // book all of whose members are gone by the time the price is consumed.
    case RuleVariant::tr_da: {
      Clearing c = trade_reduction(bids, asks);
      rec.probe_buy =
          competitive_probe_price(RuleVariant::tr_da, bids, asks, Side::buyer);
      rec.probe_sell =
          competitive_probe_price(RuleVariant::tr_da, bids, asks, Side::seller);
      return c;
    }
    case RuleVariant::mcafee: {
      Clearing c = mcafee(bids, asks);
      rec.probe_buy =
          competitive_probe_price(RuleVariant::mcafee, bids, asks, Side::buyer);
      rec.probe_sell =
          competitive_probe_price(RuleVariant::mcafee, bids, asks, Side::seller);
      return c;
    }
    case RuleVariant::windowed_mcafee:
    case RuleVariant::active_mcafee: {
      AugmentedOffers aug = augment(t, bids, asks);
      Clearing c = windowed_mcafee(aug, bids, asks);
      c.snt.clear();
      c.nt.clear();
      // The probe must clear the full rule, including the balance cut among
      // active winners, so it is the exact critical value for one more
      // active offer rather than the augmented-book price alone.
      double mag = 1.0;
      for (const auto& o : aug.bids) mag = std::max(mag, std::fabs(o.value));
      for (const auto& o : aug.asks) mag = std::max(mag, std::fabs(o.value));
      mag = 2.0 * mag + 1.0;
      auto probe_crit = [&](Side side) {
        auto run = [&](double v) {
          AugmentedOffers a2 = aug;
          std::vector<RuleOffer> b2 = bids, s2 = asks;
          RuleOffer probe{kProbeId, v, false, 1};
          if (side == Side::buyer) {
            a2.bids.push_back(probe);
            b2.push_back(probe);
          } else {
            a2.asks.push_back(probe);
            s2.push_back(probe);
          }
          return windowed_mcafee(a2, b2, s2);
        };
        return critical_price(run, kProbeId, side, mag);
      };
      rec.probe_buy = probe_crit(Side::buyer);
      rec.probe_sell = probe_crit(Side::seller);
      return c;
    }
    case RuleVariant::simple_match: {
      Clearing c = simple_match(history_, price_state_.price, bids, asks);
      rec.price = c.prices->first;
      price_state_.price = rec.price;
      // Every present offer is eventually popped and price-checked (or the
      // market has run out of counterparts), and SNT is empty: an extra
      // offer is guaranteed to trade only against a leftover willing
      // counterpart, and otherwise would have left with nothing.
      rec.checked_bids_not_snt = static_cast<int>(bids.size());
      rec.checked_asks_not_snt = static_cast<int>(asks.size());
      admissibility(rec.price, bids, asks, c, /*with_survival=*/false, rec);
      return c;
    }
    case RuleVariant::price_based: {
      double p = determine_price(history_, config_.rule, price_state_);
      rec.price = p;
      PriceMatchResult r = price_match(p, bids, asks);
      int cb = 0, ca = 0;
      for (AgentId id : r.examined_bids)
        if (r.clearing.snt.count(id) == 0) ++cb;
      for (AgentId id : r.examined_asks)
        if (r.clearing.snt.count(id) == 0) ++ca;
      rec.checked_bids_not_snt = cb;
      rec.checked_asks_not_snt = ca;
      admissibility(p, bids, asks, r.clearing, /*with_survival=*/true, rec);
      return r.clearing;
    }
  }
  throw std::logic_error("chain: bad rule variant");
}

void Chain::step() {
  int t = ++period_;
  PeriodRecord rec;
  rec.period = t;
  if (clearing_period(t)) {
    rec.cleared = true;
    std::vector<RuleOffer> bids, asks;
    for (AgentId id : book_.active_ids()) {
      const AgentType& a = book_.at(id).agent;
      RuleOffer o{id, a.value, a.departure == t,
                  offer_rank(t, id,
                             config_.rule.variant == RuleVariant::windowed_mcafee ||
                                     config_.rule.variant == RuleVariant::active_mcafee
                                 ? RandomSource::Purpose::subset
                                 : RandomSource::Purpose::scan)};
      (a.side == Side::buyer ? bids : asks).push_back(o);
    }
    rec.bids_present = static_cast<int>(bids.size());
    rec.asks_present = static_cast<int>(asks.size());

    Clearing c = run_rule(t, bids, asks, rec);

    for (AgentId id : c.snt) {
      const AgentType& a = book_.at(id).agent;
      if (a.departure > t) {
        (a.side == Side::buyer ? rec.snt_nondep_buyers : rec.snt_nondep_sellers) =
            true;
      }
    }

    for (const auto& [buyer, seller] : c.pairs) {
      Offer& b = book_.at(buyer);
      Offer& s = book_.at(seller);
      double xb = std::max(b.admission_price, c.payments.at(buyer));
      double xs = std::max(s.admission_price, c.payments.at(seller));
      int sb = config_.strong_feasibility ? t : b.agent.departure;
      int ss = config_.strong_feasibility ? t : s.agent.departure;
      b.payment = xb;
      b.match_period = t;
      b.settlement_period = sb;
      s.payment = xs;
      s.match_period = t;
      s.settlement_period = ss;
      trades_.push_back({buyer, seller, t, xb, xs});
      // Buyer pays now, receives the item at settlement; seller hands over
      // the item now, is paid at settlement.
      ledger_.push_back({t, buyer, xb, 0});
      ledger_.push_back({t, seller, 0.0, +1});
      escrow_.push_back({sb, buyer, 0.0, -1});
      escrow_.push_back({ss, seller, xs, 0});
      retire(buyer, t, OfferState::matched, ExitReason::traded);
      retire(seller, t, OfferState::matched, ExitReason::traded);
    }

    for (AgentId id : book_.active_ids()) {
      const AgentType& a = book_.at(id).agent;
      if (c.snt.count(id) > 0) {
        if (a.departure == t) retire(id, t, OfferState::expired, ExitReason::expired);
        // else: survives into the next period.
      } else {
        retire(id, t, OfferState::priced_out, ExitReason::priced_out);
      }
    }
  } else {
    for (AgentId id : book_.expiring(t))
      retire(id, t, OfferState::expired, ExitReason::expired);
  }
  records_.push_back(rec);
  settle(t);
}

void Chain::step(const std::vector<AgentType>& arrivals) {
  for (const auto& a : arrivals) on_arrival(a);
  step();
}

void Chain::settle(int period) {
  auto due = std::partition(escrow_.begin(), escrow_.end(),
                            [&](const LedgerEvent& e) { return e.period != period; });
  for (auto it = due; it != escrow_.end(); ++it) ledger_.push_back(*it);
  escrow_.erase(due, escrow_.end());
}

void Chain::prime(const PeriodRecord& rec) {
  if (rec.period != static_cast<int>(records_.size()) + 1)
    throw std::logic_error("chain: primed records must stay contiguous");
  records_.push_back(rec);
  period_ = rec.period;
}

}  // namespace chainda
