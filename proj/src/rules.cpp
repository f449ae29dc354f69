#include "chainda/rules.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace chainda {
namespace {

// Dummy offers injected by the competition-based rules. Real agent ids are
// positive, probes use kProbeId, so these can never collide.
constexpr AgentId kDummyHighBid = -101;
constexpr AgentId kDummyLowBid = -102;
constexpr AgentId kDummyHighAsk = -103;  // the zero-valued ask
constexpr AgentId kDummyLowAsk = -104;

constexpr double kEps = 10.0 * kTolerance;  // probe ask value for NT checks

bool is_dummy(AgentId id) { return id <= kDummyHighBid && id >= kDummyLowAsk; }

bool geq(double a, double b) { return a >= b - kTolerance; }

// Sort by descending value; equal values examined in rank order so dummies
// (rank 0 / max) land where the construction needs them.
void sort_offers(std::vector<RuleOffer>& v) {
  std::sort(v.begin(), v.end(), [](const RuleOffer& a, const RuleOffer& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.rank < b.rank;
  });
}

std::vector<RuleOffer> with_dummies(std::span<const RuleOffer> offers, Side side,
                                    bool low_dummy) {
  std::vector<RuleOffer> v(offers.begin(), offers.end());
  if (side == Side::buyer) {
    v.push_back({kDummyHighBid, kPosInf, false, 0});
    if (low_dummy)
      v.push_back({kDummyLowBid, 0.0, false, std::numeric_limits<std::uint64_t>::max()});
  } else {
    v.push_back({kDummyHighAsk, 0.0, false, 0});
    if (low_dummy)
      v.push_back({kDummyLowAsk, kNegInf, false, std::numeric_limits<std::uint64_t>::max()});
  }
  sort_offers(v);
  return v;
}

// Last 1-based index m with b_m + s_m >= 0; sums are non-increasing after
// the sort. The leading dummy pair guarantees m >= 1.
std::size_t efficient_index(const std::vector<RuleOffer>& B,
                            const std::vector<RuleOffer>& S) {
  std::size_t m = 0;
  std::size_t limit = std::min(B.size(), S.size());
  while (m < limit && geq(B[m].value + S[m].value, 0.0)) ++m;
  return m;
}

void record_pairs(Clearing& c, const std::vector<RuleOffer>& B,
                  const std::vector<RuleOffer>& S, std::size_t first,
                  std::size_t last, double buy_price, double sell_price) {
  for (std::size_t k = first; k < last; ++k) {
    if (is_dummy(B[k].id) || is_dummy(S[k].id)) continue;
    c.pairs.emplace_back(B[k].id, S[k].id);
    c.payments[B[k].id] = buy_price;
    c.payments[S[k].id] = sell_price;
  }
}

// Shared no-trade probe: re-run `rule` with each loser's value replaced by
// the most competitive report possible and see whether it can ever trade.
std::set<AgentId> probe_no_trade(
    const std::function<Clearing(std::span<const RuleOffer>,
                                 std::span<const RuleOffer>)>& rule,
    std::span<const RuleOffer> bids, std::span<const RuleOffer> asks) {
  Clearing base = rule(bids, asks);
  std::set<AgentId> nt;
  auto losers_of = [&](std::span<const RuleOffer> side, double best) {
    std::vector<RuleOffer> probe(side.begin(), side.end());
    for (auto& o : probe) {
      if (base.matched(o.id)) continue;
      double saved = o.value;
      o.value = best;
      Clearing cf = (side.data() == bids.data()) ? rule(probe, asks)
                                                 : rule(bids, probe);
      if (!cf.matched(o.id)) nt.insert(o.id);
      o.value = saved;
    }
  };
  losers_of(bids, kPosInf);
  losers_of(asks, -kEps);
  return nt;
}

double mean_abs(std::span<const double> vals) {
  double s = 0.0;
  for (double v : vals) s += std::fabs(v);
  return s / static_cast<double>(vals.size());
}

std::vector<double> window_values(const History& history, int window) {
  std::vector<double> vals;
  for (const auto& e : history.last(static_cast<std::size_t>(window)))
    vals.push_back(e.value);
  return vals;
}

}  // namespace

void RuleConfig::check() const {
  if (lambda <= 0.0 || lambda > 1.0)
    throw std::invalid_argument("rule config: lambda must be in (0, 1]");
  if (variant == RuleVariant::price_based && window < 1)
    throw std::invalid_argument("rule config: window must be at least 1");
  if (window < 0)
    throw std::invalid_argument("rule config: window must be non-negative");
  if (fixed_price < 0.0)
    throw std::invalid_argument("rule config: fixed price must be non-negative");
}

std::string rule_name(const RuleConfig& cfg) {
  switch (cfg.variant) {
    case RuleVariant::tr_da: return "tr_da";
    case RuleVariant::mcafee: return "mcafee";
    case RuleVariant::simple_match: return "simple";
    case RuleVariant::windowed_mcafee: return "windowed_mcafee";
    case RuleVariant::active_mcafee: return "active_mcafee";
    case RuleVariant::price_based:
      switch (cfg.price_variant) {
        case PriceVariant::ewma: return "ewma";
        case PriceVariant::median: return "median";
        case PriceVariant::clearing: return "clearing";
        case PriceVariant::history_mcafee: return "history_mcafee";
        case PriceVariant::fixed: return "fixed";
      }
  }
  throw std::logic_error("rule_name: bad config");
}

RuleConfig rule_from_name(const std::string& name) {
  RuleConfig cfg;
  if (name == "tr_da") {
    cfg.variant = RuleVariant::tr_da;
  } else if (name == "mcafee") {
    cfg.variant = RuleVariant::mcafee;
  } else if (name == "simple") {
    cfg.variant = RuleVariant::simple_match;
  } else if (name == "windowed_mcafee") {
    cfg.variant = RuleVariant::windowed_mcafee;
  } else if (name == "active_mcafee") {
    cfg.variant = RuleVariant::active_mcafee;
  } else {
    cfg.variant = RuleVariant::price_based;
    if (name == "ewma") cfg.price_variant = PriceVariant::ewma;
    else if (name == "median") cfg.price_variant = PriceVariant::median;
    else if (name == "clearing") cfg.price_variant = PriceVariant::clearing;
    else if (name == "history_mcafee") cfg.price_variant = PriceVariant::history_mcafee;
    else if (name == "fixed") cfg.price_variant = PriceVariant::fixed;
    else throw std::invalid_argument("unknown rule name: " + name);
  }
  return cfg;
}

Clearing trade_reduction(std::span<const RuleOffer> bids,
                         std::span<const RuleOffer> asks) {
  Clearing c;
  if (bids.size() < 2 || asks.size() < 2) return c;
  auto B = with_dummies(bids, Side::buyer, /*low_dummy=*/false);
  auto S = with_dummies(asks, Side::seller, /*low_dummy=*/false);
  std::size_t m = efficient_index(B, S);
  if (m < 2) return c;
  double buy = B[m - 1].value;
  double sell = S[m - 1].value;
  c.prices = {buy, sell};
  record_pairs(c, B, S, 1, m - 1, buy, sell);
  return c;
}

std::set<AgentId> tr_da_no_trade(std::span<const RuleOffer> bids,
                                 std::span<const RuleOffer> asks) {
  return probe_no_trade(
      [](std::span<const RuleOffer> b, std::span<const RuleOffer> s) {
        return trade_reduction(b, s);
      },
      bids, asks);
}

std::set<AgentId> tr_da_snt(std::span<const RuleOffer> bids,
                            std::span<const RuleOffer> asks) {
  std::set<AgentId> snt;
  if (bids.size() >= 2 && asks.size() >= 2) return snt;
  for (const auto& o : bids) snt.insert(o.id);
  for (const auto& o : asks) snt.insert(o.id);
  return snt;
}

Clearing mcafee(std::span<const RuleOffer> bids, std::span<const RuleOffer> asks) {
  Clearing c;
  if (bids.size() < 2 || asks.size() < 2) return c;
  auto B = with_dummies(bids, Side::buyer, /*low_dummy=*/true);
  auto S = with_dummies(asks, Side::seller, /*low_dummy=*/true);
  std::size_t m = efficient_index(B, S);
  if (m < std::min(B.size(), S.size())) {
    double p = (B[m].value - S[m].value) / 2.0;
    if (geq(B[m - 1].value, p) && geq(S[m - 1].value + p, 0.0)) {
      c.prices = {p, -p};
      record_pairs(c, B, S, 0, m, p, -p);
      return c;
    }
  }
  double buy = B[m - 1].value;
  double sell = S[m - 1].value;
  c.prices = {buy, sell};
  record_pairs(c, B, S, 0, m - 1, buy, sell);
  return c;
}

std::set<AgentId> mcafee_no_trade(std::span<const RuleOffer> bids,
                                  std::span<const RuleOffer> asks) {
  return probe_no_trade(
      [](std::span<const RuleOffer> b, std::span<const RuleOffer> s) {
        return mcafee(b, s);
      },
      bids, asks);
}

std::set<AgentId> mcafee_snt(std::span<const RuleOffer> bids,
                             std::span<const RuleOffer> asks) {
  return tr_da_snt(bids, asks);  // same quorum construction
}

double competitive_probe_price(RuleVariant variant,
                               std::span<const RuleOffer> bids,
                               std::span<const RuleOffer> asks,
                               Side probe_side) {
  std::vector<RuleOffer> b(bids.begin(), bids.end());
  std::vector<RuleOffer> s(asks.begin(), asks.end());
  // Rank 1 places the probe directly behind the matching dummy on ties.
  if (probe_side == Side::buyer)
    b.push_back({kProbeId, kPosInf, false, 1});
  else
    s.push_back({kProbeId, 0.0, false, 1});
  Clearing c = variant == RuleVariant::tr_da ? trade_reduction(b, s)
                                             : mcafee(b, s);
  if (!c.prices) return kPosInf;
  return probe_side == Side::buyer ? c.prices->first : c.prices->second;
}

double determine_price(History& history, const RuleConfig& cfg, PriceState& state) {
  double p = state.price;
  switch (cfg.price_variant) {
    case PriceVariant::fixed:
      p = cfg.fixed_price;
      break;
    case PriceVariant::ewma: {
      auto fresh = history.consume_new();
      if (!fresh.empty()) {
        std::vector<double> vals;
        for (const auto& e : fresh) vals.push_back(e.value);
        p = cfg.lambda * mean_abs(vals) + (1.0 - cfg.lambda) * state.price;
      }
      break;
    }
    case PriceVariant::median: {
      auto vals = window_values(history, cfg.window);
      if (!vals.empty()) {
        for (double& v : vals) v = std::fabs(v);
        std::sort(vals.begin(), vals.end());
        std::size_t n = vals.size();
        p = n % 2 ? vals[n / 2] : (vals[n / 2 - 1] + vals[n / 2]) / 2.0;
      }
      break;
    }
    case PriceVariant::clearing: {
      auto vals = window_values(history, cfg.window);
      std::vector<double> b, s;
      for (double v : vals) (v > 0.0 ? b : s).push_back(v);
      std::sort(b.rbegin(), b.rend());
      std::sort(s.rbegin(), s.rend());
      std::size_t m = 0;
      while (m < std::min(b.size(), s.size()) && geq(b[m] + s[m], 0.0)) ++m;
      if (m > 0) p = (b[m - 1] - s[m - 1]) / 2.0;
      break;
    }
    case PriceVariant::history_mcafee: {
      auto vals = window_values(history, cfg.window);
      std::vector<RuleOffer> b, s;
      std::uint64_t rank = 2;  // stable, behind dummies and probes
      for (double v : vals) {
        RuleOffer o{static_cast<AgentId>(rank), v, false, rank};
        ++rank;
        (v > 0.0 ? b : s).push_back(o);
      }
      Clearing c = mcafee(b, s);
      // Midpoint of the two side prices; under case I this is the single
      // clearing price itself.
      if (c.prices) p = (c.prices->first - c.prices->second) / 2.0;
      break;
    }
  }
  state.price = p;
  return p;
}

PriceMatchResult price_match(double price, std::span<const RuleOffer> bids,
                             std::span<const RuleOffer> asks,
                             bool construct_snt) {
  PriceMatchResult res;
  Clearing& c = res.clearing;
  c.prices = {price, -price};

  struct Ent {
    RuleOffer o;
    bool is_bid;
    bool active = true;
    bool checked = false;
  };
  std::vector<Ent> ents;
  for (const auto& o : bids) ents.push_back({o, true});
  for (const auto& o : asks) ents.push_back({o, false});
  std::sort(ents.begin(), ents.end(),
            [](const Ent& a, const Ent& b) { return a.o.rank < b.o.rank; });

  auto pick = [&](bool want_bids, bool want_asks) -> Ent* {
    for (auto& e : ents)
      if (e.active && !e.checked && ((e.is_bid && want_bids) || (!e.is_bid && want_asks)))
        return &e;
    return nullptr;
  };

  Ent* i = nullptr;
  Ent* j = nullptr;
  bool stop = false;
  while (!stop) {
    i = j = nullptr;
    for (auto& e : ents) e.checked = false;
    while (true) {
      bool more_bids = pick(true, false) != nullptr;
      bool more_asks = pick(false, true) != nullptr;
      if (!((more_bids && !i) || (more_asks && !j))) break;
      Ent* k;
      if (!i && !j) k = pick(true, true);
      else if (!i) k = pick(true, false);
      else k = pick(false, true);
      k->checked = true;
      if (k->is_bid) {
        res.examined_bids.insert(k->o.id);
        if (geq(k->o.value, price)) i = k;
      } else {
        res.examined_asks.insert(k->o.id);
        if (geq(k->o.value, -price)) j = k;
      }
    }
    if (i && j) {
      c.pairs.emplace_back(i->o.id, j->o.id);
      c.payments[i->o.id] = price;
      c.payments[j->o.id] = -price;
      for (auto& e : ents)
        if (e.checked) e.active = false;  // matched pair and checked losers
    } else {
      stop = true;
    }
  }

  if (!construct_snt) return res;

  // No-trade test (Def. 6 style): an unmatched offer belongs in NT only if
  // even its most competitive report leaves it unmatched under the same
  // scan. Offers that could have taken a counterpart are dropped from NT
  // (and so from SNT): letting them survive would let an agent dodge
  // today's price and re-trade at a better one later.
  auto could_trade = [&](AgentId id, bool bid_side) {
    std::vector<RuleOffer> b2(bids.begin(), bids.end());
    std::vector<RuleOffer> s2(asks.begin(), asks.end());
    for (auto& o : b2)
      if (bid_side && o.id == id) o.value = kPosInf;
    for (auto& o : s2)
      if (!bid_side && o.id == id) o.value = 0.0;
    return price_match(price, b2, s2, false).clearing.matched(id);
  };
  auto remaining = [&](bool bid_side, bool only_unchecked) {
    std::set<AgentId> out;
    for (const auto& e : ents)
      if (e.active && e.is_bid == bid_side && !(only_unchecked && e.checked) &&
          !could_trade(e.o.id, bid_side))
        out.insert(e.o.id);
    return out;
  };
  auto willing_departs = [&](bool bid_side) {
    for (const auto& e : ents)
      if (e.active && e.is_bid == bid_side && e.o.departs_now &&
          geq(e.o.value, bid_side ? price : -price))
        return true;
    return false;
  };
  auto all_depart = [&](bool bid_side) {
    for (const auto& e : ents)
      if (e.active && e.is_bid == bid_side && !e.o.departs_now) return false;
    return true;
  };

  if (i && !j) {  // case I: willing bid, no willing ask
    c.nt = remaining(true, false);
    c.snt = (willing_departs(true) || all_depart(false))
                ? c.nt
                : remaining(true, true);
  } else if (j && !i) {  // case II
    c.nt = remaining(false, false);
    c.snt = (willing_departs(false) || all_depart(true))
                ? c.nt
                : remaining(false, true);
  } else {  // case III: nobody willing on either side
    c.nt = remaining(true, false);
    auto s = remaining(false, false);
    c.nt.insert(s.begin(), s.end());
    if (all_depart(true) || all_depart(false)) c.snt = c.nt;
  }
  return res;
}

Clearing simple_match(const History& history, double fallback_price,
                      std::span<const RuleOffer> bids,
                      std::span<const RuleOffer> asks) {
  Clearing c;
  std::vector<double> vals;
  for (const auto& e : history.entries()) vals.push_back(e.value);
  double p = vals.empty() ? fallback_price : mean_abs(vals);
  c.prices = {p, -p};

  auto by_rank = [](std::span<const RuleOffer> v) {
    std::vector<RuleOffer> out(v.begin(), v.end());
    std::sort(out.begin(), out.end(),
              [](const RuleOffer& a, const RuleOffer& b) { return a.rank < b.rank; });
    return out;
  };
  auto b = by_rank(bids);
  auto s = by_rank(asks);
  std::size_t bi = 0, si = 0;
  while (bi < b.size() && si < s.size()) {
    const RuleOffer* i = nullptr;
    const RuleOffer* j = nullptr;
    while (bi < b.size()) {
      const RuleOffer& k = b[bi++];
      if (geq(k.value, p)) { i = &k; break; }
    }
    while (si < s.size()) {
      const RuleOffer& k = s[si++];
      if (geq(k.value, -p)) { j = &k; break; }
    }
    if (i && j) {
      c.pairs.emplace_back(i->id, j->id);
      c.payments[i->id] = p;
      c.payments[j->id] = -p;
    }
  }
  return c;
}

std::set<AgentId> windowed_mcafee_snt(std::span<const RuleOffer> active_bids,
                                      std::span<const RuleOffer> active_asks,
                                      std::size_t augmented_bid_count,
                                      std::size_t augmented_ask_count) {
  std::set<AgentId> snt;
  auto add = [&](std::span<const RuleOffer> v) {
    for (const auto& o : v) snt.insert(o.id);
  };
  if (active_asks.empty()) {
    add(active_bids);
  } else if (active_bids.empty()) {
    add(active_asks);
  } else if (std::min(augmented_bid_count, augmented_ask_count) < 2) {
    add(active_bids);
    add(active_asks);
  }
  return snt;
}

Clearing windowed_mcafee(const AugmentedOffers& augmented,
                         std::span<const RuleOffer> active_bids,
                         std::span<const RuleOffer> active_asks) {
  Clearing c;
  c.snt = windowed_mcafee_snt(active_bids, active_asks, augmented.bids.size(),
                              augmented.asks.size());
  c.nt = c.snt;
  Clearing aug = mcafee(augmented.bids, augmented.asks);
  if (!aug.prices) return c;
  c.prices = aug.prices;

  // Only active winners can actually trade; thin the longer side to keep
  // the period balanced. Selection is by competitiveness (best values
  // first), so whether an offer trades is a one-sided threshold on its own
  // value rather than a lottery a patient agent could profitably re-roll.
  auto winners = [&](std::span<const RuleOffer> active) {
    std::vector<RuleOffer> out;
    for (const auto& o : active)
      if (aug.matched(o.id)) out.push_back(o);
    sort_offers(out);
    return out;
  };
  auto wb = winners(active_bids);
  auto ws = winners(active_asks);
  std::size_t n = std::min(wb.size(), ws.size());
  // When the balance cut excludes candidates, the value needed to stay
  // selected is the first excluded candidate's value, which can exceed the
  // augmented-book price. Winners pay the binding threshold: an agent whose
  // value sits between price and cut-off must not gain by overbidding.
  double pb = aug.prices->first;
  double ps = aug.prices->second;
  if (wb.size() > n) pb = std::max(pb, wb[n].value);
  if (ws.size() > n) ps = std::max(ps, ws[n].value);
  for (std::size_t k = 0; k < n; ++k) {
    c.pairs.emplace_back(wb[k].id, ws[k].id);
    c.payments[wb[k].id] = pb;
    c.payments[ws[k].id] = ps;
  }
  return c;
}

double critical_price(const std::function<Clearing(double)>& run, AgentId agent,
                      Side side, double probe_magnitude) {
  double lo = side == Side::buyer ? 0.0 : -probe_magnitude;
  double hi = side == Side::buyer ? probe_magnitude : 0.0;
  auto wins = [&](double v) { return run(v).matched(agent); };
  if (!wins(hi)) return kPosInf;
  if (wins(lo)) return lo;
  double wlo = lo, whi = hi;
  for (int it = 0; it < 100; ++it) {
    double mid = (wlo + whi) / 2.0;
    if (wins(mid)) whi = mid;
    else wlo = mid;
  }
  double z = (wlo + whi) / 2.0;
  // Spot-check that the win region really is a one-sided threshold.
  for (double f : {0.25, 0.75}) {
    if (z - lo > kTolerance && wins(lo + f * (wlo - lo)))
      throw std::runtime_error("critical_price: win region not upward-closed");
    if (hi - z > kTolerance && !wins(whi + f * (hi - whi)))
      throw std::runtime_error("critical_price: win region not upward-closed");
  }
  return z;
}

}  // namespace chainda
