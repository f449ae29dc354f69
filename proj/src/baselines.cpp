#include "chainda/baselines.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>

namespace chainda {

namespace {

bool geq(double a, double b) { return a >= b - kTolerance; }

std::vector<RuleOffer> by_competitiveness(std::span<const RuleOffer> offers) {
  std::vector<RuleOffer> out(offers.begin(), offers.end());
  std::sort(out.begin(), out.end(), [](const RuleOffer& a, const RuleOffer& b) {
    if (a.value != b.value) return a.value > b.value;
    return a.rank < b.rank;
  });
  return out;
}

}  // namespace

Clearing greedy_match(std::span<const RuleOffer> bids,
                      std::span<const RuleOffer> asks) {
  const auto b = by_competitiveness(bids);
  const auto s = by_competitiveness(asks);
  Clearing result;
  const std::size_t n = std::min(b.size(), s.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (!geq(b[i].value + s[i].value, 0.0)) break;
    const double mid = (b[i].value - s[i].value) / 2.0;
    result.pairs.emplace_back(b[i].id, s[i].id);
    result.payments[b[i].id] = mid;
    result.payments[s[i].id] = -mid;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Offline optimum.

namespace {

struct OfflineInstance {
  std::vector<AgentType> buyers;
  std::vector<AgentType> sellers;

  explicit OfflineInstance(const std::vector<AgentType>& schedule) {
    for (const AgentType& a : schedule) {
      (a.side == Side::buyer ? buyers : sellers).push_back(a);
    }
  }

  // Surplus of the pair when it can feasibly trade, otherwise 0. Pairs with
  // non-positive surplus never improve the optimum, so they count as 0 too.
  double weight(std::size_t i, std::size_t j) const {
    const AgentType& b = buyers[i];
    const AgentType& s = sellers[j];
    if (b.arrival > s.departure || s.arrival > b.departure) return 0.0;
    const double surplus = b.value + s.value;
    return surplus > kTolerance ? surplus : 0.0;
  }
};

}  // namespace

OfflineResult offline_optimal(const std::vector<AgentType>& schedule) {
  const OfflineInstance inst(schedule);
  const std::size_t nb = inst.buyers.size();
  const std::size_t ns = inst.sellers.size();
  const std::size_t n = std::max(nb, ns);
  OfflineResult result;
  if (n == 0) return result;

  // Jonker-Volgenant style assignment on an implicit square matrix with
  // cost = -weight; zero-weight cells act as "leave unmatched".
  const auto cost = [&](std::size_t i, std::size_t j) -> double {
    if (i >= nb || j >= ns) return 0.0;
    return -inst.weight(i, j);
  };
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t i = p[j];
    if (i == 0 || i > nb || j > ns) continue;
    const double w = inst.weight(i - 1, j - 1);
    if (w > 0.0) {
      result.value += w;
      result.matching.emplace_back(inst.buyers[i - 1].id,
                                   inst.sellers[j - 1].id);
    }
  }
  return result;
}

OfflineResult offline_brute_force(const std::vector<AgentType>& schedule) {
  const OfflineInstance inst(schedule);
  const std::size_t nb = inst.buyers.size();
  const std::size_t ns = inst.sellers.size();
  OfflineResult best;
  std::vector<bool> used(ns, false);
  std::vector<std::pair<std::size_t, std::size_t>> chosen, best_chosen;
  double value = 0.0;

  const std::function<void(std::size_t)> recurse = [&](std::size_t i) {
    if (i == nb) {
      if (value > best.value + kTolerance) {
        best.value = value;
        best_chosen = chosen;
      }
      return;
    }
    recurse(i + 1);  // leave buyer i unmatched
    for (std::size_t j = 0; j < ns; ++j) {
      if (used[j]) continue;
      const double w = inst.weight(i, j);
      if (w <= 0.0) continue;
      used[j] = true;
      value += w;
      chosen.emplace_back(i, j);
      recurse(i + 1);
      chosen.pop_back();
      value -= w;
      used[j] = false;
    }
  };
  recurse(0);

  for (const auto& [i, j] : best_chosen) {
    best.matching.emplace_back(inst.buyers[i].id, inst.sellers[j].id);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Blum fixed price.

BlumPriceRule make_blum_rule(double w_min, double w_max) {
  if (!(w_min > 0.0) || !(w_max > w_min)) {
    throw std::invalid_argument("blum rule requires w_max > w_min > 0");
  }
  // g(r) = r - ln((w_max - w_min) / ((r-1) w_min)) is increasing on r > 1
  // and crosses zero exactly once; bisect.
  const auto g = [&](double r) {
    return r - std::log((w_max - w_min) / ((r - 1.0) * w_min));
  };
  double lo = 1.0 + 1e-12;
  double hi = 2.0;
  while (g(hi) < 0.0) hi *= 2.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = (lo + hi) / 2.0;
    (g(mid) < 0.0 ? lo : hi) = mid;
  }
  return {w_min, w_max, (lo + hi) / 2.0};
}

double blum_price(const BlumPriceRule& rule, double u) {
  return rule.w_min + (rule.r - 1.0) * rule.w_min * std::exp(rule.r * u);
}

// ---------------------------------------------------------------------------
// Naive dynamic tr-DA.

NaiveOutcome naive_dynamic(const std::vector<AgentType>& schedule) {
  NaiveOutcome outcome;
  if (schedule.empty()) return outcome;
  int last_period = 1;
  for (const AgentType& a : schedule) {
    last_period = std::max(last_period, a.departure);
  }
  std::map<AgentId, AgentType> active;  // unmatched, within [arrival, departure]
  std::vector<AgentType> pending(schedule);
  for (int t = 1; t <= last_period; ++t) {
    for (const AgentType& a : pending) {
      if (a.arrival == t) active.emplace(a.id, a);
    }
    std::vector<RuleOffer> bids, asks;
    for (const auto& [id, a] : active) {
      RuleOffer offer{id, a.value, a.departure == t,
                      static_cast<std::uint64_t>(id)};
      (a.side == Side::buyer ? bids : asks).push_back(offer);
    }
    const Clearing clearing = trade_reduction(bids, asks);
    for (const auto& [buyer, seller] : clearing.pairs) {
      outcome.trades.push_back({buyer, seller, t, clearing.payments.at(buyer),
                                clearing.payments.at(seller)});
      active.erase(buyer);
      active.erase(seller);
    }
    std::erase_if(active, [t](const auto& kv) {
      return kv.second.departure == t;
    });
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// ZIP market.

int zip_patience_category(int patience, int max_patience) {
  if (max_patience <= 0) return 0;
  const int k = (3 * patience) / max_patience;
  return std::min(k, 2);
}

double zip_learning_rate(int trial, int period, int t_end, int training_trials,
                         double r0) {
  const double r_plus = (1.0 - r0) / (training_trials + 1);
  const double frac =
      t_end > 0 ? static_cast<double>(period) / t_end : 0.0;
  const double r = 1.0 - (r0 + (trial - 1) * r_plus + frac * frac * r_plus);
  return std::clamp(r, 0.0, 1.0);
}

double zip_margin_update(double r, double category_margin,
                         double offer_margin) {
  return (1.0 - r) * category_margin + r * offer_margin;
}

namespace {

double clamp_margin(Side side, double mu) {
  if (side == Side::buyer) return std::clamp(mu, -1.0, 0.0);
  return std::max(mu, 0.0);
}

struct ZipOffer {
  AgentType agent;
  int proto = 0;
  int category = 0;
  double mu = 0.0;
  double delta = 0.0;
  double declared = 0.0;  // w_i (1 + mu_i)
  int arrived = 0;
};

struct SideMax {
  bool any = false;
  double value = kNegInf;  // max declared (signed), i.e. most competitive

  void fold(double v) {
    any = true;
    value = std::max(value, v);
  }
};

// Snapshot of declared values at the start of a period, before clearing.
struct MarketSnapshot {
  SideMax all_bids, all_asks;
  std::array<SideMax, 3> bids_by_cat, asks_by_cat;
};

std::uint64_t zip_extra(int trial, int proto, Side side, int category,
                        int which) {
  return (static_cast<std::uint64_t>(trial) << 40) |
         (static_cast<std::uint64_t>(proto) << 32) |
         (static_cast<std::uint64_t>(side == Side::buyer ? 0 : 1) << 20) |
         (static_cast<std::uint64_t>(category) << 8) |
         static_cast<std::uint64_t>(which);
}

}  // namespace

ZipOutcome zip_market_run(const std::vector<AgentType>& schedule,
                          int max_patience, std::uint64_t seed,
                          std::uint64_t trial, const ZipConfig& cfg) {
  ZipOutcome outcome;
  if (schedule.empty()) return outcome;
  const RandomSource rng(seed, trial);
  const int n_proto = cfg.n_protocol_agents;

  int t_end = 1;
  for (const AgentType& a : schedule) t_end = std::max(t_end, a.departure);

  // Per-protocol-agent parameters, fixed for the whole experiment.
  std::vector<double> beta(n_proto), gamma(n_proto);
  // Category margins per (protocol agent, side, category); persist across
  // training trials.
  std::vector<std::array<std::array<double, 3>, 2>> margins(n_proto);
  for (int j = 0; j < n_proto; ++j) {
    beta[j] = 0.1 + 0.1 * rng.uniform(0, RandomSource::Purpose::zip,
                                      zip_extra(0, j, Side::buyer, 0, 1));
    gamma[j] = 0.2 + 0.6 * rng.uniform(0, RandomSource::Purpose::zip,
                                       zip_extra(0, j, Side::buyer, 0, 2));
    for (int side = 0; side < 2; ++side) {
      for (int k = 0; k < 3; ++k) {
        const double mag =
            0.05 + 0.3 * rng.uniform(0, RandomSource::Purpose::zip,
                                     zip_extra(0, j,
                                               side == 0 ? Side::buyer
                                                         : Side::seller,
                                               k, 3));
        margins[j][side][k] = side == 0 ? -mag : mag;
      }
    }
  }

  // Offer-to-protocol-agent assignment is persistent across trials.
  const auto proto_of = [&](AgentId id) {
    const double u = rng.uniform(0, RandomSource::Purpose::zip,
                                 0x0FFE0000ull + static_cast<std::uint64_t>(id));
    return std::min(static_cast<int>(u * n_proto), n_proto - 1);
  };

  std::map<int, std::vector<AgentType>> arrivals;
  for (const AgentType& a : schedule) arrivals[a.arrival].push_back(a);

  for (int k = 1; k <= cfg.trials; ++k) {
    const bool measured = (k == cfg.trials);
    std::map<AgentId, ZipOffer> active;
    MarketSnapshot prev;  // empty for period 1

    for (int t = 1; t <= t_end; ++t) {
      // Target prices per (protocol agent, side, category), from the
      // previous period's declared values; skipped when the category had
      // no offers.
      const auto target = [&](int j, Side side, int cat,
                              double* out) -> bool {
        const SideMax& own = side == Side::buyer ? prev.bids_by_cat[cat]
                                                 : prev.asks_by_cat[cat];
        const SideMax& other =
            side == Side::buyer ? prev.all_asks : prev.all_bids;
        if (!own.any || !other.any) return false;
        const double xi = 0.05 * rng.uniform(t, RandomSource::Purpose::zip,
                                             zip_extra(k, j, side, cat, 4));
        const double eta = 0.05 * rng.uniform(t, RandomSource::Purpose::zip,
                                              zip_extra(k, j, side, cat, 5));
        // A side that failed to cross concedes: its target moves up in
        // signed terms (bids bid more, asks demand less), which for the
        // negative ask values means scaling the nudge by the magnitude.
        if (own.value + other.value < 0.0) {
          *out = own.value + eta * std::abs(own.value) + xi;
        } else {
          *out = own.value - eta * std::abs(own.value) - xi;
        }
        return true;
      };

      // Widrow-Hoff adjustment for offers that arrived in an earlier period.
      for (auto& [id, o] : active) {
        if (o.arrived == t) continue;
        double tau = 0.0;
        if (!target(o.proto, o.agent.side, o.category, &tau)) continue;
        o.delta = gamma[o.proto] * o.delta +
                  (1.0 - gamma[o.proto]) * beta[o.proto] * (tau - o.declared);
        o.mu = clamp_margin(o.agent.side,
                            (o.declared + o.delta) / o.agent.value - 1.0);
        o.declared = o.agent.value * (1.0 + o.mu);
      }

      // New arrivals initialize from their category margin.
      if (auto it = arrivals.find(t); it != arrivals.end()) {
        for (const AgentType& a : it->second) {
          ZipOffer o;
          o.agent = a;
          o.proto = proto_of(a.id);
          o.category = zip_patience_category(a.patience(), max_patience);
          o.mu = clamp_margin(
              a.side,
              margins[o.proto][a.side == Side::buyer ? 0 : 1][o.category]);
          o.delta = 0.0;
          o.declared = a.value * (1.0 + o.mu);
          o.arrived = t;
          active.emplace(a.id, o);
        }
      }

      // Snapshot the declared book before clearing; this feeds the next
      // period's target prices.
      MarketSnapshot snap;
      for (const auto& [id, o] : active) {
        if (o.agent.side == Side::buyer) {
          snap.all_bids.fold(o.declared);
          snap.bids_by_cat[o.category].fold(o.declared);
        } else {
          snap.all_asks.fold(o.declared);
          snap.asks_by_cat[o.category].fold(o.declared);
        }
      }

      // Clear: most competitive declared bids against most competitive
      // declared asks, at the pair's declared midpoint.
      std::vector<const ZipOffer*> bids, asks;
      for (const auto& [id, o] : active) {
        (o.agent.side == Side::buyer ? bids : asks).push_back(&o);
      }
      const auto more_competitive = [](const ZipOffer* a, const ZipOffer* b) {
        if (a->declared != b->declared) return a->declared > b->declared;
        return a->agent.id < b->agent.id;
      };
      std::sort(bids.begin(), bids.end(), more_competitive);
      std::sort(asks.begin(), asks.end(), more_competitive);

      const double r = zip_learning_rate(k, t, t_end, cfg.trials - 1);
      std::vector<AgentId> done;
      const std::size_t n_pairs = std::min(bids.size(), asks.size());
      for (std::size_t i = 0; i < n_pairs; ++i) {
        const ZipOffer* b = bids[i];
        const ZipOffer* s = asks[i];
        if (!geq(b->declared + s->declared, 0.0)) break;
        const double mid = (b->declared - s->declared) / 2.0;
        if (measured) {
          outcome.trades.push_back({b->agent.id, s->agent.id, t, mid, -mid});
          outcome.true_surplus += b->agent.value + s->agent.value;
        }
        done.push_back(b->agent.id);
        done.push_back(s->agent.id);
      }

      // Category-margin learning on matched and expiring offers.
      const auto learn = [&](const ZipOffer& o) {
        const int side = o.agent.side == Side::buyer ? 0 : 1;
        double& m = margins[o.proto][side][o.category];
        m = clamp_margin(o.agent.side, zip_margin_update(r, m, o.mu));
      };
      for (AgentId id : done) {
        learn(active.at(id));
        active.erase(id);
      }
      for (auto it = active.begin(); it != active.end();) {
        if (it->second.agent.departure == t) {
          learn(it->second);
          it = active.erase(it);
        } else {
          ++it;
        }
      }
      prev = snap;
    }
  }
  return outcome;
}

}  // namespace chainda
