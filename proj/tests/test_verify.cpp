#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <random>

#include "chainda/verify.hpp"

using namespace chainda;

namespace {

RuleOffer offer(AgentId id, double value, bool departs_now = false) {
  return {id, value, departs_now, static_cast<std::uint64_t>(id)};
}

// The section-2.1 walk-through population (as in the baseline tests).
std::vector<AgentType> walkthrough_schedule() {
  return {
      {1, Side::buyer, 1, 2, 15.0},  {2, Side::buyer, 1, 2, 10.0},
      {3, Side::buyer, 1, 2, 4.0},   {4, Side::buyer, 2, 2, 3.0},
      {11, Side::seller, 1, 2, -1.0}, {12, Side::seller, 2, 2, -1.0},
      {13, Side::seller, 1, 1, -2.0}, {14, Side::seller, 2, 2, -2.0},
      {15, Side::seller, 1, 2, -5.0},
  };
}

SimConfig small_config(int max_patience = 4) {
  SimConfig cfg;
  cfg.env.arrival_intensity = 2.0;
  cfg.env.max_patience = max_patience;
  cfg.env.n_agents_per_side = 12;
  cfg.env.seed = 11;
  cfg.mech.max_patience = max_patience;
  return cfg;
}

}  // namespace

TEST_CASE("deviation grid honors the feasible report space") {
  const AgentType truth{1, Side::buyer, 3, 5, 10.0};
  const auto grid = deviation_grid(truth, 4, false, {8.0});
  CHECK(!grid.empty());
  bool has_delay = false, has_value = false, has_departure = false;
  for (const Deviation& d : grid) {
    CHECK(d.report.arrival >= truth.arrival);  // no early arrival
    CHECK(d.report.departure >= d.report.arrival);
    CHECK(d.report.departure - d.report.arrival <= 4);
    CHECK(d.report.value > 0.0);
    has_delay |= d.label.rfind("arrival_delay", 0) == 0;
    has_value |= d.label.rfind("value_shift", 0) == 0;
    has_departure |= d.label.rfind("departure_shift", 0) == 0;
  }
  CHECK(has_delay);
  CHECK(has_value);
  CHECK(has_departure);

  for (const Deviation& d : deviation_grid(truth, 4, true, {})) {
    CHECK(d.report.departure <= truth.departure);  // strong feasibility
  }
}

TEST_CASE("utility semantics: late settlement is worthless") {
  const AgentType buyer{1, Side::buyer, 1, 3, 10.0};
  const AgentType seller{11, Side::seller, 1, 3, -4.0};
  const std::vector<TradeEvent> trades{{1, 11, 2, 6.0, -5.0}};

  CHECK(agent_utility(buyer, buyer, trades, false) == doctest::Approx(4.0));
  CHECK(agent_utility(seller, seller, trades, false) == doctest::Approx(1.0));
  CHECK(agent_utility(buyer, buyer, {}, false) == 0.0);

  // Buyer stretches its reported departure past the truth: the item shows
  // up after it has left, but the payment stands.
  AgentType late = buyer;
  late.departure = 5;
  CHECK(agent_utility(buyer, late, trades, false) == doctest::Approx(-6.0));
  // Seller paid after its true departure keeps only the cost of the item.
  AgentType late_s = seller;
  late_s.departure = 5;
  CHECK(agent_utility(seller, late_s, trades, false) == doctest::Approx(-4.0));
  // Immediate settlement ignores the reported departure.
  CHECK(agent_utility(buyer, late, trades, true) == doctest::Approx(4.0));
}

TEST_CASE("naive dynamic tr-DA fails the truthfulness check") {
  SimConfig cfg = small_config(1);
  const auto schedule = walkthrough_schedule();

  SUBCASE("buyer 1 profits from an arrival delay") {
    const auto violations = check_truthful("naive_tr_da", cfg, schedule, 1, 0);
    REQUIRE(!violations.empty());
    bool delay_found = false;
    for (const TruthViolation& v : violations) {
      if (v.deviation.rfind("arrival_delay", 0) == 0) {
        delay_found = true;
        CHECK(v.truthful_utility == doctest::Approx(5.0));   // 15 - 10
        CHECK(v.deviated_utility == doctest::Approx(11.0));  // 15 - 4
      }
    }
    CHECK(delay_found);
  }
  SUBCASE("buyer 3 profits from overbidding") {
    const auto violations = check_truthful("naive_tr_da", cfg, schedule, 3, 0);
    bool overbid_found = false;
    for (const TruthViolation& v : violations) {
      if (v.deviation.rfind("value_shift", 0) == 0) {
        overbid_found = true;
        CHECK(v.truthful_utility == doctest::Approx(0.0));
        CHECK(v.deviated_utility > 0.0);
      }
    }
    CHECK(overbid_found);
  }
}

TEST_CASE("chain mechanisms survive the deviation grid") {
  for (const std::string mech : {"mcafee", "tr_da", "ewma", "fixed"}) {
    CAPTURE(mech);
    SimConfig cfg = small_config();
    if (mech == "fixed") cfg.mech.rule.fixed_price = 100.0;
    for (std::uint64_t trial = 0; trial < 3; ++trial) {
      const auto schedule = generate_schedule(cfg.env, trial);
      const auto violations =
          check_truthful_all(mech, cfg, schedule, trial);
      if (!violations.empty()) {
        CAPTURE(violations[0].agent);
        CAPTURE(violations[0].deviation);
        CAPTURE(violations[0].truthful_utility);
        CAPTURE(violations[0].deviated_utility);
      }
      CHECK(violations.empty());
    }
  }
}

TEST_CASE("strong no-trade: worked construction verdicts") {
  SUBCASE("SNT := NT for tr-DA is invalid on the three-by-three book") {
    const std::vector<RuleOffer> bids{offer(1, 3), offer(2, 2), offer(3, 1)};
    const std::vector<RuleOffer> asks{offer(11, -4), offer(12, -6),
                                      offer(13, -8)};
    const auto violations =
        check_snt_valid(snt_as_nt(RuleVariant::tr_da), bids, asks);
    REQUIRE(!violations.empty());
    // Raising bid 2 to 8 frees bids 1 and 3 to trade: condition (b).
    bool b2_found = false;
    for (const SntViolation& v : violations) {
      if (v.agent == 2 && v.condition == 'b') b2_found = true;
    }
    CHECK(b2_found);
  }
  SUBCASE("dictatorial construction on the same book is valid") {
    const std::vector<RuleOffer> bids{offer(1, 3), offer(2, 2), offer(3, 1)};
    const std::vector<RuleOffer> asks{offer(11, -4), offer(12, -6),
                                      offer(13, -8)};
    CHECK(check_snt_valid(dictatorial_snt(RuleVariant::tr_da, 1), bids, asks)
              .empty());
  }
  SUBCASE("fixed-price SNT := NT fails when the bid can free the ask") {
    const std::vector<RuleOffer> bids{offer(1, 8)};
    const std::vector<RuleOffer> asks{offer(11, -10)};
    const auto violations = check_snt_valid(
        snt_as_nt(RuleVariant::price_based, 9.0), bids, asks);
    REQUIRE(!violations.empty());
    bool found = false;
    for (const SntViolation& v : violations) {
      if (v.agent == 1 && v.condition == 'b') found = true;
    }
    CHECK(found);
  }
  SUBCASE("fixed-price SNT := NT is fine when the bid is hopeless") {
    // Both asks are out of reach of the price whatever they declare.
    const std::vector<RuleOffer> bids{offer(1, 8)};
    const std::vector<RuleOffer> asks{offer(11, -6), offer(12, -7)};
    CHECK(check_snt_valid(snt_as_nt(RuleVariant::price_based, 9.0), bids, asks)
              .empty());
  }
}

TEST_CASE("shipped strong no-trade constructions pass random states") {
  std::mt19937 gen(20260826);
  std::uniform_int_distribution<int> count(0, 4);
  std::uniform_real_distribution<double> value(0.5, 10.0);
  std::uniform_int_distribution<int> coin(0, 1);
  for (int state = 0; state < 100; ++state) {
    std::vector<RuleOffer> bids, asks;
    AgentId next = 1;
    const int nb = count(gen), ns = count(gen);
    for (int i = 0; i < nb; ++i) {
      bids.push_back(offer(next++, value(gen), coin(gen) == 1));
    }
    for (int i = 0; i < ns; ++i) {
      asks.push_back(offer(next++, -value(gen), coin(gen) == 1));
    }
    for (const RuleVariant variant :
         {RuleVariant::tr_da, RuleVariant::mcafee, RuleVariant::price_based,
          RuleVariant::windowed_mcafee}) {
      const auto violations =
          check_snt_valid(shipped_snt(variant, 5.0), bids, asks);
      if (!violations.empty()) {
        CAPTURE(static_cast<int>(variant));
        CAPTURE(state);
        CAPTURE(violations[0].agent);
        CAPTURE(violations[0].condition);
        CAPTURE(violations[0].probe);
      }
      CHECK(violations.empty());
    }
  }
}

TEST_CASE("ledger checks accept chain trials and flag bad hand-built logs") {
  SUBCASE("chain trial passes all three properties") {
    SimConfig cfg = small_config();
    const auto schedule = generate_schedule(cfg.env, 0);
    const MechanismRun run = run_mechanism("mcafee", cfg, schedule, 0);
    const LedgerReport report =
        check_ledgers(run.ledger, run.trades, schedule);
    CAPTURE(report.detail);
    CHECK(report.all_ok());
  }
  SUBCASE("allocating a buyer before any seller trade is infeasible") {
    const std::vector<LedgerEvent> ledger{
        {1, 1, 8.0, 0},   // buyer pays in period 1
        {1, 1, 0.0, -1},  // and takes an item the auctioneer does not hold
        {2, 11, -7.0, 1},
    };
    const LedgerReport report = check_ledgers(ledger, {}, {});
    CHECK(!report.feasible);
    CHECK(report.no_deficit);
  }
  SUBCASE("paying a seller more than collected is a deficit") {
    const std::vector<LedgerEvent> ledger{
        {1, 11, 0.0, 1},
        {1, 1, 5.0, -1},
        {2, 11, -9.0, 0},  // pays out 9 having collected 5
    };
    const LedgerReport report = check_ledgers(ledger, {}, {});
    CHECK(!report.no_deficit);
    CHECK(report.feasible);
  }
  SUBCASE("a trade that charges above value breaks IR") {
    const std::vector<AgentType> schedule{{1, Side::buyer, 1, 1, 10.0},
                                          {11, Side::seller, 1, 1, -4.0}};
    const std::vector<TradeEvent> trades{{1, 11, 1, 11.0, -5.0}};
    CHECK(!check_ledgers({}, trades, schedule).ir);
  }
}

TEST_CASE("critical price characterization on a chain mechanism") {
  SimConfig cfg = small_config();
  const auto schedule = generate_schedule(cfg.env, 2);
  // Probe a few matched and unmatched agents.
  const MechanismRun run = run_mechanism("mcafee", cfg, schedule, 2);
  REQUIRE(!run.trades.empty());
  int probed = 0;
  for (const AgentType& a : schedule) {
    if (probed >= 4) break;
    ++probed;
    const PriceCharReport report =
        check_price_characterization("mcafee", cfg, schedule, a.id, 2);
    CAPTURE(a.id);
    CAPTURE(report.detail);
    CHECK(report.all_ok());
    const TradeEvent* t = nullptr;
    for (const TradeEvent& e : run.trades) {
      if (e.buyer == a.id || e.seller == a.id) t = &e;
    }
    if (t != nullptr) {
      const double paid =
          a.side == Side::buyer ? t->buyer_payment : -t->seller_payment;
      CHECK(report.critical == doctest::Approx(paid).epsilon(1e-4));
    }
  }
}

TEST_CASE("a permanent loser has an infinite critical price") {
  SimConfig cfg = small_config();
  // One buyer, no sellers: no reported value can ever trade.
  const std::vector<AgentType> schedule{{1, Side::buyer, 1, 3, 10.0}};
  const PriceCharReport report =
      check_price_characterization("mcafee", cfg, schedule, 1, 0);
  CHECK(report.critical == kPosInf);
  CHECK(report.all_ok());
}
