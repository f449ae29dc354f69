#include "chainda/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "chainda/rules.hpp"

namespace chainda {

double EnvConfig::trunc_exp_alpha() const {
  return -std::log(0.05) / max_patience;
}

void EnvConfig::check() const {
  if (!(arrival_intensity > 0.0)) {
    throw std::invalid_argument("arrival_intensity must be positive");
  }
  if (max_patience < 1) throw std::invalid_argument("max_patience must be >= 1");
  if (volatility < 0.0) throw std::invalid_argument("volatility must be >= 0");
  if (spread < 0.0 || spread >= 2.0) {
    throw std::invalid_argument("spread must be in [0, 2)");
  }
  if (!(initial_mean > 0.0)) {
    throw std::invalid_argument("initial_mean must be positive");
  }
  if (n_agents_per_side < 1) {
    throw std::invalid_argument("n_agents_per_side must be >= 1");
  }
}

std::vector<AgentType> generate_schedule(const EnvConfig& cfg,
                                         std::uint64_t trial) {
  cfg.check();
  const RandomSource rng(cfg.seed, trial);
  std::uint64_t counter = 0;
  const auto draw = [&] {
    return rng.uniform(0, RandomSource::Purpose::env, counter++);
  };

  std::vector<AgentType> schedule;
  int buyers = 0, sellers = 0;
  AgentId next_id = 1;
  double clock = 0.0;
  double mean = cfg.initial_mean;
  int mean_period = 1;

  while (buyers < cfg.n_agents_per_side || sellers < cfg.n_agents_per_side) {
    clock += -std::log(1.0 - draw()) / cfg.arrival_intensity;
    const int arrival = std::max<int>(1, std::llround(clock));

    // Advance the mean-valuation path to the arrival period; one fair-coin
    // multiplier e^{+-volatility} per integer period.
    while (mean_period < arrival) {
      ++mean_period;
      mean *= std::exp(draw() < 0.5 ? cfg.volatility : -cfg.volatility);
    }

    const Side side = draw() < 0.5 ? Side::buyer : Side::seller;
    double patience_draw;
    if (cfg.patience_dist == PatienceDist::uniform) {
      patience_draw = draw() * cfg.max_patience;
    } else {
      patience_draw = -std::log(1.0 - draw()) / cfg.trunc_exp_alpha();
    }
    const int patience = std::clamp<int>(std::llround(patience_draw), 0,
                                         cfg.max_patience);
    const double magnitude =
        mean * (1.0 - cfg.spread / 2.0 + cfg.spread * draw());

    AgentType agent;
    agent.id = next_id++;
    agent.side = side;
    agent.arrival = arrival;
    agent.departure = arrival + patience;
    agent.value = side == Side::buyer ? magnitude : -magnitude;
    schedule.push_back(agent);
    (side == Side::buyer ? buyers : sellers)++;
  }
  return schedule;
}

// ---------------------------------------------------------------------------
// Config files.

namespace {

const std::map<std::string, int>& chain_rule_names() {
  static const std::map<std::string, int> names = {
      {"tr_da", 0},         {"mcafee", 0},  {"simple", 0},
      {"ewma", 0},          {"median", 0},  {"clearing", 0},
      {"history_mcafee", 0}, {"fixed", 0},  {"windowed_mcafee", 0},
      {"active_mcafee", 0},
  };
  return names;
}

}  // namespace

bool is_chain_mechanism(const std::string& name) {
  return chain_rule_names().count(name) > 0;
}

SimConfig parse_config(const std::string& text) {
  SimConfig cfg;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos) {
        throw std::invalid_argument("config line without '=': " + line);
      }
      continue;
    }
    const auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      const auto b = s.find_last_not_of(" \t\r");
      return s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument("empty config key");

    if (key == "arrival_intensity") {
      cfg.env.arrival_intensity = std::stod(value);
    } else if (key == "max_patience") {
      cfg.env.max_patience = std::stoi(value);
      cfg.mech.max_patience = cfg.env.max_patience;
    } else if (key == "patience_dist") {
      if (value == "uniform") {
        cfg.env.patience_dist = PatienceDist::uniform;
      } else if (value == "trunc_exp") {
        cfg.env.patience_dist = PatienceDist::trunc_exp;
      } else {
        throw std::invalid_argument("unknown patience_dist: " + value);
      }
    } else if (key == "volatility") {
      cfg.env.volatility = std::stod(value);
    } else if (key == "spread") {
      cfg.env.spread = std::stod(value);
    } else if (key == "initial_mean") {
      cfg.env.initial_mean = std::stod(value);
    } else if (key == "n_agents_per_side") {
      cfg.env.n_agents_per_side = std::stoi(value);
    } else if (key == "seed") {
      cfg.env.seed = std::stoull(value);
    } else if (key == "tau") {
      cfg.mech.tau = std::stoi(value);
    } else if (key == "strong_feasibility") {
      cfg.mech.strong_feasibility = (value == "1" || value == "true");
    } else if (key == "ewma_lambda") {
      cfg.mech.rule.lambda = std::stod(value);
    } else if (key == "window") {
      cfg.mech.rule.window = std::stoi(value);
    } else if (key == "fixed_price") {
      cfg.mech.rule.fixed_price = std::stod(value);
    } else if (key == "initial_price") {
      cfg.mech.rule.initial_price = std::stod(value);
    } else {
      throw std::invalid_argument("unknown config key: " + key);
    }
  }
  cfg.env.check();
  return cfg;
}

SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// ---------------------------------------------------------------------------
// Trials.

TrialMetrics compute_metrics(const std::vector<TradeEvent>& trades,
                             const std::vector<AgentType>& schedule,
                             double opt_value) {
  TrialMetrics m;
  m.opt_value = opt_value;
  m.n_trades = static_cast<int>(trades.size());
  if (!(opt_value > 0.0)) return m;
  std::map<AgentId, double> values;
  for (const AgentType& a : schedule) values[a.id] = a.value;
  double surplus = 0.0, take = 0.0;
  for (const TradeEvent& t : trades) {
    surplus += values.at(t.buyer) + values.at(t.seller);
    take += t.buyer_payment + t.seller_payment;
  }
  m.alloc_eff = surplus / opt_value;
  m.revenue = take / opt_value;
  m.net_eff = m.alloc_eff - m.revenue;
  return m;
}

namespace {

std::map<int, std::vector<AgentType>> arrivals_by_period(
    const std::vector<AgentType>& schedule, int* t_end) {
  std::map<int, std::vector<AgentType>> by_period;
  *t_end = 1;
  for (const AgentType& a : schedule) {
    by_period[a.arrival].push_back(a);
    *t_end = std::max(*t_end, a.departure);
  }
  return by_period;
}

MechanismRun chain_run(const MechanismConfig& mech,
                       const std::vector<AgentType>& schedule,
                       std::uint64_t seed, std::uint64_t trial,
                       double fallback_initial_price) {
  int t_end = 1;
  const auto by_period = arrivals_by_period(schedule, &t_end);
  const double p0 = mech.rule.initial_price != 0.0 ? mech.rule.initial_price
                                                   : fallback_initial_price;
  Chain chain(mech, seed, trial, p0);
  static const std::vector<AgentType> kNone;
  for (int t = 1; t <= t_end; ++t) {
    const auto it = by_period.find(t);
    chain.step(it != by_period.end() ? it->second : kNone);
  }
  return {chain.trades(), chain.ledger()};
}

// Per-period greedy matching with immediate settlement.
std::vector<TradeEvent> greedy_run(const std::vector<AgentType>& schedule) {
  std::vector<TradeEvent> trades;
  int t_end = 1;
  const auto by_period = arrivals_by_period(schedule, &t_end);
  std::map<AgentId, AgentType> active;
  for (int t = 1; t <= t_end; ++t) {
    if (const auto it = by_period.find(t); it != by_period.end()) {
      for (const AgentType& a : it->second) active.emplace(a.id, a);
    }
    std::vector<RuleOffer> bids, asks;
    for (const auto& [id, a] : active) {
      RuleOffer o{id, a.value, a.departure == t,
                  static_cast<std::uint64_t>(id)};
      (a.side == Side::buyer ? bids : asks).push_back(o);
    }
    const Clearing c = greedy_match(bids, asks);
    for (const auto& [buyer, seller] : c.pairs) {
      trades.push_back({buyer, seller, t, c.payments.at(buyer),
                        c.payments.at(seller)});
      active.erase(buyer);
      active.erase(seller);
    }
    std::erase_if(active,
                  [t](const auto& kv) { return kv.second.departure == t; });
  }
  return trades;
}

}  // namespace

MechanismRun run_mechanism(const std::string& mechanism, const SimConfig& cfg,
                           const std::vector<AgentType>& schedule,
                           std::uint64_t trial) {
  MechanismRun result;
  if (is_chain_mechanism(mechanism)) {
    MechanismConfig mech = cfg.mech;
    const RuleConfig named = rule_from_name(mechanism);
    mech.rule.variant = named.variant;
    mech.rule.price_variant = named.price_variant;
    result = chain_run(mech, schedule, cfg.env.seed, trial,
                       cfg.env.initial_mean);
  } else if (mechanism == "greedy") {
    result.trades = greedy_run(schedule);
  } else if (mechanism == "naive_tr_da") {
    result.trades = naive_dynamic(schedule).trades;
  } else if (mechanism == "zip") {
    result.trades =
        zip_market_run(schedule, cfg.env.max_patience, cfg.env.seed, trial)
            .trades;
  } else if (mechanism == "blum") {
    double w_min = kPosInf, w_max = 0.0;
    for (const AgentType& a : schedule) {
      w_min = std::min(w_min, std::abs(a.value));
      w_max = std::max(w_max, std::abs(a.value));
    }
    double price = w_min;
    if (w_min > 0.0 && w_max > w_min) {
      const BlumPriceRule rule = make_blum_rule(w_min, w_max);
      const RandomSource rng(cfg.env.seed, trial);
      price = blum_price(rule, rng.uniform(0, RandomSource::Purpose::blum));
    }
    MechanismConfig mech = cfg.mech;
    mech.rule = rule_from_name("fixed");
    mech.rule.fixed_price = price;
    result = chain_run(mech, schedule, cfg.env.seed, trial, price);
  } else if (mechanism == "offline") {
    const OfflineResult off = offline_optimal(schedule);
    for (const auto& [buyer, seller] : off.matching) {
      result.trades.push_back({buyer, seller, 0, 0.0, 0.0});
    }
  } else {
    throw std::invalid_argument("unknown mechanism: " + mechanism);
  }
  return result;
}

TrialResult run_trial(const std::string& mechanism, const SimConfig& cfg,
                      const std::vector<AgentType>& schedule,
                      std::uint64_t trial) {
  TrialResult result;
  result.trades = run_mechanism(mechanism, cfg, schedule, trial).trades;
  result.metrics = compute_metrics(result.trades, schedule,
                                   offline_optimal(schedule).value);
  return result;
}

// ---------------------------------------------------------------------------
// Comparison harness and CSV.

std::vector<ResultRow> compare(const std::vector<std::string>& mechanisms,
                               const SimConfig& cfg, int n_trials,
                               int n_threads) {
  std::vector<std::vector<ResultRow>> by_trial(n_trials);
  const auto work = [&](int first, int stride) {
    for (int trial = first; trial < n_trials; trial += stride) {
      const auto schedule =
          generate_schedule(cfg.env, static_cast<std::uint64_t>(trial));
      for (const std::string& mech : mechanisms) {
        ResultRow row;
        row.trial = trial;
        row.mechanism = mech;
        row.metrics =
            run_trial(mech, cfg, schedule, static_cast<std::uint64_t>(trial))
                .metrics;
        row.seed = cfg.env.seed;
        by_trial[trial].push_back(std::move(row));
      }
    }
  };
  if (n_threads <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> threads;
    for (int i = 0; i < n_threads; ++i) threads.emplace_back(work, i, n_threads);
    for (std::thread& t : threads) t.join();
  }
  std::vector<ResultRow> rows;
  for (auto& group : by_trial) {
    for (ResultRow& row : group) rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string to_csv(const std::vector<ResultRow>& rows) {
  std::string out =
      "trial,mechanism,alloc_eff,net_eff,revenue,n_trades,opt_value,seed\n";
  for (const ResultRow& r : rows) {
    out += std::to_string(r.trial) + ',' + r.mechanism + ',' +
           format_double(r.metrics.alloc_eff) + ',' +
           format_double(r.metrics.net_eff) + ',' +
           format_double(r.metrics.revenue) + ',' +
           std::to_string(r.metrics.n_trades) + ',' +
           format_double(r.metrics.opt_value) + ',' + std::to_string(r.seed) +
           '\n';
  }
  return out;
}

std::vector<ResultRow> parse_csv(const std::string& text) {
  std::vector<ResultRow> rows;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) return rows;  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string field;
    ResultRow r;
    std::getline(fields, field, ',');
    r.trial = std::stoi(field);
    std::getline(fields, r.mechanism, ',');
    std::getline(fields, field, ',');
    r.metrics.alloc_eff = std::stod(field);
    std::getline(fields, field, ',');
    r.metrics.net_eff = std::stod(field);
    std::getline(fields, field, ',');
    r.metrics.revenue = std::stod(field);
    std::getline(fields, field, ',');
    r.metrics.n_trades = std::stoi(field);
    std::getline(fields, field, ',');
    r.metrics.opt_value = std::stod(field);
    std::getline(fields, field, ',');
    r.seed = std::stoull(field);
    rows.push_back(std::move(r));
  }
  return rows;
}

MeanWithError summarize(const std::vector<double>& samples) {
  MeanWithError out;
  if (samples.empty()) return out;
  double sum = 0.0;
  for (double s : samples) sum += s;
  out.mean = sum / samples.size();
  if (samples.size() >= 2) {
    double ss = 0.0;
    for (double s : samples) ss += (s - out.mean) * (s - out.mean);
    out.se = std::sqrt(ss / (samples.size() - 1) /
                       static_cast<double>(samples.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tuning.

double tune_grid(const std::function<double(double)>& objective, double lo,
                 double hi, int n_samples, int n_passes) {
  if (!(hi > lo) || n_samples < 2) {
    throw std::invalid_argument("tune requires hi > lo and >= 2 samples");
  }
  double best = lo;
  for (int pass = 0; pass < n_passes; ++pass) {
    std::vector<double> grid(n_samples), value(n_samples);
    for (int k = 0; k < n_samples; ++k) {
      grid[k] = lo + (hi - lo) * k / (n_samples - 1);
      value[k] = objective(grid[k]);
    }
    // Smooth each sample with its immediate neighbors.
    std::vector<double> smoothed(n_samples);
    for (int k = 0; k < n_samples; ++k) {
      double sum = value[k];
      int count = 1;
      if (k > 0) {
        sum += value[k - 1];
        ++count;
      }
      if (k + 1 < n_samples) {
        sum += value[k + 1];
        ++count;
      }
      smoothed[k] = sum / count;
    }
    const int arg = static_cast<int>(
        std::max_element(smoothed.begin(), smoothed.end()) - smoothed.begin());
    best = grid[arg];
    lo = grid[std::max(0, arg - 1)];
    hi = grid[std::min(n_samples - 1, arg + 1)];
    if (!(hi > lo)) break;
  }
  return best;
}

void apply_param(SimConfig& cfg, const std::string& name, double value) {
  if (name == "tau") {
    cfg.mech.tau = std::max<int>(1, std::llround(value));
  } else if (name == "window") {
    cfg.mech.rule.window = std::max<int>(0, std::llround(value));
  } else if (name == "ewma_lambda") {
    cfg.mech.rule.lambda = value;
  } else if (name == "fixed_price") {
    cfg.mech.rule.fixed_price = value;
  } else if (name == "initial_price") {
    cfg.mech.rule.initial_price = value;
  } else if (name == "arrival_intensity") {
    cfg.env.arrival_intensity = value;
  } else if (name == "volatility") {
    cfg.env.volatility = value;
  } else {
    throw std::invalid_argument("unknown tunable parameter: " + name);
  }
}

double tune(const std::string& mechanism, const std::string& param, double lo,
            double hi, const SimConfig& cfg, int n_samples, int n_trials,
            int n_passes) {
  const auto objective = [&](double value) {
    SimConfig local = cfg;
    apply_param(local, param, value);
    double total = 0.0;
    for (int trial = 0; trial < n_trials; ++trial) {
      const auto schedule =
          generate_schedule(local.env, static_cast<std::uint64_t>(trial));
      total += run_trial(mechanism, local, schedule,
                         static_cast<std::uint64_t>(trial))
                   .metrics.alloc_eff;
    }
    return total / n_trials;
  };
  return tune_grid(objective, lo, hi, n_samples, n_passes);
}

}  // namespace chainda
