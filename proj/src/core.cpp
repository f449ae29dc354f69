#include "chainda/core.hpp"

#include <algorithm>
#include <cmath>

namespace chainda {

void validate_agent(const AgentType& agent, int max_patience) {
  if (agent.arrival < 1) {
    throw std::invalid_argument("agent " + std::to_string(agent.id) +
                                ": arrival must be >= 1");
  }
  if (agent.departure < agent.arrival) {
    throw std::invalid_argument("agent " + std::to_string(agent.id) +
                                ": departure before arrival");
  }
  if (agent.departure - agent.arrival > max_patience) {
    throw std::invalid_argument("agent " + std::to_string(agent.id) +
                                ": patience exceeds K");
  }
  if (agent.side == Side::buyer && !(agent.value > 0.0)) {
    throw std::invalid_argument("agent " + std::to_string(agent.id) +
                                ": buyer value must be positive");
  }
  if (agent.side == Side::seller && agent.value > 0.0) {
    throw std::invalid_argument("agent " + std::to_string(agent.id) +
                                ": seller value must be non-positive");
  }
}

void History::append(const HistoryEntry& e) {
  if (seen_.count(e.id) > 0) {
    throw std::invalid_argument("history: offer " + std::to_string(e.id) +
                                " entered twice");
  }
  if (!entries_.empty() && e.entry_period < entries_.back().entry_period) {
    throw std::invalid_argument("history: entry periods must be non-decreasing");
  }
  seen_.insert(e.id);
  entries_.push_back(e);
}

std::vector<HistoryEntry> History::consume_new() {
  std::vector<HistoryEntry> out(entries_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                entries_.end());
  cursor_ = entries_.size();
  return out;
}

std::vector<HistoryEntry> History::last(std::size_t count) const {
  std::size_t n = std::min(count, entries_.size());
  return std::vector<HistoryEntry>(entries_.end() - static_cast<std::ptrdiff_t>(n),
                                   entries_.end());
}

std::vector<HistoryEntry> History::entered_between(int from, int to) const {
  std::vector<HistoryEntry> out;
  for (const auto& e : entries_) {
    if (e.entry_period >= from && e.entry_period <= to) out.push_back(e);
  }
  return out;
}

namespace {

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t RandomSource::key(int period, Purpose purpose,
                                std::uint64_t extra) const {
  std::uint64_t h = mix64(seed_);
  h = mix64(h ^ trial_);
  h = mix64(h ^ static_cast<std::uint64_t>(period));
  h = mix64(h ^ static_cast<std::uint64_t>(purpose));
  h = mix64(h ^ extra);
  return h;
}

double RandomSource::uniform(int period, Purpose purpose,
                             std::uint64_t extra) const {
  // 53 high bits -> [0,1)
  return static_cast<double>(key(period, purpose, extra) >> 11) * 0x1.0p-53;
}

std::uint64_t RandomSource::rank(int period, Purpose purpose, AgentId id) const {
  return key(period, purpose, static_cast<std::uint64_t>(static_cast<std::int64_t>(id)));
}

void OrderBook::insert(const Offer& offer) {
  if (index_.count(offer.agent.id) > 0) {
    throw std::invalid_argument("order book: duplicate id " +
                                std::to_string(offer.agent.id));
  }
  index_[offer.agent.id] = offers_.size();
  offers_.push_back(offer);
}

Offer& OrderBook::at(AgentId id) { return offers_.at(index_.at(id)); }
const Offer& OrderBook::at(AgentId id) const { return offers_.at(index_.at(id)); }

std::vector<AgentId> OrderBook::active_ids() const {
  std::vector<AgentId> out;
  for (const auto& o : offers_) {
    if (o.state == OfferState::active) out.push_back(o.agent.id);
  }
  return out;
}

std::vector<AgentId> OrderBook::expiring(int period) const {
  std::vector<AgentId> out;
  for (const auto& o : offers_) {
    if (o.state == OfferState::active && o.agent.departure == period) {
      out.push_back(o.agent.id);
    }
  }
  return out;
}

void OrderBook::mark(AgentId id, OfferState state) {
  at(id).state = state;
}

std::size_t OrderBook::active_count() const {
  std::size_t n = 0;
  for (const auto& o : offers_) {
    if (o.state == OfferState::active) ++n;
  }
  return n;
}

}  // namespace chainda
