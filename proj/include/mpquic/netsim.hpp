#pragma once

// Deterministic discrete-event network simulation: an event loop ordered by
// (time, insertion sequence), seeded per-link random streams, and one-way
// links driven either by a fixed rate or by a delivery-opportunity trace.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <queue>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mpquic/core.hpp"

namespace mpquic {

// ---------------------------------------------------------------------------
// Event loop

class EventLoop {
 public:
  using Callback = std::function<void()>;

  Micros now() const { return now_; }
  bool empty() const { return queue_.empty(); }
  std::size_t pending() const { return queue_.size(); }
  std::uint64_t processed() const { return processed_; }

  void schedule(Micros at, Callback cb) {
    if (at < now_) {
      throw InvariantViolation("event scheduled in the past: " + std::to_string(at.count()) +
                               "us < " + std::to_string(now_.count()) + "us");
    }
    queue_.push(Event{at, seq_++, std::move(cb)});
  }

  // Processes events in (time, insertion) order until the queue drains, an
  // event later than `until` is next, or stop() is called.
  void run(std::optional<Micros> until = std::nullopt) {
    stopped_ = false;
    while (!queue_.empty() && !stopped_) {
      const Event& top = queue_.top();
      if (until && top.time > *until) {
        now_ = *until;
        return;
      }
      Event ev = top;
      queue_.pop();
      now_ = ev.time;
      ++processed_;
      ev.cb();
    }
  }

  void stop() { stopped_ = true; }

 private:
  struct Event {
    Micros time;
    std::uint64_t seq;
    Callback cb;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.seq > b.seq;
    }
  };

  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  Micros now_{0};
  std::uint64_t seq_ = 0;
  std::uint64_t processed_ = 0;
  bool stopped_ = false;
};

// ---------------------------------------------------------------------------
// Random streams

// splitmix64 finaliser; used to derive independent per-link seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class SimRng {
 public:
  SimRng(std::uint64_t seed, std::uint64_t stream) : engine_(mix_seed(seed ^ mix_seed(stream))) {}

  // Uniform in [0, 1) from the top 53 bits; identical on every platform.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Delivery-opportunity traces (one millisecond timestamp per line)

struct TraceParseError : ConfigError {
  using ConfigError::ConfigError;
};

struct TraceSchedule {
  std::vector<std::int64_t> opportunities_ms;  // non-decreasing

  std::int64_t period_ms() const { return opportunities_ms.empty() ? 0 : opportunities_ms.back(); }

  // Time of the k-th opportunity counting across wrap-arounds.
  Micros at(std::uint64_t k) const {
    const std::uint64_t n = opportunities_ms.size();
    const auto cycle = static_cast<std::int64_t>(k / n);
    return Micros{(cycle * period_ms() + opportunities_ms[k % n]) * 1000};
  }

  // Index of the first opportunity at or after t, not earlier than `from`.
  // at() is non-decreasing in k, so once at(from) < t the answer lies in
  // cycle floor(t / period) - 1 or later.
  std::uint64_t next_at_or_after(Micros t, std::uint64_t from) const {
    if (at(from) >= t) return from;
    const std::uint64_t n = opportunities_ms.size();
    const std::int64_t period_us = period_ms() * 1000;
    const auto target_cycle = static_cast<std::uint64_t>(t.count() / period_us);
    std::uint64_t cycle = std::max(from / n, target_cycle == 0 ? 0 : target_cycle - 1);
    for (;; ++cycle) {
      const std::int64_t rest_us = t.count() - static_cast<std::int64_t>(cycle) * period_us;
      const std::int64_t offset_ms = rest_us <= 0 ? 0 : (rest_us + 999) / 1000;
      auto it = std::lower_bound(opportunities_ms.begin(), opportunities_ms.end(), offset_ms);
      if (it != opportunities_ms.end()) {
        return cycle * n + static_cast<std::uint64_t>(it - opportunities_ms.begin());
      }
    }
  }
};

inline TraceSchedule parse_trace(std::istream& in, const std::string& name = "<trace>") {
  TraceSchedule trace;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t pos = 0;
    long long value = -1;
    try {
      value = std::stoll(line, &pos, 10);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || line.find_first_not_of(" \t", pos) != std::string::npos || value < 0 ||
        line.find_first_of("+-") != std::string::npos) {
      throw TraceParseError(name + ":" + std::to_string(line_no) +
                            ": expected a non-negative integer millisecond timestamp, got '" +
                            line + "'");
    }
    if (!trace.opportunities_ms.empty() && value < trace.opportunities_ms.back()) {
      throw TraceParseError(name + ":" + std::to_string(line_no) +
                            ": timestamps must be non-decreasing");
    }
    trace.opportunities_ms.push_back(value);
  }
  if (trace.opportunities_ms.empty()) {
    throw TraceParseError(name + ": trace contains no delivery opportunities");
  }
  if (trace.period_ms() <= 0) {
    throw TraceParseError(name + ": final timestamp must be positive (it is the replay period)");
  }
  return trace;
}

inline TraceSchedule load_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw TraceParseError("cannot open trace file " + path.string());
  return parse_trace(in, path.string());
}

// ---------------------------------------------------------------------------
// One direction of a path

struct LinkParams {
  Micros one_way_delay{0};
  double rate_mbps = 0;  // 0: no serialization limit
  std::optional<TraceSchedule> trace;
  double loss_rate = 0;
  std::size_t queue_capacity = 64;
};

enum class TransmitOutcome { Delivered, QueueDrop, RandomLoss };

struct TransmitResult {
  TransmitOutcome outcome = TransmitOutcome::Delivered;
  std::optional<Micros> arrival;
};

struct LinkStats {
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t queue_drops = 0;
  std::uint64_t random_losses = 0;
  ByteCount bytes_sent = 0;
};

class Link {
 public:
  Link(LinkParams params, SimRng rng) : p_(std::move(params)), rng_(rng) {
    if (p_.loss_rate < 0 || p_.loss_rate >= 1) throw ConfigError("loss_rate must be in [0, 1)");
    if (p_.rate_mbps < 0) throw ConfigError("rate must be non-negative");
    if (p_.queue_capacity == 0) throw ConfigError("queue capacity must be positive");
  }

  // FIFO departure: rate mode serialises behind the previous packet, trace
  // mode takes the next unused delivery opportunity. A packet is dropped when
  // the backlog is full, and independently with probability loss_rate.
  TransmitResult transmit(ByteCount size, Micros now) {
    ++stats_.sent;
    stats_.bytes_sent += size;
    const bool lose = p_.loss_rate > 0 && rng_.uniform() < p_.loss_rate;

    while (!departures_.empty() && departures_.front() <= now) departures_.pop_front();

    Micros departure = now;
    if (p_.trace) {
      if (departures_.size() >= p_.queue_capacity) return queue_drop();
      next_opportunity_ = p_.trace->next_at_or_after(now, next_opportunity_);
      departure = p_.trace->at(next_opportunity_);
      ++next_opportunity_;
      departures_.push_back(departure);
    } else if (p_.rate_mbps > 0) {
      if (departures_.size() >= p_.queue_capacity) return queue_drop();
      const Micros start = std::max(now, busy_until_);
      departure = start + serialization_time(size);
      busy_until_ = departure;
      departures_.push_back(departure);
    }

    if (lose) {
      ++stats_.random_losses;
      return {TransmitOutcome::RandomLoss, std::nullopt};
    }
    ++stats_.delivered;
    return {TransmitOutcome::Delivered, departure + p_.one_way_delay};
  }

  Micros serialization_time(ByteCount size) const {
    if (p_.rate_mbps <= 0) return Micros{0};
    return Micros{static_cast<std::int64_t>(
        std::llround(static_cast<double>(size) * 8.0 / p_.rate_mbps))};
  }

  std::size_t backlog(Micros now) const {
    std::size_t n = 0;
    for (Micros d : departures_) n += d > now;
    return n;
  }

  const LinkParams& params() const { return p_; }
  const LinkStats& stats() const { return stats_; }

 private:
  TransmitResult queue_drop() {
    ++stats_.queue_drops;
    return {TransmitOutcome::QueueDrop, std::nullopt};
  }

  LinkParams p_;
  SimRng rng_;
  std::deque<Micros> departures_;
  Micros busy_until_{0};
  std::uint64_t next_opportunity_ = 0;
  LinkStats stats_;
};

inline std::optional<Micros> link_transmit(Link& link, ByteCount size, Micros now) {
  return link.transmit(size, now).arrival;
}

}  // namespace mpquic
