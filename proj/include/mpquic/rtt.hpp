#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>

#include "mpquic/core.hpp"

namespace mpquic {

inline constexpr Micros kInitialRtt{333'000};

// Per-path RTT estimator state (RFC 9002 section 5).
struct RttStats {
  Micros latest_rtt{0};
  Micros smoothed_rtt = kInitialRtt;
  Micros rttvar = kInitialRtt / 2;
  Micros min_rtt{0};
  bool has_sample = false;
};

inline void update_rtt(RttStats& rtt, Micros sample, Micros ack_delay, bool first_sample) {
  if (sample.count() <= 0) throw std::invalid_argument("RTT sample must be positive");
  rtt.latest_rtt = sample;
  if (first_sample) {
    rtt.min_rtt = sample;
    rtt.smoothed_rtt = sample;
    rtt.rttvar = sample / 2;
    rtt.has_sample = true;
    return;
  }
  rtt.min_rtt = std::min(rtt.min_rtt, sample);
  Micros adjusted = sample;
  if (sample >= rtt.min_rtt + ack_delay) adjusted = sample - ack_delay;
  const Micros deviation = rtt.smoothed_rtt > adjusted ? rtt.smoothed_rtt - adjusted
                                                       : adjusted - rtt.smoothed_rtt;
  rtt.rttvar = (3 * rtt.rttvar + deviation) / 4;
  rtt.smoothed_rtt = (7 * rtt.smoothed_rtt + adjusted) / 8;
  rtt.has_sample = true;
}

// Overload that infers first_sample from the estimator's state.
inline void update_rtt(RttStats& rtt, Micros sample, Micros ack_delay) {
  update_rtt(rtt, sample, ack_delay, !rtt.has_sample);
}

}  // namespace mpquic
