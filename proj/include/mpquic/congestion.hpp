#pragma once

// Per-path congestion controllers. Each path owns an independent instance.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "mpquic/core.hpp"

namespace mpquic {

enum class CcAlgorithm { Cubic, NewReno };

inline const char* to_string(CcAlgorithm a) { return a == CcAlgorithm::Cubic ? "cubic" : "newreno"; }

struct CcConfig {
  CcAlgorithm algorithm = CcAlgorithm::Cubic;
  ByteCount max_datagram_size = 1350;
  std::uint32_t initial_window_packets = 10;
  double cubic_c = 0.4;
  double cubic_beta = 0.7;
  // Slow-start exit on ACK-train length or per-round RTT increase.
  bool hystart = true;
  // Adds the Reno-friendly lower bound to the cubic window.
  bool reno_friendly = false;
};

struct CongestionState {
  CcAlgorithm algorithm = CcAlgorithm::Cubic;
  double cwnd = 0;      // bytes
  double ssthresh = std::numeric_limits<double>::infinity();
  double w_max = 0;     // bytes; window before the last reduction
  std::optional<Micros> epoch_start;
  double cubic_c = 0.4;
  double cubic_beta = 0.7;
};

// Time (seconds) for the cubic curve to climb back to w_max after a reduction.
inline double cubic_k(double w_max_segments, double beta, double c) {
  return std::cbrt(w_max_segments * (1.0 - beta) / c);
}

// W(t) = C (t - K)^3 + w_max, segments.
inline double cubic_window(double t_seconds, double k_seconds, double w_max_segments, double c) {
  const double d = t_seconds - k_seconds;
  return c * d * d * d + w_max_segments;
}

class CongestionController {
 public:
  explicit CongestionController(CcConfig cfg = {}) : cfg_(cfg) {
    state_.algorithm = cfg.algorithm;
    state_.cwnd = static_cast<double>(cfg.initial_window_packets * cfg.max_datagram_size);
    state_.cubic_c = cfg.cubic_c;
    state_.cubic_beta = cfg.algorithm == CcAlgorithm::Cubic ? cfg.cubic_beta : 0.5;
    state_.cwnd = std::max(state_.cwnd, min_window());
  }

  ByteCount cwnd() const { return static_cast<ByteCount>(state_.cwnd); }
  const CongestionState& state() const { return state_; }
  bool in_slow_start() const { return state_.cwnd < state_.ssthresh; }
  bool exited_slow_start_by_hystart() const { return hystart_exited_; }

  // Once per ACK frame that acknowledged packets on this path. Drives the
  // slow-start round bookkeeping and the ACK-train detector.
  void on_ack_event(Micros largest_acked_sent_time, Micros now, Micros min_rtt) {
    if (!cfg_.hystart || !in_slow_start()) return;
    if (!round_started_ || largest_acked_sent_time >= round_start_) {
      round_started_ = true;
      round_start_ = now;
      last_ack_ = now;
      round_min_rtt_.reset();
      round_samples_ = 0;
    }
    if (state_.cwnd < kHystartLowWindow * mss() || min_rtt.count() <= 0) return;
    if (now - last_ack_ <= kHystartAckDelta) {
      last_ack_ = now;
      if (now - round_start_ >= min_rtt / 2) exit_slow_start();
    }
  }

  void on_rtt_sample(Micros sample, Micros min_rtt) {
    if (!cfg_.hystart || !in_slow_start()) return;
    round_min_rtt_ = round_min_rtt_ ? std::min(*round_min_rtt_, sample) : sample;
    if (round_samples_ < kHystartMinSamples) {
      ++round_samples_;
      return;
    }
    if (state_.cwnd < kHystartLowWindow * mss()) return;
    const Micros thresh = std::clamp(min_rtt / 8, Micros{4'000}, Micros{16'000});
    if (*round_min_rtt_ >= min_rtt + thresh) exit_slow_start();
  }

  // Per acknowledged ack-eliciting packet.
  void on_packet_acked(ByteCount bytes, Micros sent_time, Micros now, Micros smoothed_rtt) {
    if (recovery_start_ && sent_time <= *recovery_start_) return;
    const double acked = static_cast<double>(bytes);
    if (in_slow_start()) {
      state_.cwnd += acked;
      return;
    }
    if (state_.algorithm == CcAlgorithm::NewReno) {
      state_.cwnd += mss() * acked / state_.cwnd;
      return;
    }
    cubic_avoidance(acked, now, smoothed_rtt);
  }

  // Once per loss event; losses of packets sent before the current recovery
  // period started do not reduce the window again.
  void on_loss(Micros largest_lost_sent_time, Micros now) {
    if (recovery_start_ && largest_lost_sent_time <= *recovery_start_) return;
    recovery_start_ = now;
    state_.w_max = state_.cwnd;
    state_.cwnd = std::max(state_.cwnd * state_.cubic_beta, min_window());
    state_.ssthresh = state_.cwnd;
    state_.epoch_start.reset();
  }

 private:
  static constexpr double kHystartLowWindow = 16;
  static constexpr std::uint32_t kHystartMinSamples = 8;
  static constexpr Micros kHystartAckDelta{2'000};

  double mss() const { return static_cast<double>(cfg_.max_datagram_size); }
  double min_window() const { return 2 * mss(); }

  void exit_slow_start() {
    state_.ssthresh = state_.cwnd;
    hystart_exited_ = true;
  }

  void cubic_avoidance(double acked, Micros now, Micros smoothed_rtt) {
    if (!state_.epoch_start) {
      state_.epoch_start = now;
      if (state_.w_max <= state_.cwnd) {
        k_ = 0;
        origin_ = state_.cwnd;
      } else {
        k_ = std::cbrt((state_.w_max - state_.cwnd) / mss() / state_.cubic_c);
        origin_ = state_.w_max;
      }
      w_est_ = state_.cwnd;
    }
    const double t = std::chrono::duration<double>(now - *state_.epoch_start).count();
    const double rtt = std::chrono::duration<double>(smoothed_rtt).count();
    const double origin_seg = origin_ / mss();
    double target = cubic_window(t + rtt, k_, origin_seg, state_.cubic_c) * mss();
    target = std::clamp(target, state_.cwnd, 1.5 * state_.cwnd);

    if (cfg_.reno_friendly) {
      const double beta = state_.cubic_beta;
      const double alpha = 3.0 * (1.0 - beta) / (1.0 + beta);
      w_est_ += alpha * mss() * acked / state_.cwnd;
      if (cubic_window(t, k_, origin_seg, state_.cubic_c) * mss() < w_est_) {
        state_.cwnd = std::max(state_.cwnd, w_est_);
        return;
      }
    }
    state_.cwnd += (target - state_.cwnd) * acked / state_.cwnd;
  }

  CcConfig cfg_;
  CongestionState state_;
  std::optional<Micros> recovery_start_;
  double k_ = 0;
  double origin_ = 0;
  double w_est_ = 0;

  bool round_started_ = false;
  Micros round_start_{0};
  Micros last_ack_{0};
  std::optional<Micros> round_min_rtt_;
  std::uint32_t round_samples_ = 0;
  bool hystart_exited_ = false;
};

// Thin free-function forms.
inline void cc_on_ack(CongestionController& cc, ByteCount acked_bytes, Micros sent_time, Micros now,
                      Micros smoothed_rtt) {
  cc.on_packet_acked(acked_bytes, sent_time, now, smoothed_rtt);
}
inline void cc_on_loss(CongestionController& cc, Micros largest_lost_sent_time, Micros now) {
  cc.on_loss(largest_lost_sent_time, now);
}

}  // namespace mpquic
