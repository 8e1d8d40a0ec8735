#pragma once

// Sender side (ACK receiver) of a multipath connection.
//
// Packet numbers come from one connection-wide counter (SPNS) or one counter
// per path (MPNS). Either way each path keeps its own sending history, unacked
// list, RTT estimator and congestion controller. Loss detection measures the
// packet threshold in positions along the path's own history, so numbers that
// were consumed by other paths never count towards it.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mpquic/congestion.hpp"
#include "mpquic/core.hpp"
#include "mpquic/rtt.hpp"

namespace mpquic {

struct LossConfig {
  std::uint32_t packet_threshold = 3;  // kPacketThreshold
  std::uint32_t time_threshold_num = 9;
  std::uint32_t time_threshold_den = 8;
  Micros granularity{1'000};
};

struct PathSendState {
  PathId path = 0;
  std::vector<PacketNumber> history;
  std::set<PacketNumber> unacked;  // unacknowledged and not declared lost
  std::optional<PacketNumber> largest_acked_on_path;
  std::uint64_t largest_acked_index = 0;  // history position of largest_acked_on_path
  RttStats rtt;
  ByteCount bytes_in_flight = 0;
  CongestionController cc;
  std::optional<Micros> loss_time;
  Micros last_send_time{0};
  Micros last_eliciting_send_time{0};
  std::uint32_t pto_count = 0;
};

struct RttSample {
  PathId path = 0;       // path the sample is attributed to (the ACK's arrival path)
  PathId sent_path = 0;  // path that carried the largest acknowledged packet
  Micros value{0};
  Micros ack_delay{0};
  // The largest acknowledged packet was sent on a different path than the ACK
  // arrived on; the sample mixes two paths and is not fed to any estimator.
  bool mixed = false;
};

struct AckProcessResult {
  std::vector<SentPacketRecord> newly_acked;
  std::optional<RttSample> rtt_sample;
  std::vector<SentPacketRecord> lost;
  // Packets acknowledged after having been declared lost.
  std::vector<SentPacketRecord> spurious;
};

struct LossCounters {
  std::uint64_t packet_threshold = 0;
  std::uint64_t time_threshold = 0;
  std::uint64_t spurious = 0;
  std::uint64_t pto = 0;
};

// Scheduler-facing snapshot of one path.
struct PathView {
  PathId id = 0;
  ByteCount bytes_in_flight = 0;
  ByteCount cwnd = 0;
  std::optional<Micros> smoothed_rtt;  // empty until the first sample
  bool validated = true;
};

struct SenderConfig {
  LossConfig loss;
  CcConfig cc;
  Micros max_ack_delay{25'000};
};

class PacketSender {
 public:
  PacketSender(SpaceMode mode, std::size_t num_paths, SenderConfig cfg = {})
      : mode_(mode), cfg_(cfg) {
    if (num_paths == 0) throw ConfigError("sender needs at least one path");
    if (cfg_.loss.packet_threshold < 1) throw ConfigError("packet_threshold must be >= 1");
    if (cfg_.loss.time_threshold_den == 0) throw ConfigError("time threshold denominator is 0");
    paths_.reserve(num_paths);
    for (std::size_t i = 0; i < num_paths; ++i) {
      PathSendState ps{.path = static_cast<PathId>(i), .cc = CongestionController(cfg_.cc)};
      paths_.push_back(std::move(ps));
    }
    spaces_.resize(mode_ == SpaceMode::SPNS ? 1 : num_paths);
  }

  SpaceMode mode() const { return mode_; }
  std::size_t num_paths() const { return paths_.size(); }
  std::size_t space_of(PathId path) const { return mode_ == SpaceMode::SPNS ? 0 : path; }

  PacketNumber next_packet_number(PathId path) {
    check_path(path);
    Space& s = spaces_[space_of(path)];
    if (s.next_pn > kMaxPacketNumber) throw ProtocolError("packet number space exhausted");
    return s.next_pn++;
  }

  // Registers a sent packet; fills in record.path and record.path_history_index.
  const SentPacketRecord& on_packet_sent(PathId path, SentPacketRecord record) {
    check_path(path);
    PathSendState& ps = paths_[path];
    Space& s = spaces_[space_of(path)];
    if (record.pn > kMaxPacketNumber) throw InvariantViolation("packet number out of range");
    if (s.sent.contains(record.pn)) {
      throw InvariantViolation("packet number " + std::to_string(record.pn) + " sent twice");
    }
    if (!ps.history.empty() && record.send_time < ps.last_send_time) {
      throw InvariantViolation("send time goes backwards on path " + std::to_string(path));
    }
    record.path = path;
    record.path_history_index = ps.history.size();
    s.sent.insert(record.pn);
    s.next_pn = std::max(s.next_pn, record.pn + 1);
    ps.history.push_back(record.pn);
    ps.unacked.insert(record.pn);
    ps.last_send_time = record.send_time;
    if (record.ack_eliciting) {
      ps.bytes_in_flight += record.size;
      ps.last_eliciting_send_time = record.send_time;
    }
    s.records.emplace(record.pn, record);
    auto [it, inserted] = s.outstanding.emplace(record.pn, record);
    return it->second;
  }

  AckProcessResult on_ack_received(PathId arrival_path, const AckFrame& frame, Micros now) {
    check_path(arrival_path);
    try {
      validate(frame);
    } catch (const InvariantViolation& e) {
      throw ProtocolError(std::string("malformed ACK frame: ") + e.what());
    }
    std::size_t s_idx = 0;
    if (mode_ == SpaceMode::MPNS) {
      if (frame.space >= spaces_.size()) {
        throw ProtocolError("ACK for unknown space " + std::to_string(frame.space));
      }
      s_idx = frame.space;
    }
    Space& s = spaces_[s_idx];
    for (const AckRange& r : frame.ranges) {
      if (!s.sent.contains_range(r)) {
        throw ProtocolError("ACK covers never-sent packet numbers up to " +
                            std::to_string(r.largest));
      }
    }

    AckProcessResult result;
    for (const AckRange& r : frame.ranges) {
      auto it = s.outstanding.lower_bound(r.smallest);
      while (it != s.outstanding.end() && it->first <= r.largest) {
        const SentPacketRecord& rec = it->second;
        PathSendState& ps = paths_[rec.path];
        ps.unacked.erase(rec.pn);
        if (rec.ack_eliciting) ps.bytes_in_flight -= rec.size;
        result.newly_acked.push_back(rec);
        it = s.outstanding.erase(it);
      }
      auto lit = s.declared_lost.lower_bound(r.smallest);
      while (lit != s.declared_lost.end() && lit->first <= r.largest) {
        result.spurious.push_back(lit->second);
        ++counters_.spurious;
        lit = s.declared_lost.erase(lit);
      }
    }
    if (!s.largest_acked || frame.largest_acked > *s.largest_acked) {
      s.largest_acked = frame.largest_acked;
    }

    // A path's RTT sample needs the frame's largest acknowledged packet to be
    // newly acknowledged by an ACK arriving on that same path. Under SPNS the
    // packet has usually been covered earlier by an ACK on a faster path, so
    // coverage is tracked per arrival path, independently of the acked state.
    RangeSet& seen = covered_[{arrival_path, s_idx}];
    const bool largest_new = !seen.contains(frame.largest_acked);
    bool new_eliciting = false;
    for (const AckRange& r : frame.ranges) {
      for (const AckRange& gap : seen.missing(r)) {
        for (auto it = s.records.lower_bound(gap.smallest);
             it != s.records.end() && it->first <= gap.largest; ++it) {
          if (it->second.ack_eliciting) {
            new_eliciting = true;
            break;
          }
        }
        if (new_eliciting) break;
      }
      if (new_eliciting) break;
    }
    for (const AckRange& r : frame.ranges) seen.insert(r);

    if (largest_new && new_eliciting) {
      const SentPacketRecord& lr = s.records.at(frame.largest_acked);
      const Micros sample = now - lr.send_time;
      const Micros ack_delay = std::min(frame.ack_delay, cfg_.max_ack_delay);
      if (sample.count() > 0) {
        RttSample rs{.path = arrival_path, .sent_path = lr.path, .value = sample,
                     .ack_delay = ack_delay};
        if (mode_ == SpaceMode::MPNS) {
          rs.path = static_cast<PathId>(s_idx);
        } else if (lr.path != arrival_path) {
          rs.mixed = true;  // only possible without per-path anchoring
        }
        if (!rs.mixed) {
          PathSendState& ps = paths_[rs.path];
          update_rtt(ps.rtt, sample, ack_delay);
          ps.cc.on_rtt_sample(sample, ps.rtt.min_rtt);
        }
        result.rtt_sample = rs;
      }
    }

    // Per-path bookkeeping for the paths whose packets were acknowledged.
    std::vector<bool> touched(paths_.size(), false);
    std::vector<Micros> largest_sent(paths_.size(), Micros{0});
    for (const SentPacketRecord& rec : result.newly_acked) {
      PathSendState& ps = paths_[rec.path];
      touched[rec.path] = true;
      largest_sent[rec.path] = std::max(largest_sent[rec.path], rec.send_time);
      if (!ps.largest_acked_on_path || rec.path_history_index > ps.largest_acked_index) {
        ps.largest_acked_on_path = rec.pn;
        ps.largest_acked_index = rec.path_history_index;
      }
    }
    for (std::size_t p = 0; p < paths_.size(); ++p) {
      if (!touched[p]) continue;
      PathSendState& ps = paths_[p];
      ps.pto_count = 0;
      ps.cc.on_ack_event(largest_sent[p], now, ps.rtt.min_rtt);
    }
    for (const SentPacketRecord& rec : result.newly_acked) {
      if (!rec.ack_eliciting) continue;
      PathSendState& ps = paths_[rec.path];
      ps.cc.on_packet_acked(rec.size, rec.send_time, now, ps.rtt.smoothed_rtt);
    }
    for (std::size_t p = 0; p < paths_.size(); ++p) {
      if (!touched[p]) continue;
      auto lost = detect_losses(static_cast<PathId>(p), now);
      result.lost.insert(result.lost.end(), lost.begin(), lost.end());
    }
    return result;
  }

  // Declares lost every unacked packet on `path` that was sent at least
  // packet_threshold positions before the path's largest acknowledged packet,
  // or that was sent before it and long enough ago. Arms the path's loss_time
  // for the earliest remaining candidate.
  std::vector<SentPacketRecord> detect_losses(PathId path, Micros now) {
    check_path(path);
    PathSendState& ps = paths_[path];
    ps.loss_time.reset();
    if (!ps.largest_acked_on_path) return {};
    Space& s = spaces_[space_of(path)];

    const Micros delay = loss_delay(ps);
    const std::uint64_t top = ps.largest_acked_index;
    std::vector<SentPacketRecord> lost;
    for (auto it = ps.unacked.begin(); it != ps.unacked.end();) {
      const SentPacketRecord& rec = s.outstanding.at(*it);
      if (rec.path_history_index >= top) break;
      const bool by_count = rec.path_history_index + cfg_.loss.packet_threshold <= top;
      const bool by_time = rec.send_time + delay <= now;
      if (by_count || by_time) {
        by_count ? ++counters_.packet_threshold : ++counters_.time_threshold;
        if (rec.ack_eliciting) ps.bytes_in_flight -= rec.size;
        lost.push_back(rec);
        s.declared_lost.emplace(rec.pn, rec);
        s.outstanding.erase(rec.pn);
        it = ps.unacked.erase(it);
        continue;
      }
      const Micros when = rec.send_time + delay;
      if (!ps.loss_time || when < *ps.loss_time) ps.loss_time = when;
      ++it;
    }
    if (!lost.empty()) {
      Micros newest{0};
      for (const auto& rec : lost) newest = std::max(newest, rec.send_time);
      ps.cc.on_loss(newest, now);
    }
    return lost;
  }

  std::optional<Micros> loss_time(PathId path) const {
    check_path(path);
    return paths_[path].loss_time;
  }

  // Probe timeout: smoothed + max(4 rttvar, granularity) + max_ack_delay,
  // doubled per consecutive expiry, counted from the last ack-eliciting send.
  std::optional<Micros> pto_deadline(PathId path) const {
    check_path(path);
    const PathSendState& ps = paths_[path];
    if (ps.bytes_in_flight == 0) return std::nullopt;
    Micros base = ps.rtt.smoothed_rtt + std::max(4 * ps.rtt.rttvar, cfg_.loss.granularity) +
                  cfg_.max_ack_delay;
    base *= (1LL << std::min<std::uint32_t>(ps.pto_count, 16));
    return ps.last_eliciting_send_time + base;
  }

  // Returns the oldest unacked ack-eliciting packet on the path, whose data
  // the caller should resend in a probe.
  std::optional<SentPacketRecord> on_pto(PathId path) {
    check_path(path);
    PathSendState& ps = paths_[path];
    ++ps.pto_count;
    ++counters_.pto;
    const Space& s = spaces_[space_of(path)];
    for (PacketNumber pn : ps.unacked) {
      const SentPacketRecord& rec = s.outstanding.at(pn);
      if (rec.ack_eliciting) return rec;
    }
    return std::nullopt;
  }

  bool can_send(PathId path, ByteCount size) const {
    check_path(path);
    const PathSendState& ps = paths_[path];
    return ps.bytes_in_flight + size <= ps.cc.cwnd();
  }

  std::vector<PathView> path_views() const {
    std::vector<PathView> out;
    out.reserve(paths_.size());
    for (const PathSendState& ps : paths_) {
      PathView v{.id = ps.path, .bytes_in_flight = ps.bytes_in_flight, .cwnd = ps.cc.cwnd()};
      if (ps.rtt.has_sample) v.smoothed_rtt = ps.rtt.smoothed_rtt;
      out.push_back(v);
    }
    return out;
  }

  const PathSendState& path(PathId p) const {
    check_path(p);
    return paths_[p];
  }
  const LossCounters& counters() const { return counters_; }

  std::optional<SentPacketRecord> find_outstanding(std::size_t space, PacketNumber pn) const {
    const auto& out = spaces_.at(space).outstanding;
    auto it = out.find(pn);
    if (it == out.end()) return std::nullopt;
    return it->second;
  }

  // Sum of sizes of ack-eliciting packets that are sent, unacked and not
  // declared lost, recomputed from the per-space records.
  ByteCount recompute_bytes_in_flight(PathId path) const {
    ByteCount total = 0;
    const Space& s = spaces_[space_of(path)];
    for (PacketNumber pn : paths_[path].unacked) {
      const SentPacketRecord& rec = s.outstanding.at(pn);
      if (rec.ack_eliciting) total += rec.size;
    }
    return total;
  }

 private:
  struct Space {
    PacketNumber next_pn = 0;
    RangeSet sent;
    std::map<PacketNumber, SentPacketRecord> outstanding;
    std::map<PacketNumber, SentPacketRecord> declared_lost;
    std::map<PacketNumber, SentPacketRecord> records;  // every packet ever sent
    std::optional<PacketNumber> largest_acked;
  };

  void check_path(PathId path) const {
    if (path >= paths_.size()) throw ProtocolError("unknown path " + std::to_string(path));
  }

  Micros loss_delay(const PathSendState& ps) const {
    const Micros base = std::max(ps.rtt.smoothed_rtt, ps.rtt.has_sample ? ps.rtt.latest_rtt
                                                                         : ps.rtt.smoothed_rtt);
    const Micros scaled = base * cfg_.loss.time_threshold_num / cfg_.loss.time_threshold_den;
    return std::max(scaled, cfg_.loss.granularity);
  }

  SpaceMode mode_;
  SenderConfig cfg_;
  std::vector<PathSendState> paths_;
  std::vector<Space> spaces_;
  LossCounters counters_;
  // Ranges of each space covered by ACK frames that arrived on each path.
  std::map<std::pair<PathId, std::size_t>, RangeSet> covered_;
};

}  // namespace mpquic
