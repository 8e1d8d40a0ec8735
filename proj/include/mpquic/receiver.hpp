#pragma once

// Receiver side (ACK sender) of a multipath connection.
//
// Every path keeps its own ack-eliciting counter and ACK timer, and an ACK
// written for a path is anchored at the largest packet number received on that
// path. Under a single shared number space this keeps the "largest acknowledged"
// of each ACK on the path that carried it, so the sender's RTT sample measures
// one path in both directions.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "mpquic/core.hpp"

namespace mpquic {

struct RecvConfig {
  std::uint32_t ack_eliciting_threshold = 2;
  Micros max_ack_delay{25'000};
  // When on: out-of-order arrivals follow the normal threshold/timer logic and
  // frames are trimmed to default_limit ranges unless newly received packets
  // need more. When off: out-of-order ack-eliciting arrivals are acknowledged
  // immediately and frames carry up to maximum_limit ranges.
  bool suppression_enabled = false;
  std::size_t default_limit = 4;
  std::size_t maximum_limit = 64;
  // Ablation switch. When false every frame is anchored at the largest packet
  // number received on the connection instead of on the path it is sent on.
  bool per_path_anchoring = true;
};

inline void validate(const RecvConfig& cfg) {
  if (cfg.ack_eliciting_threshold < 1) {
    throw ConfigError("ack_eliciting_threshold must be >= 1");
  }
  if (cfg.default_limit < 1) throw ConfigError("default_limit must be >= 1");
  if (cfg.maximum_limit < cfg.default_limit) {
    throw ConfigError("maximum_limit must be >= default_limit");
  }
  if (cfg.max_ack_delay.count() < 0) throw ConfigError("max_ack_delay must be >= 0");
}

struct PathRecvState {
  PathId path = 0;
  std::optional<PacketNumber> largest_recv_pn;
  Micros largest_recv_time{0};
  std::uint32_t ack_eliciting_since_ack = 0;
  std::optional<Micros> ack_timer_deadline;
  // Packets received on this path since its last ACK; every one of them must
  // be covered by the next frame.
  std::vector<PacketNumber> received_since_ack;
};

struct EmitAckOnPath {
  PathId path;
  friend bool operator==(const EmitAckOnPath&, const EmitAckOnPath&) = default;
};
struct ArmTimer {
  PathId path;
  Micros deadline;
  friend bool operator==(const ArmTimer&, const ArmTimer&) = default;
};
using ReceiverAction = std::variant<EmitAckOnPath, ArmTimer>;

// Trims a descending range list to at most default_limit ranges, extending the
// prefix as far as needed to cover every packet in must_cover, but never past
// maximum_limit ranges.
inline AckRanges apply_range_limits(const AckRanges& ranges, std::size_t default_limit,
                                    std::size_t maximum_limit,
                                    std::span<const PacketNumber> must_cover) {
  if (default_limit < 1) throw ConfigError("default_limit must be >= 1");
  if (maximum_limit < default_limit) {
    throw ConfigError("maximum_limit must be >= default_limit");
  }
  std::size_t keep = std::min(ranges.size(), default_limit);
  if (keep < ranges.size()) {
    for (PacketNumber pn : must_cover) {
      if (auto idx = find_range(ranges, pn)) keep = std::max(keep, *idx + 1);
    }
  }
  keep = std::min(keep, maximum_limit);
  return AckRanges(ranges.begin(), ranges.begin() + static_cast<std::ptrdiff_t>(keep));
}

class AckReceiver {
 public:
  AckReceiver(SpaceMode mode, std::size_t num_paths, RecvConfig cfg = {})
      : mode_(mode), cfg_(cfg), paths_(num_paths) {
    validate(cfg_);
    if (num_paths == 0) throw ConfigError("receiver needs at least one path");
    for (std::size_t i = 0; i < num_paths; ++i) paths_[i].path = static_cast<PathId>(i);
    const std::size_t spaces = mode_ == SpaceMode::SPNS ? 1 : num_paths;
    spaces_.resize(spaces);
    space_largest_time_.resize(spaces);
  }

  std::vector<ReceiverAction> on_packet_received(PathId path, PacketNumber pn, Micros now,
                                                 bool ack_eliciting) {
    check_path(path);
    const std::size_t s = space_of(path);
    const std::optional<PacketNumber> prev_max = spaces_[s].max();
    if (!spaces_[s].insert(pn)) return {};

    const bool out_of_order = prev_max ? pn != *prev_max + 1 : pn != 0;
    if (!prev_max || pn > *prev_max) space_largest_time_[s] = now;

    PathRecvState& ps = paths_[path];
    if (!ps.largest_recv_pn || pn > *ps.largest_recv_pn) {
      ps.largest_recv_pn = pn;
      ps.largest_recv_time = now;
    }

    ps.received_since_ack.push_back(pn);
    if (!ack_eliciting) return {};

    ++ps.ack_eliciting_since_ack;
    if ((!cfg_.suppression_enabled && out_of_order) ||
        ps.ack_eliciting_since_ack >= cfg_.ack_eliciting_threshold) {
      ps.ack_eliciting_since_ack = 0;
      ps.ack_timer_deadline.reset();
      return {EmitAckOnPath{path}};
    }
    if (ps.ack_eliciting_since_ack == 1) {
      ps.ack_timer_deadline = now + cfg_.max_ack_delay;
      return {ArmTimer{path, *ps.ack_timer_deadline}};
    }
    return {};
  }

  AckFrame build_ack_frame(PathId path, Micros now) {
    check_path(path);
    const std::size_t s = space_of(path);
    const RangeSet& space = spaces_[s];

    PacketNumber largest = 0;
    Micros largest_time{0};
    if (cfg_.per_path_anchoring) {
      const PathRecvState& ps = paths_[path];
      if (!ps.largest_recv_pn) {
        throw ProtocolError("no packets received on path " + std::to_string(path));
      }
      largest = *ps.largest_recv_pn;
      largest_time = ps.largest_recv_time;
    } else {
      if (space.empty()) throw ProtocolError("no packets received");
      largest = *space.max();
      largest_time = space_largest_time_[s];
    }

    AckFrame frame;
    frame.space = s;
    frame.largest_acked = largest;
    frame.ack_delay = std::max(Micros{0}, now - largest_time);
    frame.ranges = space.ranges(largest);

    PathRecvState& ps = paths_[path];
    if (cfg_.suppression_enabled) {
      std::vector<PacketNumber> cover;
      cover.reserve(ps.received_since_ack.size());
      for (PacketNumber pn : ps.received_since_ack) {
        if (pn <= largest) cover.push_back(pn);
      }
      frame.ranges =
          apply_range_limits(frame.ranges, cfg_.default_limit, cfg_.maximum_limit, cover);
    } else if (frame.ranges.size() > cfg_.maximum_limit) {
      frame.ranges.resize(cfg_.maximum_limit);
    }

    ps.ack_eliciting_since_ack = 0;
    ps.ack_timer_deadline.reset();
    ps.received_since_ack.clear();
    return frame;
  }

  AckFrame on_ack_timer(PathId path, Micros now) {
    check_path(path);
    const PathRecvState& ps = paths_[path];
    if (!ps.ack_timer_deadline || ps.ack_eliciting_since_ack == 0) {
      throw InvariantViolation("ACK timer not armed on path " + std::to_string(path));
    }
    if (*ps.ack_timer_deadline > now) {
      throw InvariantViolation("ACK timer has not expired on path " + std::to_string(path));
    }
    return build_ack_frame(path, now);
  }

  std::optional<Micros> ack_timer_deadline(PathId path) const {
    check_path(path);
    return paths_[path].ack_timer_deadline;
  }

  SpaceMode mode() const { return mode_; }
  const RecvConfig& config() const { return cfg_; }
  std::size_t num_paths() const { return paths_.size(); }
  std::size_t num_spaces() const { return spaces_.size(); }
  std::size_t space_of(PathId path) const { return mode_ == SpaceMode::SPNS ? 0 : path; }
  const RangeSet& space(std::size_t s) const { return spaces_.at(s); }
  const PathRecvState& path_state(PathId path) const {
    check_path(path);
    return paths_[path];
  }

  std::size_t total_holes() const {
    std::size_t n = 0;
    for (const RangeSet& rs : spaces_) n += rs.holes();
    return n;
  }

 private:
  void check_path(PathId path) const {
    if (path >= paths_.size()) throw ProtocolError("unknown path " + std::to_string(path));
  }

  SpaceMode mode_;
  RecvConfig cfg_;
  std::vector<PathRecvState> paths_;
  std::vector<RangeSet> spaces_;
  std::vector<Micros> space_largest_time_;
};

}  // namespace mpquic
