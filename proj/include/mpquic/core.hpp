#pragma once

// Foundational types shared by the sender, receiver and simulator: packet
// numbers, ACK ranges, the received-packet range set, the abstract ACK frame
// and the QUIC variable-length integer size arithmetic used to measure it.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mpquic {

using PacketNumber = std::uint64_t;
using PathId = std::uint32_t;
using ByteCount = std::uint64_t;

// Simulated time and durations, microsecond resolution.
using Micros = std::chrono::microseconds;

inline constexpr PacketNumber kMaxPacketNumber = (PacketNumber{1} << 62) - 1;
inline constexpr std::uint64_t kMaxVarint = (std::uint64_t{1} << 62) - 1;

enum class SpaceMode { SPNS, MPNS };

inline const char* to_string(SpaceMode mode) {
  return mode == SpaceMode::SPNS ? "spns" : "mpns";
}

// Error taxonomy.
struct ProtocolError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvariantViolation : std::logic_error {
  using std::logic_error::logic_error;
};

// ---------------------------------------------------------------------------
// Variable-length integers (RFC 9000 section 16)

inline std::size_t varint_size(std::uint64_t v) {
  if (v > kMaxVarint) {
    throw std::domain_error("varint value out of range: " + std::to_string(v));
  }
  if (v < (std::uint64_t{1} << 6)) return 1;
  if (v < (std::uint64_t{1} << 14)) return 2;
  if (v < (std::uint64_t{1} << 30)) return 4;
  return 8;
}

// Big-endian encoding with the two-bit length prefix. Returns bytes written.
inline std::size_t varint_encode(std::uint64_t v, std::span<std::uint8_t> out) {
  const std::size_t len = varint_size(v);
  if (out.size() < len) {
    throw std::length_error("varint buffer too small");
  }
  const std::uint8_t prefix = len == 1 ? 0x00 : len == 2 ? 0x40 : len == 4 ? 0x80 : 0xc0;
  for (std::size_t i = 0; i < len; ++i) {
    out[len - 1 - i] = static_cast<std::uint8_t>(v >> (8 * i));
  }
  out[0] |= prefix;
  return len;
}

struct VarintDecodeResult {
  std::uint64_t value;
  std::size_t length;
};

inline std::optional<VarintDecodeResult> varint_decode(std::span<const std::uint8_t> in) {
  if (in.empty()) return std::nullopt;
  const std::size_t len = std::size_t{1} << (in[0] >> 6);
  if (in.size() < len) return std::nullopt;
  std::uint64_t v = in[0] & 0x3f;
  for (std::size_t i = 1; i < len; ++i) {
    v = (v << 8) | in[i];
  }
  return VarintDecodeResult{v, len};
}

// ---------------------------------------------------------------------------
// ACK ranges

struct AckRange {
  PacketNumber largest = 0;
  PacketNumber smallest = 0;

  std::uint64_t length() const { return largest - smallest; }
  bool contains(PacketNumber pn) const { return pn >= smallest && pn <= largest; }
  friend bool operator==(const AckRange&, const AckRange&) = default;
};

using AckRanges = std::vector<AckRange>;

// Descending, non-overlapping, non-adjacent.
inline bool ranges_well_formed(std::span<const AckRange> ranges) {
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    if (ranges[i].smallest > ranges[i].largest) return false;
    if (i > 0 && !(ranges[i - 1].smallest >= 2 &&
                   ranges[i].largest < ranges[i - 1].smallest - 1)) {
      return false;
    }
  }
  return true;
}

// Index of the range holding pn, if any. Ranges must be descending.
inline std::optional<std::size_t> find_range(std::span<const AckRange> ranges, PacketNumber pn) {
  auto it = std::partition_point(ranges.begin(), ranges.end(),
                                 [pn](const AckRange& r) { return r.smallest > pn; });
  if (it == ranges.end() || !it->contains(pn)) return std::nullopt;
  return static_cast<std::size_t>(it - ranges.begin());
}

// ---------------------------------------------------------------------------
// RangeSet: ordered set of packet numbers kept as maximal disjoint ranges.

class RangeSet {
 public:
  RangeSet() = default;

  // Returns false when pn was already a member.
  bool insert(PacketNumber pn) {
    auto next = ranges_.upper_bound(pn);  // first range starting above pn
    if (next != ranges_.begin()) {
      auto prev = std::prev(next);
      if (pn <= prev->second) return false;
      if (prev->second + 1 == pn) {
        prev->second = pn;
        if (next != ranges_.end() && next->first == pn + 1) {
          prev->second = next->second;
          ranges_.erase(next);
        }
        ++count_;
        return true;
      }
    }
    if (next != ranges_.end() && next->first == pn + 1) {
      const PacketNumber end = next->second;
      ranges_.erase(next);
      ranges_.emplace(pn, end);
    } else {
      ranges_.emplace(pn, pn);
    }
    ++count_;
    return true;
  }

  // Adds every member of range.
  void insert(const AckRange& range) {
    PacketNumber lo = range.smallest;
    PacketNumber hi = range.largest;
    // First range that could touch [lo, hi]: the one starting at or before lo.
    auto it = ranges_.upper_bound(lo);
    if (it != ranges_.begin() && std::prev(it)->second + 1 >= lo) --it;
    while (it != ranges_.end() && it->first <= hi + 1) {
      lo = std::min(lo, it->first);
      hi = std::max(hi, it->second);
      count_ -= it->second - it->first + 1;
      it = ranges_.erase(it);
    }
    ranges_.emplace(lo, hi);
    count_ += hi - lo + 1;
  }

  bool contains(PacketNumber pn) const {
    auto it = ranges_.upper_bound(pn);
    if (it == ranges_.begin()) return false;
    return pn <= std::prev(it)->second;
  }

  // True when every member of range is in the set.
  bool contains_range(const AckRange& range) const {
    auto it = ranges_.upper_bound(range.largest);
    if (it == ranges_.begin()) return false;
    --it;
    return it->first <= range.smallest && range.largest <= it->second;
  }

  // Parts of range not in the set, in ascending order.
  std::vector<AckRange> missing(const AckRange& range) const {
    std::vector<AckRange> out;
    PacketNumber lo = range.smallest;
    auto it = ranges_.upper_bound(lo);
    if (it != ranges_.begin() && std::prev(it)->second >= lo) {
      if (std::prev(it)->second >= range.largest) return out;
      lo = std::prev(it)->second + 1;
    }
    for (; it != ranges_.end() && it->first <= range.largest; ++it) {
      if (it->first > lo) out.push_back({it->first - 1, lo});
      if (it->second >= range.largest) return out;
      lo = it->second + 1;
    }
    out.push_back({range.largest, lo});
    return out;
  }

  bool empty() const { return ranges_.empty(); }
  std::size_t range_count() const { return ranges_.size(); }
  std::uint64_t size() const { return count_; }

  // Gaps between consecutive ranges.
  std::size_t holes() const { return ranges_.empty() ? 0 : ranges_.size() - 1; }

  std::optional<PacketNumber> max() const {
    if (ranges_.empty()) return std::nullopt;
    return std::prev(ranges_.end())->second;
  }
  std::optional<PacketNumber> min() const {
    if (ranges_.empty()) return std::nullopt;
    return ranges_.begin()->first;
  }

  // Descending ranges, optionally clipped so nothing above `ceiling` appears.
  AckRanges ranges(std::optional<PacketNumber> ceiling = std::nullopt) const {
    AckRanges out;
    out.reserve(ranges_.size());
    for (auto it = ranges_.rbegin(); it != ranges_.rend(); ++it) {
      AckRange r{it->second, it->first};
      if (ceiling) {
        if (r.smallest > *ceiling) continue;
        r.largest = std::min(r.largest, *ceiling);
      }
      out.push_back(r);
    }
    return out;
  }

  friend bool operator==(const RangeSet&, const RangeSet&) = default;

 private:
  std::map<PacketNumber, PacketNumber> ranges_;  // smallest -> largest
  std::uint64_t count_ = 0;
};

inline RangeSet range_set_insert(RangeSet rs, PacketNumber pn) {
  rs.insert(pn);
  return rs;
}

inline std::size_t range_set_holes(const RangeSet& rs) { return rs.holes(); }

// ---------------------------------------------------------------------------
// ACK frame model

// QUIC default ack_delay_exponent.
inline constexpr unsigned kAckDelayExponent = 3;

struct AckFrame {
  // Number space being acknowledged: always 0 for SPNS, the path's space for MPNS.
  std::uint64_t space = 0;
  PacketNumber largest_acked = 0;
  Micros ack_delay{0};
  AckRanges ranges;

  friend bool operator==(const AckFrame&, const AckFrame&) = default;
};

inline void validate(const AckFrame& frame) {
  if (frame.ranges.empty()) {
    throw InvariantViolation("ACK frame without ranges");
  }
  if (frame.ranges.front().largest != frame.largest_acked) {
    throw InvariantViolation("first ACK range does not start at largest_acked");
  }
  if (!ranges_well_formed(frame.ranges)) {
    throw InvariantViolation("ACK ranges not descending and disjoint");
  }
  if (frame.ack_delay.count() < 0) {
    throw InvariantViolation("negative ACK delay");
  }
}

// Exact byte size of the frame on the wire (no ECN counts). MPNS frames carry
// one extra varint naming the acknowledged space.
inline std::size_t ack_frame_wire_size(const AckFrame& frame, SpaceMode mode) {
  validate(frame);
  std::size_t size = 1;  // frame type
  if (mode == SpaceMode::MPNS) size += varint_size(frame.space);
  size += varint_size(frame.largest_acked);
  size += varint_size(static_cast<std::uint64_t>(frame.ack_delay.count()) >> kAckDelayExponent);
  size += varint_size(frame.ranges.size() - 1);
  size += varint_size(frame.ranges.front().length());
  for (std::size_t i = 1; i < frame.ranges.size(); ++i) {
    const std::uint64_t gap = frame.ranges[i - 1].smallest - frame.ranges[i].largest - 2;
    size += varint_size(gap);
    size += varint_size(frame.ranges[i].length());
  }
  return size;
}

// ---------------------------------------------------------------------------
// Sent packet bookkeeping

struct SentPacketRecord {
  PacketNumber pn = 0;
  PathId path = 0;
  Micros send_time{0};
  ByteCount size = 0;
  bool ack_eliciting = true;
  // Position of this packet within its path's sending order.
  std::uint64_t path_history_index = 0;
  // Application data chunk carried, if any.
  std::optional<std::uint64_t> chunk;

  friend bool operator==(const SentPacketRecord&, const SentPacketRecord&) = default;
};

}  // namespace mpquic
