#pragma once

// Path selection for outgoing data packets. ACK packets never go through
// here: they leave on the path that triggered them.

#include <optional>
#include <span>

#include "mpquic/sender.hpp"

namespace mpquic {

enum class SchedulerKind { MinRtt, RoundRobin };

inline const char* to_string(SchedulerKind k) { return k == SchedulerKind::MinRtt ? "minrtt" : "rr"; }

inline bool path_eligible(const PathView& p, ByteCount packet_size) {
  return p.validated && p.bytes_in_flight + packet_size <= p.cwnd;
}

// MinRtt: the eligible path with the smallest smoothed RTT; paths without an
// RTT sample come first so they get probed. Ties go to the lower id.
// RoundRobin: the next eligible path after rr_cursor, which is advanced to it.
inline std::optional<PathId> select_path(SchedulerKind kind, std::span<const PathView> paths,
                                         ByteCount packet_size, std::size_t& rr_cursor) {
  if (paths.empty()) return std::nullopt;
  if (kind == SchedulerKind::RoundRobin) {
    const std::size_t n = paths.size();
    for (std::size_t step = 1; step <= n; ++step) {
      const std::size_t i = (rr_cursor + step) % n;
      if (path_eligible(paths[i], packet_size)) {
        rr_cursor = i;
        return paths[i].id;
      }
    }
    return std::nullopt;
  }

  const PathView* best = nullptr;
  auto better = [](const PathView& a, const PathView& b) {
    if (a.smoothed_rtt.has_value() != b.smoothed_rtt.has_value()) return !a.smoothed_rtt;
    if (a.smoothed_rtt && *a.smoothed_rtt != *b.smoothed_rtt) return *a.smoothed_rtt < *b.smoothed_rtt;
    return a.id < b.id;
  };
  for (const PathView& p : paths) {
    if (!path_eligible(p, packet_size)) continue;
    if (best == nullptr || better(p, *best)) best = &p;
  }
  if (best == nullptr) return std::nullopt;
  return best->id;
}

}  // namespace mpquic
