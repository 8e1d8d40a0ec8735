#pragma once

// Experiment metrics and their CSV / JSON export.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mpquic/core.hpp"

namespace mpquic {

struct Sample {
  double time_ms = 0;
  double value = 0;
  friend bool operator==(const Sample&, const Sample&) = default;
};

struct PathMetrics {
  PathId path = 0;
  std::string name;
  std::uint64_t data_packets_sent = 0;
  std::uint64_t packets_delivered = 0;
  std::uint64_t queue_drops = 0;
  std::uint64_t random_losses = 0;
  std::uint64_t ack_frames_sent = 0;  // ACK frames carried back on this path
  std::uint64_t rtt_sample_count = 0;
  // RTT samples (mixed ones included) whose largest acknowledged packet was
  // sent on this path.
  std::uint64_t samples_largest_sent_here = 0;
  // Longest stretch without an RTT sample while the path had data in flight.
  double max_rtt_sample_gap_ms = 0;
  std::vector<Sample> rtt_samples_ms;
  std::vector<Sample> srtt_timeseries;
  std::vector<Sample> received_pn_timeline;
  friend bool operator==(const PathMetrics&, const PathMetrics&) = default;
};

struct RangeCountBin {
  std::uint64_t range_count = 0;
  std::uint64_t frames = 0;
  friend bool operator==(const RangeCountBin&, const RangeCountBin&) = default;
};

struct MetricsReport {
  std::string mode;
  std::string scheduler;
  std::uint64_t seed = 0;
  std::uint64_t transfer_size = 0;
  bool complete = false;
  double completion_time = 0;  // seconds
  double goodput = 0;          // kB/s
  std::uint64_t ack_frames = 0;
  double avg_ack_frame_size = 0;  // bytes
  double avg_ack_range_count = 0;
  std::uint64_t max_ack_range_count = 0;
  std::vector<RangeCountBin> ack_range_count_histogram;
  std::vector<PathMetrics> paths;
  std::vector<Sample> hole_count_timeline;
  std::uint64_t max_hole_count = 0;
  std::vector<Sample> mixed_rtt_samples_ms;
  std::uint64_t packet_threshold_losses = 0;
  std::uint64_t time_threshold_losses = 0;
  std::uint64_t spurious_retx = 0;
  std::uint64_t pto_count = 0;
  std::uint64_t retransmissions = 0;
  std::uint64_t packets_sent = 0;
  // Received packet numbers that never appeared in any emitted ACK frame.
  std::uint64_t received_never_acked = 0;
  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Sample, time_ms, value)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RangeCountBin, range_count, frames)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PathMetrics, path, name, data_packets_sent, packets_delivered,
                                   queue_drops, random_losses, ack_frames_sent, rtt_sample_count,
                                   samples_largest_sent_here,
                                   max_rtt_sample_gap_ms, rtt_samples_ms, srtt_timeseries,
                                   received_pn_timeline)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(MetricsReport, mode, scheduler, seed, transfer_size, complete,
                                   completion_time, goodput, ack_frames, avg_ack_frame_size,
                                   avg_ack_range_count, max_ack_range_count,
                                   ack_range_count_histogram, paths, hole_count_timeline,
                                   max_hole_count, mixed_rtt_samples_ms, packet_threshold_losses,
                                   time_threshold_losses, spurious_retx, pto_count,
                                   retransmissions, packets_sent, received_never_acked)

// Fraction of ACK frames with at most `range_count` ranges.
inline double range_count_cdf(const std::vector<RangeCountBin>& hist, std::uint64_t range_count) {
  std::uint64_t total = 0;
  std::uint64_t below = 0;
  for (const RangeCountBin& b : hist) {
    total += b.frames;
    if (b.range_count <= range_count) below += b.frames;
  }
  return total == 0 ? 0.0 : static_cast<double>(below) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// CSV (RFC 4180)

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline std::string csv_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path) : path_(path), out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
  }
  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << csv_field(fields[i]);
    }
    out_ << "\r\n";
    if (!out_) throw std::runtime_error("write failed: " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

inline void write_histogram_csv(const MetricsReport& r, const std::filesystem::path& path) {
  CsvWriter w(path);
  w.row({"range_count", "frames", "cdf"});
  std::uint64_t total = 0;
  for (const auto& b : r.ack_range_count_histogram) total += b.frames;
  std::uint64_t cum = 0;
  for (const auto& b : r.ack_range_count_histogram) {
    cum += b.frames;
    w.row({std::to_string(b.range_count), std::to_string(b.frames),
           csv_number(static_cast<double>(cum) / static_cast<double>(total))});
  }
}

inline void write_timeseries_csv(const MetricsReport& r, const std::filesystem::path& path) {
  CsvWriter w(path);
  w.row({"series", "path", "time_ms", "value"});
  for (const PathMetrics& p : r.paths) {
    for (const Sample& s : p.srtt_timeseries) {
      w.row({"srtt_ms", p.name, csv_number(s.time_ms), csv_number(s.value)});
    }
    for (const Sample& s : p.rtt_samples_ms) {
      w.row({"rtt_sample_ms", p.name, csv_number(s.time_ms), csv_number(s.value)});
    }
    for (const Sample& s : p.received_pn_timeline) {
      w.row({"received_pn", p.name, csv_number(s.time_ms), csv_number(s.value)});
    }
  }
  for (const Sample& s : r.mixed_rtt_samples_ms) {
    w.row({"mixed_rtt_sample_ms", "", csv_number(s.time_ms), csv_number(s.value)});
  }
  for (const Sample& s : r.hole_count_timeline) {
    w.row({"hole_count", "", csv_number(s.time_ms), csv_number(s.value)});
  }
}

inline std::vector<std::string> summary_header() {
  return {"mode", "scheduler", "seed", "transfer_size", "complete", "completion_time_s",
          "goodput_kBps", "ack_frames", "avg_ack_frame_size", "avg_ack_range_count",
          "max_ack_range_count", "max_hole_count", "packet_threshold_losses",
          "time_threshold_losses", "spurious_retx", "pto_count", "retransmissions",
          "packets_sent", "received_never_acked"};
}

inline std::vector<std::string> summary_row(const MetricsReport& r) {
  return {r.mode, r.scheduler, std::to_string(r.seed), std::to_string(r.transfer_size),
          r.complete ? "true" : "false", csv_number(r.completion_time), csv_number(r.goodput),
          std::to_string(r.ack_frames), csv_number(r.avg_ack_frame_size),
          csv_number(r.avg_ack_range_count), std::to_string(r.max_ack_range_count),
          std::to_string(r.max_hole_count), std::to_string(r.packet_threshold_losses),
          std::to_string(r.time_threshold_losses), std::to_string(r.spurious_retx),
          std::to_string(r.pto_count), std::to_string(r.retransmissions),
          std::to_string(r.packets_sent), std::to_string(r.received_never_acked)};
}

enum class ExportFormat { Csv, Json };

inline std::filesystem::path sibling(const std::filesystem::path& path, const std::string& suffix) {
  std::filesystem::path out = path;
  out.replace_filename(path.stem().string() + suffix + ".csv");
  return out;
}

// JSON: the whole report as one object. CSV: a one-row summary at `path`
// plus `<stem>_ack_ranges.csv` (histogram with CDF) and
// `<stem>_timeseries.csv` (long-format (time_ms, value) series).
inline void export_report(const MetricsReport& r, ExportFormat format,
                          const std::filesystem::path& path) {
  if (format == ExportFormat::Json) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << nlohmann::json(r).dump(1) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
    return;
  }
  {
    CsvWriter w(path);
    w.row(summary_header());
    w.row(summary_row(r));
  }
  write_histogram_csv(r, sibling(path, "_ack_ranges"));
  write_timeseries_csv(r, sibling(path, "_timeseries"));
}

inline MetricsReport import_report_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return nlohmann::json::parse(in).get<MetricsReport>();
}

}  // namespace mpquic
