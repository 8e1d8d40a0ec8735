#pragma once

// One bulk transfer over a multipath connection, driven by the event loop.
//
// Data packets travel sender -> receiver over each path's down link and ACK
// packets travel back over the up link. The transfer is cut into chunks of one
// datagram payload; a retransmission resends a chunk under a fresh packet
// number. The run ends once every chunk has been acknowledged, or at the
// duration cap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "mpquic/metrics.hpp"
#include "mpquic/netsim.hpp"
#include "mpquic/receiver.hpp"
#include "mpquic/scenario.hpp"
#include "mpquic/scheduler.hpp"
#include "mpquic/sender.hpp"

namespace mpquic {

// Bytes an ACK-only packet adds around its frame (short header and AEAD tag).
inline constexpr ByteCount kAckPacketOverhead = 25;

inline double to_ms(Micros t) { return static_cast<double>(t.count()) / 1000.0; }

class Simulation {
 public:
  explicit Simulation(ScenarioConfig cfg)
      : cfg_(std::move(cfg)),
        sender_(cfg_.mode, (validate(cfg_), cfg_.paths.size()), sender_config(cfg_)),
        receiver_(cfg_.mode, cfg_.paths.size(), cfg_.recv) {
    const std::size_t n = cfg_.paths.size();
    chunk_size_ = cfg_.paths.front().mtu;
    for (const LinkModel& m : cfg_.paths) chunk_size_ = std::min(chunk_size_, m.mtu);
    num_chunks_ = (cfg_.transfer_size + chunk_size_ - 1) / chunk_size_;
    chunk_acked_.assign(num_chunks_, false);
    chunk_delivered_.assign(num_chunks_, false);
    chunk_sent_.assign(num_chunks_, false);

    for (std::size_t i = 0; i < n; ++i) {
      const LinkModel& m = cfg_.paths[i];
      LinkParams down{.one_way_delay = m.one_way_delay_down,
                      .rate_mbps = m.rate_mbps,
                      .trace = m.trace,
                      .loss_rate = m.loss_rate,
                      .queue_capacity = m.queue_capacity};
      LinkParams up{.one_way_delay = m.one_way_delay_up,
                    .rate_mbps = m.up_rate_mbps,
                    .loss_rate = m.up_loss_rate,
                    .queue_capacity = m.up_queue_capacity};
      down_.emplace_back(down, SimRng(cfg_.seed, 2 * i));
      up_.emplace_back(up, SimRng(cfg_.seed, 2 * i + 1));
    }
    timers_.resize(n);
    track_.resize(n);
    acked_ever_.resize(receiver_.num_spaces());
    rr_cursor_ = n - 1;

    report_.mode = to_string(cfg_.mode);
    report_.scheduler = to_string(cfg_.scheduler);
    report_.seed = cfg_.seed;
    report_.transfer_size = cfg_.transfer_size;
    report_.paths.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      report_.paths[i].path = static_cast<PathId>(i);
      report_.paths[i].name = cfg_.paths[i].name;
    }
  }

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  MetricsReport run() {
    loop_.schedule(Micros{0}, [this] { try_send(); });
    const auto cap = Micros{static_cast<std::int64_t>(cfg_.duration_cap_s * 1e6)};
    loop_.run(cap);
    finish();
    return report_;
  }

  const PacketSender& sender() const { return sender_; }
  const AckReceiver& receiver() const { return receiver_; }

 private:
  struct Timers {
    std::uint64_t loss_gen = 0;
    std::optional<Micros> loss_at;
    std::uint64_t pto_gen = 0;
    std::optional<Micros> pto_at;
  };
  struct Tracking {
    std::optional<Micros> last_sample;
    Micros busy_since{0};
  };

  static SenderConfig sender_config(const ScenarioConfig& c) {
    SenderConfig s;
    s.loss = c.loss;
    s.cc.algorithm = c.cc;
    s.cc.hystart = c.hystart;
    s.cc.max_datagram_size = c.paths.empty() ? 1350 : c.paths.front().mtu;
    for (const LinkModel& m : c.paths) s.cc.max_datagram_size = std::min(s.cc.max_datagram_size, m.mtu);
    s.max_ack_delay = c.recv.max_ack_delay;
    return s;
  }

  Micros now() const { return loop_.now(); }

  std::optional<std::uint64_t> next_chunk() {
    while (!retx_.empty()) {
      const std::uint64_t c = retx_.front();
      if (!chunk_acked_[c]) return c;
      retx_.pop_front();
    }
    if (next_new_ < num_chunks_) return next_new_;
    return std::nullopt;
  }

  void try_send() {
    for (;;) {
      const auto chunk = next_chunk();
      if (!chunk) return;
      const auto views = sender_.path_views();
      const auto path = select_path(cfg_.scheduler, views, chunk_size_, rr_cursor_);
      if (!path) return;
      if (!retx_.empty() && retx_.front() == *chunk) {
        retx_.pop_front();
      } else {
        ++next_new_;
      }
      send_packet(*path, *chunk);
    }
  }

  void send_packet(PathId path, std::uint64_t chunk) {
    if (sender_.path(path).bytes_in_flight == 0) track_[path].busy_since = now();
    const PacketNumber pn = sender_.next_packet_number(path);
    SentPacketRecord rec{.pn = pn,
                         .path = path,
                         .send_time = now(),
                         .size = chunk_size_,
                         .ack_eliciting = true,
                         .chunk = chunk};
    sender_.on_packet_sent(path, rec);
    ++report_.packets_sent;
    ++report_.paths[path].data_packets_sent;
    if (chunk_sent_[chunk]) ++report_.retransmissions;
    chunk_sent_[chunk] = true;

    const TransmitResult tx = down_[path].transmit(chunk_size_, now());
    if (tx.arrival) {
      loop_.schedule(*tx.arrival, [this, path, pn, chunk] { on_data_arrival(path, pn, chunk); });
    }
    rearm_timers(path);
  }

  void on_data_arrival(PathId path, PacketNumber pn, std::uint64_t chunk) {
    report_.paths[path].received_pn_timeline.push_back(
        {to_ms(now()), static_cast<double>(pn)});
    if (!chunk_delivered_[chunk]) {
      chunk_delivered_[chunk] = true;
      if (++delivered_ == num_chunks_) completion_ = now();
    }
    const auto actions = receiver_.on_packet_received(path, pn, now(), true);
    const auto holes = receiver_.total_holes();
    if (holes != last_holes_) {
      last_holes_ = holes;
      report_.hole_count_timeline.push_back({to_ms(now()), static_cast<double>(holes)});
      report_.max_hole_count = std::max<std::uint64_t>(report_.max_hole_count, holes);
    }
    for (const ReceiverAction& a : actions) {
      if (const auto* e = std::get_if<EmitAckOnPath>(&a)) {
        emit_ack(e->path, receiver_.build_ack_frame(e->path, now()));
      } else if (const auto* t = std::get_if<ArmTimer>(&a)) {
        const PathId p = t->path;
        const Micros deadline = t->deadline;
        loop_.schedule(deadline, [this, p, deadline] {
          if (receiver_.ack_timer_deadline(p) != deadline) return;
          emit_ack(p, receiver_.on_ack_timer(p, now()));
        });
      }
    }
  }

  // ACKs go back on the path whose arrival triggered them.
  void emit_ack(PathId out, const AckFrame& frame) {
    const ByteCount size = ack_frame_wire_size(frame, cfg_.mode);
    ++report_.ack_frames;
    ++report_.paths[out].ack_frames_sent;
    ack_bytes_ += size;
    ack_ranges_ += frame.ranges.size();
    ++range_hist_[frame.ranges.size()];
    report_.max_ack_range_count =
        std::max<std::uint64_t>(report_.max_ack_range_count, frame.ranges.size());
    for (const AckRange& r : frame.ranges) acked_ever_[frame.space].insert(r);

    const TransmitResult tx = up_[out].transmit(size + kAckPacketOverhead, now());
    if (tx.arrival) {
      loop_.schedule(*tx.arrival, [this, out, frame] { on_ack_arrival(out, frame); });
    }
  }

  void on_ack_arrival(PathId path, const AckFrame& frame) {
    const AckProcessResult res = sender_.on_ack_received(path, frame, now());
    for (const SentPacketRecord& rec : res.newly_acked) {
      if (rec.chunk && !chunk_acked_[*rec.chunk]) {
        chunk_acked_[*rec.chunk] = true;
        ++acked_chunks_;
      }
    }
    if (res.rtt_sample) record_sample(*res.rtt_sample);
    handle_lost(res.lost);

    if (acked_chunks_ == num_chunks_) {
      loop_.stop();
      return;
    }
    for (std::size_t p = 0; p < cfg_.paths.size(); ++p) rearm_timers(static_cast<PathId>(p));
    try_send();
  }

  void record_sample(const RttSample& s) {
    const Sample v{to_ms(now()), to_ms(s.value)};
    ++report_.paths[s.sent_path].samples_largest_sent_here;
    if (s.mixed) {
      report_.mixed_rtt_samples_ms.push_back(v);
      return;
    }
    PathMetrics& pm = report_.paths[s.path];
    pm.rtt_samples_ms.push_back(v);
    ++pm.rtt_sample_count;
    pm.srtt_timeseries.push_back({v.time_ms, to_ms(sender_.path(s.path).rtt.smoothed_rtt)});

    Tracking& t = track_[s.path];
    Micros from = t.busy_since;
    if (t.last_sample) from = std::max(from, *t.last_sample);
    pm.max_rtt_sample_gap_ms = std::max(pm.max_rtt_sample_gap_ms, to_ms(now() - from));
    t.last_sample = now();
  }

  void handle_lost(const std::vector<SentPacketRecord>& lost) {
    for (const SentPacketRecord& rec : lost) {
      if (rec.chunk && !chunk_acked_[*rec.chunk]) retx_.push_back(*rec.chunk);
    }
  }

  void rearm_timers(PathId path) {
    Timers& t = timers_[path];
    const auto loss_at = sender_.loss_time(path);
    if (loss_at != t.loss_at) {
      t.loss_at = loss_at;
      const std::uint64_t gen = ++t.loss_gen;
      if (loss_at) {
        loop_.schedule(std::max(*loss_at, now()), [this, path, gen] { on_loss_timer(path, gen); });
      }
    }
    const auto pto_at = sender_.pto_deadline(path);
    if (pto_at != t.pto_at) {
      t.pto_at = pto_at;
      const std::uint64_t gen = ++t.pto_gen;
      if (pto_at) {
        loop_.schedule(std::max(*pto_at, now()), [this, path, gen] { on_pto_timer(path, gen); });
      }
    }
  }

  void on_loss_timer(PathId path, std::uint64_t gen) {
    Timers& t = timers_[path];
    if (gen != t.loss_gen) return;
    t.loss_at.reset();
    handle_lost(sender_.detect_losses(path, now()));
    rearm_timers(path);
    try_send();
  }

  void on_pto_timer(PathId path, std::uint64_t gen) {
    Timers& t = timers_[path];
    if (gen != t.pto_gen) return;
    t.pto_at.reset();
    if (const auto rec = sender_.on_pto(path); rec && rec->chunk && !chunk_acked_[*rec->chunk]) {
      send_packet(path, *rec->chunk);  // probes bypass the congestion window
    }
    rearm_timers(path);
    try_send();
  }

  void finish() {
    MetricsReport& r = report_;
    r.complete = completion_.has_value();
    if (completion_) {
      r.completion_time = static_cast<double>(completion_->count()) / 1e6;
      r.goodput = r.completion_time > 0
                      ? static_cast<double>(cfg_.transfer_size) / 1000.0 / r.completion_time
                      : 0;
    }
    if (r.ack_frames > 0) {
      r.avg_ack_frame_size = static_cast<double>(ack_bytes_) / static_cast<double>(r.ack_frames);
      r.avg_ack_range_count = static_cast<double>(ack_ranges_) / static_cast<double>(r.ack_frames);
    }
    for (const auto& [count, frames] : range_hist_) {
      r.ack_range_count_histogram.push_back({count, frames});
    }
    const LossCounters& lc = sender_.counters();
    r.packet_threshold_losses = lc.packet_threshold;
    r.time_threshold_losses = lc.time_threshold;
    r.spurious_retx = lc.spurious;
    r.pto_count = lc.pto;
    for (std::size_t i = 0; i < cfg_.paths.size(); ++i) {
      const LinkStats& st = down_[i].stats();
      r.paths[i].packets_delivered = st.delivered;
      r.paths[i].queue_drops = st.queue_drops;
      r.paths[i].random_losses = st.random_losses;
    }
    r.received_never_acked = 0;
    for (std::size_t s = 0; s < receiver_.num_spaces(); ++s) {
      for (const AckRange& got : receiver_.space(s).ranges()) {
        for (PacketNumber pn = got.smallest;; ++pn) {
          if (!acked_ever_[s].contains(pn)) ++r.received_never_acked;
          if (pn == got.largest) break;
        }
      }
    }
  }

  ScenarioConfig cfg_;
  EventLoop loop_;
  PacketSender sender_;
  AckReceiver receiver_;
  std::vector<Link> down_;
  std::vector<Link> up_;
  std::vector<Timers> timers_;
  std::vector<Tracking> track_;

  ByteCount chunk_size_ = 0;
  std::uint64_t num_chunks_ = 0;
  std::uint64_t next_new_ = 0;
  std::deque<std::uint64_t> retx_;
  std::vector<bool> chunk_acked_;
  std::vector<bool> chunk_delivered_;
  std::vector<bool> chunk_sent_;
  std::uint64_t acked_chunks_ = 0;
  std::uint64_t delivered_ = 0;
  std::optional<Micros> completion_;
  std::size_t rr_cursor_ = 0;

  std::size_t last_holes_ = 0;
  std::vector<RangeSet> acked_ever_;
  std::map<std::uint64_t, std::uint64_t> range_hist_;
  std::uint64_t ack_bytes_ = 0;
  std::uint64_t ack_ranges_ = 0;
  MetricsReport report_;
};

inline MetricsReport run_scenario(const ScenarioConfig& cfg) {
  Simulation sim(cfg);
  return sim.run();
}

// ---------------------------------------------------------------------------
// SPNS vs MPNS comparison

// One point of a Default_Limit sweep; an empty limit means suppression off.
struct SweepPoint {
  std::optional<std::size_t> default_limit;
  friend bool operator==(const SweepPoint&, const SweepPoint&) = default;
};

inline std::string label(const SweepPoint& p) {
  return p.default_limit ? std::to_string(*p.default_limit) : std::string("unsuppressed");
}

// Parses "2,4,8,64" and the words off/none/inf/unsuppressed.
inline std::vector<SweepPoint> parse_sweep(const std::string& text) {
  std::vector<SweepPoint> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::lower(detail::trim(item));
    if (item.empty()) throw ConfigError("empty entry in sweep list '" + text + "'");
    if (item == "off" || item == "none" || item == "inf" || item == "unsuppressed") {
      out.push_back({});
      continue;
    }
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || v == 0 || item.front() == '-') {
      throw ConfigError("bad sweep entry '" + item + "' (expected a positive integer or 'off')");
    }
    out.push_back({static_cast<std::size_t>(v)});
  }
  if (out.empty()) throw ConfigError("sweep list is empty");
  return out;
}

inline ScenarioConfig with_sweep_point(ScenarioConfig cfg, const SweepPoint& p) {
  if (p.default_limit) {
    cfg.recv.suppression_enabled = true;
    cfg.recv.default_limit = *p.default_limit;
    cfg.recv.maximum_limit = std::max(cfg.recv.maximum_limit, *p.default_limit);
  } else {
    cfg.recv.suppression_enabled = false;
  }
  return cfg;
}

struct ComparisonRow {
  std::string setting;
  MetricsReport spns;
  MetricsReport mpns;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ComparisonRow, setting, spns, mpns)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ComparisonReport, rows)

// (spns - mpns) / mpns in percent.
inline double delta_percent(double spns, double mpns) {
  return mpns == 0 ? 0.0 : (spns - mpns) / mpns * 100.0;
}

inline ComparisonReport compare_modes(const ScenarioConfig& base,
                                      const std::vector<SweepPoint>& sweep) {
  ComparisonReport out;
  std::vector<SweepPoint> points = sweep;
  if (points.empty()) {
    points.push_back(base.recv.suppression_enabled ? SweepPoint{base.recv.default_limit}
                                                   : SweepPoint{});
  }
  for (const SweepPoint& p : points) {
    ScenarioConfig c = with_sweep_point(base, p);
    ComparisonRow row{.setting = label(p)};
    c.mode = SpaceMode::SPNS;
    row.spns = run_scenario(c);
    c.mode = SpaceMode::MPNS;
    row.mpns = run_scenario(c);
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline std::vector<std::string> comparison_header() {
  return {"default_limit",       "spns_completion_s",   "mpns_completion_s",
          "completion_delta_pct", "spns_goodput_kBps",  "mpns_goodput_kBps",
          "goodput_delta_pct",    "spns_avg_ack_bytes", "mpns_avg_ack_bytes",
          "ack_bytes_delta_pct",  "spns_avg_ranges",    "mpns_avg_ranges",
          "spns_max_holes",       "mpns_max_holes",     "spns_complete",
          "mpns_complete"};
}

inline std::vector<std::string> comparison_fields(const ComparisonRow& r) {
  const MetricsReport& s = r.spns;
  const MetricsReport& m = r.mpns;
  return {r.setting,
          csv_number(s.completion_time),
          csv_number(m.completion_time),
          csv_number(delta_percent(s.completion_time, m.completion_time)),
          csv_number(s.goodput),
          csv_number(m.goodput),
          csv_number(delta_percent(s.goodput, m.goodput)),
          csv_number(s.avg_ack_frame_size),
          csv_number(m.avg_ack_frame_size),
          csv_number(delta_percent(s.avg_ack_frame_size, m.avg_ack_frame_size)),
          csv_number(s.avg_ack_range_count),
          csv_number(m.avg_ack_range_count),
          std::to_string(s.max_hole_count),
          std::to_string(m.max_hole_count),
          s.complete ? "true" : "false",
          m.complete ? "true" : "false"};
}

inline void export_comparison(const ComparisonReport& c, ExportFormat format,
                              const std::filesystem::path& path) {
  if (format == ExportFormat::Json) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << nlohmann::json(c).dump(1) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
    return;
  }
  CsvWriter w(path);
  w.row(comparison_header());
  for (const ComparisonRow& r : c.rows) w.row(comparison_fields(r));
}

}  // namespace mpquic
