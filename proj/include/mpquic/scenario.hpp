#pragma once

// Scenario description and its configuration file format.
//
// The file is line oriented. Top-level `key = value` pairs describe the
// connection, a `[recv]` section tunes the ACK sender, and each `[path]`
// section adds one path in declaration order (path 0 first). `#` and `;`
// start comments. Durations carry their unit in the key name (`_ms`).
//
//   mode = spns                 # spns | mpns
//   scheduler = minrtt          # minrtt | rr
//   cc = cubic                  # cubic | newreno
//   hystart = on
//   transfer_size = 20000000    # bytes
//   seed = 1
//   duration_cap = 60           # seconds of simulated time
//   packet_threshold = 3
//
//   [recv]
//   suppression = off
//   default_limit = 4
//   maximum_limit = 64
//   ack_eliciting_threshold = 2
//   max_ack_delay_ms = 25
//   per_path_anchoring = on     # off: anchor ACKs at the connection's largest (ablation)
//
//   [path]
//   name = wifi
//   rate_mbps = 40              # or: trace = wifi.trace (relative to this file)
//   delay_ms = 15               # one-way, both directions
//   down_delay_ms / up_delay_ms # override one direction
//   loss = 0
//   queue = 64                  # packets
//   mtu = 1350
//   up_rate_mbps = 0            # 0: ACK direction is not rate limited
//   up_loss = 0

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mpquic/congestion.hpp"
#include "mpquic/core.hpp"
#include "mpquic/netsim.hpp"
#include "mpquic/receiver.hpp"
#include "mpquic/scheduler.hpp"
#include "mpquic/sender.hpp"

namespace mpquic {

struct LinkModel {
  std::string name;
  Micros one_way_delay_down{20'000};
  Micros one_way_delay_up{20'000};
  double rate_mbps = 10;
  std::optional<TraceSchedule> trace;
  std::string trace_file;  // as written in the config, informational
  double loss_rate = 0;
  std::size_t queue_capacity = 64;
  ByteCount mtu = 1350;
  double up_rate_mbps = 0;
  double up_loss_rate = 0;
  std::size_t up_queue_capacity = 1024;
};

struct ScenarioConfig {
  SpaceMode mode = SpaceMode::SPNS;
  SchedulerKind scheduler = SchedulerKind::MinRtt;
  CcAlgorithm cc = CcAlgorithm::Cubic;
  bool hystart = true;
  ByteCount transfer_size = 20'000'000;
  std::vector<LinkModel> paths;
  RecvConfig recv;
  LossConfig loss;
  std::uint64_t seed = 1;
  double duration_cap_s = 60;
};

inline void validate(const ScenarioConfig& cfg) {
  if (cfg.transfer_size == 0) throw ConfigError("transfer_size must be positive");
  if (cfg.paths.empty()) throw ConfigError("scenario needs at least one [path]");
  if (cfg.duration_cap_s <= 0) throw ConfigError("duration_cap must be positive");
  validate(cfg.recv);
  if (cfg.loss.packet_threshold < 1) throw ConfigError("packet_threshold must be >= 1");
  for (std::size_t i = 0; i < cfg.paths.size(); ++i) {
    const LinkModel& p = cfg.paths[i];
    const std::string where = "path " + std::to_string(i);
    if (p.mtu == 0) throw ConfigError(where + ": mtu must be positive");
    if (p.queue_capacity == 0) throw ConfigError(where + ": queue must be positive");
    if (!p.trace && p.rate_mbps <= 0) throw ConfigError(where + ": needs rate_mbps > 0 or a trace");
    if (p.loss_rate < 0 || p.loss_rate >= 1) throw ConfigError(where + ": loss must be in [0, 1)");
    if (p.up_loss_rate < 0 || p.up_loss_rate >= 1) {
      throw ConfigError(where + ": up_loss must be in [0, 1)");
    }
    if (p.one_way_delay_down.count() < 0 || p.one_way_delay_up.count() < 0) {
      throw ConfigError(where + ": delays must be non-negative");
    }
  }
}

namespace detail {

inline std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

class LineError {
 public:
  LineError(std::string source, std::size_t line) : source_(std::move(source)), line_(line) {}
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(source_ + ":" + std::to_string(line_) + ": " + msg);
  }

 private:
  std::string source_;
  std::size_t line_;
};

inline double to_double(const std::string& v, const LineError& at) {
  std::size_t pos = 0;
  double d = 0;
  try {
    d = std::stod(v, &pos);
  } catch (const std::exception&) {
    at.fail("expected a number, got '" + v + "'");
  }
  if (pos != v.size() || !std::isfinite(d)) at.fail("expected a number, got '" + v + "'");
  return d;
}

inline std::uint64_t to_uint(const std::string& v, const LineError& at) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    at.fail("expected a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    at.fail("integer out of range: '" + v + "'");
  }
}

inline bool to_bool(const std::string& v, const LineError& at) {
  const std::string l = lower(v);
  if (l == "1" || l == "true" || l == "on" || l == "yes") return true;
  if (l == "0" || l == "false" || l == "off" || l == "no") return false;
  at.fail("expected on/off, got '" + v + "'");
}

inline Micros to_ms(const std::string& v, const LineError& at) {
  const double ms = to_double(v, at);
  if (ms < 0) at.fail("duration must be non-negative");
  return Micros{static_cast<std::int64_t>(std::llround(ms * 1000.0))};
}

}  // namespace detail

inline SpaceMode parse_space_mode(const std::string& v) {
  const std::string l = detail::lower(v);
  if (l == "spns") return SpaceMode::SPNS;
  if (l == "mpns") return SpaceMode::MPNS;
  throw ConfigError("unknown mode '" + v + "' (expected spns or mpns)");
}

inline ScenarioConfig parse_scenario(std::istream& in, const std::string& source = "<config>",
                                     const std::filesystem::path& base_dir = {}) {
  using namespace detail;
  ScenarioConfig cfg;
  enum class Section { Top, Recv, Path } section = Section::Top;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const LineError at(source, line_no);
    if (auto c = line.find_first_of("#;"); c != std::string::npos) line.erase(c);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') at.fail("malformed section header");
      const std::string name = lower(trim(line.substr(1, line.size() - 2)));
      if (name == "recv") {
        section = Section::Recv;
      } else if (name == "path") {
        section = Section::Path;
        cfg.paths.emplace_back();
        cfg.paths.back().name = "path" + std::to_string(cfg.paths.size() - 1);
      } else {
        at.fail("unknown section [" + name + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) at.fail("expected key = value");
    const std::string key = lower(trim(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    if (value.empty()) at.fail("missing value for '" + key + "'");

    switch (section) {
      case Section::Top:
        if (key == "mode") {
          try {
            cfg.mode = parse_space_mode(value);
          } catch (const ConfigError& e) {
            at.fail(e.what());
          }
        } else if (key == "scheduler") {
          const std::string l = lower(value);
          if (l == "minrtt") cfg.scheduler = SchedulerKind::MinRtt;
          else if (l == "rr" || l == "roundrobin" || l == "round_robin") cfg.scheduler = SchedulerKind::RoundRobin;
          else at.fail("unknown scheduler '" + value + "'");
        } else if (key == "cc") {
          const std::string l = lower(value);
          if (l == "cubic") cfg.cc = CcAlgorithm::Cubic;
          else if (l == "newreno" || l == "reno") cfg.cc = CcAlgorithm::NewReno;
          else at.fail("unknown cc '" + value + "'");
        } else if (key == "hystart") {
          cfg.hystart = to_bool(value, at);
        } else if (key == "transfer_size") {
          cfg.transfer_size = to_uint(value, at);
        } else if (key == "seed") {
          cfg.seed = to_uint(value, at);
        } else if (key == "duration_cap") {
          cfg.duration_cap_s = to_double(value, at);
        } else if (key == "packet_threshold") {
          cfg.loss.packet_threshold = static_cast<std::uint32_t>(to_uint(value, at));
        } else {
          at.fail("unknown key '" + key + "'");
        }
        break;
      case Section::Recv:
        if (key == "suppression") {
          cfg.recv.suppression_enabled = to_bool(value, at);
        } else if (key == "default_limit") {
          cfg.recv.default_limit = to_uint(value, at);
        } else if (key == "maximum_limit") {
          cfg.recv.maximum_limit = to_uint(value, at);
        } else if (key == "ack_eliciting_threshold") {
          cfg.recv.ack_eliciting_threshold = static_cast<std::uint32_t>(to_uint(value, at));
        } else if (key == "max_ack_delay_ms") {
          cfg.recv.max_ack_delay = to_ms(value, at);
        } else if (key == "per_path_anchoring") {
          cfg.recv.per_path_anchoring = to_bool(value, at);
        } else {
          at.fail("unknown [recv] key '" + key + "'");
        }
        break;
      case Section::Path: {
        LinkModel& p = cfg.paths.back();
        if (key == "name") {
          p.name = value;
        } else if (key == "rate_mbps") {
          p.rate_mbps = to_double(value, at);
        } else if (key == "trace") {
          std::filesystem::path file(value);
          if (file.is_relative() && !base_dir.empty()) file = base_dir / file;
          try {
            p.trace = load_trace(file);
          } catch (const ConfigError& e) {
            at.fail(e.what());
          }
          p.trace_file = value;
        } else if (key == "delay_ms") {
          p.one_way_delay_down = p.one_way_delay_up = to_ms(value, at);
        } else if (key == "down_delay_ms") {
          p.one_way_delay_down = to_ms(value, at);
        } else if (key == "up_delay_ms") {
          p.one_way_delay_up = to_ms(value, at);
        } else if (key == "loss") {
          p.loss_rate = to_double(value, at);
        } else if (key == "queue") {
          p.queue_capacity = to_uint(value, at);
        } else if (key == "mtu") {
          p.mtu = to_uint(value, at);
        } else if (key == "up_rate_mbps") {
          p.up_rate_mbps = to_double(value, at);
        } else if (key == "up_loss") {
          p.up_loss_rate = to_double(value, at);
        } else if (key == "up_queue") {
          p.up_queue_capacity = to_uint(value, at);
        } else {
          at.fail("unknown [path] key '" + key + "'");
        }
        break;
      }
    }
  }
  validate(cfg);
  return cfg;
}

inline ScenarioConfig load_scenario(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  return parse_scenario(in, file.string(), file.parent_path());
}

// Reference desk-scale scenario: a fast short path and a slow long path,
// no random loss, 64-packet droptail queues, 20 MB transfer, Cubic, minRTT.
inline ScenarioConfig reference_scenario(SpaceMode mode = SpaceMode::SPNS, std::uint64_t seed = 1) {
  ScenarioConfig cfg;
  cfg.mode = mode;
  cfg.seed = seed;
  LinkModel fast;
  fast.name = "A";
  fast.rate_mbps = 40;
  fast.one_way_delay_down = fast.one_way_delay_up = Micros{15'000};
  LinkModel slow;
  slow.name = "B";
  slow.rate_mbps = 15;
  slow.one_way_delay_down = slow.one_way_delay_up = Micros{60'000};
  cfg.paths = {fast, slow};
  return cfg;
}

}  // namespace mpquic
