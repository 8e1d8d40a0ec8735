// Command-line front end for the multipath packet-number simulator.
//
//   mpquic_sim run --config s.conf [--mode spns|mpns] [--seed N] [--out f] [--format csv|json]
//   mpquic_sim compare --config s.conf --sweep-default-limit 2,4,8,64,off [--out f] [--format csv|json]
//
// Exit status: 0 ok, 2 configuration error, 3 transfer did not complete.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mpquic/mpquic.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitIncomplete = 3;

mpquic::ExportFormat parse_format(const std::string& s) {
  return s == "json" ? mpquic::ExportFormat::Json : mpquic::ExportFormat::Csv;
}

void print_summary(const mpquic::MetricsReport& r) {
  std::printf("%s/%s seed=%llu complete=%s time=%.3fs goodput=%.1fkB/s ack=%.2fB ranges=%.2f "
              "max_holes=%llu losses=%llu+%llu spurious=%llu pto=%llu\n",
              r.mode.c_str(), r.scheduler.c_str(), static_cast<unsigned long long>(r.seed),
              r.complete ? "yes" : "no", r.completion_time, r.goodput, r.avg_ack_frame_size,
              r.avg_ack_range_count, static_cast<unsigned long long>(r.max_hole_count),
              static_cast<unsigned long long>(r.packet_threshold_losses),
              static_cast<unsigned long long>(r.time_threshold_losses),
              static_cast<unsigned long long>(r.spurious_retx),
              static_cast<unsigned long long>(r.pto_count));
  for (const auto& p : r.paths) {
    std::printf("  path %u %-8s sent=%llu drops=%llu rtt_samples=%llu acks=%llu\n", p.path,
                p.name.c_str(), static_cast<unsigned long long>(p.data_packets_sent),
                static_cast<unsigned long long>(p.queue_drops + p.random_losses),
                static_cast<unsigned long long>(p.rtt_sample_count),
                static_cast<unsigned long long>(p.ack_frames_sent));
  }
}

void print_comparison(const mpquic::ComparisonReport& c) {
  std::printf("%-13s %10s %10s %8s %10s %10s %8s %9s %9s %8s\n", "default_limit", "spns_s",
              "mpns_s", "delta%", "spns_kB/s", "mpns_kB/s", "delta%", "spns_ackB", "mpns_ackB",
              "delta%");
  for (const auto& row : c.rows) {
    const auto& s = row.spns;
    const auto& m = row.mpns;
    std::printf("%-13s %10.3f %10.3f %8.2f %10.1f %10.1f %8.2f %9.2f %9.2f %8.2f\n",
                row.setting.c_str(), s.completion_time, m.completion_time,
                mpquic::delta_percent(s.completion_time, m.completion_time), s.goodput, m.goodput,
                mpquic::delta_percent(s.goodput, m.goodput), s.avg_ack_frame_size,
                m.avg_ack_frame_size,
                mpquic::delta_percent(s.avg_ack_frame_size, m.avg_ack_frame_size));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multipath QUIC packet number space simulator"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::string format = "csv";
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<double> duration_cap;
  std::string sweep;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "scenario file")->required();
    cmd->add_option("--out", out, "write the report here");
    cmd->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    cmd->add_option("--seed", seed, "override the scenario seed");
    cmd->add_option("--duration-cap", duration_cap, "simulated seconds before giving up");
  };

  CLI::App* run = app.add_subcommand("run", "simulate one transfer");
  add_common(run);
  run->add_option("--mode", mode, "spns or mpns")->check(CLI::IsMember({"spns", "mpns"}));

  CLI::App* compare = app.add_subcommand("compare", "SPNS vs MPNS over a Default_Limit sweep");
  add_common(compare);
  compare->add_option("--sweep-default-limit", sweep,
                      "comma list of limits; 'off' runs without suppression");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    mpquic::ScenarioConfig cfg = mpquic::load_scenario(config);
    if (mode) cfg.mode = mpquic::parse_space_mode(*mode);
    if (seed) cfg.seed = *seed;
    if (duration_cap) {
      cfg.duration_cap_s = *duration_cap;
      mpquic::validate(cfg);
    }

    if (*run) {
      const mpquic::MetricsReport r = mpquic::run_scenario(cfg);
      print_summary(r);
      if (!out.empty()) mpquic::export_report(r, parse_format(format), out);
      return r.complete ? 0 : kExitIncomplete;
    }

    const auto points = sweep.empty() ? std::vector<mpquic::SweepPoint>{}
                                      : mpquic::parse_sweep(sweep);
    const mpquic::ComparisonReport c = mpquic::compare_modes(cfg, points);
    print_comparison(c);
    if (!out.empty()) mpquic::export_comparison(c, parse_format(format), out);
    for (const auto& row : c.rows) {
      if (!row.spns.complete || !row.mpns.complete) return kExitIncomplete;
    }
    return 0;
  } catch (const mpquic::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
