#include <random>

#include <gtest/gtest.h>

#include "micro_loss.hpp"
#include "mpquic/sender.hpp"

using namespace mpquic;

namespace {

constexpr Micros ms(std::int64_t v) { return Micros{v * 1000}; }

AckFrame ack(std::uint64_t space, AckRanges ranges, Micros delay = Micros{0}) {
  AckFrame f;
  f.space = space;
  f.largest_acked = ranges.front().largest;
  f.ack_delay = delay;
  f.ranges = std::move(ranges);
  return f;
}

void send(PacketSender& s, PathId p, Micros at, bool eliciting = true) {
  const PacketNumber pn = s.next_packet_number(p);
  s.on_packet_sent(p, SentPacketRecord{.pn = pn, .send_time = at, .size = 1000,
                                       .ack_eliciting = eliciting});
}

// Sends the two-path illustration pattern under SPNS: path 0 gets
// {1,2,6,7,11,12}, path 1 the rest of 0..15. Path 0 sends at t = pn ms,
// path 1 at t = pn ms as well.
PacketSender illustration() {
  PacketSender s(SpaceMode::SPNS, 2);
  const std::set<PacketNumber> on0{1, 2, 6, 7, 11, 12};
  for (PacketNumber pn = 0; pn < 16; ++pn) send(s, on0.count(pn) ? 0 : 1, ms(static_cast<int>(pn)));
  return s;
}

}  // namespace

TEST(Sender, SpnsNumbersAreSharedMpnsPerPath) {
  PacketSender spns(SpaceMode::SPNS, 2);
  EXPECT_EQ(spns.next_packet_number(0), 0u);
  EXPECT_EQ(spns.next_packet_number(1), 1u);
  EXPECT_EQ(spns.next_packet_number(0), 2u);
  PacketSender mpns(SpaceMode::MPNS, 2);
  EXPECT_EQ(mpns.next_packet_number(0), 0u);
  EXPECT_EQ(mpns.next_packet_number(1), 0u);
  EXPECT_EQ(mpns.next_packet_number(1), 1u);
}

TEST(Sender, IllustrationSampleOnFastPath) {
  PacketSender s = illustration();
  const auto r = s.on_ack_received(0, ack(0, {{7, 0}}), ms(40));
  ASSERT_TRUE(r.rtt_sample);
  EXPECT_EQ(r.rtt_sample->path, 0u);
  EXPECT_EQ(r.rtt_sample->sent_path, 0u);
  EXPECT_EQ(r.rtt_sample->value, ms(33));
  EXPECT_FALSE(r.rtt_sample->mixed);
  EXPECT_EQ(r.newly_acked.size(), 8u);
  EXPECT_TRUE(s.path(0).rtt.has_sample);
  EXPECT_FALSE(s.path(1).rtt.has_sample);
}

// Packet 13 is already acknowledged by the path-0 ACK, yet the ACK arriving on
// path 1 is the first there to cover it, so path 1 still gets its sample.
TEST(Sender, SlowPathSamplesAfterFastPathCoveredIt) {
  PacketSender s = illustration();
  s.on_ack_received(0, ack(0, {{15, 0}}), ms(30));
  const auto r = s.on_ack_received(1, ack(0, {{13, 13}, {10, 0}}), ms(120));
  EXPECT_TRUE(r.newly_acked.empty());
  ASSERT_TRUE(r.rtt_sample);
  EXPECT_EQ(r.rtt_sample->path, 1u);
  EXPECT_EQ(r.rtt_sample->value, ms(107));
  EXPECT_EQ(s.path(1).rtt.smoothed_rtt, ms(107));
}

TEST(Sender, NoSampleWhenLargestAlreadyCoveredOnThisPath) {
  PacketSender s = illustration();
  ASSERT_TRUE(s.on_ack_received(0, ack(0, {{7, 0}}), ms(40)).rtt_sample);
  EXPECT_FALSE(s.on_ack_received(0, ack(0, {{7, 0}}), ms(41)).rtt_sample);
  // New coverage below the largest does not qualify either.
  PacketSender t = illustration();
  t.on_ack_received(0, ack(0, {{7, 7}}), ms(40));
  EXPECT_FALSE(t.on_ack_received(0, ack(0, {{7, 0}}), ms(41)).rtt_sample);
}

TEST(Sender, NoSampleWhenOnlyNonElicitingIsNew) {
  PacketSender s(SpaceMode::MPNS, 1);
  send(s, 0, ms(0));
  send(s, 0, ms(1), false);
  EXPECT_TRUE(s.on_ack_received(0, ack(0, {{0, 0}}), ms(10)).rtt_sample);
  EXPECT_FALSE(s.on_ack_received(0, ack(0, {{1, 0}}), ms(12)).rtt_sample);
}

TEST(Sender, MixedSampleWhenLargestCameFromOtherPath) {
  PacketSender s = illustration();
  const auto r = s.on_ack_received(1, ack(0, {{12, 11}}), ms(50));
  ASSERT_TRUE(r.rtt_sample);
  EXPECT_TRUE(r.rtt_sample->mixed);
  EXPECT_EQ(r.rtt_sample->path, 1u);
  EXPECT_EQ(r.rtt_sample->sent_path, 0u);
  EXPECT_FALSE(s.path(0).rtt.has_sample);
  EXPECT_FALSE(s.path(1).rtt.has_sample);
}

TEST(Sender, MpnsAttributesSampleToSpaceOwner) {
  PacketSender s(SpaceMode::MPNS, 2);
  send(s, 0, ms(0));
  send(s, 1, ms(0));
  const auto r = s.on_ack_received(0, ack(1, {{0, 0}}), ms(90));
  ASSERT_TRUE(r.rtt_sample);
  EXPECT_EQ(r.rtt_sample->path, 1u);
  EXPECT_FALSE(r.rtt_sample->mixed);
  EXPECT_EQ(s.path(1).rtt.smoothed_rtt, ms(90));
  EXPECT_EQ(s.path(0).bytes_in_flight, 1000u);
}

TEST(Sender, ProtocolErrors) {
  PacketSender s(SpaceMode::MPNS, 2);
  send(s, 0, ms(0));
  EXPECT_THROW(s.on_ack_received(0, ack(0, {{1, 0}}), ms(5)), ProtocolError);
  EXPECT_THROW(s.on_ack_received(0, ack(2, {{0, 0}}), ms(5)), ProtocolError);
  EXPECT_THROW(s.on_ack_received(3, ack(0, {{0, 0}}), ms(5)), ProtocolError);
  AckFrame bad = ack(0, {{0, 0}});
  bad.largest_acked = 1;
  EXPECT_THROW(s.on_ack_received(0, bad, ms(5)), ProtocolError);
  EXPECT_THROW(s.on_packet_sent(0, SentPacketRecord{.pn = 0, .send_time = ms(1)}),
               InvariantViolation);
  EXPECT_THROW(s.on_packet_sent(0, SentPacketRecord{.pn = 5, .send_time = Micros{-1}}),
               InvariantViolation);
}

TEST(Sender, PacketThresholdCountsPathPositionsOnly) {
  // SPNS: path 0 sends 0, path 1 sends 1..3, path 0 sends 4. Acknowledging 4
  // must not declare 0 lost: on path 0 it is only one position behind.
  PacketSender s(SpaceMode::SPNS, 2);
  send(s, 0, ms(0));
  for (int i = 0; i < 3; ++i) send(s, 1, ms(0));
  send(s, 0, ms(0));
  auto r = s.on_ack_received(0, ack(0, {{4, 4}}), ms(1));
  EXPECT_TRUE(r.lost.empty());

  // Two more on path 0 acknowledged: 0 is now three positions behind.
  for (int i = 0; i < 2; ++i) send(s, 0, ms(1));
  r = s.on_ack_received(0, ack(0, {{6, 4}}), ms(2));
  ASSERT_EQ(r.lost.size(), 1u);
  EXPECT_EQ(r.lost[0].pn, 0u);
  EXPECT_EQ(s.counters().packet_threshold, 1u);
  EXPECT_EQ(s.path(1).unacked.size(), 3u);
}

TEST(Sender, TimeThreshold) {
  PacketSender s(SpaceMode::MPNS, 1);
  send(s, 0, ms(0));
  send(s, 0, ms(10));
  auto r = s.on_ack_received(0, ack(0, {{1, 1}}), ms(50));
  // rtt 40 ms, delay 45 ms: packet 0 is 50 ms old.
  ASSERT_EQ(r.lost.size(), 1u);
  EXPECT_EQ(s.counters().time_threshold, 1u);

  PacketSender t(SpaceMode::MPNS, 1);
  send(t, 0, ms(0));
  send(t, 0, ms(1));
  r = t.on_ack_received(0, ack(0, {{1, 1}}), ms(11));
  EXPECT_TRUE(r.lost.empty());
  // delay = 9/8 * 10 ms = 11.25 ms after packet 0's send time.
  EXPECT_EQ(t.loss_time(0), Micros{11'250});
  EXPECT_EQ(t.detect_losses(0, ms(12)).size(), 1u);
}

TEST(Sender, SpuriousLossIsReported) {
  PacketSender s(SpaceMode::MPNS, 1);
  for (int i = 0; i < 5; ++i) send(s, 0, ms(0));
  auto r = s.on_ack_received(0, ack(0, {{4, 3}}), ms(1));
  ASSERT_EQ(r.lost.size(), 2u);
  r = s.on_ack_received(0, ack(0, {{4, 3}, {0, 0}}), ms(2));
  ASSERT_EQ(r.spurious.size(), 1u);
  EXPECT_EQ(r.spurious[0].pn, 0u);
  EXPECT_EQ(s.counters().spurious, 1u);
}

TEST(Sender, BytesInFlightMatchesRecomputation) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    PacketSender s(SpaceMode::SPNS, 2);
    RangeSet acked;
    Micros now{0};
    PacketNumber next = 0;
    for (int step = 0; step < 300; ++step) {
      now += Micros{100};
      if (rng() % 3 != 0 || next == 0) {
        const PathId p = static_cast<PathId>(rng() % 2);
        s.on_packet_sent(p, SentPacketRecord{.pn = s.next_packet_number(p), .send_time = now,
                                             .size = 500 + rng() % 800,
                                             .ack_eliciting = rng() % 8 != 0});
        ++next;
        continue;
      }
      acked.insert(rng() % next);
      const PathId arrival = static_cast<PathId>(rng() % 2);
      s.on_ack_received(arrival, ack(0, acked.ranges()), now);
      for (PathId p = 0; p < 2; ++p) {
        ASSERT_EQ(s.path(p).bytes_in_flight, s.recompute_bytes_in_flight(p));
      }
    }
  }
}

TEST(Sender, PtoDeadlineAndProbe) {
  PacketSender s(SpaceMode::MPNS, 1);
  EXPECT_FALSE(s.pto_deadline(0));
  send(s, 0, ms(0));
  send(s, 0, ms(0));
  s.on_ack_received(0, ack(0, {{0, 0}}), ms(100));
  // srtt 100, rttvar 50: 100 + 200 + 25 = 325 ms after the last send.
  EXPECT_EQ(s.pto_deadline(0), ms(325));
  const auto probe = s.on_pto(0);
  ASSERT_TRUE(probe);
  EXPECT_EQ(probe->pn, 1u);
  EXPECT_EQ(s.pto_deadline(0), ms(650));
  EXPECT_EQ(s.counters().pto, 1u);
}

TEST(Rtt, SmoothingFollowsEstimatorFormulas) {
  RttStats r;
  update_rtt(r, ms(100), ms(0));
  EXPECT_EQ(r.smoothed_rtt, ms(100));
  EXPECT_EQ(r.rttvar, ms(50));
  EXPECT_EQ(r.min_rtt, ms(100));
  // 120 - 10 delay = 110; var = (3*50 + 10)/4 = 40; srtt = (700 + 110)/8.
  update_rtt(r, ms(120), ms(10));
  EXPECT_EQ(r.rttvar, ms(40));
  EXPECT_EQ(r.smoothed_rtt, Micros{101'250});
  // Delay is not subtracted when it would go below min_rtt.
  update_rtt(r, ms(105), ms(10));
  EXPECT_EQ(r.latest_rtt, ms(105));
  EXPECT_EQ(r.smoothed_rtt, Micros{(7 * 101'250 + 105'000) / 8});
  EXPECT_THROW(update_rtt(r, Micros{0}, Micros{0}), std::invalid_argument);
}

TEST(LossMicro, MatchesOracleSpns) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const auto o = micro::run(seed, SpaceMode::SPNS, false);
    ASSERT_EQ(o.mismatches, 0u) << seed;
    ASSERT_EQ(o.losses, o.oracle_losses) << seed;
  }
}

TEST(LossMicro, MatchesOracleMpns) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const auto o = micro::run(seed, SpaceMode::MPNS, false);
    ASSERT_EQ(o.mismatches, 0u) << seed;
  }
}

TEST(LossMicro, PureReorderHasNoFalseLosses) {
  std::size_t connection_wide = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    for (SpaceMode m : {SpaceMode::SPNS, SpaceMode::MPNS}) {
      const auto o = micro::run(seed, m, true);
      ASSERT_EQ(o.losses, 0u) << seed;
      ASSERT_EQ(o.false_losses, 0u) << seed;
      connection_wide += o.connection_wide_false;
    }
  }
  // The same orders would trip a single connection-wide threshold.
  EXPECT_GT(connection_wide, 0u);
}

TEST(Sender, IllustrationPathHistories) {
  const PacketSender s = illustration();
  EXPECT_EQ(s.path(0).unacked, (std::set<PacketNumber>{1, 2, 6, 7, 11, 12}));
  EXPECT_EQ(s.path(1).unacked, (std::set<PacketNumber>{0, 3, 4, 5, 8, 9, 10, 13, 14, 15}));
}

// Largest acknowledged on path 0 is 11, the fifth packet that path sent, so
// only the first two of its history are three positions behind.
TEST(Sender, IllustrationPacketThresholdLoss) {
  PacketSender s = illustration();
  const auto r = s.on_ack_received(0, ack(0, {{11, 11}}), ms(200));
  std::set<PacketNumber> lost;
  for (const auto& rec : r.lost) lost.insert(rec.pn);
  EXPECT_EQ(lost, (std::set<PacketNumber>{1, 2}));
  EXPECT_EQ(s.path(0).unacked, (std::set<PacketNumber>{6, 7, 12}));
}

TEST(Sender, StaleAckOnSamePathGivesNoSample) {
  PacketSender s = illustration();
  ASSERT_TRUE(s.on_ack_received(1, ack(0, {{14, 13}}), ms(120)).rtt_sample);
  const auto r = s.on_ack_received(1, ack(0, {{13, 13}, {10, 0}}), ms(125));
  EXPECT_FALSE(r.rtt_sample);
  // 0..9 on path 1 were declared lost by the first ACK; the rest are new.
  EXPECT_EQ(r.newly_acked.size(), 5u);
  EXPECT_EQ(r.spurious.size(), 6u);
  EXPECT_EQ(s.path(1).rtt.smoothed_rtt, ms(106));
}

TEST(Rtt, SteadySamplesShrinkVariance) {
  RttStats r;
  update_rtt(r, ms(100), ms(0));
  update_rtt(r, ms(100), ms(0));
  EXPECT_EQ(r.smoothed_rtt, ms(100));
  EXPECT_EQ(r.rttvar, Micros{37'500});
}
