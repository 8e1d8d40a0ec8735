#include <random>
#include <set>

#include <gtest/gtest.h>

#include "mpquic/receiver.hpp"

using namespace mpquic;

namespace {

constexpr Micros ms(std::int64_t v) { return Micros{v * 1000}; }

bool emits(const std::vector<ReceiverAction>& a, PathId p) {
  return a.size() == 1 && std::holds_alternative<EmitAckOnPath>(a[0]) &&
         std::get<EmitAckOnPath>(a[0]).path == p;
}

}  // namespace

// Packet numbers from the two-path illustration: path 0 carried
// {1,2,6,7,11,12}, path 1 carried {0,3,4,5,8,9,10,13,14,15}.
TEST(Receiver, TwoPathIllustrationFrames) {
  AckReceiver rx(SpaceMode::SPNS, 2);
  for (PacketNumber pn : {1, 2, 6}) rx.on_packet_received(0, pn, ms(1), true);
  for (PacketNumber pn : {0, 3, 4, 5, 8, 9, 10}) rx.on_packet_received(1, pn, ms(1), true);

  rx.on_packet_received(0, 7, ms(2), true);
  const AckFrame f0 = rx.build_ack_frame(0, ms(2));
  EXPECT_EQ(f0.largest_acked, 7u);
  EXPECT_EQ(f0.ranges, (AckRanges{{7, 0}}));
  EXPECT_EQ(ack_frame_wire_size(f0, SpaceMode::SPNS), 5u);

  rx.on_packet_received(1, 13, ms(3), true);
  const AckFrame f1 = rx.build_ack_frame(1, ms(3));
  EXPECT_EQ(f1.largest_acked, 13u);
  EXPECT_EQ(f1.ranges, (AckRanges{{13, 13}, {10, 0}}));
  EXPECT_EQ(ack_frame_wire_size(f1, SpaceMode::SPNS), 7u);
}

TEST(Receiver, ThresholdAndTimer) {
  AckReceiver rx(SpaceMode::MPNS, 2);
  auto a = rx.on_packet_received(0, 0, ms(10), true);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(std::get<ArmTimer>(a[0]), (ArmTimer{0, ms(35)}));
  EXPECT_TRUE(emits(rx.on_packet_received(0, 1, ms(11), true), 0));
  EXPECT_FALSE(rx.ack_timer_deadline(0));

  // Counters are per path: one packet on each path arms two timers.
  rx.build_ack_frame(0, ms(11));
  a = rx.on_packet_received(0, 2, ms(20), true);
  auto b = rx.on_packet_received(1, 0, ms(21), true);
  EXPECT_EQ(std::get<ArmTimer>(a[0]).path, 0u);
  EXPECT_EQ(std::get<ArmTimer>(b[0]).path, 1u);

  EXPECT_THROW(rx.on_ack_timer(0, ms(44)), InvariantViolation);
  const AckFrame f = rx.on_ack_timer(0, ms(45));
  EXPECT_EQ(f.largest_acked, 2u);
  EXPECT_EQ(f.ack_delay, ms(25));
  EXPECT_THROW(rx.on_ack_timer(0, ms(46)), InvariantViolation);
  EXPECT_EQ(rx.ack_timer_deadline(1), ms(46));
}

TEST(Receiver, NonElicitingAndDuplicates) {
  AckReceiver rx(SpaceMode::SPNS, 1);
  EXPECT_TRUE(rx.on_packet_received(0, 0, ms(1), false).empty());
  EXPECT_FALSE(rx.on_packet_received(0, 1, ms(2), true).empty());
  EXPECT_TRUE(rx.on_packet_received(0, 1, ms(3), true).empty());
  EXPECT_EQ(rx.path_state(0).ack_eliciting_since_ack, 1u);
}

TEST(Receiver, OutOfOrderTriggersImmediateAckOnlyWithoutSuppression) {
  AckReceiver plain(SpaceMode::SPNS, 2);
  plain.on_packet_received(0, 0, ms(1), true);
  EXPECT_TRUE(emits(plain.on_packet_received(1, 5, ms(2), true), 1));

  RecvConfig cfg;
  cfg.suppression_enabled = true;
  AckReceiver quiet(SpaceMode::SPNS, 2, cfg);
  quiet.on_packet_received(0, 0, ms(1), true);
  const auto a = quiet.on_packet_received(1, 5, ms(2), true);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_TRUE(std::holds_alternative<ArmTimer>(a[0]));

  // First packet of a space is out of order unless it is number 0.
  AckReceiver first(SpaceMode::SPNS, 1);
  EXPECT_TRUE(emits(first.on_packet_received(0, 3, ms(1), true), 0));
}

TEST(Receiver, AckDelayMeasuredFromPathLargest) {
  AckReceiver rx(SpaceMode::SPNS, 2);
  rx.on_packet_received(0, 0, ms(5), true);
  rx.on_packet_received(1, 1, ms(9), true);
  const AckFrame f = rx.build_ack_frame(0, ms(12));
  EXPECT_EQ(f.largest_acked, 0u);
  EXPECT_EQ(f.ack_delay, ms(7));
  EXPECT_THROW(AckReceiver(SpaceMode::SPNS, 2).build_ack_frame(1, ms(1)), ProtocolError);
}

TEST(Receiver, PerPathAnchoringNeverExceedsPathLargest) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    AckReceiver rx(SpaceMode::SPNS, 2);
    std::optional<PacketNumber> largest[2];
    std::vector<PacketNumber> pns(300);
    for (std::size_t i = 0; i < pns.size(); ++i) pns[i] = i;
    std::shuffle(pns.begin(), pns.end(), rng);
    for (PacketNumber pn : pns) {
      const PathId p = static_cast<PathId>(rng() % 2);
      rx.on_packet_received(p, pn, ms(1), true);
      largest[p] = std::max(largest[p].value_or(0), pn);
      const PathId q = static_cast<PathId>(rng() % 2);
      if (!largest[q]) continue;
      const AckFrame f = rx.build_ack_frame(q, ms(1));
      ASSERT_EQ(f.largest_acked, *largest[q]);
      ASSERT_LE(f.ranges.size(), 64u);
    }
  }
}

TEST(Receiver, ConnectionAnchoringAblation) {
  RecvConfig cfg;
  cfg.per_path_anchoring = false;
  AckReceiver rx(SpaceMode::SPNS, 2, cfg);
  rx.on_packet_received(0, 4, ms(1), true);
  rx.on_packet_received(1, 2, ms(2), true);
  const AckFrame f = rx.build_ack_frame(1, ms(3));
  EXPECT_EQ(f.largest_acked, 4u);
  EXPECT_EQ(f.ack_delay, ms(2));
}

TEST(Receiver, MpnsSpacesAreIndependent) {
  AckReceiver rx(SpaceMode::MPNS, 2);
  for (PacketNumber pn = 0; pn < 10; ++pn) {
    rx.on_packet_received(0, pn, ms(1), true);
    rx.on_packet_received(1, pn, ms(1), true);
  }
  EXPECT_EQ(rx.total_holes(), 0u);
  const AckFrame f = rx.build_ack_frame(1, ms(2));
  EXPECT_EQ(f.space, 1u);
  EXPECT_EQ(f.ranges, (AckRanges{{9, 0}}));
}

TEST(RangeLimits, Cases) {
  const AckRanges seven{{60, 60}, {50, 50}, {40, 40}, {30, 30}, {20, 20}, {10, 10}, {0, 0}};
  const std::vector<PacketNumber> none;
  EXPECT_EQ(apply_range_limits(AckRanges{{9, 0}}, 4, 64, none), (AckRanges{{9, 0}}));

  const std::vector<PacketNumber> top{60, 40};
  EXPECT_EQ(apply_range_limits(seven, 4, 64, top), AckRanges(seven.begin(), seven.begin() + 4));

  const std::vector<PacketNumber> deep{50, 10};
  EXPECT_EQ(apply_range_limits(seven, 4, 64, deep), AckRanges(seven.begin(), seven.begin() + 6));

  EXPECT_EQ(apply_range_limits(seven, 2, 3, deep), AckRanges(seven.begin(), seven.begin() + 3));

  // Members of must_cover outside every range are ignored.
  const std::vector<PacketNumber> absent{15};
  EXPECT_EQ(apply_range_limits(seven, 2, 64, absent).size(), 2u);

  EXPECT_THROW(apply_range_limits(seven, 0, 64, none), ConfigError);
  EXPECT_THROW(apply_range_limits(seven, 8, 4, none), ConfigError);
}

TEST(RangeLimits, ConfigValidation) {
  RecvConfig cfg;
  cfg.maximum_limit = 2;
  cfg.default_limit = 4;
  EXPECT_THROW(AckReceiver(SpaceMode::SPNS, 2, cfg), ConfigError);
  cfg = {};
  cfg.ack_eliciting_threshold = 0;
  EXPECT_THROW(AckReceiver(SpaceMode::SPNS, 2, cfg), ConfigError);
}

// With suppression on, every received packet number shows up in at least one
// frame, and no frame exceeds maximum_limit. Timers fire at their deadline.
TEST(RangeLimits, AtLeastOnceUnderRandomArrivals) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    RecvConfig cfg;
    cfg.suppression_enabled = true;
    cfg.default_limit = 1 + rng() % 4;
    AckReceiver rx(SpaceMode::SPNS, 2, cfg);
    RangeSet covered;
    std::set<PacketNumber> got;
    std::map<PathId, Micros> timers;

    auto take = [&](const AckFrame& f) {
      ASSERT_LE(f.ranges.size(), cfg.maximum_limit);
      for (const auto& r : f.ranges) covered.insert(r);
    };

    std::vector<PacketNumber> pns(400);
    for (std::size_t i = 0; i < pns.size(); ++i) pns[i] = i;
    // Local shuffles only, as two paths with different delays produce.
    for (std::size_t i = 0; i + 1 < pns.size(); ++i) {
      if (rng() % 3 == 0) std::swap(pns[i], pns[std::min(pns.size() - 1, i + rng() % 20)]);
    }
    Micros now{0};
    for (PacketNumber pn : pns) {
      if (rng() % 7 == 0) continue;  // lost in flight
      now += Micros{static_cast<std::int64_t>(rng() % 4000)};
      for (auto it = timers.begin(); it != timers.end();) {
        if (it->second <= now && rx.ack_timer_deadline(it->first) == it->second) {
          take(rx.on_ack_timer(it->first, it->second));
        }
        it = it->second <= now ? timers.erase(it) : std::next(it);
      }
      const PathId p = static_cast<PathId>(rng() % 2);
      got.insert(pn);
      for (const auto& a : rx.on_packet_received(p, pn, now, true)) {
        if (const auto* e = std::get_if<EmitAckOnPath>(&a)) take(rx.build_ack_frame(e->path, now));
        if (const auto* t = std::get_if<ArmTimer>(&a)) timers[t->path] = t->deadline;
      }
    }
    for (const auto& [p, d] : timers) {
      if (rx.ack_timer_deadline(p) == d) take(rx.on_ack_timer(p, d));
    }
    for (PacketNumber pn : got) ASSERT_TRUE(covered.contains(pn)) << pn;
  }
}

TEST(Receiver, SecondElicitingPacketFlushes) {
  AckReceiver rx(SpaceMode::SPNS, 1);
  for (PacketNumber pn = 0; pn < 5; ++pn) rx.on_packet_received(0, pn, ms(1), true);
  rx.build_ack_frame(0, ms(1));
  const auto a = rx.on_packet_received(0, 5, ms(2), true);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_TRUE(std::holds_alternative<ArmTimer>(a[0]));
  EXPECT_TRUE(emits(rx.on_packet_received(0, 6, ms(3), true), 0));
}

TEST(Receiver, MpnsFrameCarriesSpace) {
  AckReceiver rx(SpaceMode::MPNS, 2);
  for (PacketNumber pn = 0; pn <= 10; ++pn) rx.on_packet_received(1, pn, ms(1), true);
  rx.on_packet_received(1, 13, ms(2), true);
  const AckFrame f = rx.build_ack_frame(1, ms(2));
  EXPECT_EQ(f.space, 1u);
  EXPECT_EQ(f.ranges, (AckRanges{{13, 13}, {10, 0}}));
}

// On a single path the two numbering modes see the same arrivals and must
// produce the same ranges.
TEST(Receiver, SinglePathModesAgree) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    AckReceiver s(SpaceMode::SPNS, 1), m(SpaceMode::MPNS, 1);
    Micros now{0};
    for (int i = 0; i < 60; ++i) {
      const PacketNumber pn = rng() % 80;
      now += Micros{static_cast<std::int64_t>(rng() % 3000)};
      s.on_packet_received(0, pn, now, true);
      m.on_packet_received(0, pn, now, true);
      if (rng() % 4 == 0) {
        ASSERT_EQ(s.build_ack_frame(0, now).ranges, m.build_ack_frame(0, now).ranges);
      }
    }
  }
}
