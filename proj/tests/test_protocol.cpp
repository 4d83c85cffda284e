#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <thread>

#include "ff/errors.hpp"
#include "ff/messages.hpp"
#include "ff/rng.hpp"
#include "ff/transport.hpp"

using namespace ff;

namespace {

Message random_message(Xoshiro256ss& rng) {
  auto rand_rows = [&](std::size_t max_len) {
    std::vector<std::int32_t> rows(rng.next_below(max_len + 1));
    for (auto& r : rows) r = static_cast<std::int32_t>(rng.next_below(10000));
    return rows;
  };
  auto rand_double = [&] { return static_cast<double>(rng.next()) * 0x1.0p-32; };

  switch (rng.next_below(12)) {
    case 0: {
      TrainInit m{static_cast<std::int32_t>(rng.next_below(100)), rand_rows(50), {}};
      const auto n_feats = rng.next_below(8);
      for (std::uint64_t i = 0; i < n_feats; ++i) {
        m.feature_ids.push_back(FeatureId{static_cast<std::uint32_t>(rng.next_below(1000))});
      }
      return m;
    }
    case 1: {
      LocalBest m{static_cast<std::int32_t>(rng.next_below(100)),
                  static_cast<std::int32_t>(rng.next_below(1000)), std::nullopt};
      if (rng.next_below(2)) m.improvement = rand_double();
      return m;
    }
    case 2:
      return WinnerNotify{static_cast<std::int32_t>(rng.next_below(100)),
                          static_cast<std::int32_t>(rng.next_below(1000))};
    case 3:
      return SplitIndices{static_cast<std::int32_t>(rng.next_below(100)),
                          static_cast<std::int32_t>(rng.next_below(1000)),
                          FeatureId{static_cast<std::uint32_t>(rng.next_below(1000))},
                          rand_double(), rand_rows(40), rand_rows(40)};
    case 4:
      return SplitBroadcast{static_cast<std::int32_t>(rng.next_below(100)),
                            static_cast<std::int32_t>(rng.next_below(1000)), rand_rows(40),
                            rand_rows(40)};
    case 5:
      return MakeLeaf{static_cast<std::int32_t>(rng.next_below(100)),
                      static_cast<std::int32_t>(rng.next_below(1000))};
    case 6:
      return TreeDone{static_cast<std::int32_t>(rng.next_below(100))};
    case 7:
      return PredictInit{static_cast<std::int32_t>(rng.next_below(5000)),
                         rng.next_below(2) ? PredictMethod::Classical : PredictMethod::Intersect,
                         rng.next_below(2) == 1};
    case 8: {
      LeafAssignmentsMsg m;
      const auto n_trees = rng.next_below(4);
      for (std::uint64_t t = 0; t < n_trees; ++t) {
        TreeLeafSets sets;
        sets.tree_id = static_cast<std::int32_t>(t);
        const auto n_leaves = rng.next_below(5);
        for (std::uint64_t l = 0; l < n_leaves; ++l) {
          sets.leaf_rows.emplace_back(static_cast<std::int32_t>(rng.next_below(100)),
                                      rand_rows(20));
        }
        m.trees.push_back(std::move(sets));
      }
      return m;
    }
    case 9:
      return ClassicalRoute{static_cast<std::int32_t>(rng.next_below(100)),
                            static_cast<std::int32_t>(rng.next_below(1000)), rand_rows(40)};
    case 10:
      return ClassicalRouteReply{static_cast<std::int32_t>(rng.next_below(100)),
                                 static_cast<std::int32_t>(rng.next_below(1000)), rand_rows(40),
                                 rand_rows(40)};
    default:
      return Shutdown{};
  }
}

}  // namespace

TEST_CASE("wire codec round-trips 1000 randomized messages") {
  Xoshiro256ss rng(42);
  for (int i = 0; i < 1000; ++i) {
    const Message msg = random_message(rng);
    const auto frame = wire_encode(msg);
    const Message back = wire_decode(frame);
    CHECK(back == msg);
  }
}

TEST_CASE("Shutdown encodes to the 5-byte frame") {
  const auto frame = wire_encode(Shutdown{});
  REQUIRE(frame.size() == 5);
  CHECK(frame[0] == 0);
  CHECK(frame[1] == 0);
  CHECK(frame[2] == 0);
  CHECK(frame[3] == 1);  // body = tag only
}

TEST_CASE("wire_decode rejects malformed frames") {
  auto frame = wire_encode(TreeDone{3});

  SUBCASE("unknown tag") {
    frame[4] = 0xFF;
    CHECK_THROWS_AS(wire_decode(frame), ProtocolError);
  }
  SUBCASE("truncated") {
    frame.pop_back();
    CHECK_THROWS_AS(wire_decode(frame), ProtocolError);
  }
  SUBCASE("trailing bytes") {
    frame.push_back(0);
    CHECK_THROWS_AS(wire_decode(frame), ProtocolError);
  }
  SUBCASE("length overflow") {
    frame[0] = 0x7F;
    CHECK_THROWS_AS(wire_decode(frame), ProtocolError);
  }
  SUBCASE("empty") {
    CHECK_THROWS_AS(wire_decode(std::vector<std::uint8_t>{0, 0, 0, 0}), ProtocolError);
  }
}

TEST_CASE("inproc channels deliver in order and fail closed") {
  InprocHub hub(2);
  auto master = hub.links(0);
  auto c1 = hub.links(1);

  master->to(1).send(TreeDone{1});
  master->to(1).send(TreeDone{2});
  auto first = c1->to(0).recv();
  auto second = c1->to(0).recv();
  CHECK(std::get<TreeDone>(first).tree_id == 1);
  CHECK(std::get<TreeDone>(second).tree_id == 2);

  hub.close_all();
  CHECK_THROWS_AS(c1->to(0).recv(), ProtocolError);
  CHECK_THROWS_AS(master->to(1).send(TreeDone{3}), ProtocolError);
}

TEST_CASE("gather returns rank order and counts collectives") {
  constexpr int kClients = 3;
  InprocHub hub(kClients);
  PartyEndpoint master(hub.links(0));
  master.set_phase("test");

  std::vector<std::thread> clients;
  for (int r = 1; r <= kClients; ++r) {
    clients.emplace_back([&hub, r] {
      PartyEndpoint ep(hub.links(r));
      ep.send(0, LocalBest{0, 0, 0.1 * r});
      (void)ep.recv(0);  // broadcast payload
    });
  }

  const auto gathered = master.gather();
  REQUIRE(gathered.size() == kClients);
  for (int r = 1; r <= kClients; ++r) {
    CHECK(gathered[static_cast<std::size_t>(r - 1)].first == r);
    const auto& lb = std::get<LocalBest>(gathered[static_cast<std::size_t>(r - 1)].second);
    CHECK(*lb.improvement == doctest::Approx(0.1 * r));
  }

  master.broadcast(MakeLeaf{0, 0});
  for (auto& t : clients) t.join();

  const auto stats = master.phase_stats("test");
  CHECK(stats.gathers == 1);
  CHECK(stats.broadcasts == 1);
  // 3 recvs in the gather + 3 sends in the broadcast.
  CHECK(stats.point_to_point == 6);
}

TEST_CASE("gather reports the dead client by rank") {
  InprocHub hub(2);
  PartyEndpoint master(hub.links(0));
  auto c1 = hub.links(1);
  auto c2 = hub.links(2);
  c1->to(0).send(LocalBest{0, 0, 0.5});
  c2->close_all();
  try {
    master.gather();
    FAIL("expected ProtocolError");
  } catch (const ProtocolError& e) {
    CHECK(std::string(e.what()).find("client 2") != std::string::npos);
  }
}

TEST_CASE("M=1 broadcast is a single send") {
  InprocHub hub(1);
  PartyEndpoint master(hub.links(0));
  master.set_phase("p");
  auto client = hub.links(1);
  master.broadcast(Shutdown{});
  CHECK(std::holds_alternative<Shutdown>(client->to(0).recv()));
  CHECK(master.phase_stats("p").point_to_point == 1);
  CHECK(master.phase_stats("p").broadcasts == 1);
}

TEST_CASE("tcp transport round-trips messages with rank hellos") {
  TcpListener listener(0);
  const std::uint16_t port = listener.port();
  std::unique_ptr<PartyLinks> master_links;
  std::thread master_thread([&] { master_links = listener.accept_clients(2); });

  std::thread c1([&] {
    auto links = TcpClientLinks::connect(1, 2, "127.0.0.1", port);
    links->to(0).send(LocalBest{7, 3, 0.25});
    auto msg = links->to(0).recv();
    CHECK(std::get<TreeDone>(msg).tree_id == 7);
  });
  std::thread c2([&] {
    auto links = TcpClientLinks::connect(2, 2, "127.0.0.1", port);
    auto msg = links->to(0).recv();
    CHECK(std::holds_alternative<Shutdown>(msg));
  });

  master_thread.join();
  auto lb = std::get<LocalBest>(master_links->to(1).recv());
  CHECK(lb.tree_id == 7);
  CHECK(*lb.improvement == 0.25);
  master_links->to(1).send(TreeDone{7});
  master_links->to(2).send(Shutdown{});
  c1.join();
  c2.join();
}

TEST_CASE("tcp frame transform hook wraps bodies transparently") {
  FrameTransform xor_mask;
  xor_mask.encode = [](std::vector<std::uint8_t> b) {
    for (auto& x : b) x ^= 0x5A;
    return b;
  };
  xor_mask.decode = xor_mask.encode;

  TcpListener listener(0);
  std::unique_ptr<PartyLinks> master_links;
  std::thread master_thread([&] { master_links = listener.accept_clients(1, &xor_mask); });
  auto client = TcpClientLinks::connect(1, 1, "127.0.0.1", listener.port(), &xor_mask);
  master_thread.join();

  master_links->to(1).send(SplitBroadcast{1, 2, {3, 4}, {5}});
  const auto msg = client->to(0).recv();
  const auto& sb = std::get<SplitBroadcast>(msg);
  CHECK(sb.left_rows == std::vector<std::int32_t>{3, 4});
  CHECK(sb.right_rows == std::vector<std::int32_t>{5});
}

TEST_CASE("payload id accounting") {
  CHECK(payload_id_count(TrainInit{0, {1, 2, 3}, {FeatureId{9}}}) == 4);
  CHECK(payload_id_count(SplitBroadcast{0, 0, {1}, {2, 3}}) == 3);
  CHECK(payload_id_count(SplitIndices{0, 0, FeatureId{1}, 0.5, {1}, {2}}) == 3);
  CHECK(payload_id_count(LocalBest{0, 0, 0.5}) == 0);
  CHECK(payload_id_count(Shutdown{}) == 0);
  LeafAssignmentsMsg la;
  la.trees.push_back({0, {{4, {0, 1}}, {5, {2}}}});
  CHECK(payload_id_count(la) == 5);  // 2 leaf ids + 3 rows
}
