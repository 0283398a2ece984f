#include <doctest.h>

#include <map>

#include "manynode/errors.hpp"
#include "manynode/mpi.hpp"
#include "manynode/rng.hpp"

using namespace manynode;
using namespace manynode::mpi;

namespace {

/// Slot durations per rank, in ns. Missing entries use the slot's default.
struct SlotTimes final : ComputeSource {
    std::map<int, double> by_slot;
    std::map<std::pair<int, int>, double> by_rank;
    SimTime compute_time(int rank, int slot) override {
        if (auto it = by_rank.find({rank, slot}); it != by_rank.end()) return from_ns(it->second);
        if (auto it = by_slot.find(slot); it != by_slot.end()) return from_ns(it->second);
        return 0;
    }
};

struct Forward final : net::TransferListener {
    World* world = nullptr;
    void on_injected(std::uint64_t t, SimTime at) override { world->on_injected(t, at); }
    void on_delivered(std::uint64_t t, SimTime at) override { world->on_delivered(t, at); }
};

struct Outcome {
    std::vector<RankStats> ranks;
    WorldStats stats;
    std::vector<CollectiveRecord> collectives;
    net::NetworkStats network;
    std::vector<std::vector<Interval>> traces;

    SimTime finish(int r) const { return ranks[r].finish; }
    SimTime last() const {
        SimTime t = 0;
        for (const auto& r : ranks) t = std::max(t, r.finish);
        return t;
    }
};

net::NetworkConfig zero_cost() {
    net::NetworkConfig cfg;
    cfg.zero_cost = true;
    return cfg;
}

Outcome run(std::vector<Program> programs, SlotTimes times = {}, net::NetworkConfig cfg = zero_cost(),
            int ranks_per_node = 1) {
    const int n = static_cast<int>(programs.size());
    const int nodes = (n + ranks_per_node - 1) / ranks_per_node;
    const auto topo = net::build_topology(cfg, nodes);
    Engine engine;
    Forward fwd;
    net::Network network(engine, *topo, cfg, fwd);
    std::vector<int> placement(n);
    for (int r = 0; r < n; ++r) placement[r] = r / ranks_per_node;
    World world(engine, network, placement, std::move(programs), times, true);
    fwd.world = &world;
    world.start();
    engine.run_until_idle();
    world.check_finished();
    Outcome out;
    for (int r = 0; r < n; ++r) {
        out.ranks.push_back(world.rank_stats(r));
        out.traces.push_back(world.trace(r));
    }
    out.stats = world.stats();
    out.collectives = world.collectives();
    out.network = network.stats();
    return out;
}

std::vector<Program> uniform(int n, const Program& p) { return std::vector<Program>(n, p); }

// Delivery of one message over a node-leaf-node path at 100 Gb/s, 90 ns, 4 KB mtu
// when the last packet is shorter than the mtu.
SimTime two_hop(std::uint64_t bytes) {
    return serialization_time(bytes, 100e9) + serialization_time(4096, 100e9) + 2 * from_ns(90);
}

constexpr std::uint64_t kMB = 1'000'000;

}  // namespace

TEST_SUITE("mpi") {

TEST_CASE("blocking send then receive completes at delivery") {
    const auto out = run({{Op::send(1, 0, kMB)}, {Op::recv(0, 0)}}, {}, net::NetworkConfig{});
    CHECK(out.finish(1) == two_hop(kMB));
    CHECK(out.finish(0) == serialization_time(kMB, 100e9));  // local injection
    CHECK(out.ranks[1].comm == out.finish(1));
    CHECK(out.stats.user_messages_matched == 1);
}

TEST_CASE("late sender: a posted receive completes at delivery") {
    SlotTimes t;
    t.by_slot[0] = 5000;
    const auto out = run({{Op::compute(0), Op::send(1, 0, kMB)}, {Op::recv(0, 0)}}, t, net::NetworkConfig{});
    CHECK(out.finish(1) == from_ns(5000) + two_hop(kMB));
}

TEST_CASE("matching is FIFO per source and tag") {
    SlotTimes t;
    t.by_slot[0] = 100;
    t.by_slot[1] = 1000;
    // rank 0 sends tag 5 at 0 and 100; rank 1 waits 1000 before the second receive
    const auto out = run({{Op::send(1, 5, 8), Op::compute(0), Op::send(1, 5, 8), Op::send(1, 9, 8)},
                          {Op::recv(0, 9), Op::recv(0, 5), Op::compute(1), Op::recv(0, 5)}},
                         t);
    CHECK(out.finish(1) == from_ns(1100));
    CHECK(out.ranks[1].comm == from_ns(100));
    CHECK(out.stats.user_messages_matched == 3);
    CHECK(out.stats.user_messages_sent == 3);
}

TEST_CASE("non-blocking receives overlap with compute") {
    SlotTimes t;
    t.by_slot[0] = 50'000;   // sender delay
    t.by_slot[1] = 100'000;  // receiver compute
    SUBCASE("message arrives during compute") {
        const auto out = run({{Op::compute(0), Op::send(1, 0, 8)},
                              {Op::irecv(0, 0, 0), Op::compute(1), Op::wait(0)}},
                             t);
        CHECK(out.ranks[1].comm == 0);
        CHECK(out.finish(1) == from_ns(100'000));
    }
    SUBCASE("waiting immediately") {
        const auto out = run({{Op::compute(0), Op::send(1, 0, 8)}, {Op::irecv(0, 0, 0), Op::wait(0)}}, t);
        CHECK(out.ranks[1].comm == from_ns(50'000));
    }
}

TEST_CASE("usage errors") {
    CHECK_THROWS_AS(run({{Op::isend(0, 0, 8, 0), Op::irecv(0, 0, 1), Op::waitall(0, 2), Op::wait(0)}}), UsageError);
    CHECK_THROWS_AS(run({{Op::wait(3)}}), UsageError);
    CHECK_THROWS_AS(run({{Op::irecv(0, 0, 0), Op::irecv(0, 0, 0)}}), UsageError);
    CHECK_THROWS_AS(run({{Op::send(4, 0, 8)}}), UsageError);
}

TEST_CASE("self messages are matched") {
    const auto out = run({{Op::isend(0, 1, 8, 0), Op::recv(0, 1), Op::wait(0)}});
    CHECK(out.stats.user_messages_matched == 1);
}

TEST_CASE("allreduce") {
    SlotTimes t;
    SUBCASE("one rank completes at call time") {
        t.by_slot[0] = 100;
        const auto out = run({{Op::compute(0), Op::allreduce(8)}}, t);
        CHECK(out.finish(0) == from_ns(100));
        CHECK(out.stats.collective_messages == 0);
    }
    SUBCASE("zero-cost: everyone leaves with the slowest rank") {
        for (int r = 0; r < 4; ++r) t.by_rank[{r, 0}] = 100.0 * (r + 1);
        const auto out = run(uniform(4, {Op::compute(0), Op::allreduce(8)}), t);
        for (int r = 0; r < 4; ++r) CHECK(out.finish(r) == from_ns(400));
        CHECK(out.stats.collective_messages == 4 * 2);
        CHECK(out.collectives.at(0).last_entry == from_ns(400));
    }
    SUBCASE("eight ranks, 1 MB on an idle fat tree: three synchronized rounds") {
        const auto out = run(uniform(8, {Op::allreduce(kMB)}), t, net::NetworkConfig{});
        for (int r = 0; r < 8; ++r) CHECK(out.finish(r) == 3 * two_hop(kMB));
        CHECK(to_ns(3 * two_hop(kMB)) == doctest::Approx(241'523.04));
    }
    SUBCASE("non power of two folds the extra ranks") {
        for (int r = 0; r < 6; ++r) t.by_rank[{r, 0}] = 10.0 * r;
        const auto out = run(uniform(6, {Op::compute(0), Op::allreduce(8)}), t);
        CHECK(out.stats.collective_messages == 2 + 4 * 2 + 2);
        for (int r = 0; r < 6; ++r) CHECK(out.finish(r) == from_ns(50));
    }
}

TEST_CASE("barrier") {
    SlotTimes t;
    SUBCASE("one rank") {
        const auto out = run({{Op::barrier()}});
        CHECK(out.finish(0) == 0);
    }
    SUBCASE("sixteen staggered ranks wait for the last entry") {
        for (int r = 0; r < 16; ++r) t.by_rank[{r, 0}] = r;
        const auto out = run(uniform(16, {Op::compute(0), Op::barrier()}), t);
        for (int r = 0; r < 16; ++r) CHECK(out.finish(r) == from_ns(15));
        CHECK(out.stats.collective_messages == 16 * 4);
    }
    SUBCASE("five ranks take three rounds") {
        const auto out = run(uniform(5, {Op::barrier()}));
        CHECK(out.stats.collective_messages == 5 * 3);
    }
}

TEST_CASE("reduce and broadcast trees") {
    SlotTimes t;
    SUBCASE("two ranks: one message") {
        const auto out = run(uniform(2, {Op::reduce_tree(0, 64)}));
        CHECK(out.stats.collective_messages == 1);
    }
    SUBCASE("depth of a 1024-rank binary tree is 10") {
        t.by_slot[1] = 1000;  // encode only
        const auto out = run(uniform(1024, {Op::reduce_tree(0, 8, 2, 1, -1)}), t);
        CHECK(out.finish(0) == from_ns(10 * 1000));
        CHECK(out.stats.collective_messages == 1023);
    }
    SUBCASE("64 ranks with 100 us encode and decode") {
        t.by_slot[1] = 100'000;
        t.by_slot[2] = 100'000;
        const auto out = run(uniform(64, {Op::reduce_tree(0, 8, 2, 1, 2)}), t);
        // level-k subtree root sends at 100 + 200k us; the root finishes at 6 * 200 us
        CHECK(out.finish(0) == from_ns(6 * 200'000));
        for (int r = 1; r < 64; ++r) CHECK(out.finish(r) <= out.finish(0));
        // codec time counts as communication
        CHECK(out.ranks[0].comm == from_ns(6 * 200'000));
    }
    SUBCASE("fanout 4 tree is shallower") {
        t.by_slot[1] = 1000;
        const auto out = run(uniform(64, {Op::reduce_tree(0, 8, 4, 1, -1)}), t);
        CHECK(out.finish(0) == from_ns(3 * 1000));
    }
    SUBCASE("broadcast reaches every rank") {
        for (int r = 0; r < 9; ++r) t.by_rank[{r, 0}] = r == 3 ? 500 : 0;
        const auto out = run(uniform(9, {Op::compute(0), Op::bcast_tree(3, 64)}), t);
        for (int r = 0; r < 9; ++r) CHECK(out.finish(r) == from_ns(500));
        CHECK(out.stats.collective_messages == 8);
    }
    SUBCASE("non-zero root") {
        for (int r = 0; r < 7; ++r) t.by_rank[{r, 0}] = 10.0 * r;
        const auto out = run(uniform(7, {Op::compute(0), Op::reduce_tree(5, 8)}), t);
        CHECK(out.finish(5) == from_ns(60));
        CHECK(out.collectives.at(0).last_completion >= out.collectives.at(0).last_entry);
    }
}

TEST_CASE("alltoall") {
    SlotTimes t;
    SUBCASE("two ranks exchange once each way") {
        const auto out = run(uniform(2, {Op::alltoall(64)}));
        CHECK(out.stats.collective_messages == 2);
    }
    SUBCASE("zero-cost: completion at the slowest entry") {
        for (int r = 0; r < 4; ++r) t.by_rank[{r, 0}] = r == 2 ? 700 : 0;
        const auto out = run(uniform(4, {Op::compute(0), Op::alltoall(64)}), t);
        for (int r = 0; r < 4; ++r) CHECK(out.finish(r) == from_ns(700));
    }
    SUBCASE("eight ranks saturate the receiver links") {
        const auto out = run(uniform(8, {Op::alltoall(kMB)}), t, net::NetworkConfig{});
        // seven back-to-back 1 MB transfers per link plus one packet and two latencies
        const SimTime expected = 7 * serialization_time(kMB, 100e9) + serialization_time(4096, 100e9) + 2 * from_ns(90);
        for (int r = 0; r < 8; ++r) CHECK(out.finish(r) == expected);
        CHECK(out.stats.collective_messages == 56);
    }
}

TEST_CASE("protocol errors") {
    CHECK_THROWS_AS(run({{Op::allreduce(8)}, {Op::barrier()}}), ProtocolError);
    CHECK_THROWS_AS(run({{Op::allreduce(8)}, {Op::allreduce(16)}}), ProtocolError);
    CHECK_THROWS_AS(run({{Op::reduce_tree(0, 8)}, {Op::reduce_tree(1, 8)}}), ProtocolError);
}

TEST_CASE("deadlocks name the stuck ranks") {
    try {
        run({{Op::recv(1, 0)}, {Op::recv(0, 0)}, {}});
        FAIL("expected a deadlock");
    } catch (const DeadlockError& e) {
        const std::string what = e.what();
        CHECK(what.find("2 rank(s)") != std::string::npos);
        CHECK(what.find(" 0@op0") != std::string::npos);
        CHECK(what.find(" 1@op0") != std::string::npos);
    }
    CHECK_THROWS_AS(run({{Op::barrier()}, {}}), DeadlockError);
}

TEST_CASE("property: compute plus communication fills each rank's timeline") {
    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(14));
        SlotTimes t;
        for (int r = 0; r < n; ++r) t.by_rank[{r, 0}] = static_cast<double>(rng.below(100'000));
        std::vector<Program> progs(n);
        for (int r = 0; r < n; ++r) {
            const int right = (r + 1) % n, left = (r + n - 1) % n;
            for (int it = 0; it < 3; ++it) {
                progs[r].push_back(Op::compute(0));
                progs[r].push_back(Op::irecv(left, it, 0));
                progs[r].push_back(Op::isend(right, it, 50'000, 1));
                progs[r].push_back(Op::waitall(0, 2));
                progs[r].push_back(it % 2 ? Op::barrier() : Op::allreduce(1024));
            }
        }
        const auto out = run(progs, t, net::NetworkConfig{});
        for (int r = 0; r < n; ++r) {
            CHECK(out.ranks[r].compute + out.ranks[r].comm == out.ranks[r].finish);
            SimTime cursor = 0;
            for (const auto& iv : out.traces[r]) {
                CHECK(iv.start >= cursor);
                CHECK(iv.end >= iv.start);
                cursor = iv.end;
            }
            CHECK(cursor <= out.ranks[r].finish);
        }
        CHECK(out.stats.user_messages_matched == out.stats.user_messages_sent);
        CHECK(out.stats.sync_violations == 0);
        CHECK(out.network.packets_delivered == out.network.packets_injected);
        for (const auto& c : out.collectives) {
            CHECK(c.entered == n);
            CHECK(c.completed == n);
            CHECK(c.first_completion >= c.last_entry);
        }
    }
}

TEST_CASE("property: non-blocking exchange is never slower than blocking") {
    Rng rng(32);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 2 * (1 + static_cast<int>(rng.below(8)));
        const std::uint64_t bytes = 1 + rng.below(500'000);
        SlotTimes t;
        for (int r = 0; r < n; ++r) t.by_rank[{r, 0}] = static_cast<double>(rng.below(50'000));
        std::vector<Program> blocking(n), nonblocking(n);
        for (int r = 0; r < n; ++r) {
            const int partner = r ^ 1;
            blocking[r] = {Op::compute(0)};
            nonblocking[r] = {Op::compute(0)};
            if (r % 2 == 0) {
                blocking[r].push_back(Op::send(partner, 0, bytes));
                blocking[r].push_back(Op::recv(partner, 0));
            } else {
                blocking[r].push_back(Op::recv(partner, 0));
                blocking[r].push_back(Op::send(partner, 0, bytes));
            }
            nonblocking[r].push_back(Op::irecv(partner, 0, 0));
            nonblocking[r].push_back(Op::isend(partner, 0, bytes, 1));
            nonblocking[r].push_back(Op::waitall(0, 2));
        }
        const auto b = run(blocking, t, net::NetworkConfig{});
        const auto nb = run(nonblocking, t, net::NetworkConfig{});
        CHECK(nb.last() <= b.last());
        for (int r = 0; r < n; ++r) CHECK(nb.finish(r) <= b.finish(r));
    }
}

TEST_CASE("ranks sharing a node exchange at zero cost") {
    const auto out = run({{Op::send(1, 0, kMB)}, {Op::recv(0, 0)}}, {}, net::NetworkConfig{}, 2);
    CHECK(out.finish(1) == 0);
    CHECK(out.network.local_messages == 1);
}

}
