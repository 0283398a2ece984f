#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "manynode/engine.hpp"
#include "manynode/network.hpp"
#include "manynode/time.hpp"

namespace manynode::mpi {

enum class CollectiveKind : std::uint8_t { allreduce, barrier, reduce_tree, bcast_tree, alltoall };

std::string to_string(CollectiveKind kind);

/// One instruction of a rank program: a compute phase or an MPI call.
struct Op {
    enum class Kind : std::uint8_t { compute, send, isend, recv, irecv, wait, waitall, collective };

    Kind kind = Kind::compute;
    CollectiveKind collective = CollectiveKind::barrier;
    int peer = 0;    ///< destination (sends) or source (receives)
    int tag = 0;
    int handle = 0;  ///< isend/irecv/wait; first handle for waitall
    int handle_end = 0;  ///< one past the last handle for waitall
    int slot = -1;   ///< compute slot
    int root = 0;
    int fanout = 2;
    int encode_slot = -1;
    int decode_slot = -1;
    std::uint64_t bytes = 0;

    static Op compute(int slot);
    static Op send(int dst, int tag, std::uint64_t bytes);
    static Op isend(int dst, int tag, std::uint64_t bytes, int handle);
    static Op recv(int src, int tag);
    static Op irecv(int src, int tag, int handle);
    static Op wait(int handle);
    static Op waitall(int first, int end);
    static Op allreduce(std::uint64_t bytes);
    static Op barrier();
    static Op reduce_tree(int root, std::uint64_t bytes, int fanout = 2, int encode_slot = -1, int decode_slot = -1);
    static Op bcast_tree(int root, std::uint64_t bytes, int fanout = 2);
    static Op alltoall(std::uint64_t per_pair_bytes);
};

using Program = std::vector<Op>;

/// Supplies compute-phase durations; also used for codec delays inside
/// tree reductions.
class ComputeSource {
public:
    virtual ~ComputeSource() = default;
    virtual SimTime compute_time(int rank, int slot) = 0;
};

struct Interval {
    enum class Kind : std::uint8_t { compute, comm };
    Kind kind;
    SimTime start;
    SimTime end;
};

struct RankStats {
    SimTime compute = 0;
    SimTime comm = 0;
    SimTime finish = 0;
    std::uint64_t sends = 0;
    std::uint64_t receives = 0;
};

struct CollectiveRecord {
    CollectiveKind kind = CollectiveKind::barrier;
    SimTime last_entry = 0;
    SimTime first_completion = 0;
    SimTime last_completion = 0;
    int entered = 0;
    int completed = 0;
};

struct WorldStats {
    std::uint64_t user_messages_sent = 0;
    std::uint64_t user_messages_matched = 0;
    std::uint64_t collective_messages = 0;
    std::uint64_t collectives = 0;
    /// Collectives that completed before their last participant entered.
    std::uint64_t sync_violations = 0;
};

/// Executes one program per rank over the network model. Point-to-point
/// messages use an eager protocol and match FIFO per (source, tag).
///
/// Collective algorithms:
///  - allreduce: recursive doubling; ranks beyond the largest power of two
///    fold onto a partner before and after the exchange rounds
///  - barrier: dissemination, ceil(log2 N) rounds of empty messages
///  - reduce_tree / bcast_tree: k-nomial (binomial for fanout 2) trees
///  - alltoall: rank r sends to r+1, r+2, ... in turn, each send starting when
///    the previous one has left the node
/// Time blocked in MPI calls, including codec delays, counts as communication.
class World final : public net::TransferListener {
public:
    World(Engine& engine, net::Network& network, std::vector<int> rank_to_node, std::vector<Program> programs,
          ComputeSource& compute, bool trace = false);

    World(const World&) = delete;
    World& operator=(const World&) = delete;

    /// Schedules every rank to start at the current engine time.
    void start();

    /// Throws DeadlockError naming the unfinished ranks.
    void check_finished() const;

    int size() const { return static_cast<int>(ranks_.size()); }
    const RankStats& rank_stats(int rank) const { return ranks_[rank].stats; }
    const std::vector<Interval>& trace(int rank) const { return ranks_[rank].trace; }
    bool traced() const { return trace_; }
    const WorldStats& stats() const { return stats_; }
    const std::vector<CollectiveRecord>& collectives() const { return collectives_; }

    void on_injected(std::uint64_t token, SimTime at) override;
    void on_delivered(std::uint64_t token, SimTime at) override;

private:
    enum class HandleState : std::uint8_t { free, pending, complete };
    enum class Block : std::uint8_t { none, compute, handles, collective, finished };

    struct Step {
        enum class Kind : std::uint8_t { send, recv, delay };
        Kind kind;
        int peer;
        int round;
        int slot;
    };

    struct Collective {
        CollectiveKind kind = CollectiveKind::barrier;
        std::uint32_t seq = 0;
        std::uint64_t bytes = 0;
        std::vector<Step> steps;
        std::size_t next = 0;
        bool waiting_recv = false;
        bool waiting_delay = false;
        // alltoall bookkeeping
        int a2a_offset = 1;
        bool a2a_injecting = false;
        int a2a_sends_delivered = 0;
        SimTime entered = 0;
    };

    struct Rank {
        const Program* program = nullptr;
        std::size_t pc = 0;
        Block block = Block::none;
        SimTime op_start = 0;
        std::vector<HandleState> handles;
        HandleState internal = HandleState::free;
        int wait_first = 0;
        int wait_end = 0;
        bool wait_internal = false;
        std::unordered_map<std::uint64_t, std::uint32_t> unexpected;
        std::unordered_map<std::uint64_t, std::vector<int>> posted;
        std::unordered_map<std::uint64_t, std::uint32_t> coll_arrivals;
        std::uint32_t coll_seq = 0;
        bool in_collective = false;
        Collective coll;
        RankStats stats;
        std::vector<Interval> trace;
    };

    struct MessageInfo {
        int src = 0;
        int dst = 0;
        bool collective = false;
        std::uint64_t key = 0;
        int send_handle = -1;  ///< -1 none, -2 internal, -3 alltoall injection
        std::uint8_t refs = 0;
    };

    static constexpr int kInternalHandle = -2;
    static constexpr int kAlltoallInjection = -3;

    void advance(int rank);
    bool run_collective(int rank);
    void begin_collective(int rank, const Op& op);
    void finish_collective(int rank);
    void build_steps(int rank, const Op& op, Collective& c) const;
    void try_resume(int rank);
    void complete_op(int rank, Interval::Kind kind);
    bool handles_ready(const Rank& r) const;

    void post_send(int src, int dst, std::uint64_t bytes, bool collective, std::uint64_t key, int send_handle);
    void post_receive(int rank, int src, int tag, int handle);
    HandleState& handle_ref(Rank& r, int handle);
    std::uint64_t coll_key(std::uint32_t seq, int round, int src) const;
    void release(std::uint64_t token);

    Engine& engine_;
    net::Network& network_;
    std::vector<int> rank_to_node_;
    std::vector<Program> programs_;
    ComputeSource& compute_;
    bool trace_;
    std::vector<Rank> ranks_;
    std::vector<MessageInfo> messages_;
    std::vector<std::uint32_t> free_messages_;
    std::vector<CollectiveRecord> collectives_;
    std::vector<Op> collective_ops_;
    WorldStats stats_;
};

}  // namespace manynode::mpi
