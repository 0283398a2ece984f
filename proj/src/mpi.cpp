#include "manynode/mpi.hpp"

#include <algorithm>
#include <sstream>

#include "manynode/errors.hpp"

namespace manynode::mpi {

std::string to_string(CollectiveKind kind) {
    switch (kind) {
        case CollectiveKind::allreduce: return "allreduce";
        case CollectiveKind::barrier: return "barrier";
        case CollectiveKind::reduce_tree: return "reduce_tree";
        case CollectiveKind::bcast_tree: return "bcast_tree";
        case CollectiveKind::alltoall: return "alltoall";
    }
    return "unknown";
}

// ---------------------------------------------------------------- op builders

Op Op::compute(int slot) {
    Op op;
    op.kind = Kind::compute;
    op.slot = slot;
    return op;
}

Op Op::send(int dst, int tag, std::uint64_t bytes) {
    Op op;
    op.kind = Kind::send;
    op.peer = dst;
    op.tag = tag;
    op.bytes = bytes;
    return op;
}

Op Op::isend(int dst, int tag, std::uint64_t bytes, int handle) {
    Op op = send(dst, tag, bytes);
    op.kind = Kind::isend;
    op.handle = handle;
    return op;
}

Op Op::recv(int src, int tag) {
    Op op;
    op.kind = Kind::recv;
    op.peer = src;
    op.tag = tag;
    return op;
}

Op Op::irecv(int src, int tag, int handle) {
    Op op = recv(src, tag);
    op.kind = Kind::irecv;
    op.handle = handle;
    return op;
}

Op Op::wait(int handle) {
    Op op;
    op.kind = Kind::wait;
    op.handle = handle;
    op.handle_end = handle + 1;
    return op;
}

Op Op::waitall(int first, int end) {
    Op op;
    op.kind = Kind::waitall;
    op.handle = first;
    op.handle_end = end;
    return op;
}

namespace {
Op make_collective(CollectiveKind kind, std::uint64_t bytes) {
    Op op;
    op.kind = Op::Kind::collective;
    op.collective = kind;
    op.bytes = bytes;
    return op;
}
}  // namespace

Op Op::allreduce(std::uint64_t bytes) { return make_collective(CollectiveKind::allreduce, bytes); }

Op Op::barrier() { return make_collective(CollectiveKind::barrier, 0); }

Op Op::reduce_tree(int root, std::uint64_t bytes, int fanout, int encode_slot, int decode_slot) {
    Op op = make_collective(CollectiveKind::reduce_tree, bytes);
    op.root = root;
    op.fanout = fanout;
    op.encode_slot = encode_slot;
    op.decode_slot = decode_slot;
    return op;
}

Op Op::bcast_tree(int root, std::uint64_t bytes, int fanout) {
    Op op = make_collective(CollectiveKind::bcast_tree, bytes);
    op.root = root;
    op.fanout = fanout;
    return op;
}

Op Op::alltoall(std::uint64_t per_pair_bytes) { return make_collective(CollectiveKind::alltoall, per_pair_bytes); }

// ---------------------------------------------------------------- world

namespace {
std::uint64_t user_key(int src, int tag) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(src)) << 32) | static_cast<std::uint32_t>(tag);
}
}  // namespace

World::World(Engine& engine, net::Network& network, std::vector<int> rank_to_node, std::vector<Program> programs,
             ComputeSource& compute, bool trace)
    : engine_(engine),
      network_(network),
      rank_to_node_(std::move(rank_to_node)),
      programs_(std::move(programs)),
      compute_(compute),
      trace_(trace),
      ranks_(programs_.size()) {
    if (rank_to_node_.size() != programs_.size()) throw UsageError("one node placement per rank program is required");
    for (std::size_t i = 0; i < ranks_.size(); ++i) ranks_[i].program = &programs_[i];
}

void World::start() {
    for (int r = 0; r < size(); ++r) {
        engine_.schedule(engine_.now(), [this, r] { advance(r); });
    }
}

void World::check_finished() const {
    std::vector<int> stuck;
    for (int r = 0; r < size(); ++r) {
        if (ranks_[r].block != Block::finished) stuck.push_back(r);
    }
    if (stuck.empty()) return;
    std::ostringstream msg;
    msg << "deadlock: " << stuck.size() << " rank(s) never finished:";
    for (std::size_t i = 0; i < stuck.size() && i < 16; ++i) {
        const auto& r = ranks_[stuck[i]];
        msg << ' ' << stuck[i] << "@op" << (r.in_collective || r.block != Block::none ? r.pc - 1 : r.pc);
    }
    if (stuck.size() > 16) msg << " ...";
    throw DeadlockError(msg.str());
}

std::uint64_t World::coll_key(std::uint32_t seq, int round, int src) const {
    return (static_cast<std::uint64_t>(seq) << 40) | (static_cast<std::uint64_t>(round & 0xff) << 32) |
           static_cast<std::uint32_t>(src + 1);
}

World::HandleState& World::handle_ref(Rank& r, int handle) {
    if (handle == kInternalHandle) return r.internal;
    if (handle < 0) throw UsageError("negative request handle " + std::to_string(handle));
    if (static_cast<std::size_t>(handle) >= r.handles.size()) r.handles.resize(handle + 1, HandleState::free);
    return r.handles[handle];
}

void World::post_send(int src, int dst, std::uint64_t bytes, bool collective, std::uint64_t key, int send_handle) {
    if (dst < 0 || dst >= size()) {
        throw UsageError("rank " + std::to_string(src) + ": send to unknown rank " + std::to_string(dst));
    }
    std::uint32_t token;
    if (!free_messages_.empty()) {
        token = free_messages_.back();
        free_messages_.pop_back();
    } else {
        token = static_cast<std::uint32_t>(messages_.size());
        messages_.emplace_back();
    }
    messages_[token] = MessageInfo{src, dst, collective, key, send_handle, 2};
    ++ranks_[src].stats.sends;
    if (collective) {
        ++stats_.collective_messages;
    } else {
        ++stats_.user_messages_sent;
    }
    network_.send(rank_to_node_[src], rank_to_node_[dst], bytes, token, engine_.now());
}

void World::release(std::uint64_t token) {
    if (--messages_[token].refs == 0) free_messages_.push_back(static_cast<std::uint32_t>(token));
}

void World::post_receive(int rank, int src, int tag, int handle) {
    auto& r = ranks_[rank];
    const auto key = user_key(src, tag);
    if (auto it = r.unexpected.find(key); it != r.unexpected.end()) {
        if (--it->second == 0) r.unexpected.erase(it);
        handle_ref(r, handle) = HandleState::complete;
        ++stats_.user_messages_matched;
        ++r.stats.receives;
        return;
    }
    r.posted[key].push_back(handle);
}

void World::on_injected(std::uint64_t token, SimTime) {
    const MessageInfo info = messages_[token];
    auto& r = ranks_[info.src];
    if (info.send_handle == kAlltoallInjection) {
        r.coll.a2a_injecting = false;
    } else if (info.send_handle != -1) {
        handle_ref(r, info.send_handle) = HandleState::complete;
    }
    release(token);
    try_resume(info.src);
}

void World::on_delivered(std::uint64_t token, SimTime) {
    const MessageInfo info = messages_[token];
    auto& r = ranks_[info.dst];
    if (info.collective) {
        ++r.coll_arrivals[info.key];
        if (info.send_handle == kAlltoallInjection) {
            ++ranks_[info.src].coll.a2a_sends_delivered;
            if (info.src != info.dst) try_resume(info.src);
        }
    } else if (auto it = r.posted.find(info.key); it != r.posted.end()) {
        const int handle = it->second.front();
        it->second.erase(it->second.begin());
        if (it->second.empty()) r.posted.erase(it);
        handle_ref(r, handle) = HandleState::complete;
        ++stats_.user_messages_matched;
        ++r.stats.receives;
    } else {
        ++r.unexpected[info.key];
    }
    release(token);
    try_resume(info.dst);
}

bool World::handles_ready(const Rank& r) const {
    if (r.wait_internal) return r.internal == HandleState::complete;
    for (int h = r.wait_first; h < r.wait_end; ++h) {
        if (r.handles[h] != HandleState::complete) return false;
    }
    return true;
}

void World::complete_op(int rank, Interval::Kind kind) {
    auto& r = ranks_[rank];
    const SimTime now = engine_.now();
    const SimTime span = now - r.op_start;
    if (kind == Interval::Kind::comm) r.stats.comm += span;
    if (trace_ && span > 0) r.trace.push_back({kind, r.op_start, now});
}

void World::try_resume(int rank) {
    auto& r = ranks_[rank];
    if (r.block == Block::handles) {
        if (!handles_ready(r)) return;
        if (r.wait_internal) {
            r.internal = HandleState::free;
            r.wait_internal = false;
        } else {
            for (int h = r.wait_first; h < r.wait_end; ++h) r.handles[h] = HandleState::free;
        }
        complete_op(rank, Interval::Kind::comm);
        r.block = Block::none;
        advance(rank);
    } else if (r.block == Block::collective) {
        r.block = Block::none;
        advance(rank);
    }
}

void World::advance(int rank) {
    auto& r = ranks_[rank];
    const Program& program = *r.program;
    while (true) {
        if (r.in_collective) {
            if (!run_collective(rank)) return;
            continue;
        }
        if (r.pc >= program.size()) {
            r.block = Block::finished;
            r.stats.finish = engine_.now();
            return;
        }
        const Op& op = program[r.pc];
        const std::string where = "rank " + std::to_string(rank) + ", op " + std::to_string(r.pc);
        switch (op.kind) {
            case Op::Kind::compute: {
                const SimTime d = compute_.compute_time(rank, op.slot);
                const SimTime now = engine_.now();
                r.stats.compute += d;
                if (trace_ && d > 0) r.trace.push_back({Interval::Kind::compute, now, now + d});
                ++r.pc;
                if (d <= 0) continue;
                r.block = Block::compute;
                engine_.schedule(now + d, [this, rank] {
                    ranks_[rank].block = Block::none;
                    advance(rank);
                });
                return;
            }
            case Op::Kind::isend:
            case Op::Kind::irecv: {
                auto& h = handle_ref(r, op.handle);
                if (h != HandleState::free) throw UsageError(where + ": request handle " + std::to_string(op.handle) + " is still in use");
                h = HandleState::pending;
                ++r.pc;
                if (op.kind == Op::Kind::isend) {
                    post_send(rank, op.peer, op.bytes, false, user_key(rank, op.tag), op.handle);
                } else {
                    post_receive(rank, op.peer, op.tag, op.handle);
                }
                continue;
            }
            case Op::Kind::send:
            case Op::Kind::recv: {
                if (r.internal != HandleState::free) throw UsageError(where + ": blocking call while one is in flight");
                r.internal = HandleState::pending;
                ++r.pc;
                r.op_start = engine_.now();
                r.wait_internal = true;
                r.block = Block::handles;
                if (op.kind == Op::Kind::send) {
                    post_send(rank, op.peer, op.bytes, false, user_key(rank, op.tag), kInternalHandle);
                } else {
                    post_receive(rank, op.peer, op.tag, kInternalHandle);
                }
                if (!handles_ready(r)) return;
                r.internal = HandleState::free;
                r.wait_internal = false;
                r.block = Block::none;
                continue;
            }
            case Op::Kind::wait:
            case Op::Kind::waitall: {
                for (int h = op.handle; h < op.handle_end; ++h) {
                    if (h < 0 || static_cast<std::size_t>(h) >= r.handles.size() || r.handles[h] == HandleState::free) {
                        throw UsageError(where + ": wait on unknown handle " + std::to_string(h));
                    }
                }
                ++r.pc;
                r.op_start = engine_.now();
                r.wait_first = op.handle;
                r.wait_end = op.handle_end;
                r.wait_internal = false;
                r.block = Block::handles;
                if (!handles_ready(r)) return;
                for (int h = op.handle; h < op.handle_end; ++h) r.handles[h] = HandleState::free;
                r.block = Block::none;
                continue;
            }
            case Op::Kind::collective:
                begin_collective(rank, op);
                continue;
        }
    }
}

void World::begin_collective(int rank, const Op& op) {
    auto& r = ranks_[rank];
    const std::uint32_t seq = r.coll_seq++;
    if (seq == collective_ops_.size()) {
        collective_ops_.push_back(op);
        collectives_.push_back(CollectiveRecord{op.collective, 0, 0, 0, 0, 0});
        ++stats_.collectives;
    } else {
        const Op& first = collective_ops_[seq];
        if (first.collective != op.collective || first.bytes != op.bytes || first.root != op.root ||
            first.fanout != op.fanout) {
            throw ProtocolError("rank " + std::to_string(rank) + ": collective #" + std::to_string(seq) + " is " +
                                to_string(op.collective) + " but other ranks called " + to_string(first.collective) +
                                " with different arguments");
        }
    }
    auto& rec = collectives_[seq];
    const SimTime now = engine_.now();
    rec.last_entry = rec.entered == 0 ? now : std::max(rec.last_entry, now);
    ++rec.entered;

    ++r.pc;
    r.in_collective = true;
    r.op_start = now;
    r.coll = Collective{};
    r.coll.kind = op.collective;
    r.coll.seq = seq;
    r.coll.bytes = op.collective == CollectiveKind::barrier ? 0 : op.bytes;
    r.coll.entered = now;
    build_steps(rank, op, r.coll);
}

void World::build_steps(int rank, const Op& op, Collective& c) const {
    const int n = size();
    auto send = [&](int peer, int round) { c.steps.push_back({Step::Kind::send, peer, round, -1}); };
    auto recv = [&](int peer, int round) { c.steps.push_back({Step::Kind::recv, peer, round, -1}); };
    auto delay = [&](int slot) {
        if (slot >= 0) c.steps.push_back({Step::Kind::delay, -1, 0, slot});
    };

    switch (op.collective) {
        case CollectiveKind::allreduce: {
            int pow2 = 1, rounds = 0;
            while (pow2 * 2 <= n) {
                pow2 *= 2;
                ++rounds;
            }
            const int extra = n - pow2;
            if (rank >= pow2) {
                send(rank - pow2, 0);
                recv(rank - pow2, rounds + 1);
                break;
            }
            if (rank < extra) recv(rank + pow2, 0);
            for (int k = 0; k < rounds; ++k) {
                send(rank ^ (1 << k), k + 1);
                recv(rank ^ (1 << k), k + 1);
            }
            if (rank < extra) send(rank + pow2, rounds + 1);
            break;
        }
        case CollectiveKind::barrier: {
            int round = 0;
            for (long dist = 1; dist < n; dist *= 2, ++round) {
                send(static_cast<int>((rank + dist) % n), round);
                recv(static_cast<int>((rank - dist % n + n) % n), round);
            }
            break;
        }
        case CollectiveKind::reduce_tree: {
            const int f = std::max(2, op.fanout);
            const long v = (rank - op.root + n) % n;
            auto real = [&](long x) { return static_cast<int>((x + op.root) % n); };
            int level = 0;
            for (long stride = 1; stride < n; stride *= f, ++level) {
                const long span = stride * f;
                if (v % span != 0) {
                    delay(op.encode_slot);
                    send(real(v - v % span), level);
                    break;
                }
                for (int j = 1; j < f; ++j) {
                    const long child = v + j * stride;
                    if (child >= n) break;
                    recv(real(child), level);
                    delay(op.decode_slot);
                }
            }
            break;
        }
        case CollectiveKind::bcast_tree: {
            const int f = std::max(2, op.fanout);
            const long v = (rank - op.root + n) % n;
            auto real = [&](long x) { return static_cast<int>((x + op.root) % n); };
            int level = 0;
            long stride = 1;
            for (; stride < n; stride *= f, ++level) {
                if (v % (stride * f) != 0) {
                    recv(real(v - v % (stride * f)), level);
                    break;
                }
            }
            for (int l = level - 1; l >= 0; --l) {
                stride /= f;
                for (int j = f - 1; j >= 1; --j) {
                    const long child = v + j * stride;
                    if (child < n) send(real(child), l);
                }
            }
            break;
        }
        case CollectiveKind::alltoall:
            break;
    }
}

bool World::run_collective(int rank) {
    auto& r = ranks_[rank];
    auto& c = r.coll;
    if (c.waiting_delay) {
        r.block = Block::collective;
        return false;
    }
    const int n = size();

    if (c.kind == CollectiveKind::alltoall) {
        if (c.a2a_injecting) {
            r.block = Block::collective;
            return false;
        }
        if (c.a2a_offset < n) {
            const int dst = (rank + c.a2a_offset) % n;
            ++c.a2a_offset;
            c.a2a_injecting = true;
            r.block = Block::collective;
            post_send(rank, dst, c.bytes, true, coll_key(c.seq, 0, -1), kAlltoallInjection);
            return false;
        }
        const auto key = coll_key(c.seq, 0, -1);
        const auto it = r.coll_arrivals.find(key);
        const std::uint32_t arrived = it == r.coll_arrivals.end() ? 0 : it->second;
        if (arrived >= static_cast<std::uint32_t>(n - 1) && c.a2a_sends_delivered >= n - 1) {
            if (it != r.coll_arrivals.end()) r.coll_arrivals.erase(it);
            r.stats.receives += static_cast<std::uint64_t>(n - 1);
            finish_collective(rank);
            return true;
        }
        r.block = Block::collective;
        return false;
    }

    while (c.next < c.steps.size()) {
        const Step step = c.steps[c.next];
        switch (step.kind) {
            case Step::Kind::send:
                ++c.next;
                post_send(rank, step.peer, c.bytes, true, coll_key(c.seq, step.round, rank), -1);
                break;
            case Step::Kind::recv: {
                const auto it = r.coll_arrivals.find(coll_key(c.seq, step.round, step.peer));
                if (it == r.coll_arrivals.end()) {
                    r.block = Block::collective;
                    return false;
                }
                if (--it->second == 0) r.coll_arrivals.erase(it);
                ++r.stats.receives;
                ++c.next;
                break;
            }
            case Step::Kind::delay: {
                ++c.next;
                const SimTime d = compute_.compute_time(rank, step.slot);
                if (d <= 0) break;
                c.waiting_delay = true;
                r.block = Block::collective;
                engine_.schedule(engine_.now() + d, [this, rank] {
                    auto& rr = ranks_[rank];
                    rr.coll.waiting_delay = false;
                    rr.block = Block::none;
                    advance(rank);
                });
                return false;
            }
        }
    }
    finish_collective(rank);
    return true;
}

void World::finish_collective(int rank) {
    auto& r = ranks_[rank];
    auto& rec = collectives_[r.coll.seq];
    const SimTime now = engine_.now();
    rec.first_completion = rec.completed == 0 ? now : std::min(rec.first_completion, now);
    rec.last_completion = std::max(rec.last_completion, now);
    ++rec.completed;
    r.in_collective = false;
    r.block = Block::none;
    complete_op(rank, Interval::Kind::comm);
    if (rec.completed == size()) {
        const bool rooted = rec.kind == CollectiveKind::reduce_tree || rec.kind == CollectiveKind::bcast_tree;
        const SimTime bound = rooted ? rec.last_completion : rec.first_completion;
        if (bound < rec.last_entry) ++stats_.sync_violations;
    }
}

}  // namespace manynode::mpi
