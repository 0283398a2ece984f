#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "manynode/time.hpp"

namespace manynode {

/// Single-threaded discrete-event core. Events dispatch in (time, seq) order,
/// where seq is the global insertion counter, so simultaneous events run in
/// the order they were scheduled.
class Engine {
public:
    using Action = std::function<void()>;
    using Observer = std::function<void(SimTime, std::uint64_t)>;

    static constexpr std::uint64_t kDefaultEventCap = 1'000'000'000ULL;

    explicit Engine(std::uint64_t event_cap = kDefaultEventCap) : event_cap_(event_cap) {}

    Engine(const Engine&) = delete;
    Engine& operator=(const Engine&) = delete;

    /// Returns the event's sequence number. Throws CausalityError when `at` is
    /// earlier than the current time.
    std::uint64_t schedule(SimTime at, Action action);
    std::uint64_t schedule_in(SimTime delay, Action action) { return schedule(now_ + delay, std::move(action)); }

    /// Dispatches until the queue drains and returns the time of the last
    /// dispatched event (0 if nothing ever ran). Throws RunawayError once more
    /// than the event cap have been dispatched.
    SimTime run_until_idle();

    SimTime now() const { return now_; }
    bool idle() const { return heap_.empty(); }
    std::size_t pending() const { return heap_.size(); }
    std::uint64_t dispatched() const { return dispatched_; }
    std::uint64_t event_cap() const { return event_cap_; }

    /// Called with (time, seq) before each dispatch.
    void set_observer(Observer observer) { observer_ = std::move(observer); }

private:
    // Heap entries stay small; actions live in a slot table so that sifting
    // never moves a std::function.
    struct Node {
        SimTime time;
        std::uint64_t seq;
        std::uint32_t slot;
    };
    struct Later {
        bool operator()(const Node& a, const Node& b) const {
            return a.time != b.time ? a.time > b.time : a.seq > b.seq;
        }
    };

    std::vector<Node> heap_;
    std::vector<Action> actions_;
    std::vector<std::uint32_t> free_slots_;
    SimTime now_ = 0;
    std::uint64_t next_seq_ = 0;
    std::uint64_t dispatched_ = 0;
    std::uint64_t event_cap_;
    Observer observer_;
};

}  // namespace manynode
