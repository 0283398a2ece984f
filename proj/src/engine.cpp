#include "manynode/engine.hpp"

#include <algorithm>
#include <string>

#include "manynode/errors.hpp"

namespace manynode {

std::uint64_t Engine::schedule(SimTime at, Action action) {
    if (at < now_) {
        throw CausalityError("event scheduled at " + std::to_string(at) + " ps, before current time " +
                             std::to_string(now_) + " ps");
    }
    const std::uint64_t seq = next_seq_++;
    std::uint32_t slot;
    if (!free_slots_.empty()) {
        slot = free_slots_.back();
        free_slots_.pop_back();
        actions_[slot] = std::move(action);
    } else {
        slot = static_cast<std::uint32_t>(actions_.size());
        actions_.push_back(std::move(action));
    }
    heap_.push_back(Node{at, seq, slot});
    std::push_heap(heap_.begin(), heap_.end(), Later{});
    return seq;
}

SimTime Engine::run_until_idle() {
    while (!heap_.empty()) {
        if (dispatched_ >= event_cap_) {
            throw RunawayError("simulation exceeded the event cap of " + std::to_string(event_cap_) + " events at " +
                               std::to_string(now_) + " ps");
        }
        std::pop_heap(heap_.begin(), heap_.end(), Later{});
        const Node ev = heap_.back();
        heap_.pop_back();
        Action action = std::move(actions_[ev.slot]);
        free_slots_.push_back(ev.slot);
        if (ev.time < now_) throw CausalityError("clock moved backwards");
        now_ = ev.time;
        ++dispatched_;
        if (observer_) observer_(ev.time, ev.seq);
        action();
    }
    return now_;
}

}  // namespace manynode
