#include "manynode/network.hpp"

#include <algorithm>

namespace manynode::net {

Network::Network(Engine& engine, const Topology& topology, const NetworkConfig& config, TransferListener& listener)
    : engine_(engine),
      topology_(topology),
      config_(config),
      listener_(listener),
      link_latency_(from_ns(config.link_latency_ns)),
      busy_until_(topology.links().size(), 0),
      link_max_wait_(topology.links().size(), 0) {}

std::uint32_t Network::alloc_message() {
    if (!free_messages_.empty()) {
        const auto id = free_messages_.back();
        free_messages_.pop_back();
        return id;
    }
    messages_.emplace_back();
    return static_cast<std::uint32_t>(messages_.size() - 1);
}

std::uint32_t Network::alloc_packet() {
    if (!free_packets_.empty()) {
        const auto id = free_packets_.back();
        free_packets_.pop_back();
        return id;
    }
    packets_.emplace_back();
    return static_cast<std::uint32_t>(packets_.size() - 1);
}

void Network::send(int src_node, int dst_node, std::uint64_t bytes, std::uint64_t token, SimTime start) {
    ++stats_.messages;
    stats_.bytes += bytes;

    if (config_.zero_cost || src_node == dst_node) {
        ++stats_.local_messages;
        SimTime injected = start;
        SimTime delivered = start;
        if (!config_.zero_cost && !config_.intra_node.zero && bytes > 0) {
            injected = start + serialization_time(bytes, config_.intra_node.bandwidth_bps);
            delivered = injected + from_ns(config_.intra_node.latency_ns);
        }
        engine_.schedule(injected, [this, token] { listener_.on_injected(token, engine_.now()); });
        engine_.schedule(delivered, [this, token] { listener_.on_delivered(token, engine_.now()); });
        return;
    }

    const std::uint32_t mid = alloc_message();
    auto& msg = messages_[mid];
    msg.route.clear();
    topology_.append_route(src_node, dst_node, msg.route);
    msg.token = token;
    const std::uint64_t count = bytes == 0 ? 1 : (bytes + config_.mtu - 1) / config_.mtu;
    msg.packets_left = static_cast<std::uint32_t>(count);

    std::uint64_t remaining = bytes;
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t pid = alloc_packet();
        const std::uint64_t size = std::min<std::uint64_t>(remaining, config_.mtu);
        remaining -= size;
        packets_[pid] = Packet{mid, 0, static_cast<std::uint32_t>(size), i + 1 == count};
        ++stats_.packets_injected;
        engine_.schedule(start, [this, pid] { arrive(pid); });
    }
}

void Network::arrive(std::uint32_t pid) {
    Packet& pkt = packets_[pid];
    const auto& msg = messages_[pkt.message];
    const int link = msg.route[pkt.hop];
    const SimTime now = engine_.now();
    const SimTime begin = std::max(now, busy_until_[link]);
    const SimTime done = begin + serialization_time(pkt.bytes, config_.link_bandwidth_bps);
    busy_until_[link] = done;
    const SimTime wait = begin - now;
    if (wait > link_max_wait_[link]) {
        link_max_wait_[link] = wait;
        stats_.max_queue_delay = std::max(stats_.max_queue_delay, wait);
    }
    if (pkt.hop == 0 && pkt.last) {
        const std::uint64_t token = msg.token;
        engine_.schedule(done, [this, token] { listener_.on_injected(token, engine_.now()); });
    }
    const SimTime next = done + link_latency_;
    if (++pkt.hop < msg.route.size()) {
        engine_.schedule(next, [this, pid] { arrive(pid); });
    } else {
        engine_.schedule(next, [this, pid] { deliver(pid); });
    }
}

void Network::deliver(std::uint32_t pid) {
    const std::uint32_t mid = packets_[pid].message;
    free_packets_.push_back(pid);
    ++stats_.packets_delivered;
    auto& msg = messages_[mid];
    if (--msg.packets_left == 0) {
        const std::uint64_t token = msg.token;
        free_messages_.push_back(mid);
        listener_.on_delivered(token, engine_.now());
    }
}

std::vector<SimTime> simulate_transfers(const Topology& topology, const NetworkConfig& config,
                                        const std::vector<TransferRequest>& requests, NetworkStats* stats) {
    Engine engine;
    TransferRecorder recorder;
    Network network(engine, topology, config, recorder);
    for (std::size_t i = 0; i < requests.size(); ++i) {
        const auto& r = requests[i];
        engine.schedule(r.start, [&network, r, i] { network.send(r.src, r.dst, r.bytes, i, r.start); });
    }
    engine.run_until_idle();
    std::vector<SimTime> out;
    out.reserve(requests.size());
    for (std::size_t i = 0; i < requests.size(); ++i) out.push_back(recorder.delivered.at(i));
    if (stats) *stats = network.stats();
    return out;
}

}  // namespace manynode::net
