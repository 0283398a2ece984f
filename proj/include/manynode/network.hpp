#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "manynode/engine.hpp"
#include "manynode/time.hpp"
#include "manynode/topology.hpp"

namespace manynode::net {

/// Receives transfer milestones. `token` is the caller's message id.
class TransferListener {
public:
    virtual ~TransferListener() = default;
    /// Last byte has left the sender's first link (or the local copy finished).
    virtual void on_injected(std::uint64_t token, SimTime at) = 0;
    /// Last packet has reached the destination node.
    virtual void on_delivered(std::uint64_t token, SimTime at) = 0;
};

struct NetworkStats {
    std::uint64_t messages = 0;
    std::uint64_t local_messages = 0;
    std::uint64_t packets_injected = 0;
    std::uint64_t packets_delivered = 0;
    std::uint64_t bytes = 0;
    SimTime max_queue_delay = 0;
};

/// Packet-level transfer over a topology. Every link is a FIFO server: a
/// packet starts serializing at max(arrival, link busy-until), occupies the
/// link for size * 8 / bandwidth and reaches the far end after the link
/// latency. Forwarding is store-and-forward.
class Network {
public:
    Network(Engine& engine, const Topology& topology, const NetworkConfig& config, TransferListener& listener);

    Network(const Network&) = delete;
    Network& operator=(const Network&) = delete;

    /// Starts a transfer at `start` (>= engine.now()). Same-node transfers use
    /// the intra-node cost model.
    void send(int src_node, int dst_node, std::uint64_t bytes, std::uint64_t token, SimTime start);

    const NetworkStats& stats() const { return stats_; }
    /// Longest time any packet waited for each link.
    const std::vector<SimTime>& link_max_queue_delay() const { return link_max_wait_; }
    std::size_t packets_in_flight() const { return packets_.size() - free_packets_.size(); }
    const Topology& topology() const { return topology_; }
    const NetworkConfig& config() const { return config_; }

private:
    struct Message {
        std::vector<int> route;
        std::uint64_t token = 0;
        std::uint32_t packets_left = 0;
    };
    struct Packet {
        std::uint32_t message = 0;
        std::uint32_t hop = 0;
        std::uint32_t bytes = 0;
        bool last = false;
    };

    std::uint32_t alloc_message();
    std::uint32_t alloc_packet();
    void arrive(std::uint32_t packet);
    void deliver(std::uint32_t packet);

    Engine& engine_;
    const Topology& topology_;
    NetworkConfig config_;
    TransferListener& listener_;

    SimTime link_latency_;
    std::vector<SimTime> busy_until_;
    std::vector<SimTime> link_max_wait_;
    std::vector<Message> messages_;
    std::vector<std::uint32_t> free_messages_;
    std::vector<Packet> packets_;
    std::vector<std::uint32_t> free_packets_;
    NetworkStats stats_;
};

/// Listener that records milestone times per token.
class TransferRecorder final : public TransferListener {
public:
    void on_injected(std::uint64_t token, SimTime at) override { injected[token] = at; }
    void on_delivered(std::uint64_t token, SimTime at) override { delivered[token] = at; }

    std::map<std::uint64_t, SimTime> injected;
    std::map<std::uint64_t, SimTime> delivered;
};

struct TransferRequest {
    int src = 0;
    int dst = 0;
    std::uint64_t bytes = 0;
    SimTime start = 0;
};

/// Runs the given transfers on an idle network and returns each one's
/// delivery time, in request order.
std::vector<SimTime> simulate_transfers(const Topology& topology, const NetworkConfig& config,
                                        const std::vector<TransferRequest>& requests,
                                        NetworkStats* stats = nullptr);

}  // namespace manynode::net
