#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace manynode {
class Config;
}

namespace manynode::net {

enum class TopologyKind { fat_tree, torus3d, dragonfly };

std::string to_string(TopologyKind kind);
TopologyKind parse_topology_kind(const std::string& name);

/// Cost of a transfer between two ranks on the same node.
struct IntraNodeCost {
    bool zero = true;
    double bandwidth_bps = 400e9;
    double latency_ns = 0.0;
};

struct NetworkConfig {
    TopologyKind topology = TopologyKind::fat_tree;
    double link_bandwidth_bps = 100e9;
    double link_latency_ns = 90.0;
    int nodes_per_switch = 24;
    std::uint64_t mtu = 4096;
    IntraNodeCost intra_node;
    /// Every transfer, on or off node, is delivered instantly.
    bool zero_cost = false;

    int fat_tree_radix = 48;

    std::array<int, 3> torus_dims{5, 5, 4};
    int torus_links_per_direction = 4;

    int dragonfly_groups = 5;
    int dragonfly_switches_per_group = 18;
    int dragonfly_intra_links = 17;
    int dragonfly_inter_links = 7;

    /// Reads `network.*` keys; absent keys keep the defaults above.
    static NetworkConfig from_config(const Config& cfg);
    void validate() const;
};

/// Directed link between two vertices. Vertices [0, node_count) are compute
/// nodes; switch s is vertex node_count + s.
struct Link {
    int from = 0;
    int to = 0;
};

/// Immutable switch fabric with deterministic, loop-free routes.
class Topology {
public:
    virtual ~Topology() = default;

    virtual TopologyKind kind() const = 0;
    /// Appends the links from `src` to `dst` (src != dst) to `path`.
    virtual void append_route(int src, int dst, std::vector<int>& path) const = 0;

    std::vector<int> route(int src, int dst) const;

    int node_count() const { return node_count_; }
    int switch_count() const { return switch_count_; }
    int node_capacity() const { return capacity_; }
    int switch_of(int node) const { return links_[inject_[node]].to - node_count_; }
    int switch_vertex(int sw) const { return node_count_ + sw; }
    const std::vector<Link>& links() const { return links_; }
    int injection_link(int node) const { return inject_[node]; }
    int ejection_link(int node) const { return eject_[node]; }

protected:
    Topology(int node_count, int capacity) : node_count_(node_count), capacity_(capacity) {}

    int add_switches(int count) {
        const int first = switch_count_;
        switch_count_ += count;
        return first;
    }
    int add_link(int from_vertex, int to_vertex) {
        links_.push_back({from_vertex, to_vertex});
        return static_cast<int>(links_.size()) - 1;
    }
    /// Attaches every node to switch `node / nodes_per_switch`.
    void attach_nodes(int nodes_per_switch);
    void check_node(int node) const;

    int node_count_;
    int capacity_;
    int switch_count_ = 0;
    std::vector<Link> links_;
    std::vector<int> inject_;
    std::vector<int> eject_;
};

/// Three-level fat tree. A pod holds radix/2 leaf and radix/2 aggregation
/// switches; each leaf has one up-link to every aggregation switch of its pod
/// and each aggregation switch has radix/2 up-links spread over the root
/// switches of its position.
class FatTree final : public Topology {
public:
    FatTree(const NetworkConfig& cfg, int node_count);
    TopologyKind kind() const override { return TopologyKind::fat_tree; }
    void append_route(int src, int dst, std::vector<int>& path) const override;

    int pods() const { return pods_; }
    int leaf_switches() const { return pods_ * half_; }
    int aggregation_switches() const { return pods_ * half_; }
    int root_switches() const { return half_ * roots_per_position_; }

private:
    int half_;
    int nodes_per_leaf_;
    int pods_;
    int roots_per_position_;
    std::vector<int> leaf_up_;    // [leaf * half + agg_pos]
    std::vector<int> agg_down_;   // [agg * half + leaf_pos]
    std::vector<int> agg_up_;     // [agg * half + uplink]
    std::vector<int> root_down_;  // [agg * half + uplink], root -> agg
};

/// 3-D torus of switches with dimension-order routing over parallel links.
class Torus3d final : public Topology {
public:
    Torus3d(const NetworkConfig& cfg, int node_count);
    TopologyKind kind() const override { return TopologyKind::torus3d; }
    void append_route(int src, int dst, std::vector<int>& path) const override;

    std::array<int, 3> coords(int sw) const;
    int switch_at(std::array<int, 3> c) const { return c[0] + dims_[0] * (c[1] + dims_[1] * c[2]); }
    const std::array<int, 3>& dims() const { return dims_; }

private:
    int link_slot(int sw, int dim, int dir, int lane) const {
        return ((sw * 3 + dim) * 2 + dir) * lanes_ + lane;
    }

    std::array<int, 3> dims_;
    int lanes_;
    std::vector<int> links_by_slot_;
};

/// Dragonfly with all-to-all groups and minimal routing. Global links between
/// each pair of groups are spread round-robin over the groups' global ports.
class Dragonfly final : public Topology {
public:
    Dragonfly(const NetworkConfig& cfg, int node_count);
    TopologyKind kind() const override { return TopologyKind::dragonfly; }
    void append_route(int src, int dst, std::vector<int>& path) const override;

    int group_of_switch(int sw) const { return sw / per_group_; }
    int links_per_group_pair() const { return pair_links_; }

private:
    struct Global {
        int link;
        int from_switch;
        int to_switch;
    };
    const Global& global(int from_group, int to_group, int k) const {
        return globals_[(static_cast<std::size_t>(from_group) * groups_ + to_group) * pair_links_ + k];
    }

    int groups_;
    int per_group_;
    int pair_links_;
    std::vector<int> intra_;  // [sw * per_group + local target]
    std::vector<Global> globals_;
};

/// Builds the configured fabric for `node_count` nodes. Throws CapacityError
/// when the fabric cannot host that many nodes.
std::unique_ptr<Topology> build_topology(const NetworkConfig& cfg, int node_count);

}  // namespace manynode::net
