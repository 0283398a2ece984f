#include "manynode/topology.hpp"

#include <algorithm>

#include "manynode/config.hpp"
#include "manynode/errors.hpp"

namespace manynode::net {

std::string to_string(TopologyKind kind) {
    switch (kind) {
        case TopologyKind::fat_tree: return "fat_tree";
        case TopologyKind::torus3d: return "torus3d";
        case TopologyKind::dragonfly: return "dragonfly";
    }
    return "unknown";
}

TopologyKind parse_topology_kind(const std::string& name) {
    if (name == "fat_tree") return TopologyKind::fat_tree;
    if (name == "torus3d") return TopologyKind::torus3d;
    if (name == "dragonfly") return TopologyKind::dragonfly;
    throw ConfigError("unknown topology '" + name + "' (expected fat_tree, torus3d or dragonfly)");
}

NetworkConfig NetworkConfig::from_config(const Config& cfg) {
    NetworkConfig n;
    n.topology = parse_topology_kind(cfg.get_string("network.topology", to_string(n.topology)));
    n.link_bandwidth_bps = cfg.get_double("network.bandwidth_gbps", n.link_bandwidth_bps / 1e9) * 1e9;
    n.link_latency_ns = cfg.get_double("network.latency_ns", n.link_latency_ns);
    n.nodes_per_switch = static_cast<int>(cfg.get_int("network.nodes_per_switch", n.nodes_per_switch));
    n.mtu = static_cast<std::uint64_t>(cfg.get_int("network.mtu", static_cast<std::int64_t>(n.mtu)));
    n.zero_cost = cfg.get_bool("network.zero_cost", n.zero_cost);

    const auto intra = cfg.get_string("network.intra_node", "zero");
    if (intra == "zero") {
        n.intra_node.zero = true;
    } else if (intra == "cost") {
        n.intra_node.zero = false;
    } else {
        throw ConfigError("network.intra_node must be 'zero' or 'cost'");
    }
    n.intra_node.bandwidth_bps =
        cfg.get_double("network.intra_node.bandwidth_gbps", n.intra_node.bandwidth_bps / 1e9) * 1e9;
    n.intra_node.latency_ns = cfg.get_double("network.intra_node.latency_ns", n.intra_node.latency_ns);

    n.fat_tree_radix = static_cast<int>(cfg.get_int("network.fat_tree.radix", n.fat_tree_radix));

    if (auto dims = cfg.find("network.torus.dims")) {
        const auto parts = split(*dims, 'x');
        if (parts.size() != 3) throw ConfigError("network.torus.dims must look like 5x5x4");
        for (int i = 0; i < 3; ++i) n.torus_dims[i] = static_cast<int>(parse_int(parts[i], "network.torus.dims"));
    }
    n.torus_links_per_direction =
        static_cast<int>(cfg.get_int("network.torus.links_per_direction", n.torus_links_per_direction));

    n.dragonfly_groups = static_cast<int>(cfg.get_int("network.dragonfly.groups", n.dragonfly_groups));
    n.dragonfly_switches_per_group =
        static_cast<int>(cfg.get_int("network.dragonfly.switches_per_group", n.dragonfly_switches_per_group));
    n.dragonfly_intra_links = static_cast<int>(cfg.get_int("network.dragonfly.intra_links", n.dragonfly_intra_links));
    n.dragonfly_inter_links = static_cast<int>(cfg.get_int("network.dragonfly.inter_links", n.dragonfly_inter_links));
    n.validate();
    return n;
}

void NetworkConfig::validate() const {
    if (!(link_bandwidth_bps > 0.0)) throw ConfigError("network bandwidth must be positive");
    if (link_latency_ns < 0.0) throw ConfigError("network latency must be non-negative");
    if (nodes_per_switch < 1) throw ConfigError("nodes_per_switch must be >= 1");
    if (mtu < 1) throw ConfigError("mtu must be >= 1 byte");
    if (!intra_node.zero && !(intra_node.bandwidth_bps > 0.0)) throw ConfigError("intra-node bandwidth must be positive");
    if (intra_node.latency_ns < 0.0) throw ConfigError("intra-node latency must be non-negative");
    switch (topology) {
        case TopologyKind::fat_tree:
            if (fat_tree_radix < 2 || fat_tree_radix % 2 != 0) throw ConfigError("fat tree radix must be even and >= 2");
            if (nodes_per_switch > fat_tree_radix / 2) {
                throw ConfigError("fat tree leaves can host at most radix/2 nodes");
            }
            break;
        case TopologyKind::torus3d:
            for (int d : torus_dims)
                if (d < 1) throw ConfigError("torus dimensions must be >= 1");
            if (torus_links_per_direction < 1) throw ConfigError("torus links_per_direction must be >= 1");
            break;
        case TopologyKind::dragonfly:
            if (dragonfly_groups < 1 || dragonfly_switches_per_group < 1) {
                throw ConfigError("dragonfly needs at least one group and one switch per group");
            }
            if (dragonfly_intra_links != dragonfly_switches_per_group - 1) {
                throw ConfigError("dragonfly groups are all-to-all: intra_links must equal switches_per_group - 1");
            }
            if (dragonfly_groups > 1 &&
                dragonfly_switches_per_group * dragonfly_inter_links < dragonfly_groups - 1) {
                throw ConfigError("dragonfly has too few global links to connect every pair of groups");
            }
            break;
    }
}

// ---------------------------------------------------------------- common

std::vector<int> Topology::route(int src, int dst) const {
    std::vector<int> path;
    append_route(src, dst, path);
    return path;
}

void Topology::attach_nodes(int nodes_per_switch) {
    inject_.resize(node_count_);
    eject_.resize(node_count_);
    for (int n = 0; n < node_count_; ++n) {
        const int sw = switch_vertex(n / nodes_per_switch);
        inject_[n] = add_link(n, sw);
        eject_[n] = add_link(sw, n);
    }
}

void Topology::check_node(int node) const {
    if (node < 0 || node >= node_count_) throw LookupError("unknown node " + std::to_string(node));
}

// ---------------------------------------------------------------- fat tree

FatTree::FatTree(const NetworkConfig& cfg, int node_count)
    : Topology(node_count, cfg.fat_tree_radix * (cfg.fat_tree_radix / 2) * cfg.nodes_per_switch),
      half_(cfg.fat_tree_radix / 2),
      nodes_per_leaf_(cfg.nodes_per_switch) {
    const int per_pod = half_ * nodes_per_leaf_;
    pods_ = std::max(1, (node_count + per_pod - 1) / per_pod);
    roots_per_position_ = (pods_ + 1) / 2;

    const int leaf0 = add_switches(pods_ * half_);
    const int agg0 = add_switches(pods_ * half_);
    const int root0 = add_switches(half_ * roots_per_position_);
    attach_nodes(nodes_per_leaf_);

    const int aggs = pods_ * half_;
    leaf_up_.resize(static_cast<std::size_t>(aggs) * half_);
    agg_down_.resize(static_cast<std::size_t>(aggs) * half_);
    agg_up_.resize(static_cast<std::size_t>(aggs) * half_);
    root_down_.resize(static_cast<std::size_t>(aggs) * half_);
    for (int p = 0; p < pods_; ++p) {
        for (int i = 0; i < half_; ++i) {
            const int leaf = p * half_ + i;
            for (int j = 0; j < half_; ++j) {
                const int agg = p * half_ + j;
                leaf_up_[leaf * half_ + j] = add_link(switch_vertex(leaf0 + leaf), switch_vertex(agg0 + agg));
                agg_down_[agg * half_ + i] = add_link(switch_vertex(agg0 + agg), switch_vertex(leaf0 + leaf));
            }
        }
    }
    for (int agg = 0; agg < aggs; ++agg) {
        const int pos = agg % half_;
        for (int u = 0; u < half_; ++u) {
            const int root = root0 + pos * roots_per_position_ + u % roots_per_position_;
            agg_up_[agg * half_ + u] = add_link(switch_vertex(agg0 + agg), switch_vertex(root));
            root_down_[agg * half_ + u] = add_link(switch_vertex(root), switch_vertex(agg0 + agg));
        }
    }
}

void FatTree::append_route(int src, int dst, std::vector<int>& path) const {
    check_node(src);
    check_node(dst);
    const int ls = src / nodes_per_leaf_;
    const int ld = dst / nodes_per_leaf_;
    path.push_back(inject_[src]);
    if (ls != ld) {
        const int pos = dst % half_;
        const int ps = ls / half_;
        const int pd = ld / half_;
        const int agg_s = ps * half_ + pos;
        const int agg_d = pd * half_ + pos;
        path.push_back(leaf_up_[ls * half_ + pos]);
        if (ps != pd) {
            const int u = (dst / half_) % half_;
            path.push_back(agg_up_[agg_s * half_ + u]);
            path.push_back(root_down_[agg_d * half_ + u]);
        }
        path.push_back(agg_down_[agg_d * half_ + ld % half_]);
    }
    path.push_back(eject_[dst]);
}

// ---------------------------------------------------------------- torus

Torus3d::Torus3d(const NetworkConfig& cfg, int node_count)
    : Topology(node_count, cfg.torus_dims[0] * cfg.torus_dims[1] * cfg.torus_dims[2] * cfg.nodes_per_switch),
      dims_(cfg.torus_dims),
      lanes_(cfg.torus_links_per_direction) {
    const int switches = dims_[0] * dims_[1] * dims_[2];
    add_switches(switches);
    attach_nodes(cfg.nodes_per_switch);
    links_by_slot_.assign(static_cast<std::size_t>(switches) * 3 * 2 * lanes_, -1);
    for (int sw = 0; sw < switches; ++sw) {
        const auto c = coords(sw);
        for (int d = 0; d < 3; ++d) {
            if (dims_[d] == 1) continue;
            for (int dir = 0; dir < 2; ++dir) {
                auto n = c;
                n[d] = (c[d] + (dir == 0 ? 1 : dims_[d] - 1)) % dims_[d];
                for (int lane = 0; lane < lanes_; ++lane) {
                    links_by_slot_[link_slot(sw, d, dir, lane)] =
                        add_link(switch_vertex(sw), switch_vertex(switch_at(n)));
                }
            }
        }
    }
}

std::array<int, 3> Torus3d::coords(int sw) const {
    return {sw % dims_[0], (sw / dims_[0]) % dims_[1], sw / (dims_[0] * dims_[1])};
}

void Torus3d::append_route(int src, int dst, std::vector<int>& path) const {
    check_node(src);
    check_node(dst);
    path.push_back(inject_[src]);
    int sw = switch_of(src);
    const auto target = coords(switch_of(dst));
    const int lane = dst % lanes_;
    for (int d = 0; d < 3; ++d) {
        auto c = coords(sw);
        const int forward = ((target[d] - c[d]) % dims_[d] + dims_[d]) % dims_[d];
        if (forward == 0) continue;
        const int backward = dims_[d] - forward;
        const int dir = forward <= backward ? 0 : 1;
        const int hops = dir == 0 ? forward : backward;
        for (int h = 0; h < hops; ++h) {
            path.push_back(links_by_slot_[link_slot(sw, d, dir, lane)]);
            c[d] = (c[d] + (dir == 0 ? 1 : dims_[d] - 1)) % dims_[d];
            sw = switch_at(c);
        }
    }
    path.push_back(eject_[dst]);
}

// ---------------------------------------------------------------- dragonfly

Dragonfly::Dragonfly(const NetworkConfig& cfg, int node_count)
    : Topology(node_count,
               cfg.dragonfly_groups * cfg.dragonfly_switches_per_group * cfg.nodes_per_switch),
      groups_(cfg.dragonfly_groups),
      per_group_(cfg.dragonfly_switches_per_group),
      pair_links_(groups_ > 1 ? per_group_ * cfg.dragonfly_inter_links / (groups_ - 1) : 0) {
    const int switches = groups_ * per_group_;
    add_switches(switches);
    attach_nodes(cfg.nodes_per_switch);

    intra_.assign(static_cast<std::size_t>(switches) * per_group_, -1);
    for (int g = 0; g < groups_; ++g) {
        for (int s = 0; s < per_group_; ++s) {
            for (int t = 0; t < per_group_; ++t) {
                if (s == t) continue;
                intra_[(g * per_group_ + s) * per_group_ + t] =
                    add_link(switch_vertex(g * per_group_ + s), switch_vertex(g * per_group_ + t));
            }
        }
    }

    // Global port slot i of a group belongs to switch i / inter_links. Link k
    // towards the group at offset o uses slot k * (groups - 1) + (o - 1); the
    // far end uses the slot of the reverse offset, so both ends agree.
    const int h = cfg.dragonfly_inter_links;
    globals_.resize(static_cast<std::size_t>(groups_) * groups_ * std::max(pair_links_, 1));
    for (int g = 0; g < groups_; ++g) {
        for (int o = 1; o < groups_; ++o) {
            const int other = (g + o) % groups_;
            for (int k = 0; k < pair_links_; ++k) {
                const int near_sw = g * per_group_ + (k * (groups_ - 1) + (o - 1)) / h;
                const int far_sw = other * per_group_ + (k * (groups_ - 1) + (groups_ - o - 1)) / h;
                globals_[(static_cast<std::size_t>(g) * groups_ + other) * pair_links_ + k] =
                    Global{add_link(switch_vertex(near_sw), switch_vertex(far_sw)), near_sw, far_sw};
            }
        }
    }
}

void Dragonfly::append_route(int src, int dst, std::vector<int>& path) const {
    check_node(src);
    check_node(dst);
    path.push_back(inject_[src]);
    const int ss = switch_of(src);
    const int sd = switch_of(dst);
    auto hop = [&](int from, int to) {
        if (from != to) path.push_back(intra_[from * per_group_ + to % per_group_]);
    };
    const int gs = group_of_switch(ss);
    const int gd = group_of_switch(sd);
    if (gs == gd) {
        hop(ss, sd);
    } else {
        const auto& gl = global(gs, gd, dst % pair_links_);
        hop(ss, gl.from_switch);
        path.push_back(gl.link);
        hop(gl.to_switch, sd);
    }
    path.push_back(eject_[dst]);
}

std::unique_ptr<Topology> build_topology(const NetworkConfig& cfg, int node_count) {
    cfg.validate();
    if (node_count < 1) throw CapacityError("topology needs at least one node");
    std::unique_ptr<Topology> topo;
    switch (cfg.topology) {
        case TopologyKind::fat_tree: {
            const int capacity = cfg.fat_tree_radix * (cfg.fat_tree_radix / 2) * cfg.nodes_per_switch;
            if (node_count > capacity) break;
            topo = std::make_unique<FatTree>(cfg, node_count);
            break;
        }
        case TopologyKind::torus3d:
            if (node_count > cfg.torus_dims[0] * cfg.torus_dims[1] * cfg.torus_dims[2] * cfg.nodes_per_switch) break;
            topo = std::make_unique<Torus3d>(cfg, node_count);
            break;
        case TopologyKind::dragonfly:
            if (node_count > cfg.dragonfly_groups * cfg.dragonfly_switches_per_group * cfg.nodes_per_switch) break;
            topo = std::make_unique<Dragonfly>(cfg, node_count);
            break;
    }
    if (!topo) {
        throw CapacityError(to_string(cfg.topology) + " cannot host " + std::to_string(node_count) + " nodes");
    }
    return topo;
}

}  // namespace manynode::net
