#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "manynode/engine.hpp"
#include "manynode/mpi.hpp"
#include "manynode/skeleton.hpp"
#include "manynode/topology.hpp"

namespace manynode {
class Config;
}

namespace manynode::sim {

struct SimOptions {
    net::NetworkConfig network;
    int ranks_per_node = 1;
    skel::TimingMode mode = skel::TimingMode::constant;
    std::uint64_t seed = 1;
    bool trace = false;
    std::uint64_t event_cap = Engine::kDefaultEventCap;

    /// Reads `network.*`, `sim.ranks_per_node`, `sim.mode`, `sim.seed`,
    /// `sim.trace` and `sim.event_cap`.
    static SimOptions from_config(const Config& cfg);
};

struct RankReport {
    SimTime compute = 0;
    SimTime comm = 0;
    SimTime idle = 0;  ///< time between the rank finishing and the end of the run
    SimTime finish = 0;
};

struct SimReport {
    std::string skeleton;
    std::string topology;
    skel::TimingMode mode = skel::TimingMode::constant;
    std::uint64_t seed = 0;
    int ranks = 0;
    int nodes = 0;
    SimTime total = 0;
    std::vector<RankReport> rank;
    std::uint64_t messages = 0;  ///< user plus collective messages
    std::uint64_t user_messages_sent = 0;
    std::uint64_t user_messages_matched = 0;
    std::uint64_t collectives = 0;
    std::uint64_t sync_violations = 0;
    std::uint64_t packets_injected = 0;
    std::uint64_t packets_delivered = 0;
    std::uint64_t events = 0;
    SimTime max_queue_delay = 0;
    std::vector<SimTime> link_max_queue_delay;
    std::vector<mpi::CollectiveRecord> collective_records;
    bool traced = false;
    std::vector<std::vector<mpi::Interval>> trace;

    SimTime max_compute() const;
    SimTime mean_compute() const;
    SimTime mean_comm() const;
};

/// Runs every rank program to completion. Rank r lives on node
/// r / ranks_per_node. The result depends only on the arguments.
SimReport run_skeleton(const skel::SkeletonProgram& program, const timing::ProfileSet& profile,
                       const skel::Binding& binding, const SimOptions& options);

/// `ns` with exactly three decimals, from integer picoseconds.
std::string format_ns(SimTime t);

/// summary.csv: one `key,value` row per report field.
void write_summary(std::ostream& out, const SimReport& report);
/// ranks.csv: rank,compute_ns,comm_ns,idle_ns,finish_ns.
void write_rank_table(std::ostream& out, const SimReport& report);
/// trace.csv: rank,kind,start_ns,end_ns.
void write_trace(std::ostream& out, const SimReport& report);

/// Writes summary.csv, ranks.csv and, when traced, trace.csv into `dir`.
void emit_simulation(const SimReport& report, const std::filesystem::path& dir);

}  // namespace manynode::sim
