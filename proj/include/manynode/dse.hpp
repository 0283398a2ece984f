#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "manynode/config.hpp"
#include "manynode/simulation.hpp"
#include "manynode/skeleton.hpp"
#include "manynode/topology.hpp"

namespace manynode::dse {

struct SweepPoint {
    net::TopologyKind topology = net::TopologyKind::fat_tree;
    int ranks = 0;  ///< 0 keeps the skeleton's configured size
    double bandwidth_gbps = 100.0;
    double latency_ns = 90.0;
    skel::TimingMode mode = skel::TimingMode::constant;

    std::string describe() const;
};

/// Cartesian sweep over the `sweep.*` axes. Axes that are not given take the
/// value from the base configuration.
///
///   sweep.topology      = fat_tree, torus3d, dragonfly
///   sweep.ranks         = 64, 128
///   sweep.bandwidth_gbps = 20, 50, 100
///   sweep.latency_ns    = 40, 90
///   sweep.modes         = constant, variable
///   sweep.seeds         = 5      (runs per variable-mode point)
///   sweep.seed          = 1      (first seed; later runs use seed+1, ...)
///   sweep.workers       = 1
struct SweepSpec {
    Config base;
    std::vector<net::TopologyKind> topologies;
    std::vector<int> ranks;
    std::vector<double> bandwidths_gbps;
    std::vector<double> latencies_ns;
    std::vector<skel::TimingMode> modes;
    int seeds = 5;
    std::uint64_t first_seed = 1;
    int workers = 1;
    bool trace = false;

    static SweepSpec from_config(const Config& cfg);
    /// Throws ConfigError for empty axes and CapacityError for points the
    /// topology cannot host.
    void validate() const;
    std::vector<SweepPoint> points() const;
};

struct RankBreakdown {
    SimTime compute = 0;
    SimTime comm = 0;
    SimTime idle = 0;
};

struct SweepRow {
    SweepPoint point;
    int ranks = 0;  ///< actual rank count simulated
    int seeds = 0;
    double mean_total_ns = 0.0;
    double std_total_ns = 0.0;  ///< sample standard deviation over seeds
    double mean_compute_ns = 0.0;
    double mean_comm_ns = 0.0;
    double mean_idle_ns = 0.0;
    std::vector<SimTime> totals;  ///< one per seed
    std::vector<RankBreakdown> breakdown;  ///< first seed, when traced
};

struct SweepResult {
    std::vector<SweepRow> rows;  ///< sorted by point coordinates
    bool traced = false;
};

/// Simulation options for one point of the sweep.
sim::SimOptions point_options(const Config& base, const SweepPoint& point, std::uint64_t seed, bool trace);

SweepResult run_sweep(const SweepSpec& spec, const timing::ProfileSet& profile);

/// Per-rank compute/communication split recomputed from a traced run.
std::vector<RankBreakdown> breakdown(const sim::SimReport& report);

void write_sweep_table(std::ostream& out, const SweepResult& result);
void write_breakdown_table(std::ostream& out, const SweepResult& result);

/// Writes sweep.csv and, when traced, breakdown.csv into `dir`.
void emit_reports(const SweepResult& result, const std::filesystem::path& dir);

}  // namespace manynode::dse
