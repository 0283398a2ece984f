#include "manynode/simulation.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

#include "manynode/config.hpp"
#include "manynode/errors.hpp"
#include "manynode/network.hpp"

namespace manynode::sim {

SimOptions SimOptions::from_config(const Config& cfg) {
    SimOptions o;
    o.network = net::NetworkConfig::from_config(cfg);
    o.ranks_per_node = static_cast<int>(cfg.get_int("sim.ranks_per_node", 1));
    if (o.ranks_per_node < 1) throw ConfigError("sim.ranks_per_node must be at least 1");
    o.mode = skel::parse_timing_mode(cfg.get_string("sim.mode", "constant"));
    o.seed = static_cast<std::uint64_t>(cfg.get_int("sim.seed", 1));
    o.trace = cfg.get_bool("sim.trace", false);
    const auto cap = cfg.get_int("sim.event_cap", static_cast<std::int64_t>(Engine::kDefaultEventCap));
    if (cap < 1) throw ConfigError("sim.event_cap must be positive");
    o.event_cap = static_cast<std::uint64_t>(cap);
    return o;
}

SimTime SimReport::max_compute() const {
    SimTime m = 0;
    for (const auto& r : rank) m = std::max(m, r.compute);
    return m;
}

SimTime SimReport::mean_compute() const {
    if (rank.empty()) return 0;
    SimTime s = 0;
    for (const auto& r : rank) s += r.compute;
    return s / static_cast<SimTime>(rank.size());
}

SimTime SimReport::mean_comm() const {
    if (rank.empty()) return 0;
    SimTime s = 0;
    for (const auto& r : rank) s += r.comm;
    return s / static_cast<SimTime>(rank.size());
}

SimReport run_skeleton(const skel::SkeletonProgram& program, const timing::ProfileSet& profile,
                       const skel::Binding& binding, const SimOptions& options) {
    if (program.size() < 1) throw UsageError("skeleton has no ranks");
    if (options.ranks_per_node < 1) throw ConfigError("ranks per node must be at least 1");
    options.network.validate();

    const int n = program.size();
    const int nodes = (n + options.ranks_per_node - 1) / options.ranks_per_node;
    const auto topology = net::build_topology(options.network, nodes);

    skel::ComputeReplayer replayer(program, profile, binding, options.mode, options.seed);
    Engine engine(options.event_cap);

    std::vector<int> placement(n);
    for (int r = 0; r < n; ++r) placement[r] = r / options.ranks_per_node;

    // The network needs its listener at construction and the world needs the
    // network, so a forwarding listener breaks the cycle.
    struct Forward final : net::TransferListener {
        mpi::World* world = nullptr;
        void on_injected(std::uint64_t token, SimTime at) override { world->on_injected(token, at); }
        void on_delivered(std::uint64_t token, SimTime at) override { world->on_delivered(token, at); }
    } forward;
    net::Network network(engine, *topology, options.network, forward);
    mpi::World world(engine, network, placement, program.ranks, replayer, options.trace);
    forward.world = &world;

    world.start();
    engine.run_until_idle();
    world.check_finished();

    SimReport rep;
    rep.skeleton = program.name;
    rep.topology = net::to_string(options.network.topology);
    rep.mode = options.mode;
    rep.seed = options.mode == skel::TimingMode::constant ? 0 : options.seed;
    rep.ranks = n;
    rep.nodes = nodes;
    rep.rank.resize(n);
    for (int r = 0; r < n; ++r) rep.total = std::max(rep.total, world.rank_stats(r).finish);
    for (int r = 0; r < n; ++r) {
        const auto& s = world.rank_stats(r);
        auto& out = rep.rank[r];
        out.compute = s.compute;
        out.comm = s.comm;
        out.finish = s.finish;
        out.idle = rep.total - s.compute - s.comm;
    }
    const auto& ws = world.stats();
    rep.user_messages_sent = ws.user_messages_sent;
    rep.user_messages_matched = ws.user_messages_matched;
    rep.messages = ws.user_messages_sent + ws.collective_messages;
    rep.collectives = ws.collectives;
    rep.sync_violations = ws.sync_violations;
    rep.collective_records = world.collectives();
    const auto& ns = network.stats();
    rep.packets_injected = ns.packets_injected;
    rep.packets_delivered = ns.packets_delivered;
    rep.max_queue_delay = ns.max_queue_delay;
    rep.link_max_queue_delay = network.link_max_queue_delay();
    rep.events = engine.dispatched();
    rep.traced = options.trace;
    if (options.trace) {
        rep.trace.resize(n);
        for (int r = 0; r < n; ++r) rep.trace[r] = world.trace(r);
    }
    return rep;
}

std::string format_ns(SimTime t) {
    const bool neg = t < 0;
    const auto a = static_cast<std::uint64_t>(neg ? -t : t);
    std::string frac = std::to_string(a % 1000);
    frac.insert(0, 3 - frac.size(), '0');
    return (neg ? "-" : "") + std::to_string(a / 1000) + "." + frac;
}

void write_summary(std::ostream& out, const SimReport& r) {
    out << "key,value\n";
    out << "skeleton," << r.skeleton << '\n';
    out << "topology," << r.topology << '\n';
    out << "mode," << skel::to_string(r.mode) << '\n';
    out << "seed," << r.seed << '\n';
    out << "ranks," << r.ranks << '\n';
    out << "nodes," << r.nodes << '\n';
    out << "total_ns," << format_ns(r.total) << '\n';
    out << "mean_compute_ns," << format_ns(r.mean_compute()) << '\n';
    out << "mean_comm_ns," << format_ns(r.mean_comm()) << '\n';
    out << "messages," << r.messages << '\n';
    out << "user_messages_sent," << r.user_messages_sent << '\n';
    out << "user_messages_matched," << r.user_messages_matched << '\n';
    out << "collectives," << r.collectives << '\n';
    out << "sync_violations," << r.sync_violations << '\n';
    out << "packets_injected," << r.packets_injected << '\n';
    out << "packets_delivered," << r.packets_delivered << '\n';
    out << "max_queue_delay_ns," << format_ns(r.max_queue_delay) << '\n';
    out << "events," << r.events << '\n';
}

void write_rank_table(std::ostream& out, const SimReport& r) {
    out << "rank,compute_ns,comm_ns,idle_ns,finish_ns\n";
    for (int i = 0; i < r.ranks; ++i) {
        const auto& x = r.rank[i];
        out << i << ',' << format_ns(x.compute) << ',' << format_ns(x.comm) << ',' << format_ns(x.idle) << ','
            << format_ns(x.finish) << '\n';
    }
}

void write_trace(std::ostream& out, const SimReport& r) {
    if (!r.traced) throw UsageError("simulation ran without tracing");
    out << "rank,kind,start_ns,end_ns\n";
    for (int i = 0; i < r.ranks; ++i) {
        for (const auto& iv : r.trace[i]) {
            out << i << ',' << (iv.kind == mpi::Interval::Kind::compute ? "compute" : "comm") << ','
                << format_ns(iv.start) << ',' << format_ns(iv.end) << '\n';
        }
    }
}

namespace {
template <class Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    fn(out);
    out.flush();
    if (!out) throw IoError("error while writing " + path.string());
}
}  // namespace

void emit_simulation(const SimReport& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    write_file(dir / "summary.csv", [&](std::ostream& o) { write_summary(o, report); });
    write_file(dir / "ranks.csv", [&](std::ostream& o) { write_rank_table(o, report); });
    if (report.traced) write_file(dir / "trace.csv", [&](std::ostream& o) { write_trace(o, report); });
}

}  // namespace manynode::sim
