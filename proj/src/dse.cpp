#include "manynode/dse.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <ostream>
#include <thread>
#include <tuple>

#include "manynode/errors.hpp"
#include "manynode/profile_io.hpp"

namespace manynode::dse {

using timing::format_double;

std::string SweepPoint::describe() const {
    return "topology=" + net::to_string(topology) + " ranks=" + std::to_string(ranks) +
           " bandwidth_gbps=" + format_double(bandwidth_gbps) + " latency_ns=" + format_double(latency_ns) +
           " mode=" + skel::to_string(mode);
}

namespace {

auto key(const SweepPoint& p) {
    return std::make_tuple(static_cast<int>(p.topology), p.ranks, p.bandwidth_gbps, p.latency_ns,
                           static_cast<int>(p.mode));
}

template <class T, class Fn>
std::vector<T> axis(const Config& cfg, const std::string& name, T fallback, Fn&& parse) {
    if (!cfg.has(name)) return {fallback};
    std::vector<T> out;
    for (const auto& item : cfg.get_list(name)) out.push_back(parse(item));
    return out;
}

}  // namespace

SweepSpec SweepSpec::from_config(const Config& cfg) {
    SweepSpec s;
    s.base = cfg;
    const auto net = net::NetworkConfig::from_config(cfg);
    s.topologies = axis(cfg, "sweep.topology", net.topology, [](const std::string& v) {
        return net::parse_topology_kind(v);
    });
    s.ranks = axis(cfg, "sweep.ranks", 0, [](const std::string& v) {
        return static_cast<int>(parse_int(v, "sweep.ranks"));
    });
    s.bandwidths_gbps = axis(cfg, "sweep.bandwidth_gbps", net.link_bandwidth_bps / 1e9, [](const std::string& v) {
        return parse_double(v, "sweep.bandwidth_gbps");
    });
    s.latencies_ns = axis(cfg, "sweep.latency_ns", net.link_latency_ns, [](const std::string& v) {
        return parse_double(v, "sweep.latency_ns");
    });
    s.modes = axis(cfg, "sweep.modes", skel::parse_timing_mode(cfg.get_string("sim.mode", "constant")),
                   [](const std::string& v) { return skel::parse_timing_mode(v); });
    s.seeds = static_cast<int>(cfg.get_int("sweep.seeds", 5));
    s.first_seed = static_cast<std::uint64_t>(cfg.get_int("sweep.seed", cfg.get_int("sim.seed", 1)));
    s.workers = static_cast<int>(cfg.get_int("sweep.workers", 1));
    s.trace = cfg.get_bool("sim.trace", false);
    return s;
}

void SweepSpec::validate() const {
    if (topologies.empty() || ranks.empty() || bandwidths_gbps.empty() || latencies_ns.empty() || modes.empty()) {
        throw ConfigError("every sweep axis needs at least one value");
    }
    if (seeds < 1) throw ConfigError("sweep.seeds must be at least 1");
    if (workers < 1) throw ConfigError("sweep.workers must be at least 1");
    for (double b : bandwidths_gbps) {
        if (!(b > 0)) throw ConfigError("sweep.bandwidth_gbps values must be positive");
    }
    for (double l : latencies_ns) {
        if (l < 0) throw ConfigError("sweep.latency_ns values must not be negative");
    }
    const int rpn = static_cast<int>(base.get_int("sim.ranks_per_node", 1));
    for (auto topo : topologies) {
        for (int r : ranks) {
            if (r < 0) throw ConfigError("sweep.ranks values must not be negative");
            const int n = r > 0 ? r : skel::from_config(base).size();
            SweepPoint p;
            p.topology = topo;
            p.ranks = r;
            auto opts = point_options(base, p, first_seed, false);
            opts.network.validate();
            const int nodes = (n + rpn - 1) / rpn;
            try {
                net::build_topology(opts.network, nodes);
            } catch (const CapacityError& e) {
                throw CapacityError(p.describe() + ": " + e.what());
            }
        }
    }
}

std::vector<SweepPoint> SweepSpec::points() const {
    std::vector<SweepPoint> out;
    for (auto topo : topologies) {
        for (int r : ranks) {
            for (double bw : bandwidths_gbps) {
                for (double lat : latencies_ns) {
                    for (auto mode : modes) out.push_back({topo, r, bw, lat, mode});
                }
            }
        }
    }
    std::sort(out.begin(), out.end(), [](const SweepPoint& a, const SweepPoint& b) { return key(a) < key(b); });
    out.erase(std::unique(out.begin(), out.end(), [](const SweepPoint& a, const SweepPoint& b) {
                  return key(a) == key(b);
              }),
              out.end());
    return out;
}

sim::SimOptions point_options(const Config& base, const SweepPoint& point, std::uint64_t seed, bool trace) {
    auto opts = sim::SimOptions::from_config(base);
    opts.network.topology = point.topology;
    opts.network.link_bandwidth_bps = point.bandwidth_gbps * 1e9;
    opts.network.link_latency_ns = point.latency_ns;
    opts.mode = point.mode;
    opts.seed = seed;
    opts.trace = trace;
    return opts;
}

std::vector<RankBreakdown> breakdown(const sim::SimReport& report) {
    if (!report.traced) throw UsageError("breakdown needs a traced simulation (enable sim.trace or --trace)");
    std::vector<RankBreakdown> out(report.ranks);
    for (int r = 0; r < report.ranks; ++r) {
        auto& b = out[r];
        for (const auto& iv : report.trace[r]) {
            (iv.kind == mpi::Interval::Kind::compute ? b.compute : b.comm) += iv.end - iv.start;
        }
        b.idle = report.total - b.compute - b.comm;
    }
    return out;
}

SweepResult run_sweep(const SweepSpec& spec, const timing::ProfileSet& profile) {
    spec.validate();
    const auto points = spec.points();
    const auto binding = skel::Binding::from_config(spec.base);

    struct Job {
        std::size_t point;
        int seed_index;
    };
    std::vector<Job> jobs;
    std::vector<SweepRow> rows(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        rows[i].point = points[i];
        rows[i].seeds = points[i].mode == skel::TimingMode::variable ? spec.seeds : 1;
        rows[i].totals.resize(rows[i].seeds);
        for (int s = 0; s < rows[i].seeds; ++s) jobs.push_back({i, s});
    }
    struct Outcome {
        SimTime total = 0;
        double compute = 0, comm = 0, idle = 0;
        int ranks = 0;
        std::vector<RankBreakdown> breakdown;
    };
    std::vector<Outcome> outcomes(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) {
            const auto& job = jobs[j];
            const auto& point = points[job.point];
            try {
                const auto program = skel::from_config(spec.base, point.ranks);
                const bool trace = spec.trace && job.seed_index == 0;
                const auto opts = point_options(spec.base, point, spec.first_seed + job.seed_index, trace);
                const auto rep = sim::run_skeleton(program, profile, binding, opts);
                auto& o = outcomes[j];
                o.total = rep.total;
                o.ranks = rep.ranks;
                for (const auto& r : rep.rank) {
                    o.compute += static_cast<double>(r.compute);
                    o.comm += static_cast<double>(r.comm);
                    o.idle += static_cast<double>(r.idle);
                }
                o.compute /= rep.ranks;
                o.comm /= rep.ranks;
                o.idle /= rep.ranks;
                if (trace) o.breakdown = breakdown(rep);
            } catch (const std::exception& e) {
                try {
                    throw Error(point.describe() + ": " + e.what());
                } catch (...) {
                    errors[j] = std::current_exception();
                }
            }
        }
    };
    const int width = std::max(1, std::min<int>(spec.workers, static_cast<int>(jobs.size())));
    if (width == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < width; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    for (std::size_t j = 0; j < jobs.size(); ++j) {
        auto& row = rows[jobs[j].point];
        const auto& o = outcomes[j];
        row.ranks = o.ranks;
        row.totals[jobs[j].seed_index] = o.total;
        row.mean_compute_ns += o.compute / 1000.0 / row.seeds;
        row.mean_comm_ns += o.comm / 1000.0 / row.seeds;
        row.mean_idle_ns += o.idle / 1000.0 / row.seeds;
        if (jobs[j].seed_index == 0) row.breakdown = o.breakdown;
    }
    for (auto& row : rows) {
        double sum = 0;
        for (auto t : row.totals) sum += to_ns(t);
        row.mean_total_ns = sum / row.seeds;
        double ss = 0;
        for (auto t : row.totals) ss += (to_ns(t) - row.mean_total_ns) * (to_ns(t) - row.mean_total_ns);
        row.std_total_ns = row.seeds > 1 ? std::sqrt(ss / (row.seeds - 1)) : 0.0;
    }
    SweepResult result;
    result.rows = std::move(rows);
    result.traced = spec.trace;
    return result;
}

void write_sweep_table(std::ostream& out, const SweepResult& result) {
    out << "topology,ranks,bandwidth_gbps,latency_ns,mode,seeds,mean_total_ns,std_total_ns,mean_compute_ns,"
           "mean_comm_ns,mean_idle_ns,comm_share\n";
    for (const auto& row : result.rows) {
        const double busy = row.mean_compute_ns + row.mean_comm_ns;
        out << net::to_string(row.point.topology) << ',' << row.ranks << ',' << format_double(row.point.bandwidth_gbps)
            << ',' << format_double(row.point.latency_ns) << ',' << skel::to_string(row.point.mode) << ','
            << row.seeds << ',' << format_double(row.mean_total_ns) << ',' << format_double(row.std_total_ns) << ','
            << format_double(row.mean_compute_ns) << ',' << format_double(row.mean_comm_ns) << ','
            << format_double(row.mean_idle_ns) << ',' << format_double(busy > 0 ? row.mean_comm_ns / busy : 0.0)
            << '\n';
    }
}

void write_breakdown_table(std::ostream& out, const SweepResult& result) {
    if (!result.traced) throw UsageError("breakdown needs a traced sweep (enable sim.trace or --trace)");
    out << "topology,ranks,bandwidth_gbps,latency_ns,mode,rank,compute_ns,comm_ns,idle_ns\n";
    for (const auto& row : result.rows) {
        const std::string prefix = net::to_string(row.point.topology) + ',' + std::to_string(row.ranks) + ',' +
                                   format_double(row.point.bandwidth_gbps) + ',' +
                                   format_double(row.point.latency_ns) + ',' + skel::to_string(row.point.mode);
        for (std::size_t r = 0; r < row.breakdown.size(); ++r) {
            const auto& b = row.breakdown[r];
            out << prefix << ',' << r << ',' << sim::format_ns(b.compute) << ',' << sim::format_ns(b.comm) << ','
                << sim::format_ns(b.idle) << '\n';
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

void emit_reports(const SweepResult& result, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    write_file(dir / "sweep.csv", [&](std::ostream& o) { write_sweep_table(o, result); });
    if (result.traced) write_file(dir / "breakdown.csv", [&](std::ostream& o) { write_breakdown_table(o, result); });
}

}  // namespace manynode::dse
