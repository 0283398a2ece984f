// manynode command-line driver.
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "manynode/config.hpp"
#include "manynode/dse.hpp"
#include "manynode/errors.hpp"
#include "manynode/profile_io.hpp"
#include "manynode/rankprofile.hpp"
#include "manynode/simulation.hpp"
#include "manynode/skeleton.hpp"
#include "manynode/timingmodel.hpp"

namespace fs = std::filesystem;
using namespace manynode;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    bool trace = false;
};

Config load_config(const Globals& g) {
    Config cfg = g.config.empty() ? Config{} : Config::load(g.config);
    if (g.seed) {
        cfg.set("sim.seed", std::to_string(*g.seed));
        cfg.set("sweep.seed", std::to_string(*g.seed));
    }
    if (g.trace) cfg.set("sim.trace", "true");
    return cfg;
}

fs::path out_dir(const Globals& g) {
    std::error_code ec;
    fs::create_directories(g.out, ec);
    if (ec) throw IoError("cannot create directory " + g.out + ": " + ec.message());
    return g.out;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

timing::ProfileSet load_profile_for(const Config& cfg, const std::string& flag) {
    const std::string path = !flag.empty() ? flag : cfg.get_string("profile.path", "");
    if (path.empty()) return {};
    return timing::load_profile(path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"manynode: many-node performance projection from rank profiles, timing profiles and skeletons"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "key = value configuration file");
    app.add_option("--seed", g.seed, "random seed (overrides sim.seed and sweep.seed)");
    app.add_option("--out", g.out, "output directory")->capture_default_str();
    app.add_flag("--trace", g.trace, "record per-rank compute/communication intervals");
    app.set_version_flag("--version", std::string("manynode ") + MANYNODE_VERSION + "\nprofile format: " +
                                          timing::kProfileHeader);

    auto* cluster = app.add_subcommand("cluster-ranks", "cluster ranks by hardware counters and pick nodes to simulate");
    std::string counters, node_map;
    int k_max = 0, ranks_per_node = 0;
    cluster->add_option("--counters", counters, "rank,node,instructions,ipc,branches,loads CSV")->required();
    cluster->add_option("--k-max", k_max, "largest cluster count to try (default cluster.k_max or 8)");
    cluster->add_option("--ranks-per-node", ranks_per_node, "block placement instead of the node column");
    cluster->add_option("--node-map", node_map, "rank,node placement CSV");

    auto* build = app.add_subcommand("build-profile", "turn a marker log into a timing profile");
    std::string log_path;
    build->add_option("--log", log_path, "rank,marker,side,timestamp_ns CSV")->required();

    auto* synth = app.add_subcommand("synth-log", "generate a synthetic marker log from synth.* settings");

    auto* simulate = app.add_subcommand("simulate", "replay a skeleton on the network model");
    std::string profile_flag, mode_flag;
    simulate->add_option("--profile", profile_flag, "timing profile (default profile.path)");
    simulate->add_option("--mode", mode_flag, "constant or variable (default sim.mode)");

    auto* sweep = app.add_subcommand("sweep", "run a design-space sweep");
    std::string sweep_profile;
    sweep->add_option("--profile", sweep_profile, "timing profile (default profile.path)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        const Config cfg = load_config(g);
        if (*cluster) {
            const auto table = rankprofile::load_counters(counters);
            for (const auto& w : table.warnings) std::cerr << "warning: " << w << '\n';
            const int k = k_max > 0 ? k_max : static_cast<int>(cfg.get_int("cluster.k_max", 8));
            const auto seed = static_cast<std::uint64_t>(cfg.get_int("cluster.seed", 0x5eed));
            const auto clustering = rankprofile::cluster_ranks(table.rows, k, seed);
            std::map<int, int> placement;
            if (!node_map.empty()) {
                placement = rankprofile::load_node_map(node_map);
            } else if (ranks_per_node > 0) {
                placement = rankprofile::block_placement(clustering, ranks_per_node);
            } else {
                for (const auto& row : table.rows) placement[row.rank_id] = row.node_id;
            }
            const auto selection = rankprofile::select_representatives(clustering, placement);
            const auto dir = out_dir(g);
            auto c = open_out(dir / "clustering.csv");
            rankprofile::write_clustering_report(c, clustering, placement);
            auto s = open_out(dir / "selection.csv");
            rankprofile::write_selection(s, selection);
            std::cout << "k=" << clustering.k << " silhouette=" << timing::format_double(clustering.silhouette)
                      << " nodes=" << selection.nodes.size() << '\n';
        } else if (*build) {
            timing::ProfileOptions opts;
            opts.rel_gap = cfg.get_double("profile.rel_gap", opts.rel_gap);
            const auto bins = cfg.get_int("profile.max_bins", static_cast<std::int64_t>(opts.max_bins));
            if (bins < 1) throw ConfigError("profile.max_bins must be at least 1");
            opts.max_bins = static_cast<std::size_t>(bins);
            const auto log = timing::load_marker_log(log_path);
            const auto profile = timing::build_profile(timing::extract_intervals(log), opts);
            const auto path = out_dir(g) / "profile.txt";
            timing::save_profile(path, profile);
            std::cout << "wrote " << path.string() << " (" << profile.ranks.size() << " ranks)\n";
        } else if (*synth) {
            const auto spec = timing::SynthSpec::from_config(cfg);
            const auto seed = static_cast<std::uint64_t>(cfg.get_int("sim.seed", 1));
            const auto log = timing::synth_marker_log(spec, seed);
            const auto path = out_dir(g) / "markers.csv";
            auto out = open_out(path);
            timing::write_marker_log(out, log);
            std::cout << "wrote " << path.string() << " (" << log.size() << " records)\n";
        } else if (*simulate) {
            auto opts = sim::SimOptions::from_config(cfg);
            if (!mode_flag.empty()) opts.mode = skel::parse_timing_mode(mode_flag);
            const auto program = skel::from_config(cfg);
            const auto profile = load_profile_for(cfg, profile_flag);
            const auto binding = skel::Binding::from_config(cfg);
            const auto report = sim::run_skeleton(program, profile, binding, opts);
            sim::emit_simulation(report, g.out);
            std::cout << "total_ns=" << sim::format_ns(report.total) << '\n';
        } else if (*sweep) {
            const auto spec = dse::SweepSpec::from_config(cfg);
            const auto profile = load_profile_for(cfg, sweep_profile);
            const auto result = dse::run_sweep(spec, profile);
            dse::emit_reports(result, g.out);
            std::cout << result.rows.size() << " points\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "manynode: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
