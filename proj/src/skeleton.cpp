#include "manynode/skeleton.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "manynode/config.hpp"
#include "manynode/errors.hpp"

namespace manynode::skel {

using mpi::Op;

int SkeletonProgram::slot_index(const std::string& slot) const {
    const auto it = std::find(slots.begin(), slots.end(), slot);
    if (it == slots.end()) throw LookupError("skeleton " + name + " has no compute slot '" + slot + "'");
    return static_cast<int>(it - slots.begin());
}

namespace {

void require_positive(long value, const char* what) {
    if (value < 1) throw ConfigError(std::string(what) + " must be at least 1, got " + std::to_string(value));
}

std::string grid_text(std::initializer_list<int> dims) {
    std::string out;
    for (int d : dims) {
        if (!out.empty()) out += 'x';
        out += std::to_string(d);
    }
    return out;
}

}  // namespace

SkeletonProgram halo3d(int px, int py, int pz, int iterations, std::uint64_t halo_bytes, int allreduce_every,
                       int neighbors) {
    require_positive(px, "halo3d px");
    require_positive(py, "halo3d py");
    require_positive(pz, "halo3d pz");
    require_positive(iterations, "iterations");
    if (neighbors != 6 && neighbors != 26) throw ConfigError("halo3d neighbors must be 6 or 26");
    if (allreduce_every < 0) throw ConfigError("halo3d allreduce_every must not be negative");

    SkeletonProgram prog;
    prog.name = "halo3d";
    prog.params = {{"grid", grid_text({px, py, pz})},
                   {"iterations", std::to_string(iterations)},
                   {"halo_bytes", std::to_string(halo_bytes)},
                   {"allreduce_every", std::to_string(allreduce_every)},
                   {"neighbors", std::to_string(neighbors)}};
    prog.slots = {"compute"};
    const int n = px * py * pz;
    prog.ranks.resize(n);

    std::vector<std::array<int, 3>> offsets;
    for (int dz = -1; dz <= 1; ++dz) {
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                const int nonzero = (dx != 0) + (dy != 0) + (dz != 0);
                if (nonzero == 0 || (neighbors == 6 && nonzero != 1)) continue;
                offsets.push_back({dx, dy, dz});
            }
        }
    }
    auto tag_of = [](const std::array<int, 3>& d) { return (d[0] + 1) + 3 * (d[1] + 1) + 9 * (d[2] + 1); };

    for (int r = 0; r < n; ++r) {
        const int x = r % px, y = (r / px) % py, z = r / (px * py);
        struct Peer {
            int rank;
            int send_tag;
            int recv_tag;
        };
        std::vector<Peer> peers;
        for (const auto& d : offsets) {
            const int nx = x + d[0], ny = y + d[1], nz = z + d[2];
            if (nx < 0 || ny < 0 || nz < 0 || nx >= px || ny >= py || nz >= pz) continue;
            peers.push_back({nx + px * (ny + py * nz), tag_of(d), tag_of({-d[0], -d[1], -d[2]})});
        }
        const int k = static_cast<int>(peers.size());
        auto& ops = prog.ranks[r];
        for (int it = 0; it < iterations; ++it) {
            ops.push_back(Op::compute(0));
            for (int i = 0; i < k; ++i) ops.push_back(Op::irecv(peers[i].rank, peers[i].recv_tag, i));
            for (int i = 0; i < k; ++i) ops.push_back(Op::isend(peers[i].rank, peers[i].send_tag, halo_bytes, k + i));
            if (k > 0) ops.push_back(Op::waitall(0, 2 * k));
            if (allreduce_every > 0 && (it + 1) % allreduce_every == 0) ops.push_back(Op::allreduce(8));
        }
    }
    return prog;
}

SkeletonProgram sweep(int px, int py, int iterations, int angles, std::uint64_t chunk_bytes, int corners) {
    require_positive(px, "sweep px");
    require_positive(py, "sweep py");
    require_positive(iterations, "iterations");
    require_positive(angles, "sweep angles");
    if (corners < 1 || corners > 4) throw ConfigError("sweep corners must be between 1 and 4");

    SkeletonProgram prog;
    prog.name = "sweep";
    prog.params = {{"grid", grid_text({px, py})},
                   {"iterations", std::to_string(iterations)},
                   {"angles", std::to_string(angles)},
                   {"chunk_bytes", std::to_string(chunk_bytes)},
                   {"corners", std::to_string(corners)}};
    prog.slots = {"compute"};
    const int n = px * py;
    prog.ranks.resize(n);

    for (int r = 0; r < n; ++r) {
        const int i = r % px, j = r / px;
        auto& ops = prog.ranks[r];
        for (int it = 0; it < iterations; ++it) {
            for (int a = 0; a < angles; ++a) {
                for (int c = 0; c < corners; ++c) {
                    const int di = (c & 1) ? -1 : 1;
                    const int dj = (c & 2) ? -1 : 1;
                    const int ui = i - di, uj = j - dj;
                    const int wi = i + di, wj = j + dj;
                    if (ui >= 0 && ui < px) ops.push_back(Op::recv(ui + px * j, c));
                    if (uj >= 0 && uj < py) ops.push_back(Op::recv(i + px * uj, c));
                    ops.push_back(Op::compute(0));
                    if (wi >= 0 && wi < px) ops.push_back(Op::send(wi + px * j, c, chunk_bytes));
                    if (wj >= 0 && wj < py) ops.push_back(Op::send(i + px * wj, c, chunk_bytes));
                }
            }
        }
    }
    return prog;
}

SkeletonProgram transpose(int ranks, int iterations, std::uint64_t elems_per_rank, std::uint64_t elem_size) {
    require_positive(ranks, "transpose ranks");
    require_positive(iterations, "iterations");
    SkeletonProgram prog;
    prog.name = "transpose";
    const std::uint64_t per_pair = elems_per_rank * elem_size / static_cast<std::uint64_t>(ranks);
    prog.params = {{"ranks", std::to_string(ranks)},
                   {"iterations", std::to_string(iterations)},
                   {"elems_per_rank", std::to_string(elems_per_rank)},
                   {"elem_size", std::to_string(elem_size)},
                   {"per_pair_bytes", std::to_string(per_pair)}};
    prog.slots = {"fft_rows", "fft_cols"};
    prog.ranks.resize(ranks);
    for (auto& ops : prog.ranks) {
        for (int it = 0; it < iterations; ++it) {
            ops.push_back(Op::compute(0));
            if (ranks > 1) ops.push_back(Op::alltoall(per_pair));
            ops.push_back(Op::compute(1));
            if (ranks > 1) ops.push_back(Op::alltoall(per_pair));
        }
    }
    return prog;
}

SkeletonProgram tree_dnn(int ranks, int iterations, std::uint64_t weight_bytes, int fanout) {
    require_positive(ranks, "tree_dnn ranks");
    require_positive(iterations, "iterations");
    if (fanout < 2) throw ConfigError("tree_dnn fanout must be at least 2");
    SkeletonProgram prog;
    prog.name = "tree_dnn";
    prog.params = {{"ranks", std::to_string(ranks)},
                   {"iterations", std::to_string(iterations)},
                   {"weight_bytes", std::to_string(weight_bytes)},
                   {"fanout", std::to_string(fanout)}};
    prog.slots = {"train", "encode", "decode"};
    prog.ranks.resize(ranks);
    for (auto& ops : prog.ranks) {
        for (int it = 0; it < iterations; ++it) {
            ops.push_back(Op::compute(0));
            if (ranks == 1) continue;
            ops.push_back(Op::reduce_tree(0, weight_bytes, fanout, 1, 2));
            ops.push_back(Op::bcast_tree(0, weight_bytes, fanout));
        }
    }
    return prog;
}

SkeletonProgram nn4d(int p, int iterations, std::uint64_t msg_bytes) {
    require_positive(p, "nn4d p");
    require_positive(iterations, "iterations");
    SkeletonProgram prog;
    prog.name = "nn4d";
    prog.params = {{"p", std::to_string(p)},
                   {"iterations", std::to_string(iterations)},
                   {"msg_bytes", std::to_string(msg_bytes)}};
    prog.slots = {"compute"};
    const int n = p * p * p * p;
    prog.ranks.resize(n);

    for (int r = 0; r < n; ++r) {
        std::array<int, 4> c{r % p, (r / p) % p, (r / (p * p)) % p, r / (p * p * p)};
        auto shifted = [&](int dim, int delta) {
            auto d = c;
            d[dim] = (d[dim] + delta + p) % p;
            return d[0] + p * (d[1] + p * (d[2] + p * d[3]));
        };
        auto& ops = prog.ranks[r];
        for (int it = 0; it < iterations; ++it) {
            ops.push_back(Op::compute(0));
            if (p == 1) continue;
            // A message travelling in the + direction of `dim` carries tag 2*dim.
            for (int dim = 0; dim < 4; ++dim) {
                ops.push_back(Op::irecv(shifted(dim, -1), 2 * dim, 2 * dim));
                ops.push_back(Op::irecv(shifted(dim, +1), 2 * dim + 1, 2 * dim + 1));
            }
            for (int dim = 0; dim < 4; ++dim) {
                ops.push_back(Op::isend(shifted(dim, +1), 2 * dim, msg_bytes, 8 + 2 * dim));
                ops.push_back(Op::isend(shifted(dim, -1), 2 * dim + 1, msg_bytes, 9 + 2 * dim));
            }
            ops.push_back(Op::waitall(0, 16));
        }
    }
    return prog;
}

std::vector<int> factor_grid(int n, int dims) {
    require_positive(n, "rank count");
    if (dims < 1) throw ConfigError("grid needs at least one dimension");
    if (dims == 1) return {n};
    std::vector<int> best;
    int best_spread = std::numeric_limits<int>::max();
    for (int f = 1; f <= n; ++f) {
        if (n % f != 0) continue;
        auto rest = factor_grid(n / f, dims - 1);
        if (f < rest.front()) continue;  // keep factors in descending order
        const int spread = f - rest.back();
        if (spread < best_spread) {
            best_spread = spread;
            best = {f};
            best.insert(best.end(), rest.begin(), rest.end());
        }
    }
    return best;
}

namespace {

std::vector<int> parse_grid(const std::string& text, std::size_t dims) {
    std::vector<int> out;
    std::string item;
    for (char ch : text + "x") {
        if (ch == 'x' || ch == 'X' || ch == ',') {
            out.push_back(static_cast<int>(parse_int(trim(item), "skeleton.grid")));
            item.clear();
        } else {
            item += ch;
        }
    }
    if (out.size() != dims) {
        throw ConfigError("skeleton.grid '" + text + "' needs " + std::to_string(dims) + " dimensions");
    }
    return out;
}

std::vector<int> grid_for(const Config& cfg, int ranks, std::size_t dims) {
    if (ranks > 0) {
        if (cfg.has("skeleton.grid")) {
            auto grid = parse_grid(cfg.get_string("skeleton.grid"), dims);
            long product = 1;
            for (int g : grid) product *= g;
            if (product == ranks) return grid;
        }
        return factor_grid(ranks, static_cast<int>(dims));
    }
    if (!cfg.has("skeleton.grid")) throw ConfigError("skeleton.grid or skeleton.ranks is required");
    auto grid = parse_grid(cfg.get_string("skeleton.grid"), dims);
    if (cfg.has("skeleton.ranks")) {
        long product = 1;
        for (int g : grid) product *= g;
        const auto want = cfg.get_int("skeleton.ranks");
        if (product != want) {
            throw ConfigError("skeleton.grid " + cfg.get_string("skeleton.grid") + " holds " + std::to_string(product) +
                              " ranks but skeleton.ranks is " + std::to_string(want));
        }
    }
    return grid;
}

int fourth_root(int n) {
    int p = static_cast<int>(std::lround(std::pow(static_cast<double>(n), 0.25)));
    if (p < 1 || static_cast<long>(p) * p * p * p != n) {
        throw ConfigError("nn4d needs a rank count of the form p^4, got " + std::to_string(n));
    }
    return p;
}

}  // namespace

SkeletonProgram from_config(const Config& cfg, int ranks) {
    const std::string name = cfg.get_string("skeleton.name");
    const int iterations = static_cast<int>(cfg.get_int("skeleton.iterations", 10));
    if (ranks <= 0 && cfg.has("skeleton.ranks") && !cfg.has("skeleton.grid")) {
        ranks = static_cast<int>(cfg.get_int("skeleton.ranks"));
    }
    auto u64 = [&](const std::string& key, std::int64_t fallback) {
        const auto v = cfg.get_int(key, fallback);
        if (v < 0) throw ConfigError(key + " must not be negative");
        return static_cast<std::uint64_t>(v);
    };

    if (name == "halo3d") {
        const auto g = grid_for(cfg, ranks, 3);
        return halo3d(g[0], g[1], g[2], iterations, u64("skeleton.halo_bytes", 8192),
                      static_cast<int>(cfg.get_int("skeleton.allreduce_every", 1)),
                      static_cast<int>(cfg.get_int("skeleton.neighbors", 6)));
    }
    if (name == "sweep") {
        const auto g = grid_for(cfg, ranks, 2);
        return sweep(g[0], g[1], iterations, static_cast<int>(cfg.get_int("skeleton.angles", 1)),
                     u64("skeleton.chunk_bytes", 4096), static_cast<int>(cfg.get_int("skeleton.corners", 4)));
    }
    if (name == "transpose") {
        if (ranks <= 0) throw ConfigError("transpose needs skeleton.ranks");
        return transpose(ranks, iterations, u64("skeleton.elems_per_rank", 65536), u64("skeleton.elem_size", 16));
    }
    if (name == "tree_dnn") {
        if (ranks <= 0) throw ConfigError("tree_dnn needs skeleton.ranks");
        return tree_dnn(ranks, iterations, u64("skeleton.weight_bytes", 1 << 20),
                        static_cast<int>(cfg.get_int("skeleton.fanout", 2)));
    }
    if (name == "nn4d") {
        int p = 0;
        if (ranks > 0) {
            p = fourth_root(ranks);
        } else {
            p = static_cast<int>(cfg.get_int("skeleton.p"));
            if (cfg.has("skeleton.ranks") && static_cast<long>(p) * p * p * p != cfg.get_int("skeleton.ranks")) {
                throw ConfigError("skeleton.p^4 does not match skeleton.ranks");
            }
        }
        return nn4d(p, iterations, u64("skeleton.msg_bytes", 65536));
    }
    throw ConfigError("unknown skeleton '" + name + "' (expected halo3d, sweep, transpose, tree_dnn or nn4d)");
}

// ---------------------------------------------------------------- timing

std::string to_string(TimingMode mode) { return mode == TimingMode::constant ? "constant" : "variable"; }

TimingMode parse_timing_mode(const std::string& text) {
    if (text == "constant") return TimingMode::constant;
    if (text == "variable") return TimingMode::variable;
    throw ConfigError("unknown timing mode '" + text + "' (expected constant or variable)");
}

Binding Binding::from_config(const Config& cfg) {
    Binding b;
    for (const auto& [key, value] : cfg.section("binding.")) {
        if (key == "default_ns") {
            b.default_ns = parse_double(value, "binding.default_ns");
        } else if (key.size() > 3 && key.compare(key.size() - 3, 3, ".ns") == 0) {
            auto& t = b.slots[key.substr(0, key.size() - 3)];
            t.constant_ns = parse_double(value, "binding." + key);
            t.fixed = true;
        } else {
            auto& t = b.slots[key];
            t.phase = static_cast<int>(parse_int(value, "binding." + key));
        }
    }
    if (b.default_ns < 0) throw ConfigError("binding.default_ns must not be negative");
    for (const auto& [slot, t] : b.slots) {
        if (t.constant_ns < 0) throw ConfigError("binding." + slot + ".ns must not be negative");
    }
    if (cfg.has("profile.rank_map")) {
        for (const auto& item : cfg.get_list("profile.rank_map")) {
            const auto parts = split(item, ':');
            if (parts.size() != 2) throw ConfigError("profile.rank_map entry '" + item + "' is not <rank>:<profile rank>");
            const std::string from = trim(parts[0]);
            const int sim = from == "*" ? -1 : static_cast<int>(parse_int(from, "profile.rank_map"));
            b.rank_map[sim] = static_cast<int>(parse_int(trim(parts[1]), "profile.rank_map"));
        }
    }
    return b;
}

Binding::Target Binding::target(const std::string& slot) const {
    if (auto it = slots.find(slot); it != slots.end()) {
        Target t = it->second;
        if (t.phase < 0 && !t.fixed) t.constant_ns = default_ns;
        return t;
    }
    return Target{-1, default_ns, false};
}

ComputeReplayer::ComputeReplayer(const SkeletonProgram& program, const timing::ProfileSet& profile,
                                 const Binding& binding, TimingMode mode, std::uint64_t seed)
    : mode_(mode) {
    std::map<int, int> phase_index;
    for (const auto& slot : program.slots) {
        const auto t = binding.target(slot);
        SlotPlan plan;
        plan.constant_ns = t.constant_ns;
        if (t.phase >= 0) {
            auto [it, inserted] = phase_index.emplace(t.phase, static_cast<int>(phase_index.size()));
            plan.phase_index = it->second;
        }
        slots_.push_back(plan);
    }
    phase_count_ = static_cast<int>(phase_index.size());
    const int n = program.size();
    profile_rank_.assign(n, -1);
    profile_index_.assign(n, 0);

    if (phase_count_ > 0) {
        if (profile.ranks.empty()) throw ProfileError("compute slots are bound to profile phases but the profile is empty");
        std::map<int, int> index_of;
        for (int r = 0; r < n; ++r) {
            int pr;
            if (auto it = binding.rank_map.find(r); it != binding.rank_map.end()) {
                pr = it->second;
            } else if (auto any = binding.rank_map.find(-1); any != binding.rank_map.end()) {
                pr = any->second;
            } else if (profile.ranks.count(r)) {
                pr = r;
            } else if (profile.ranks.size() == 1) {
                pr = profile.ranks.begin()->first;
            } else {
                throw ProfileError("rank " + std::to_string(r) + " has no profile; set profile.rank_map");
            }
            const auto prof = profile.ranks.find(pr);
            if (prof == profile.ranks.end()) {
                throw ProfileError("rank " + std::to_string(r) + " maps to profile rank " + std::to_string(pr) +
                                   ", which the profile does not contain");
            }
            profile_rank_[r] = pr;
            auto [it, inserted] = index_of.emplace(pr, static_cast<int>(index_of.size()));
            profile_index_[r] = it->second;
            if (!inserted) continue;
            for (const auto& [phase, idx] : phase_index) {
                (void)idx;
                const auto ph = prof->second.phases.find(phase);
                if (ph == prof->second.phases.end()) {
                    throw ProfileError("profile rank " + std::to_string(pr) + " has no phase " + std::to_string(phase));
                }
                if (ph->second.clusters.empty()) {
                    throw ProfileError("profile rank " + std::to_string(pr) + " phase " + std::to_string(phase) +
                                       " has no timing clusters");
                }
            }
        }
        phases_.assign(index_of.size() * phase_count_, nullptr);
        for (const auto& [pr, pi] : index_of) {
            const auto& phases = profile.ranks.at(pr).phases;
            for (const auto& [phase, idx] : phase_index) phases_[pi * phase_count_ + idx] = &phases.at(phase);
        }
        cursor_.assign(static_cast<std::size_t>(n) * phase_count_, 0);
    }
    if (mode_ == TimingMode::variable) {
        rng_.reserve(n);
        for (int r = 0; r < n; ++r) rng_.push_back(Rng::derive(seed, static_cast<std::uint64_t>(r)));
    }
}

double ComputeReplayer::next_ns(int rank, int slot) {
    if (slot < 0 || static_cast<std::size_t>(slot) >= slots_.size()) {
        throw LookupError("compute slot " + std::to_string(slot) + " does not exist");
    }
    const SlotPlan& plan = slots_[slot];
    if (plan.phase_index < 0) return plan.constant_ns;
    const timing::PhaseProfile& phase = *phases_[profile_index_[rank] * phase_count_ + plan.phase_index];
    auto& cursor = cursor_[static_cast<std::size_t>(rank) * phase_count_ + plan.phase_index];
    const std::size_t len = phase.pattern.length();
    const int label = len == 0 ? 0 : phase.pattern.label_at(cursor % len);
    ++cursor;
    if (label < 0 || static_cast<std::size_t>(label) >= phase.clusters.size()) {
        throw ProfileError("pattern label " + std::to_string(label) + " has no timing cluster");
    }
    const auto& cluster = phase.clusters[label];
    if (mode_ == TimingMode::constant) return timing::constant_value(cluster);
    return timing::sample(cluster.cdf, rng_[rank]);
}

SimTime ComputeReplayer::compute_time(int rank, int slot) {
    return from_ns(std::max(0.0, next_ns(rank, slot)));
}

}  // namespace manynode::skel
