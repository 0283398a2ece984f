#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "manynode/mpi.hpp"
#include "manynode/rng.hpp"
#include "manynode/timingmodel.hpp"

namespace manynode {
class Config;
}

namespace manynode::skel {

/// Per-rank operation lists for one application stand-in. Compute ops refer
/// to named slots (`slots[op.slot]`) that a Binding maps to profile phases.
struct SkeletonProgram {
    std::string name;
    std::map<std::string, std::string> params;
    std::vector<std::string> slots;
    std::vector<mpi::Program> ranks;

    int size() const { return static_cast<int>(ranks.size()); }
    int slot_index(const std::string& slot) const;
};

/// HPCG-like: compute, halo exchange with the 6 face (or all 26) neighbours
/// of a non-periodic px*py*pz grid, and an 8-byte allreduce every
/// `allreduce_every` iterations (0 disables it).
SkeletonProgram halo3d(int px, int py, int pz, int iterations, std::uint64_t halo_bytes, int allreduce_every,
                       int neighbors = 6);

/// SNAP-like wavefront over a px*py grid. Each angle sweeps from each of
/// `corners` corners in turn (1 to 4), moving `chunk_bytes` downstream.
SkeletonProgram sweep(int px, int py, int iterations, int angles, std::uint64_t chunk_bytes, int corners = 4);

/// FFT2d-like: compute, alltoall, compute, alltoall. The per-pair size is
/// elems_per_rank * elem_size / ranks.
SkeletonProgram transpose(int ranks, int iterations, std::uint64_t elems_per_rank, std::uint64_t elem_size = 16);

/// Caffe-like: compute, tree reduction of the weights to rank 0 with encode
/// and decode delays per hop, broadcast back down the tree.
SkeletonProgram tree_dnn(int ranks, int iterations, std::uint64_t weight_bytes, int fanout = 2);

/// MILC-like: compute, then non-blocking exchange with the 8 neighbours of a
/// periodic p^4 lattice.
SkeletonProgram nn4d(int p, int iterations, std::uint64_t msg_bytes);

/// Builds the skeleton named by `skeleton.name` from `skeleton.*` keys. When
/// `ranks` is positive it overrides the configured rank count; grids are then
/// factored automatically.
SkeletonProgram from_config(const Config& cfg, int ranks = 0);

/// Near-cubic factorization of n into `dims` factors, largest first.
std::vector<int> factor_grid(int n, int dims);

enum class TimingMode { constant, variable };

std::string to_string(TimingMode mode);
TimingMode parse_timing_mode(const std::string& text);

/// Where each compute slot takes its durations from: a profile phase, or a
/// fixed number of nanoseconds.
struct Binding {
    struct Target {
        int phase = -1;  ///< profile phase id; -1 means use constant_ns
        double constant_ns = 0.0;
        bool fixed = false;  ///< constant_ns was set explicitly
    };
    std::map<std::string, Target> slots;
    double default_ns = 0.0;
    /// Simulated rank -> profile rank; -1 key is the fallback for unlisted ranks.
    std::map<int, int> rank_map;

    /// Reads `binding.<slot> = <phase>`, `binding.<slot>.ns = <value>`,
    /// `binding.default_ns` and `profile.rank_map = 0:0, *:1`.
    static Binding from_config(const Config& cfg);
    Target target(const std::string& slot) const;
};

/// Supplies compute durations by replaying phase patterns: each (rank, phase)
/// walks the pattern expansion, wrapping at its end; constant mode returns
/// the cluster mean, variable mode samples the cluster CDF from a per-rank
/// stream.
class ComputeReplayer final : public mpi::ComputeSource {
public:
    ComputeReplayer(const SkeletonProgram& program, const timing::ProfileSet& profile, const Binding& binding,
                    TimingMode mode, std::uint64_t seed);

    SimTime compute_time(int rank, int slot) override;

    /// Duration in nanoseconds before conversion; exposed for tests.
    double next_ns(int rank, int slot);

    int profile_rank(int rank) const { return profile_rank_[rank]; }

private:
    struct SlotPlan {
        int phase_index = -1;  ///< into phases_, or -1 for a constant
        double constant_ns = 0.0;
    };

    TimingMode mode_;
    std::vector<SlotPlan> slots_;
    int phase_count_ = 0;
    std::vector<int> profile_rank_;
    // [profile_index * phase_count + phase_index]
    std::vector<const timing::PhaseProfile*> phases_;
    std::vector<int> profile_index_;     // per simulated rank
    std::vector<std::size_t> cursor_;    // [rank * phase_count + phase_index]
    std::vector<Rng> rng_;
};

}  // namespace manynode::skel
