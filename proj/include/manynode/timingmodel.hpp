#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "manynode/rng.hpp"

namespace manynode {
class Config;
}

namespace manynode::timing {

enum class Side { pre, post };

/// One marker hit: `pre` is written just before a communication call, `post`
/// just after it returns.
struct MarkerRecord {
    int rank = 0;
    int marker = 0;
    Side side = Side::pre;
    std::int64_t timestamp_ns = 0;

    bool operator==(const MarkerRecord&) const = default;
};

using MarkerLog = std::vector<MarkerRecord>;

MarkerLog load_marker_log(const std::filesystem::path& path);
MarkerLog parse_marker_log(std::istream& in, const std::string& origin = "<marker log>");
void write_marker_log(std::ostream& out, const MarkerLog& log);

/// Durations of one compute phase, in execution order. The phase is named
/// after the marker of the call that ends it.
struct IntervalSeries {
    int phase_id = 0;
    std::vector<std::int64_t> durations;  ///< nanoseconds

    bool operator==(const IntervalSeries&) const = default;
};

using PhaseIntervals = std::map<int, IntervalSeries>;
using RankIntervals = std::map<int, PhaseIntervals>;

/// Compute-phase durations per rank: the gap between a call's post marker
/// and the next call's pre marker. Time inside calls is dropped.
RankIntervals extract_intervals(const MarkerLog& log);

/// Bounded-bin empirical CDF. Bin i spans [edges[i], edges[i+1]] and holds
/// probability cum_prob[i] - cum_prob[i-1]. A discrete CDF places each bin's
/// mass on its left edge instead of spreading it uniformly.
struct EmpiricalCdf {
    std::vector<double> edges;
    std::vector<double> cum_prob;
    bool discrete = false;

    std::size_t bins() const { return cum_prob.size(); }
    double lo() const { return edges.front(); }
    double hi() const { return edges.back(); }
    double mean() const;
    double cdf(double x) const;
    /// Throws ValidationError when the structural invariants do not hold.
    void validate(std::size_t max_bins = 100) const;

    bool operator==(const EmpiricalCdf&) const = default;
};

/// Exact step CDF when the sample has at most `max_bins` distinct values,
/// otherwise equal-probability bins with edges at the sample quantiles.
EmpiricalCdf build_cdf(std::span<const double> durations, std::size_t max_bins = 100);

/// Inverse-transform draw with linear interpolation inside a bin.
double sample(const EmpiricalCdf& cdf, Rng& rng);

struct TimingCluster {
    int label = 0;
    EmpiricalCdf cdf;
    std::int64_t count = 0;
    double mean = 0.0;  ///< sample mean, nanoseconds

    bool operator==(const TimingCluster&) const = default;
};

/// Replay value for constant-timing mode.
inline double constant_value(const TimingCluster& cluster) { return cluster.mean; }

struct IntervalClustering {
    std::vector<TimingCluster> clusters;  ///< indexed by label; label 0 has the largest mean
    std::vector<int> labels;              ///< label of each input duration, in input order
};

/// One-dimensional gap clustering: sorted values a < b start a new cluster
/// when (b - a) / a > rel_gap.
IntervalClustering cluster_intervals(std::span<const double> durations, double rel_gap = 0.3,
                                     std::size_t max_bins = 100);

/// Repeating cluster-label pattern: `unit` repeated `repetitions` times, then `tail`.
struct PhasePattern {
    std::vector<int> unit;
    std::int64_t repetitions = 1;
    std::vector<int> tail;

    std::size_t length() const { return unit.size() * static_cast<std::size_t>(repetitions) + tail.size(); }
    int label_at(std::size_t index) const;
    std::vector<int> expand() const;

    bool operator==(const PhasePattern&) const = default;
};

PhasePattern detect_pattern(std::span<const int> labels);

struct PhaseProfile {
    std::vector<TimingCluster> clusters;
    PhasePattern pattern;

    bool operator==(const PhaseProfile&) const = default;
};

/// Timing profile of one rank: compute phases keyed by phase id.
struct TimingProfile {
    std::map<int, PhaseProfile> phases;

    bool operator==(const TimingProfile&) const = default;
};

/// Profiles of the representative ranks captured in detail, keyed by rank id.
struct ProfileSet {
    std::map<int, TimingProfile> ranks;

    bool operator==(const ProfileSet&) const = default;
};

struct ProfileOptions {
    double rel_gap = 0.3;
    std::size_t max_bins = 100;
};

PhaseProfile build_phase_profile(const IntervalSeries& series, const ProfileOptions& options = {});
ProfileSet build_profile(const RankIntervals& intervals, const ProfileOptions& options = {});

/// Ground-truth distribution of one synthetic timing cluster (nanoseconds).
struct Distribution {
    enum class Kind { constant, uniform, normal };
    Kind kind = Kind::constant;
    double a = 0.0;  ///< value | lower bound | mean
    double b = 0.0;  ///< unused | upper bound | standard deviation

    static Distribution parse(const std::string& text);
    double draw(Rng& rng) const;
    double mean() const;
};

struct SynthPhase {
    int marker = 1;
    std::vector<Distribution> clusters;
    std::vector<int> pattern{0};
};

/// Description of a synthetic marker log standing in for a detailed node run.
struct SynthSpec {
    int ranks = 1;
    std::int64_t occurrences = 1;  ///< executions of each phase per rank
    std::int64_t comm_ns = 1000;   ///< time spent inside each call
    int init_marker = 0;           ///< call emitted once before the first phase
    std::vector<SynthPhase> phases;

    static SynthSpec from_config(const Config& cfg);
    void validate() const;
};

/// Generates a log whose extracted intervals equal the drawn durations
/// (rounded to whole nanoseconds). The drawn durations are returned in `truth`
/// when non-null.
MarkerLog synth_marker_log(const SynthSpec& spec, std::uint64_t seed, RankIntervals* truth = nullptr);

}  // namespace manynode::timing
