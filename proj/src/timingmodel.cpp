#include "manynode/timingmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>

#include "manynode/config.hpp"
#include "manynode/errors.hpp"

namespace manynode::timing {

// ---------------------------------------------------------------- marker logs

MarkerLog parse_marker_log(std::istream& in, const std::string& origin) {
    MarkerLog log;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty()) continue;
        if (line_no == 1 && t.rfind("rank", 0) == 0) continue;
        const auto f = split(t, ',');
        const std::string where = origin + ":" + std::to_string(line_no);
        if (f.size() != 4) throw ParseError(where + ": expected rank,marker,side,timestamp_ns");
        MarkerRecord r;
        try {
            r.rank = static_cast<int>(parse_int(f[0], "rank"));
            r.marker = static_cast<int>(parse_int(f[1], "marker"));
            r.timestamp_ns = parse_int(f[3], "timestamp_ns");
        } catch (const ParseError& e) {
            throw ParseError(where + ": " + e.what());
        }
        if (f[2] == "pre") {
            r.side = Side::pre;
        } else if (f[2] == "post") {
            r.side = Side::post;
        } else {
            throw ParseError(where + ": side must be 'pre' or 'post'");
        }
        log.push_back(r);
    }
    return log;
}

MarkerLog load_marker_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read marker log " + path.string());
    return parse_marker_log(in, path.string());
}

void write_marker_log(std::ostream& out, const MarkerLog& log) {
    out << "rank,marker,side,timestamp_ns\n";
    for (const auto& r : log) {
        out << r.rank << ',' << r.marker << ',' << (r.side == Side::pre ? "pre" : "post") << ',' << r.timestamp_ns
            << '\n';
    }
}

RankIntervals extract_intervals(const MarkerLog& log) {
    struct Cursor {
        std::size_t index = 0;
        bool inside_call = false;
        int open_marker = 0;
        bool has_post = false;
        std::int64_t last_ts = std::numeric_limits<std::int64_t>::min();
        std::int64_t last_post = 0;
    };
    std::map<int, Cursor> cursors;
    RankIntervals out;
    for (const auto& r : log) {
        auto& c = cursors[r.rank];
        const std::string where = "rank " + std::to_string(r.rank) + ", record " + std::to_string(c.index);
        if (r.timestamp_ns < c.last_ts) throw StructuralError(where + ": timestamp goes backwards");
        if (r.side == Side::pre) {
            if (c.inside_call) throw StructuralError(where + ": pre marker without post for the previous call");
            if (c.has_post) {
                auto& series = out[r.rank][r.marker];
                series.phase_id = r.marker;
                series.durations.push_back(r.timestamp_ns - c.last_post);
            }
            c.inside_call = true;
            c.open_marker = r.marker;
        } else {
            if (!c.inside_call) throw StructuralError(where + ": post marker without matching pre");
            if (r.marker != c.open_marker) throw StructuralError(where + ": post marker does not match open call");
            c.inside_call = false;
            c.has_post = true;
            c.last_post = r.timestamp_ns;
        }
        c.last_ts = r.timestamp_ns;
        ++c.index;
    }
    for (const auto& [rank, c] : cursors) {
        if (c.inside_call) {
            throw StructuralError("rank " + std::to_string(rank) + ", record " + std::to_string(c.index) +
                                  ": log ends inside a call");
        }
    }
    return out;
}

// ---------------------------------------------------------------- CDFs

double EmpiricalCdf::mean() const {
    double m = 0.0;
    double prev = 0.0;
    for (std::size_t i = 0; i < cum_prob.size(); ++i) {
        const double p = cum_prob[i] - prev;
        prev = cum_prob[i];
        m += p * (discrete ? edges[i] : 0.5 * (edges[i] + edges[i + 1]));
    }
    return m;
}

double EmpiricalCdf::cdf(double x) const {
    if (x < edges.front()) return 0.0;
    double prev = 0.0;
    for (std::size_t i = 0; i < cum_prob.size(); ++i) {
        if (x < edges[i + 1]) {
            if (discrete) return cum_prob[i];
            const double f = (x - edges[i]) / (edges[i + 1] - edges[i]);
            return prev + f * (cum_prob[i] - prev);
        }
        prev = cum_prob[i];
    }
    return 1.0;
}

void EmpiricalCdf::validate(std::size_t max_bins) const {
    if (cum_prob.empty()) throw ValidationError("cdf: no bins");
    if (cum_prob.size() > max_bins) throw ValidationError("cdf: more than " + std::to_string(max_bins) + " bins");
    if (edges.size() != cum_prob.size() + 1) throw ValidationError("cdf: edge count must be bin count + 1");
    for (std::size_t i = 1; i < edges.size(); ++i) {
        if (!(edges[i] > edges[i - 1])) throw ValidationError("cdf: edges must be strictly ascending");
    }
    double prev = 0.0;
    for (double p : cum_prob) {
        if (!(p > 0.0) || p > 1.0 || p < prev) throw ValidationError("cdf: cumulative probabilities out of order");
        prev = p;
    }
    if (cum_prob.back() != 1.0) throw ValidationError("cdf: final cumulative probability must be 1");
}

EmpiricalCdf build_cdf(std::span<const double> durations, std::size_t max_bins) {
    if (durations.empty()) throw UsageError("build_cdf: no samples");
    if (max_bins < 1) throw UsageError("build_cdf: max_bins must be >= 1");
    std::vector<double> xs(durations.begin(), durations.end());
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();

    std::vector<double> values;
    std::vector<std::size_t> counts;
    for (double x : xs) {
        if (values.empty() || x != values.back()) {
            values.push_back(x);
            counts.push_back(0);
        }
        ++counts.back();
    }

    EmpiricalCdf cdf;
    const double total = static_cast<double>(n);
    if (values.size() <= max_bins) {
        cdf.discrete = true;
        std::size_t acc = 0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            acc += counts[i];
            cdf.edges.push_back(values[i]);
            cdf.cum_prob.push_back(acc == n ? 1.0 : static_cast<double>(acc) / total);
        }
        cdf.edges.push_back(std::nextafter(values.back(), std::numeric_limits<double>::infinity()));
        return cdf;
    }

    // Equal-probability bins: boundary j sits at sample index floor(j * n / B).
    cdf.edges.push_back(xs.front());
    for (std::size_t j = 1; j <= max_bins; ++j) {
        const std::size_t k = j == max_bins ? n : (j * n) / max_bins;
        const double edge = j == max_bins ? xs.back() : xs[k];
        const double p = k == n ? 1.0 : static_cast<double>(k) / total;
        if (edge > cdf.edges.back()) {
            cdf.edges.push_back(edge);
            cdf.cum_prob.push_back(p);
        } else if (!cdf.cum_prob.empty()) {
            cdf.cum_prob.back() = p;
        }
    }
    return cdf;
}

double sample(const EmpiricalCdf& cdf, Rng& rng) {
    const double u = rng.uniform();
    const auto it = std::upper_bound(cdf.cum_prob.begin(), cdf.cum_prob.end(), u);
    const std::size_t i = it == cdf.cum_prob.end() ? cdf.cum_prob.size() - 1
                                                    : static_cast<std::size_t>(it - cdf.cum_prob.begin());
    if (cdf.discrete) return cdf.edges[i];
    const double lo_p = i == 0 ? 0.0 : cdf.cum_prob[i - 1];
    const double f = (u - lo_p) / (cdf.cum_prob[i] - lo_p);
    return cdf.edges[i] + f * (cdf.edges[i + 1] - cdf.edges[i]);
}

// ---------------------------------------------------------------- clustering and patterns

IntervalClustering cluster_intervals(std::span<const double> durations, double rel_gap, std::size_t max_bins) {
    if (durations.empty()) throw UsageError("cluster_intervals: empty series");
    if (!(rel_gap > 0.0)) throw UsageError("cluster_intervals: rel_gap must be positive");

    std::vector<double> xs(durations.begin(), durations.end());
    std::sort(xs.begin(), xs.end());
    // Group g spans sorted values [starts[g], starts[g+1]).
    std::vector<std::size_t> starts{0};
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const double a = xs[i - 1], b = xs[i];
        const bool split = a > 0.0 ? (b - a) / a > rel_gap : b > a;
        if (split) starts.push_back(i);
    }
    starts.push_back(xs.size());
    const std::size_t groups = starts.size() - 1;

    IntervalClustering out;
    out.clusters.resize(groups);
    std::vector<double> upper(groups);
    for (std::size_t g = 0; g < groups; ++g) {
        const std::span<const double> members(xs.data() + starts[g], starts[g + 1] - starts[g]);
        auto& c = out.clusters[groups - 1 - g];
        c.label = static_cast<int>(groups - 1 - g);
        c.count = static_cast<std::int64_t>(members.size());
        c.mean = std::accumulate(members.begin(), members.end(), 0.0) / static_cast<double>(members.size());
        c.cdf = build_cdf(members, max_bins);
        upper[g] = members.back();
    }
    out.labels.reserve(durations.size());
    for (double d : durations) {
        const auto g = static_cast<std::size_t>(std::lower_bound(upper.begin(), upper.end(), d) - upper.begin());
        out.labels.push_back(static_cast<int>(groups - 1 - g));
    }
    return out;
}

int PhasePattern::label_at(std::size_t index) const {
    const std::size_t body = unit.size() * static_cast<std::size_t>(repetitions);
    if (index < body) return unit[index % unit.size()];
    return tail[index - body];
}

std::vector<int> PhasePattern::expand() const {
    std::vector<int> out;
    out.reserve(length());
    for (std::int64_t r = 0; r < repetitions; ++r) out.insert(out.end(), unit.begin(), unit.end());
    out.insert(out.end(), tail.begin(), tail.end());
    return out;
}

PhasePattern detect_pattern(std::span<const int> labels) {
    const std::size_t n = labels.size();
    if (n == 0) throw UsageError("detect_pattern: empty label sequence");

    // z[i] = length of the longest common prefix of labels and labels[i..].
    std::vector<std::size_t> z(n, 0);
    z[0] = n;
    for (std::size_t i = 1, l = 0, r = 0; i < n; ++i) {
        if (i < r) z[i] = std::min(r - i, z[i - l]);
        while (i + z[i] < n && labels[z[i]] == labels[i + z[i]]) ++z[i];
        if (i + z[i] > r) {
            l = i;
            r = i + z[i];
        }
    }

    PhasePattern p;
    for (std::size_t period = 1; period <= n / 2; ++period) {
        const std::size_t reps = n / period;
        if (z[period] >= period * (reps - 1)) {
            p.unit.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(period));
            p.repetitions = static_cast<std::int64_t>(reps);
            p.tail.assign(labels.begin() + static_cast<std::ptrdiff_t>(period * reps), labels.end());
            return p;
        }
    }
    p.unit.assign(labels.begin(), labels.end());
    p.repetitions = 1;
    return p;
}

PhaseProfile build_phase_profile(const IntervalSeries& series, const ProfileOptions& options) {
    std::vector<double> xs(series.durations.begin(), series.durations.end());
    auto clustered = cluster_intervals(xs, options.rel_gap, options.max_bins);
    PhaseProfile phase;
    phase.pattern = detect_pattern(clustered.labels);
    phase.clusters = std::move(clustered.clusters);
    return phase;
}

ProfileSet build_profile(const RankIntervals& intervals, const ProfileOptions& options) {
    ProfileSet set;
    for (const auto& [rank, phases] : intervals) {
        auto& profile = set.ranks[rank];
        for (const auto& [phase_id, series] : phases) {
            if (series.durations.empty()) continue;
            profile.phases[phase_id] = build_phase_profile(series, options);
        }
    }
    return set;
}

// ---------------------------------------------------------------- synthetic logs

Distribution Distribution::parse(const std::string& text) {
    const auto parts = split(trim(text), ':');
    Distribution d;
    if (parts.size() == 2 && parts[0] == "const") {
        d.kind = Kind::constant;
        d.a = parse_double(parts[1], "const");
    } else if (parts.size() == 3 && parts[0] == "uniform") {
        d.kind = Kind::uniform;
        d.a = parse_double(parts[1], "uniform lower bound");
        d.b = parse_double(parts[2], "uniform upper bound");
    } else if (parts.size() == 3 && parts[0] == "normal") {
        d.kind = Kind::normal;
        d.a = parse_double(parts[1], "normal mean");
        d.b = parse_double(parts[2], "normal stddev");
    } else {
        throw ParseError("distribution '" + text + "': expected const:V, uniform:LO:HI or normal:MEAN:SD");
    }
    return d;
}

double Distribution::draw(Rng& rng) const {
    switch (kind) {
        case Kind::constant: return a;
        case Kind::uniform: return rng.uniform(a, b);
        case Kind::normal: return rng.normal(a, b);
    }
    return a;
}

double Distribution::mean() const { return kind == Kind::uniform ? 0.5 * (a + b) : a; }

SynthSpec SynthSpec::from_config(const Config& cfg) {
    SynthSpec spec;
    spec.ranks = static_cast<int>(cfg.get_int("synth.ranks", 1));
    spec.occurrences = cfg.get_int("synth.occurrences", 1);
    spec.comm_ns = cfg.get_int("synth.comm_ns", 1000);
    spec.init_marker = static_cast<int>(cfg.get_int("synth.init_marker", 0));
    for (const auto& id : cfg.get_list("synth.phases")) {
        SynthPhase phase;
        phase.marker = static_cast<int>(parse_int(id, "synth.phases"));
        const std::string base = "synth.phase." + id + ".";
        for (const auto& item : split(cfg.get_string(base + "clusters"), ';')) {
            if (!item.empty()) phase.clusters.push_back(Distribution::parse(item));
        }
        if (auto pat = cfg.find(base + "pattern")) {
            phase.pattern.clear();
            for (const auto& tok : split(*pat, ' ')) {
                if (!tok.empty()) phase.pattern.push_back(static_cast<int>(parse_int(tok, base + "pattern")));
            }
        }
        spec.phases.push_back(std::move(phase));
    }
    spec.validate();
    return spec;
}

void SynthSpec::validate() const {
    if (ranks < 1) throw ValidationError("synth: ranks must be >= 1");
    if (occurrences < 1) throw ValidationError("synth: occurrences must be >= 1");
    if (comm_ns < 0) throw ValidationError("synth: comm_ns must be >= 0");
    if (phases.empty()) throw ValidationError("synth: at least one phase is required");
    std::vector<int> markers{init_marker};
    for (const auto& p : phases) {
        const std::string name = "synth phase " + std::to_string(p.marker);
        if (std::find(markers.begin(), markers.end(), p.marker) != markers.end()) {
            throw ValidationError(name + ": marker id reused");
        }
        markers.push_back(p.marker);
        if (p.clusters.empty()) throw ValidationError(name + ": no clusters");
        if (p.pattern.empty()) throw ValidationError(name + ": empty pattern");
        for (int l : p.pattern) {
            if (l < 0 || l >= static_cast<int>(p.clusters.size())) {
                throw ValidationError(name + ": pattern label " + std::to_string(l) + " has no cluster");
            }
        }
        for (const auto& d : p.clusters) {
            if (d.kind == Distribution::Kind::uniform && !(d.a <= d.b)) {
                throw ValidationError(name + ": uniform bounds out of order");
            }
            if (d.kind == Distribution::Kind::normal && d.b < 0.0) {
                throw ValidationError(name + ": negative standard deviation");
            }
            if (d.a < 0.0) throw ValidationError(name + ": negative duration");
        }
    }
}

MarkerLog synth_marker_log(const SynthSpec& spec, std::uint64_t seed, RankIntervals* truth) {
    spec.validate();
    MarkerLog log;
    log.reserve(static_cast<std::size_t>(spec.ranks) *
                (2 + 2 * spec.phases.size() * static_cast<std::size_t>(spec.occurrences)));
    if (truth) truth->clear();
    for (int rank = 0; rank < spec.ranks; ++rank) {
        Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(rank));
        std::int64_t t = 0;
        log.push_back({rank, spec.init_marker, Side::pre, t});
        t += spec.comm_ns;
        log.push_back({rank, spec.init_marker, Side::post, t});
        for (std::int64_t occ = 0; occ < spec.occurrences; ++occ) {
            for (const auto& phase : spec.phases) {
                const int label = phase.pattern[static_cast<std::size_t>(occ) % phase.pattern.size()];
                const auto d = std::max<std::int64_t>(0, std::llround(phase.clusters[label].draw(rng)));
                t += d;
                log.push_back({rank, phase.marker, Side::pre, t});
                t += spec.comm_ns;
                log.push_back({rank, phase.marker, Side::post, t});
                if (truth) {
                    auto& series = (*truth)[rank][phase.marker];
                    series.phase_id = phase.marker;
                    series.durations.push_back(d);
                }
            }
        }
    }
    return log;
}

}  // namespace manynode::timing
