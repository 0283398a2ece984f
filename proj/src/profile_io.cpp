#include "manynode/profile_io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "manynode/config.hpp"
#include "manynode/errors.hpp"

namespace manynode::timing {

std::string format_double(double value) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), ptr);
}

namespace {

class LineReader {
public:
    LineReader(std::istream& in, std::string origin) : in_(in), origin_(std::move(origin)) {}

    /// Next non-empty line split on spaces; empty vector at end of input.
    std::vector<std::string> next() {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (trim(line).empty()) continue;
            std::vector<std::string> out;
            std::istringstream ss(line);
            std::string tok;
            while (ss >> tok) out.push_back(tok);
            return out;
        }
        return {};
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(origin_ + ":" + std::to_string(line_no_) + ": " + msg);
    }

    void expect(const std::vector<std::string>& toks, const std::string& keyword, std::size_t min_size) const {
        if (toks.empty() || toks[0] != keyword || toks.size() < min_size) fail("expected '" + keyword + "' record");
    }

    double number(const std::string& tok) const {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || ptr != tok.data() + tok.size()) fail("bad number '" + tok + "'");
        return v;
    }

    std::int64_t integer(const std::string& tok) const {
        std::int64_t v = 0;
        auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (ec != std::errc() || ptr != tok.data() + tok.size()) fail("bad integer '" + tok + "'");
        return v;
    }

private:
    std::istream& in_;
    std::string origin_;
    int line_no_ = 0;
};

}  // namespace

void write_profile(std::ostream& out, const ProfileSet& profile) {
    out << kProfileHeader << '\n';
    for (const auto& [rank, prof] : profile.ranks) {
        out << "rank " << rank << '\n';
        for (const auto& [phase_id, phase] : prof.phases) {
            out << "phase " << phase_id << '\n';
            for (const auto& c : phase.clusters) {
                out << "cluster " << c.label << " count " << c.count << " mean " << format_double(c.mean)
                    << " discrete " << (c.cdf.discrete ? 1 : 0) << '\n';
                out << "edges " << c.cdf.edges.size();
                for (double e : c.cdf.edges) out << ' ' << format_double(e);
                out << "\ncum " << c.cdf.cum_prob.size();
                for (double p : c.cdf.cum_prob) out << ' ' << format_double(p);
                out << '\n';
            }
            out << "pattern " << phase.pattern.unit.size();
            for (int l : phase.pattern.unit) out << ' ' << l;
            out << " reps " << phase.pattern.repetitions << " tail " << phase.pattern.tail.size();
            for (int l : phase.pattern.tail) out << ' ' << l;
            out << '\n';
        }
    }
    out << "end\n";
}

ProfileSet read_profile(std::istream& in, const std::string& origin) {
    LineReader reader(in, origin);
    const auto header = reader.next();
    if (header.size() != 2 || header[0] + " " + header[1] != kProfileHeader) {
        throw ParseError(origin + ": missing '" + std::string(kProfileHeader) + "' header");
    }

    ProfileSet set;
    TimingProfile* rank_profile = nullptr;
    PhaseProfile* phase = nullptr;
    bool ended = false;
    for (auto toks = reader.next(); !toks.empty(); toks = reader.next()) {
        const auto& kind = toks[0];
        if (kind == "end") {
            ended = true;
            break;
        }
        if (kind == "rank") {
            reader.expect(toks, "rank", 2);
            rank_profile = &set.ranks[static_cast<int>(reader.integer(toks[1]))];
            phase = nullptr;
        } else if (kind == "phase") {
            reader.expect(toks, "phase", 2);
            if (!rank_profile) reader.fail("phase outside of a rank block");
            phase = &rank_profile->phases[static_cast<int>(reader.integer(toks[1]))];
        } else if (kind == "cluster") {
            if (!phase || toks.size() != 8 || toks[2] != "count" || toks[4] != "mean" || toks[6] != "discrete") {
                reader.fail("malformed cluster record");
            }
            TimingCluster c;
            c.label = static_cast<int>(reader.integer(toks[1]));
            c.count = reader.integer(toks[3]);
            c.mean = reader.number(toks[5]);
            c.cdf.discrete = reader.integer(toks[7]) != 0;

            auto edges = reader.next();
            reader.expect(edges, "edges", 2);
            const auto ne = static_cast<std::size_t>(reader.integer(edges[1]));
            if (edges.size() != ne + 2) reader.fail("edge count mismatch");
            for (std::size_t i = 0; i < ne; ++i) c.cdf.edges.push_back(reader.number(edges[i + 2]));

            auto cum = reader.next();
            reader.expect(cum, "cum", 2);
            const auto nc = static_cast<std::size_t>(reader.integer(cum[1]));
            if (cum.size() != nc + 2) reader.fail("cumulative probability count mismatch");
            for (std::size_t i = 0; i < nc; ++i) c.cdf.cum_prob.push_back(reader.number(cum[i + 2]));

            try {
                c.cdf.validate(std::max<std::size_t>(100, nc));
            } catch (const ValidationError& e) {
                reader.fail(e.what());
            }
            if (c.label != static_cast<int>(phase->clusters.size())) reader.fail("cluster labels must be dense");
            phase->clusters.push_back(std::move(c));
        } else if (kind == "pattern") {
            if (!phase || toks.size() < 2) reader.fail("malformed pattern record");
            const auto nu = static_cast<std::size_t>(reader.integer(toks[1]));
            if (toks.size() < nu + 6 || toks[nu + 2] != "reps" || toks[nu + 4] != "tail") {
                reader.fail("malformed pattern record");
            }
            PhasePattern p;
            for (std::size_t i = 0; i < nu; ++i) p.unit.push_back(static_cast<int>(reader.integer(toks[i + 2])));
            p.repetitions = reader.integer(toks[nu + 3]);
            const auto nt = static_cast<std::size_t>(reader.integer(toks[nu + 5]));
            if (toks.size() != nu + 6 + nt) reader.fail("pattern tail length mismatch");
            for (std::size_t i = 0; i < nt; ++i) p.tail.push_back(static_cast<int>(reader.integer(toks[nu + 6 + i])));
            if (p.unit.empty() || p.repetitions < 1) reader.fail("pattern unit must be nonempty");
            for (int l : p.expand()) {
                if (l < 0 || l >= static_cast<int>(phase->clusters.size())) {
                    reader.fail("pattern references unknown cluster " + std::to_string(l));
                }
            }
            phase->pattern = std::move(p);
        } else {
            reader.fail("unknown record '" + kind + "'");
        }
    }
    if (!ended) throw ParseError(origin + ": missing 'end' record");
    return set;
}

void save_profile(const std::filesystem::path& path, const ProfileSet& profile) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write profile " + path.string());
    write_profile(out, profile);
    if (!out) throw IoError("failed writing profile " + path.string());
}

ProfileSet load_profile(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read profile " + path.string());
    return read_profile(in, path.string());
}

}  // namespace manynode::timing
