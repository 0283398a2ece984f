#include "manynode/rankprofile.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <unordered_set>

#include "manynode/config.hpp"
#include "manynode/errors.hpp"
#include "manynode/rng.hpp"

namespace manynode::rankprofile {

namespace {

const std::array<std::string, 6> kColumns = {"rank", "node", "instructions", "ipc", "branches", "loads"};

double sq_dist(const FeatureVector& a, const FeatureVector& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < kFeatureCount; ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
    return d;
}

struct KMeansResult {
    std::vector<int> labels;
    std::vector<FeatureVector> centroids;
    double inertia = 0.0;
};

std::vector<FeatureVector> seed_plus_plus(std::span<const FeatureVector> pts, int k, Rng& rng) {
    std::vector<FeatureVector> centers;
    centers.push_back(pts[rng.below(pts.size())]);
    std::vector<double> best(pts.size(), std::numeric_limits<double>::infinity());
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            best[i] = std::min(best[i], sq_dist(pts[i], centers.back()));
            total += best[i];
        }
        if (total <= 0.0) {
            centers.push_back(pts[rng.below(pts.size())]);
            continue;
        }
        double target = rng.uniform() * total;
        std::size_t pick = pts.size() - 1;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            target -= best[i];
            if (target < 0.0) {
                pick = i;
                break;
            }
        }
        centers.push_back(pts[pick]);
    }
    return centers;
}

KMeansResult lloyd(std::span<const FeatureVector> pts, std::vector<FeatureVector> centers) {
    const int k = static_cast<int>(centers.size());
    KMeansResult r;
    r.labels.assign(pts.size(), -1);
    for (int iter = 0; iter < 200; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            int arg = 0;
            double dist = sq_dist(pts[i], centers[0]);
            for (int c = 1; c < k; ++c) {
                const double d = sq_dist(pts[i], centers[c]);
                if (d < dist) {
                    dist = d;
                    arg = c;
                }
            }
            if (arg != r.labels[i]) {
                r.labels[i] = arg;
                changed = true;
            }
        }
        std::vector<FeatureVector> sums(k, FeatureVector{});
        std::vector<int> counts(k, 0);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            for (std::size_t d = 0; d < kFeatureCount; ++d) sums[r.labels[i]][d] += pts[i][d];
            ++counts[r.labels[i]];
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // Empty cluster: steal the point farthest from its centroid.
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < pts.size(); ++i) {
                    const double d = sq_dist(pts[i], centers[r.labels[i]]);
                    if (d > far_d && counts[r.labels[i]] > 1) {
                        far_d = d;
                        far = i;
                    }
                }
                --counts[r.labels[far]];
                r.labels[far] = c;
                counts[c] = 1;
                centers[c] = pts[far];
                changed = true;
                continue;
            }
            for (std::size_t d = 0; d < kFeatureCount; ++d) centers[c][d] = sums[c][d] / counts[c];
        }
        if (!changed) break;
    }
    r.centroids = std::move(centers);
    r.inertia = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) r.inertia += sq_dist(pts[i], r.centroids[r.labels[i]]);
    return r;
}

KMeansResult best_kmeans(std::span<const FeatureVector> pts, int k, Rng& rng) {
    constexpr int kRestarts = 10;
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int attempt = 0; attempt < kRestarts; ++attempt) {
        auto r = lloyd(pts, seed_plus_plus(pts, k, rng));
        if (r.inertia < best.inertia) best = std::move(r);
    }
    return best;
}

/// Renumbers labels by first appearance so that output is independent of
/// the order in which centroids were seeded.
void canonicalize(KMeansResult& r) {
    std::vector<int> remap(r.centroids.size(), -1);
    int next = 0;
    for (int& l : r.labels) {
        if (remap[l] < 0) remap[l] = next++;
        l = remap[l];
    }
    std::vector<FeatureVector> centroids(r.centroids.size());
    for (std::size_t c = 0; c < remap.size(); ++c) centroids[remap[c]] = r.centroids[c];
    r.centroids = std::move(centroids);
}

}  // namespace

CounterTable parse_counters(std::istream& in, const std::string& origin) {
    CounterTable table;
    std::string line;
    if (!std::getline(in, line)) return table;
    const auto header = split(trim(line), ',');
    std::array<int, 6> col{};
    col.fill(-1);
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto it = std::find(kColumns.begin(), kColumns.end(), header[i]);
        if (it == kColumns.end()) {
            table.warnings.push_back(origin + ": ignoring extra column '" + header[i] + "'");
            continue;
        }
        col[it - kColumns.begin()] = static_cast<int>(i);
    }
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
        if (col[c] < 0) throw ParseError(origin + ":1: missing column '" + kColumns[c] + "'");
    }

    std::unordered_set<int> seen;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto fields = split(trim(line), ',');
        const std::string where = origin + ":" + std::to_string(line_no);
        if (fields.size() != header.size()) {
            throw ParseError(where + ": expected " + std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        }
        RankCounterVector v;
        try {
            v.rank_id = static_cast<int>(parse_int(fields[col[0]], "rank"));
            v.node_id = static_cast<int>(parse_int(fields[col[1]], "node"));
            v.instructions = parse_int(fields[col[2]], "instructions");
            v.ipc = parse_double(fields[col[3]], "ipc");
            v.branches = parse_int(fields[col[4]], "branches");
            v.loads = parse_int(fields[col[5]], "loads");
        } catch (const ParseError& e) {
            throw ParseError(where + ": " + e.what());
        }
        if (v.rank_id < 0 || v.node_id < 0 || v.instructions < 0 || v.branches < 0 || v.loads < 0) {
            throw ValidationError(where + ": negative id or counter");
        }
        if (!(v.ipc > 0.0)) throw ValidationError(where + ": ipc must be positive");
        if (!seen.insert(v.rank_id).second) {
            throw ValidationError(where + ": duplicate rank " + std::to_string(v.rank_id));
        }
        table.rows.push_back(v);
    }
    return table;
}

CounterTable load_counters(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read counter file " + path.string());
    return parse_counters(in, path.string());
}

std::vector<FeatureVector> normalize(std::span<const RankCounterVector> table) {
    std::vector<FeatureVector> pts;
    pts.reserve(table.size());
    for (const auto& r : table) pts.push_back(r.features());
    const double n = static_cast<double>(pts.size());
    for (std::size_t d = 0; d < kFeatureCount; ++d) {
        double mean = 0.0;
        for (const auto& p : pts) mean += p[d];
        mean /= n;
        double var = 0.0;
        for (const auto& p : pts) var += (p[d] - mean) * (p[d] - mean);
        const double sd = std::sqrt(var / n);
        for (auto& p : pts) p[d] = sd > 0.0 ? (p[d] - mean) / sd : 0.0;
    }
    return pts;
}

double silhouette_score(std::span<const FeatureVector> points, std::span<const int> labels, int k) {
    const std::size_t n = points.size();
    if (k < 2 || n < 2) return 0.0;
    std::vector<int> sizes(k, 0);
    for (int l : labels) ++sizes[l];
    double total = 0.0;
    std::vector<double> sums(k);
    for (std::size_t i = 0; i < n; ++i) {
        if (sizes[labels[i]] <= 1) continue;
        std::fill(sums.begin(), sums.end(), 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) sums[labels[j]] += std::sqrt(sq_dist(points[i], points[j]));
        }
        const double a = sums[labels[i]] / (sizes[labels[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            if (c != labels[i] && sizes[c] > 0) b = std::min(b, sums[c] / sizes[c]);
        }
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

RankClustering cluster_ranks(std::span<const RankCounterVector> table, int k_max, std::uint64_t seed) {
    if (table.empty()) throw UsageError("cluster_ranks: empty counter table");
    if (k_max < 1) throw UsageError("cluster_ranks: k_max must be >= 1");

    const auto pts = normalize(table);
    RankClustering out;

    double spread = 0.0;
    for (std::size_t d = 0; d < kFeatureCount; ++d) {
        double lo = pts[0][d], hi = pts[0][d];
        for (const auto& p : pts) {
            lo = std::min(lo, p[d]);
            hi = std::max(hi, p[d]);
        }
        spread += (hi - lo) * (hi - lo);
    }
    const int n = static_cast<int>(pts.size());
    const bool degenerate = std::sqrt(spread) <= 1e-9;

    auto single = [&] {
        out.k = 1;
        FeatureVector c{};
        for (const auto& p : pts)
            for (std::size_t d = 0; d < kFeatureCount; ++d) c[d] += p[d] / n;
        out.centroids = {c};
        for (const auto& r : table) out.assignment[r.rank_id] = 0;
        out.silhouette = 0.0;
        return out;
    };
    if (degenerate || k_max == 1 || n == 1) return single();

    Rng rng(seed);
    const int hi = std::min(k_max, n - 1);
    KMeansResult chosen;
    double chosen_score = -std::numeric_limits<double>::infinity();
    if (hi < 2) {
        // Two distinct ranks: each is its own cluster.
        chosen = best_kmeans(pts, 2, rng);
        chosen_score = 0.0;
    }
    for (int k = 2; k <= hi; ++k) {
        auto r = best_kmeans(pts, k, rng);
        const double s = silhouette_score(pts, r.labels, k);
        if (s > chosen_score + 1e-12) {
            chosen_score = s;
            chosen = std::move(r);
        }
    }
    canonicalize(chosen);
    out.k = static_cast<int>(chosen.centroids.size());
    out.centroids = chosen.centroids;
    out.silhouette = chosen_score;
    for (int i = 0; i < n; ++i) out.assignment[table[i].rank_id] = chosen.labels[i];
    return out;
}

std::map<int, int> block_placement(const RankClustering& clustering, int ranks_per_node) {
    if (ranks_per_node < 1) throw UsageError("ranks_per_node must be >= 1");
    std::map<int, int> placement;
    for (const auto& [rank, label] : clustering.assignment) placement[rank] = rank / ranks_per_node;
    return placement;
}

NodeSelection select_representatives(const RankClustering& clustering, const std::map<int, int>& rank_to_node) {
    std::map<int, std::set<int>> labels_on_node;
    std::set<int> all_labels;
    for (const auto& [rank, label] : clustering.assignment) {
        const auto it = rank_to_node.find(rank);
        if (it == rank_to_node.end()) throw LookupError("rank " + std::to_string(rank) + " has no node placement");
        labels_on_node[it->second].insert(label);
        all_labels.insert(label);
    }

    std::vector<int> picked;
    std::set<int> covered;
    while (covered.size() < all_labels.size()) {
        int best_node = -1;
        std::size_t best_gain = 0;
        for (const auto& [node, labels] : labels_on_node) {
            std::size_t gain = 0;
            for (int l : labels) gain += covered.count(l) == 0;
            if (gain > best_gain) {
                best_gain = gain;
                best_node = node;
            }
        }
        if (best_node < 0) break;
        picked.push_back(best_node);
        covered.insert(labels_on_node[best_node].begin(), labels_on_node[best_node].end());
    }

    // Drop nodes whose labels are all covered by the other picks, newest first.
    for (std::size_t i = picked.size(); i-- > 0;) {
        std::map<int, int> multiplicity;
        for (std::size_t j = 0; j < picked.size(); ++j)
            for (int l : labels_on_node[picked[j]]) ++multiplicity[l];
        bool redundant = true;
        for (int l : labels_on_node[picked[i]]) redundant = redundant && multiplicity[l] > 1;
        if (redundant) picked.erase(picked.begin() + static_cast<std::ptrdiff_t>(i));
    }

    NodeSelection sel;
    sel.nodes = picked;
    std::sort(sel.nodes.begin(), sel.nodes.end());
    sel.covered = covered;
    return sel;
}

NodeSelection select_representatives(const RankClustering& clustering, int ranks_per_node) {
    return select_representatives(clustering, block_placement(clustering, ranks_per_node));
}

std::map<int, int> load_node_map(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read node map " + path.string());
    std::map<int, int> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty() || (line_no == 1 && t.rfind("rank", 0) == 0)) continue;
        const auto f = split(t, ',');
        if (f.size() != 2) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected rank,node");
        out[static_cast<int>(parse_int(f[0], "rank"))] = static_cast<int>(parse_int(f[1], "node"));
    }
    return out;
}

void write_clustering_report(std::ostream& out, const RankClustering& clustering,
                             const std::map<int, int>& rank_to_node) {
    out << "rank,node,cluster\n";
    for (const auto& [rank, label] : clustering.assignment) {
        out << rank << ',' << rank_to_node.at(rank) << ',' << label << '\n';
    }
}

void write_selection(std::ostream& out, const NodeSelection& selection) {
    for (int node : selection.nodes) out << node << '\n';
}

}  // namespace manynode::rankprofile
