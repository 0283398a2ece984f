#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace manynode::rankprofile {

constexpr std::size_t kFeatureCount = 4;
using FeatureVector = std::array<double, kFeatureCount>;

/// Hardware-counter profile of one application rank.
struct RankCounterVector {
    int rank_id = 0;
    int node_id = 0;
    std::int64_t instructions = 0;
    double ipc = 1.0;
    std::int64_t branches = 0;
    std::int64_t loads = 0;

    FeatureVector features() const {
        return {static_cast<double>(instructions), ipc, static_cast<double>(branches), static_cast<double>(loads)};
    }
};

struct CounterTable {
    std::vector<RankCounterVector> rows;
    std::vector<std::string> warnings;
};

/// Reads `rank,node,instructions,ipc,branches,loads` CSV. Columns are located
/// by header name; unknown columns are ignored and reported in `warnings`.
CounterTable load_counters(const std::filesystem::path& path);
CounterTable parse_counters(std::istream& in, const std::string& origin = "<counters>");

struct RankClustering {
    int k = 1;
    std::map<int, int> assignment;       ///< rank_id -> label in [0, k)
    std::vector<FeatureVector> centroids;  ///< in normalized feature space
    double silhouette = 0.0;              ///< mean silhouette of the chosen k (0 for k = 1)

    int label_of(int rank_id) const { return assignment.at(rank_id); }
};

/// Clusters ranks by z-scored counters with k-means++ / Lloyd. k is picked by
/// maximum mean silhouette over [2, k_max]; degenerate input yields k = 1.
/// Labels are numbered by first appearance in rank order.
RankClustering cluster_ranks(std::span<const RankCounterVector> table, int k_max, std::uint64_t seed = 0x5eedULL);

/// Per-dimension zero-mean / unit-variance scaling. Constant dimensions map to 0.
std::vector<FeatureVector> normalize(std::span<const RankCounterVector> table);

/// Mean silhouette of a labelling (singleton clusters contribute 0).
double silhouette_score(std::span<const FeatureVector> points, std::span<const int> labels, int k);

struct NodeSelection {
    std::vector<int> nodes;   ///< ascending node ids
    std::set<int> covered;    ///< cluster labels covered by `nodes`
};

/// Greedy set cover of cluster labels by nodes (ties to the lowest node id),
/// followed by removal of nodes made redundant by later picks.
NodeSelection select_representatives(const RankClustering& clustering, const std::map<int, int>& rank_to_node);

/// Block placement: rank r lives on node r / ranks_per_node.
NodeSelection select_representatives(const RankClustering& clustering, int ranks_per_node);

std::map<int, int> block_placement(const RankClustering& clustering, int ranks_per_node);

/// Explicit `rank,node` placement file.
std::map<int, int> load_node_map(const std::filesystem::path& path);

void write_clustering_report(std::ostream& out, const RankClustering& clustering,
                             const std::map<int, int>& rank_to_node);
void write_selection(std::ostream& out, const NodeSelection& selection);

}  // namespace manynode::rankprofile
