#pragma once
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pme/error.hpp"

namespace pme {

/// Undirected simple graph in CSR form with sorted neighbor lists.
struct Graph {
    int n = 0;
    std::vector<int> offsets;  // size n+1
    std::vector<int> adj;      // concatenated sorted neighbor lists
    std::string name;
    int dropped_self_loops = 0;
    int dropped_duplicates = 0;

    int degree(int u) const { return offsets[u + 1] - offsets[u]; }
    std::span<const int> neighbors(int u) const {
        return {adj.data() + offsets[u], static_cast<std::size_t>(degree(u))};
    }
    long long edge_count() const { return static_cast<long long>(adj.size()) / 2; }
    bool has_edge(int u, int v) const;
    int max_degree() const;
};

/// Symmetrizes, drops self-loops and duplicates (counted on the result).
Graph graph_from_edges(int n, const std::vector<std::pair<int, int>>& edges, std::string name = "");

/// Lines "u v" or "u<TAB>v"; '#' starts a comment. Node ids are compacted to
/// [0, n) by sorted order of the original ids.
Graph load_edge_list(const std::string& path);
void save_edge_list(const Graph& g, const std::string& path);

Graph generate_cycle(int n);
Graph generate_tree(int branching, int n);
/// r-cycle whose nodes root depth-deep b-ary trees; truncate_n > 0 keeps the
/// first truncate_n nodes in cycle-then-level order (stays connected).
Graph generate_ring_of_trees(int ring, int branching, int depth, int truncate_n = 0);

/// Hop-count matrix (int32, row-major).
struct DistanceMatrix {
    int n = 0;
    std::vector<std::int32_t> hops;

    std::int32_t at(int i, int j) const { return hops[static_cast<std::size_t>(i) * n + j]; }
    std::span<const std::int32_t> row(int i) const {
        return {hops.data() + static_cast<std::size_t>(i) * n, static_cast<std::size_t>(n)};
    }
};

/// BFS from every source, rows computed in parallel. Throws on disconnected
/// input, naming two unreachable ids.
DistanceMatrix apsp(const Graph& g);
/// Serial reference implementation (identical output, kept for testing).
DistanceMatrix apsp_serial(const Graph& g);

/// FNV-1a over the canonical edge list; keys the APSP sidecar cache.
std::uint64_t graph_content_hash(const Graph& g);

/// Sidecar format: u64 n (little endian) followed by n*n int32 hop counts,
/// row-major.
void save_distance_cache(const std::string& path, const DistanceMatrix& d);
DistanceMatrix load_distance_cache(const std::string& path);
/// Cache path for a graph file: <path>.<hash16>.apsp
std::string distance_cache_path(const std::string& graph_path, const Graph& g);

/// Dense GCN propagation matrix D^{-1/2} (A+I) D^{-1/2}, row-major n*n.
std::vector<double> normalized_adjacency(const Graph& g);

/// n x 3 features: normalized degree, clustering coefficient, mean sampled
/// sectional curvature (zeros when budget == 0 or deg < 2).
struct NodeFeatures {
    int n = 0;
    std::vector<double> data;  // n x 3 row-major
    static constexpr int kDim = 3;
};

NodeFeatures node_features(const Graph& g, const DistanceMatrix& dist, int curvature_budget, std::mt19937_64& rng);
NodeFeatures node_features(const Graph& g, int curvature_budget, std::mt19937_64& rng);

}  // namespace pme
