#include "pme/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <queue>
#include <sstream>

#include "pme/curvature.hpp"

namespace pme {

bool Graph::has_edge(int u, int v) const {
    auto nb = neighbors(u);
    return std::binary_search(nb.begin(), nb.end(), v);
}

int Graph::max_degree() const {
    int m = 0;
    for (int u = 0; u < n; ++u) m = std::max(m, degree(u));
    return m;
}

Graph graph_from_edges(int n, const std::vector<std::pair<int, int>>& edges, std::string name) {
    if (n < 1) throw usage_error("graph needs at least one node");
    Graph g;
    g.n = n;
    g.name = std::move(name);
    std::vector<std::vector<int>> nbrs(n);
    int self_loops = 0;
    for (auto [u, v] : edges) {
        if (u < 0 || u >= n || v < 0 || v >= n) throw usage_error("edge endpoint out of range");
        if (u == v) {
            ++self_loops;
            continue;
        }
        nbrs[u].push_back(v);
        nbrs[v].push_back(u);
    }
    g.dropped_self_loops = self_loops;
    g.offsets.assign(n + 1, 0);
    for (int u = 0; u < n; ++u) {
        auto& list = nbrs[u];
        std::sort(list.begin(), list.end());
        const auto last = std::unique(list.begin(), list.end());
        g.dropped_duplicates += static_cast<int>(list.end() - last);
        list.erase(last, list.end());
        g.offsets[u + 1] = g.offsets[u] + static_cast<int>(list.size());
    }
    g.dropped_duplicates /= 2;  // counted once per endpoint
    g.adj.reserve(g.offsets[n]);
    for (auto& list : nbrs) g.adj.insert(g.adj.end(), list.begin(), list.end());
    return g;
}

Graph load_edge_list(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open edge list: " + path);
    std::vector<std::pair<long long, long long>> raw;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::istringstream ls(line);
        long long u, v;
        if (!(ls >> u >> v))
            throw io_error(path + ":" + std::to_string(lineno) + ": expected two integer ids");
        std::string rest;
        if (ls >> rest) throw io_error(path + ":" + std::to_string(lineno) + ": trailing token '" + rest + "'");
        raw.emplace_back(u, v);
    }
    if (raw.empty()) throw io_error(path + ": no edges found");
    std::vector<long long> ids;
    ids.reserve(raw.size() * 2);
    for (auto [u, v] : raw) {
        ids.push_back(u);
        ids.push_back(v);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    auto compact = [&](long long id) {
        return static_cast<int>(std::lower_bound(ids.begin(), ids.end(), id) - ids.begin());
    };
    std::vector<std::pair<int, int>> edges;
    edges.reserve(raw.size());
    for (auto [u, v] : raw) edges.emplace_back(compact(u), compact(v));
    return graph_from_edges(static_cast<int>(ids.size()), edges, path);
}

void save_edge_list(const Graph& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write edge list: " + path);
    for (int u = 0; u < g.n; ++u)
        for (int v : g.neighbors(u))
            if (u < v) out << u << '\t' << v << '\n';
    if (!out) throw io_error("write failed: " + path);
}

Graph generate_cycle(int n) {
    if (n < 4) throw usage_error("cycle needs n >= 4");
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
    return graph_from_edges(n, edges, "cycle" + std::to_string(n));
}

Graph generate_tree(int branching, int n) {
    if (branching < 2) throw usage_error("tree needs branching factor >= 2");
    if (n < 2) throw usage_error("tree needs n >= 2");
    std::vector<std::pair<int, int>> edges;
    for (int child = 1; child < n; ++child) edges.emplace_back((child - 1) / branching, child);
    return graph_from_edges(n, edges, "tree" + std::to_string(branching) + "_" + std::to_string(n));
}

Graph generate_ring_of_trees(int ring, int branching, int depth, int truncate_n) {
    if (ring < 3) throw usage_error("ring_of_trees needs ring >= 3");
    if (branching < 2) throw usage_error("ring_of_trees needs branching >= 2");
    if (depth < 0) throw usage_error("ring_of_trees needs depth >= 0");
    // Nodes are laid out cycle-first, then tree level by level across all
    // roots, so a prefix truncation keeps every parent of a kept node.
    std::vector<std::pair<int, int>> edges;
    long long total = ring;
    std::vector<int> level(ring);
    for (int i = 0; i < ring; ++i) {
        edges.emplace_back(i, (i + 1) % ring);
        level[i] = i;
    }
    for (int d = 1; d <= depth; ++d) {
        std::vector<int> next;
        for (int parent : level)
            for (int b = 0; b < branching; ++b) {
                next.push_back(static_cast<int>(total));
                edges.emplace_back(parent, static_cast<int>(total));
                ++total;
            }
        level = std::move(next);
    }
    int n = static_cast<int>(total);
    if (truncate_n > 0) {
        if (truncate_n < ring) throw usage_error("ring_of_trees: truncation below the ring size");
        n = std::min(n, truncate_n);
        std::erase_if(edges, [n](const std::pair<int, int>& e) { return e.first >= n || e.second >= n; });
    }
    return graph_from_edges(n, edges, "ring_of_trees");
}

namespace {

// BFS hop counts from src into row (length n).
void bfs_row(const Graph& g, int src, std::int32_t* row) {
    std::fill(row, row + g.n, -1);
    std::vector<int> queue;
    queue.reserve(g.n);
    queue.push_back(src);
    row[src] = 0;
    std::size_t head = 0;
    while (head < queue.size()) {
        const int u = queue[head++];
        const std::int32_t du = row[u];
        for (int v : g.neighbors(u))
            if (row[v] < 0) {
                row[v] = du + 1;
                queue.push_back(v);
            }
    }
}

void check_connected(const Graph& g, const DistanceMatrix& d) {
    for (int j = 0; j < g.n; ++j)
        if (d.hops[j] < 0)
            throw usage_error("graph is disconnected: nodes 0 and " + std::to_string(j) + " are unreachable");
}

}  // namespace

DistanceMatrix apsp(const Graph& g) {
    DistanceMatrix d;
    d.n = g.n;
    d.hops.resize(static_cast<std::size_t>(g.n) * g.n);
#pragma omp parallel for schedule(dynamic, 16)
    for (int src = 0; src < g.n; ++src) bfs_row(g, src, d.hops.data() + static_cast<std::size_t>(src) * g.n);
    check_connected(g, d);
    return d;
}

DistanceMatrix apsp_serial(const Graph& g) {
    DistanceMatrix d;
    d.n = g.n;
    d.hops.resize(static_cast<std::size_t>(g.n) * g.n);
    for (int src = 0; src < g.n; ++src) bfs_row(g, src, d.hops.data() + static_cast<std::size_t>(src) * g.n);
    check_connected(g, d);
    return d;
}

std::uint64_t graph_content_hash(const Graph& g) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xff;
            h *= 1099511628211ull;
        }
    };
    mix(static_cast<std::uint64_t>(g.n));
    for (int u = 0; u < g.n; ++u)
        for (int v : g.neighbors(u))
            if (u < v) mix((static_cast<std::uint64_t>(u) << 32) | static_cast<std::uint32_t>(v));
    return h;
}

void save_distance_cache(const std::string& path, const DistanceMatrix& d) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write distance cache: " + path);
    const std::uint64_t n = static_cast<std::uint64_t>(d.n);
    out.write(reinterpret_cast<const char*>(&n), sizeof n);
    out.write(reinterpret_cast<const char*>(d.hops.data()),
              static_cast<std::streamsize>(d.hops.size() * sizeof(std::int32_t)));
    if (!out) throw io_error("write failed: " + path);
}

DistanceMatrix load_distance_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open distance cache: " + path);
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof n);
    if (!in || n == 0 || n > (1u << 20)) throw io_error("corrupt distance cache: " + path);
    DistanceMatrix d;
    d.n = static_cast<int>(n);
    d.hops.resize(n * n);
    in.read(reinterpret_cast<char*>(d.hops.data()), static_cast<std::streamsize>(d.hops.size() * sizeof(std::int32_t)));
    if (!in) throw io_error("short read in distance cache: " + path);
    return d;
}

std::string distance_cache_path(const std::string& graph_path, const Graph& g) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(graph_content_hash(g)));
    return graph_path + "." + buf + ".apsp";
}

std::vector<double> normalized_adjacency(const Graph& g) {
    const int n = g.n;
    std::vector<double> a(static_cast<std::size_t>(n) * n, 0.0);
    std::vector<double> dinv(n);
    for (int u = 0; u < n; ++u) dinv[u] = 1.0 / std::sqrt(static_cast<double>(g.degree(u) + 1));
    for (int u = 0; u < n; ++u) {
        a[static_cast<std::size_t>(u) * n + u] = dinv[u] * dinv[u];
        for (int v : g.neighbors(u)) a[static_cast<std::size_t>(u) * n + v] = dinv[u] * dinv[v];
    }
    return a;
}

NodeFeatures node_features(const Graph& g, const DistanceMatrix& dist, int curvature_budget, std::mt19937_64& rng) {
    if (curvature_budget < 0) throw usage_error("node_features: budget must be >= 0");
    NodeFeatures f;
    f.n = g.n;
    f.data.assign(static_cast<std::size_t>(g.n) * NodeFeatures::kDim, 0.0);
    const double max_deg = std::max(1, g.max_degree());
    for (int u = 0; u < g.n; ++u) {
        double* row = f.data.data() + static_cast<std::size_t>(u) * NodeFeatures::kDim;
        const int deg = g.degree(u);
        row[0] = deg / max_deg;
        // clustering coefficient: closed wedges / all wedges
        if (deg >= 2) {
            long long tri = 0;
            auto nb = g.neighbors(u);
            for (std::size_t i = 0; i < nb.size(); ++i)
                for (std::size_t j = i + 1; j < nb.size(); ++j)
                    if (g.has_edge(nb[i], nb[j])) ++tri;
            row[1] = 2.0 * static_cast<double>(tri) / (static_cast<double>(deg) * (deg - 1));
        }
        if (curvature_budget > 0 && deg >= 2 && g.n >= 4) {
            const double xi = node_curvature(g, dist, u, curvature_budget, rng);
            if (std::isfinite(xi)) row[2] = xi;
        }
    }
    return f;
}

NodeFeatures node_features(const Graph& g, int curvature_budget, std::mt19937_64& rng) {
    DistanceMatrix dist;
    if (curvature_budget > 0) dist = apsp(g);
    return node_features(g, dist, curvature_budget, rng);
}

}  // namespace pme
