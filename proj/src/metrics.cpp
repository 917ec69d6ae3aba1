#include "pme/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

namespace pme {

namespace {

constexpr long long kAllPairsLimit = 2000;       // node count above which pairs are sampled
constexpr long long kSampledPairs = 2'000'000;   // fixed-size evaluation sample
constexpr std::uint64_t kEvalSeed = 0xD1570A7ull;  // evaluation sampling is run-independent

double pair_term(const DistanceMatrix& dist, const Signature& sig, const PointTable& pts, int i, int j) {
    const double dg = static_cast<double>(dist.at(i, j));
    const double ratio_sq = weighted_sq_distance(sig, pts.row(i), pts.row(j)) / (dg * dg);
    return std::abs(ratio_sq - 1.0);
}

}  // namespace

double tree_sum(std::span<const double> vals) {
    if (vals.empty()) return 0.0;
    std::vector<double> cur(vals.begin(), vals.end());
    while (cur.size() > 1) {
        const std::size_t half = (cur.size() + 1) / 2;
        for (std::size_t i = 0; i < half; ++i) {
            const std::size_t a = 2 * i, b = 2 * i + 1;
            cur[i] = b < cur.size() ? cur[a] + cur[b] : cur[a];
        }
        cur.resize(half);
    }
    return cur[0];
}

double avg_distortion(const DistanceMatrix& dist, const Signature& sig, const PointTable& points) {
    return avg_distortion(dist, sig, points, nullptr, nullptr);
}

double avg_distortion(const DistanceMatrix& dist, const Signature& sig, const PointTable& points,
                      long long* pairs_used, bool* sampled) {
    const int n = points.n;
    if (n < 2) throw usage_error("avg_distortion needs at least two points");
    if (dist.n != n) throw usage_error("avg_distortion: distance matrix size mismatch");

    if (n <= kAllPairsLimit) {
        std::vector<double> per_source(n, 0.0);
#pragma omp parallel for schedule(dynamic, 8)
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int j = i + 1; j < n; ++j) acc += pair_term(dist, sig, points, i, j);
            per_source[i] = acc;
        }
        const long long pairs = static_cast<long long>(n) * (n - 1) / 2;
        if (pairs_used) *pairs_used = pairs;
        if (sampled) *sampled = false;
        return tree_sum(per_source) / static_cast<double>(pairs);
    }

    // Fixed-seed pair sample, chunked so the reduction order is fixed.
    std::mt19937_64 rng(kEvalSeed);
    std::uniform_int_distribution<int> pick(0, n - 1);
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(kSampledPairs);
    while (static_cast<long long>(pairs.size()) < kSampledPairs) {
        const int i = pick(rng), j = pick(rng);
        if (i != j) pairs.emplace_back(i, j);
    }
    constexpr std::size_t kChunk = 65536;
    const std::size_t nchunks = (pairs.size() + kChunk - 1) / kChunk;
    std::vector<double> partial(nchunks, 0.0);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t c = 0; c < nchunks; ++c) {
        double acc = 0.0;
        const std::size_t end = std::min(pairs.size(), (c + 1) * kChunk);
        for (std::size_t p = c * kChunk; p < end; ++p) acc += pair_term(dist, sig, points, pairs[p].first, pairs[p].second);
        partial[c] = acc;
    }
    if (pairs_used) *pairs_used = kSampledPairs;
    if (sampled) *sampled = true;
    return tree_sum(partial) / static_cast<double>(kSampledPairs);
}

double avg_distortion_serial(const DistanceMatrix& dist, const Signature& sig, const PointTable& points) {
    const int n = points.n;
    if (n < 2) throw usage_error("avg_distortion needs at least two points");
    double acc = 0.0;
    long long pairs = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            acc += pair_term(dist, sig, points, i, j);
            ++pairs;
        }
    return acc / static_cast<double>(pairs);
}

namespace {

double map_node(const Graph& g, const Signature& sig, const PointTable& pts, int a) {
    const int n = g.n;
    const int deg = g.degree(a);
    struct Entry {
        double d;
        int id;
    };
    std::vector<Entry> order;
    order.reserve(n - 1);
    for (int j = 0; j < n; ++j) {
        if (j == a) continue;
        order.push_back({std::sqrt(weighted_sq_distance(sig, pts.row(a), pts.row(j))), j});
    }
    std::sort(order.begin(), order.end(), [](const Entry& x, const Entry& y) {
        if (x.d != y.d) return x.d < y.d;
        return x.id < y.id;
    });
    // prefix counts of true neighbors in sorted order
    auto nbrs = g.neighbors(a);
    std::vector<int> neighbor_prefix(order.size() + 1, 0);
    for (std::size_t p = 0; p < order.size(); ++p) {
        const bool is_nb = std::binary_search(nbrs.begin(), nbrs.end(), order[p].id);
        neighbor_prefix[p + 1] = neighbor_prefix[p] + (is_nb ? 1 : 0);
    }
    double total = 0.0;
    for (std::size_t p = 0; p < order.size(); ++p) {
        if (neighbor_prefix[p + 1] == neighbor_prefix[p]) continue;  // not a neighbor
        // closed ball of radius d includes boundary ties
        std::size_t hi = p + 1;
        while (hi < order.size() && order[hi].d == order[p].d) ++hi;
        total += static_cast<double>(neighbor_prefix[hi]) / static_cast<double>(hi);
    }
    return total / deg;
}

}  // namespace

namespace {

void check_map_inputs(const Graph& g, const PointTable& points) {
    if (g.n != points.n) throw usage_error("map_score: point table does not match graph");
    for (int a = 0; a < g.n; ++a)
        if (g.degree(a) == 0) throw usage_error("map_score: node " + std::to_string(a) + " has no neighbors");
}

}  // namespace

double map_score(const Graph& g, const Signature& sig, const PointTable& points) {
    check_map_inputs(g, points);
    std::vector<double> per_node(g.n, 0.0);
#pragma omp parallel for schedule(dynamic, 8)
    for (int a = 0; a < g.n; ++a) per_node[a] = map_node(g, sig, points, a);
    return tree_sum(per_node) / g.n;
}

double map_score_serial(const Graph& g, const Signature& sig, const PointTable& points) {
    check_map_inputs(g, points);
    double acc = 0.0;
    for (int a = 0; a < g.n; ++a) acc += map_node(g, sig, points, a);
    return acc / g.n;
}

RankMetrics rank_metrics(std::span<const int> ranks, int k) {
    if (ranks.empty()) throw usage_error("rank_metrics: empty rank list");
    RankMetrics m;
    for (int r : ranks) {
        if (r < 1) throw usage_error("rank_metrics: ranks must be >= 1");
        m.mrr += 1.0 / r;
        if (r <= k) m.hit_rate += 1.0;
    }
    m.mrr /= static_cast<double>(ranks.size());
    m.hit_rate /= static_cast<double>(ranks.size());
    return m;
}

EvalReport evaluate_embedding(const Graph& g, const DistanceMatrix& dist, const Signature& sig,
                              const PointTable& points) {
    const auto t0 = std::chrono::steady_clock::now();
    EvalReport rep;
    rep.d_avg = avg_distortion(dist, sig, points, &rep.pairs_used, &rep.pairs_sampled);
    rep.map = map_score(g, sig, points);
    rep.weights = sig.weights;
    rep.scale = sig.scale;
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

}  // namespace pme
