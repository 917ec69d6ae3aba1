#include "pme/curvature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pme {

double xi_quadruple(const Graph& g, const DistanceMatrix& dist, int v, int b, int c, int a) {
    if (v < 0 || v >= g.n || b < 0 || b >= g.n || c < 0 || c >= g.n || a < 0 || a >= g.n)
        throw usage_error("xi_quadruple: node id out of range");
    if (a == v || a == b || a == c) throw usage_error("xi_quadruple: a must differ from v, b, c");
    if (!g.has_edge(v, b) || !g.has_edge(v, c)) throw usage_error("xi_quadruple: b and c must be neighbors of v");
    const double dav = dist.at(a, v);
    const double dbc = dist.at(b, c);
    const double dab = dist.at(a, b);
    const double dac = dist.at(a, c);
    return (dav * dav + dbc * dbc / 4.0 - (dab * dab + dac * dac) / 2.0) / (2.0 * dav);
}

namespace {

constexpr int kMaxNeighborPairs = 50;

// Mean xi over reference nodes for one (v, b, c): exact when the budget
// covers all n-3 candidates, uniform with-replacement sampling otherwise.
double pair_mean(const Graph& g, const DistanceMatrix& dist, int v, int b, int c, int budget, std::mt19937_64& rng,
                 long long& samples) {
    const int candidates = g.n - 3;
    if (budget >= candidates) {
        double sum = 0.0;
        int used = 0;
        for (int a = 0; a < g.n; ++a) {
            if (a == v || a == b || a == c) continue;
            sum += xi_quadruple(g, dist, v, b, c, a);
            ++used;
        }
        samples += used;
        return sum / used;
    }
    std::uniform_int_distribution<int> pick(0, g.n - 1);
    double sum = 0.0;
    int used = 0;
    while (used < budget) {
        const int a = pick(rng);
        if (a == v || a == b || a == c) continue;
        sum += xi_quadruple(g, dist, v, b, c, a);
        ++used;
    }
    samples += used;
    return sum / used;
}

double node_curvature_impl(const Graph& g, const DistanceMatrix& dist, int v, int budget, std::mt19937_64& rng,
                           long long& samples) {
    const auto nbrs = g.neighbors(v);
    const int deg = static_cast<int>(nbrs.size());
    if (deg < 2) return std::numeric_limits<double>::quiet_NaN();
    if (g.n < 4) throw usage_error("node_curvature needs n >= 4");

    const long long all_pairs = static_cast<long long>(deg) * (deg - 1) / 2;
    double sum = 0.0;
    long long used = 0;
    if (all_pairs <= kMaxNeighborPairs) {
        for (int i = 0; i < deg; ++i)
            for (int j = i + 1; j < deg; ++j) {
                sum += pair_mean(g, dist, v, nbrs[i], nbrs[j], budget, rng, samples);
                ++used;
            }
    } else {
        std::uniform_int_distribution<int> pick(0, deg - 1);
        while (used < kMaxNeighborPairs) {
            const int i = pick(rng), j = pick(rng);
            if (i == j) continue;
            sum += pair_mean(g, dist, v, nbrs[i], nbrs[j], budget, rng, samples);
            ++used;
        }
    }
    return sum / static_cast<double>(used);
}

}  // namespace

double node_curvature(const Graph& g, const DistanceMatrix& dist, int v, int budget, std::mt19937_64& rng) {
    long long samples = 0;
    return node_curvature_impl(g, dist, v, budget, rng, samples);
}

CurvatureSummary curvature_summary(const Graph& g, const DistanceMatrix& dist, int budget, std::uint64_t seed) {
    if (g.n < 4) throw usage_error("curvature_summary needs n >= 4");
    CurvatureSummary s;
    s.budget = budget;
    s.node_mean.assign(g.n, std::numeric_limits<double>::quiet_NaN());
    std::vector<long long> per_node_samples(g.n, 0);

#pragma omp parallel for schedule(dynamic, 8)
    for (int v = 0; v < g.n; ++v) {
        std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(v + 1)));
        s.node_mean[v] = node_curvature_impl(g, dist, v, budget, rng, per_node_samples[v]);
    }

    s.histogram.assign(CurvatureSummary::kHistogramBins, 0);
    const double bin_w = (s.hist_hi - s.hist_lo) / CurvatureSummary::kHistogramBins;
    int neg = 0, near = 0, pos = 0, near_neg = 0, near_zero = 0, near_pos = 0;
    for (int v = 0; v < g.n; ++v) {
        const double xi = s.node_mean[v];
        if (!std::isfinite(xi)) {
            ++s.nodes_skipped;
            continue;
        }
        ++s.nodes_counted;
        s.samples += per_node_samples[v];
        int bin = static_cast<int>(std::floor((xi - s.hist_lo) / bin_w));
        bin = std::clamp(bin, 0, CurvatureSummary::kHistogramBins - 1);
        ++s.histogram[bin];
        if (xi < -CurvatureSummary::kNearZeroBand) {
            ++neg;
        } else if (xi > CurvatureSummary::kNearZeroBand) {
            ++pos;
        } else {
            ++near;
            if (xi < 0.0)
                ++near_neg;
            else if (xi > 0.0)
                ++near_pos;
            else
                ++near_zero;
        }
    }
    if (s.nodes_counted > 0) {
        const double c = s.nodes_counted;
        s.frac_negative = neg / c;
        s.frac_near_zero = near / c;
        s.frac_positive = pos / c;
        s.near_negative = near_neg / c;
        s.near_exact_zero = near_zero / c;
        s.near_positive = near_pos / c;
    }
    return s;
}

std::string suggest_signature(const CurvatureSummary& summary, int total_intrinsic_dim) {
    if (total_intrinsic_dim < 2) throw usage_error("suggest_signature needs total_intrinsic_dim >= 2");
    // Curvature mass per geometry: strict fractions plus the matching half of
    // the near-zero band; exactly-flat nodes vote Euclidean.
    double mass[3] = {
        summary.frac_negative + summary.near_negative,   // H
        summary.frac_positive + summary.near_positive,   // S
        summary.near_exact_zero,                         // E
    };
    double total_mass = mass[0] + mass[1] + mass[2];
    if (total_mass <= 0.0) {
        mass[2] = 1.0;
        total_mass = 1.0;
    }

    // Largest-remainder allocation of intrinsic dimensions.
    int dims[3] = {0, 0, 0};
    double frac[3];
    int assigned = 0;
    for (int i = 0; i < 3; ++i) {
        const double target = mass[i] / total_mass * total_intrinsic_dim;
        dims[i] = static_cast<int>(std::floor(target));
        frac[i] = target - dims[i];
        assigned += dims[i];
    }
    while (assigned < total_intrinsic_dim) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (frac[i] > frac[best]) best = i;
        ++dims[best];
        frac[best] = -1.0;
        ++assigned;
    }

    // Blocks below 2 dims are dropped; their dims go to the heaviest survivor.
    for (int pass = 0; pass < 3; ++pass) {
        int drop = -1;
        for (int i = 0; i < 3; ++i)
            if (dims[i] == 1) drop = i;
        if (drop < 0) break;
        dims[drop] = 0;
        int heaviest = -1;
        for (int i = 0; i < 3; ++i)
            if (dims[i] >= 2 && (heaviest < 0 || mass[i] > mass[heaviest])) heaviest = i;
        if (heaviest < 0) heaviest = mass[1] > mass[0] ? (mass[2] > mass[1] ? 2 : 1) : (mass[2] > mass[0] ? 2 : 0);
        dims[heaviest] += 1;
    }
    // Everything may have collapsed onto one geometry with < 2 dims spare;
    // give any remainder to the largest block.
    int sum = dims[0] + dims[1] + dims[2];
    if (sum < total_intrinsic_dim) {
        int heaviest = 0;
        for (int i = 1; i < 3; ++i)
            if (dims[i] > dims[heaviest]) heaviest = i;
        dims[heaviest] += total_intrinsic_dim - sum;
    }

    std::string out;
    const char* letter[3] = {"h", "s", "e"};
    for (int i = 0; i < 3; ++i) {
        if (dims[i] == 0) continue;
        if (!out.empty()) out += ',';
        out += letter[i] + std::to_string(dims[i]);
    }
    return out;
}

}  // namespace pme
