#pragma once
#include <random>
#include <string>
#include <vector>

#include "pme/graph.hpp"

namespace pme {

/// Aggregated quadruple-curvature estimates. Fractions classify per-node
/// means with a near-zero band of half-width kNearZeroBand; the band is
/// further split by sign because near-flat-positive nodes (large cycles)
/// still lean spherical and near-flat-negative ones lean hyperbolic.
struct CurvatureSummary {
    static constexpr double kNearZeroBand = 0.05;
    static constexpr int kHistogramBins = 41;

    int nodes_counted = 0;
    int nodes_skipped = 0;  // degree < 2
    std::vector<double> node_mean;  // NaN for skipped nodes

    double frac_negative = 0.0;   // mean < -band
    double frac_near_zero = 0.0;  // |mean| <= band
    double frac_positive = 0.0;   // mean > band
    // split of the near-zero band
    double near_negative = 0.0;
    double near_exact_zero = 0.0;
    double near_positive = 0.0;

    double hist_lo = -1.025, hist_hi = 1.025;
    std::vector<int> histogram;  // kHistogramBins entries, outliers clamped

    int budget = 0;
    long long samples = 0;
};

/// Quadruple curvature xi_G(v; b, c; a) =
///   (1 / (2 d(a,v))) * (d(a,v)^2 + d(b,c)^2/4 - (d(a,b)^2 + d(a,c)^2)/2).
/// b and c must be neighbors of v; a must be distinct from all three.
double xi_quadruple(const Graph& g, const DistanceMatrix& dist, int v, int b, int c, int a);

/// Mean of xi over neighbor pairs (b, c) of v and reference nodes a. Exact
/// average over all valid a when budget >= n-3 per pair, uniform sampling
/// otherwise. Neighbor pairs are enumerated exhaustively up to 50, sampled
/// beyond. Returns NaN when deg(v) < 2.
double node_curvature(const Graph& g, const DistanceMatrix& dist, int v, int budget, std::mt19937_64& rng);

CurvatureSummary curvature_summary(const Graph& g, const DistanceMatrix& dist, int budget, std::uint64_t seed);

/// Allocates hyperbolic/spherical/Euclidean intrinsic dimensions from the
/// summary's curvature mass (near-zero mass follows its sign; exact zeros go
/// Euclidean). Blocks below 2 dims are dropped and reassigned. The result
/// parses under parse_signature.
std::string suggest_signature(const CurvatureSummary& summary, int total_intrinsic_dim);

}  // namespace pme
