#pragma once
#include <span>
#include <vector>

#include "pme/graph.hpp"
#include "pme/product.hpp"

namespace pme {

struct EvalReport {
    double d_avg = 0.0;
    double map = 0.0;
    long long pairs_used = 0;
    bool pairs_sampled = false;
    std::vector<double> weights;  // signature weights echoed
    double scale = 1.0;
    double wall_seconds = 0.0;
};

/// Mean over node pairs of |(d_P / d_G)^2 - 1|. All pairs for n <= 2000;
/// beyond that a fixed-seed sample of 2e6 pairs (recorded in pairs_used).
double avg_distortion(const DistanceMatrix& dist, const Signature& sig, const PointTable& points);
double avg_distortion(const DistanceMatrix& dist, const Signature& sig, const PointTable& points,
                      long long* pairs_used, bool* sampled);
/// Naive double-loop reference (kept for testing the parallel kernel).
double avg_distortion_serial(const DistanceMatrix& dist, const Signature& sig, const PointTable& points);

/// Neighborhood mAP: per node, the fraction of graph neighbors inside the
/// smallest closed embedded ball containing each neighbor (boundary ties
/// included), averaged. Ties sort by smaller node id.
double map_score(const Graph& g, const Signature& sig, const PointTable& points);
double map_score_serial(const Graph& g, const Signature& sig, const PointTable& points);

struct RankMetrics {
    double mrr = 0.0;
    double hit_rate = 0.0;
};

/// MRR = mean(1/rank), HR@k = fraction(rank <= k). Ranks must be >= 1.
RankMetrics rank_metrics(std::span<const int> ranks, int k);

EvalReport evaluate_embedding(const Graph& g, const DistanceMatrix& dist, const Signature& sig,
                              const PointTable& points);

/// Deterministic pairwise tree reduction (same result for any thread count).
double tree_sum(std::span<const double> vals);

}  // namespace pme
