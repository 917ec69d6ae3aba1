#pragma once
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pme/geometry.hpp"

namespace pme {

/// Ordered component spaces with a softmax-normalized weight vector s and a
/// learnable global metric scale. Weighted squared distance:
///   d_P^2(x, y) = scale * sum_k s_k * dist^2(x^k, y^k)
/// scale defaults to 1 so the plain weighted formula holds until training
/// stretches the metric.
struct Signature {
    std::vector<ModelSpace> components;
    std::vector<double> weights;
    double scale = 1.0;
    int total_ambient_dim = 0;
    int total_intrinsic_dim = 0;
    std::vector<int> offsets;  // ambient offset of each component

    int count() const { return static_cast<int>(components.size()); }
    std::string to_string() const;  // canonical text, parse round-trips
    bool same_structure(const Signature& o) const;
};

/// Grammar: comma-separated terms h<d>, s<d>, e<d> with an optional *<count>
/// repetition, e.g. "h2,s1" or "h10*3,s10*2". Weights start uniform.
Signature parse_signature(const std::string& text);

/// New signature with weights = softmax(raw_scores).
Signature set_weights(Signature sig, std::span<const double> raw_scores);

struct ProductPoint {
    std::vector<double> coords;
};

/// Dense row-major table of product points (one row per node/entity).
struct PointTable {
    int n = 0;
    int dim = 0;
    std::vector<double> data;

    PointTable() = default;
    PointTable(int n_, int dim_) : n(n_), dim(dim_), data(static_cast<std::size_t>(n_) * dim_, 0.0) {}
    std::span<double> row(int i) { return {data.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)}; }
    std::span<const double> row(int i) const {
        return {data.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
    }
};

double weighted_sq_distance(const Signature& sig, geo::cspan p, geo::cspan q);
// Variant that also writes the raw per-component squared distances.
double weighted_sq_distance(const Signature& sig, geo::cspan p, geo::cspan q, std::span<double> comp_sq);

/// Ambient gradient of the weighted squared distance w.r.t. p, plus the raw
/// per-component squared distances (for d L / d s_k chains). Components whose
/// pair is closer than 1e-7 contribute a zero gradient.
void sq_distance_gradient(const Signature& sig, geo::cspan p, geo::cspan q, std::span<double> grad_p,
                          std::span<double> comp_sq);

/// Both-sided variant used by training loops (shares the distance work).
void pair_sq_distance_gradient(const Signature& sig, geo::cspan p, geo::cspan q, std::span<double> grad_p,
                               std::span<double> grad_q, std::span<double> comp_sq);

/// Per-component exp at the base point of a Gaussian tangent with std scale.
ProductPoint random_product_point(const Signature& sig, double scale, std::mt19937_64& rng);

/// Largest per-component manifold violation of a product point.
double product_point_violation(const Signature& sig, geo::cspan p);

}  // namespace pme
