#pragma once
#include <span>
#include <string>
#include <vector>

#include "pme/error.hpp"

namespace pme {

enum class SpaceKind { Euclidean, Spherical, Hyperbolic };

char kind_letter(SpaceKind k);

/// One constant-curvature factor with curvature fixed at 0, +1 or -1.
/// Curvature magnitude is modelled elsewhere: rescaling a component's
/// squared distance is equivalent to changing its curvature radius, so the
/// learnable signature weights and global scale carry that freedom.
struct ModelSpace {
    SpaceKind kind = SpaceKind::Euclidean;
    int intrinsic_dim = 1;
    int ambient_dim = 1;  // intrinsic_dim for E, intrinsic_dim+1 for S and H

    static ModelSpace make(SpaceKind kind, int intrinsic_dim);
    bool operator==(const ModelSpace&) const = default;
};

/// Coordinate holder for one point of a model space. Spherical points live
/// on the unit sphere; hyperbolic points on the upper hyperboloid sheet
/// <x,x>_L = -1, x0 > 0.
struct ManifoldPoint {
    ModelSpace space;
    std::vector<double> coords;
};

struct TangentVector {
    ModelSpace space;
    std::vector<double> base;  // coordinates of the base point
    std::vector<double> coords;
};

/// Point strictly inside the Poincare ball of curvature -c (c > 0).
struct BallPoint {
    std::vector<double> coords;
    double curvature_magnitude = 1.0;
};

namespace geo {

using cspan = std::span<const double>;
using mspan = std::span<double>;

// |constraint residual| of the defining manifold equation; 0 for Euclidean.
double point_violation(const ModelSpace& s, cspan x);
// |<x,v>| (spherical) or |<x,v>_L| (hyperbolic) tangency residual.
double tangent_violation(const ModelSpace& s, cspan x, cspan v);

void base_point(const ModelSpace& s, mspan out);

double distance(const ModelSpace& s, cspan x, cspan y);

/// Distance without the invariant validation of distance(); arguments are
/// clamped silently. Bulk kernels (product metric, evaluation loops) use this
/// after validating their tables once.
double distance_unchecked(const ModelSpace& s, cspan x, cspan y);

void exp_map(const ModelSpace& s, cspan x, cspan v, mspan out);
void log_map(const ModelSpace& s, cspan x, cspan y, mspan out);

// Algorithm step used by R-SGD: Euclidean pass-through, spherical tangent
// projection, hyperbolic J-correction (J = diag(-1,1,...,1)) followed by the
// Lorentz tangent projection.
void tangent_from_ambient(const ModelSpace& s, cspan x, cspan h, mspan out);

// Plain orthogonal projection onto the tangent space (no J). Idempotent.
void tangent_project(const ModelSpace& s, cspan x, cspan h, mspan out);

// Snap a slightly drifted point back onto the manifold (in place).
// Drift beyond 1e-3 throws diverged_error.
void renormalize(const ModelSpace& s, mspan x);

// Norm of tangent coordinates in the space metric.
double tangent_norm(const ModelSpace& s, cspan v);

// ---- Poincare ball / stereographic kernels ------------------------------

void mobius_add(double c, cspan x, cspan y, mspan out, bool* clamped = nullptr);
void exp0_ball(double c, cspan v, mspan out);
double ball_distance(double c, cspan x, cspan y);

// Spherical analogues on stereographic coordinates (curvature +1).
void sphere_mobius_add(cspan x, cspan y, mspan out);
void exp0_sphere(cspan v, mspan out);
double stereo_distance(cspan x, cspan y);

// Rotate each coordinate pair (x_{2j}, x_{2j+1}) by angles[j].
void block_rotate(cspan x, cspan angles, mspan out);

enum class Convert {
    HyperboloidToBall,
    BallToHyperboloid,
    SphereToStereo,
    StereoToSphere,
};

// in: ambient coords (ambient_dim) for *ToBall/*ToStereo, intrinsic coords
// otherwise; out sized accordingly (intrinsic resp. ambient).
void model_convert(Convert dir, cspan in, mspan out);

}  // namespace geo

// Object-level conveniences used by tests and small callers.
ManifoldPoint make_base_point(const ModelSpace& s);
double distance(const ManifoldPoint& x, const ManifoldPoint& y);
ManifoldPoint exp_map(const ManifoldPoint& x, const TangentVector& v);
TangentVector log_map(const ManifoldPoint& x, const ManifoldPoint& y);

}  // namespace pme
