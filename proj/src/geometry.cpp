#include "pme/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "pme/la.hpp"

namespace pme {

char kind_letter(SpaceKind k) {
    switch (k) {
        case SpaceKind::Euclidean: return 'e';
        case SpaceKind::Spherical: return 's';
        case SpaceKind::Hyperbolic: return 'h';
    }
    return '?';
}

ModelSpace ModelSpace::make(SpaceKind kind, int intrinsic_dim) {
    if (intrinsic_dim < 1) throw usage_error("model space needs intrinsic_dim >= 1");
    ModelSpace s;
    s.kind = kind;
    s.intrinsic_dim = intrinsic_dim;
    s.ambient_dim = kind == SpaceKind::Euclidean ? intrinsic_dim : intrinsic_dim + 1;
    return s;
}

namespace geo {

namespace {

void check_dim(const ModelSpace& s, cspan x, const char* what) {
    if (static_cast<int>(x.size()) != s.ambient_dim)
        throw usage_error(std::string(what) + ": expected " + std::to_string(s.ambient_dim) +
                          " coords, got " + std::to_string(x.size()));
}

// Clamp the arccos argument; a large clamp means an off-manifold input.
double clamp_cos_arg(double t) {
    if (t > 1.0) {
        if (t - 1.0 > 1e-6) throw invalid_point_error("spherical inner product exceeds 1 by " + std::to_string(t - 1.0));
        return 1.0;
    }
    if (t < -1.0) {
        if (-1.0 - t > 1e-6) throw invalid_point_error("spherical inner product below -1 by " + std::to_string(-1.0 - t));
        return -1.0;
    }
    return t;
}

double clamp_cosh_arg(double u) {
    if (u < 1.0) {
        if (1.0 - u > 1e-6) throw invalid_point_error("hyperbolic -<x,y>_L below 1 by " + std::to_string(1.0 - u));
        return 1.0;
    }
    return u;
}

void check_tangent(const ModelSpace& s, cspan x, cspan v) {
    if (tangent_violation(s, x, v) > 1e-6)
        throw invalid_tangent_error("vector is not tangent at its base point");
}

}  // namespace

double point_violation(const ModelSpace& s, cspan x) {
    switch (s.kind) {
        case SpaceKind::Euclidean: return 0.0;
        case SpaceKind::Spherical: return std::abs(la::sq_norm(x) - 1.0);
        case SpaceKind::Hyperbolic: {
            double r = std::abs(la::lorentz_dot(x, x) + 1.0);
            if (x[0] <= 0.0) r = std::max(r, 1.0);  // wrong sheet
            return r;
        }
    }
    return 0.0;
}

double tangent_violation(const ModelSpace& s, cspan x, cspan v) {
    switch (s.kind) {
        case SpaceKind::Euclidean: return 0.0;
        case SpaceKind::Spherical: return std::abs(la::dot(x, v));
        case SpaceKind::Hyperbolic: return std::abs(la::lorentz_dot(x, v));
    }
    return 0.0;
}

void base_point(const ModelSpace& s, mspan out) {
    la::fill(out, 0.0);
    if (s.kind != SpaceKind::Euclidean) out[0] = 1.0;
}

double distance(const ModelSpace& s, cspan x, cspan y) {
    check_dim(s, x, "distance x");
    check_dim(s, y, "distance y");
    if (point_violation(s, x) > 1e-6 || point_violation(s, y) > 1e-6)
        throw invalid_point_error("distance: input point violates its manifold constraint");
    switch (s.kind) {
        case SpaceKind::Euclidean: return la::dist(x, y);
        case SpaceKind::Spherical: return std::acos(clamp_cos_arg(la::dot(x, y)));
        case SpaceKind::Hyperbolic: return std::acosh(clamp_cosh_arg(-la::lorentz_dot(x, y)));
    }
    return 0.0;
}

double distance_unchecked(const ModelSpace& s, cspan x, cspan y) {
    switch (s.kind) {
        case SpaceKind::Euclidean: return la::dist(x, y);
        case SpaceKind::Spherical: return std::acos(std::clamp(la::dot(x, y), -1.0, 1.0));
        case SpaceKind::Hyperbolic: return std::acosh(std::max(1.0, -la::lorentz_dot(x, y)));
    }
    return 0.0;
}

void exp_map(const ModelSpace& s, cspan x, cspan v, mspan out) {
    check_dim(s, x, "exp_map x");
    check_dim(s, v, "exp_map v");
    switch (s.kind) {
        case SpaceKind::Euclidean:
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + v[i];
            return;
        case SpaceKind::Spherical: {
            check_tangent(s, x, v);
            const double n = la::norm(v);
            const double c = std::cos(n), k = la::sin_over(n);
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = c * x[i] + k * v[i];
            break;
        }
        case SpaceKind::Hyperbolic: {
            check_tangent(s, x, v);
            const double n = std::sqrt(std::max(0.0, la::lorentz_dot(v, v)));
            const double c = std::cosh(n), k = la::sinh_over(n);
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = c * x[i] + k * v[i];
            break;
        }
    }
    renormalize(s, out);
}

void log_map(const ModelSpace& s, cspan x, cspan y, mspan out) {
    check_dim(s, x, "log_map x");
    check_dim(s, y, "log_map y");
    switch (s.kind) {
        case SpaceKind::Euclidean:
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = y[i] - x[i];
            return;
        case SpaceKind::Spherical: {
            const double t = clamp_cos_arg(la::dot(x, y));
            if (t <= -1.0 + 1e-9)
                throw undefined_direction_error("log_map: antipodal spherical pair has no unique direction");
            const double theta = std::acos(t);
            if (theta < 1e-14) {
                la::fill(out, 0.0);
                return;
            }
            // u = y - <x,y> x is tangent with norm sin(theta)
            double un = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                out[i] = y[i] - t * x[i];
                un += out[i] * out[i];
            }
            la::scale(theta / std::sqrt(un), out);
            return;
        }
        case SpaceKind::Hyperbolic: {
            const double u0 = clamp_cosh_arg(-la::lorentz_dot(x, y));
            const double theta = std::acosh(u0);
            if (theta < 1e-14) {
                la::fill(out, 0.0);
                return;
            }
            // u = y - u0 x is tangent with Lorentz norm sinh(theta)
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = y[i] - u0 * x[i];
            la::scale(theta / std::sinh(theta), out);
            return;
        }
    }
}

void tangent_from_ambient(const ModelSpace& s, cspan x, cspan h, mspan out) {
    check_dim(s, x, "tangent_from_ambient x");
    check_dim(s, h, "tangent_from_ambient h");
    switch (s.kind) {
        case SpaceKind::Euclidean:
            la::copy(h, out);
            return;
        case SpaceKind::Spherical: {
            const double t = la::dot(x, h);
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = h[i] - t * x[i];
            return;
        }
        case SpaceKind::Hyperbolic: {
            // J h, then project: v + <x,v>_L x
            out[0] = -h[0];
            for (std::size_t i = 1; i < x.size(); ++i) out[i] = h[i];
            const double t = la::lorentz_dot(x, out);
            la::axpy(t, x, out);
            return;
        }
    }
}

void tangent_project(const ModelSpace& s, cspan x, cspan h, mspan out) {
    check_dim(s, x, "tangent_project x");
    check_dim(s, h, "tangent_project h");
    switch (s.kind) {
        case SpaceKind::Euclidean:
            la::copy(h, out);
            return;
        case SpaceKind::Spherical: {
            const double t = la::dot(x, h);
            for (std::size_t i = 0; i < x.size(); ++i) out[i] = h[i] - t * x[i];
            return;
        }
        case SpaceKind::Hyperbolic: {
            la::copy(h, out);
            const double t = la::lorentz_dot(x, h);
            la::axpy(t, x, out);
            return;
        }
    }
}

void renormalize(const ModelSpace& s, mspan x) {
    check_dim(s, x, "renormalize x");
    switch (s.kind) {
        case SpaceKind::Euclidean: return;
        case SpaceKind::Spherical: {
            const double n2 = la::sq_norm(x);
            if (!(std::abs(n2 - 1.0) <= 1e-3))  // negated form also catches NaN
                throw diverged_error("spherical point drifted off the unit sphere; reduce the learning rate");
            la::scale(1.0 / std::sqrt(n2), x);
            return;
        }
        case SpaceKind::Hyperbolic: {
            const double r = la::lorentz_dot(x, x);
            if (!(std::abs(r + 1.0) <= 1e-3) || !(x[0] > 0.0))
                throw diverged_error("hyperbolic point drifted off the hyperboloid; reduce the learning rate");
            double tail = 0.0;
            for (std::size_t i = 1; i < x.size(); ++i) tail += x[i] * x[i];
            x[0] = std::sqrt(1.0 + tail);
            return;
        }
    }
}

double tangent_norm(const ModelSpace& s, cspan v) {
    if (s.kind == SpaceKind::Hyperbolic) return std::sqrt(std::max(0.0, la::lorentz_dot(v, v)));
    return la::norm(v);
}

void mobius_add(double c, cspan x, cspan y, mspan out, bool* clamped) {
    if (x.size() != y.size()) throw usage_error("mobius_add: dimension mismatch");
    const double xy = la::dot(x, y);
    const double x2 = la::sq_norm(x);
    const double y2 = la::sq_norm(y);
    const double a = 1.0 + 2.0 * c * xy + c * y2;
    const double b = 1.0 - c * x2;
    double den = 1.0 + 2.0 * c * xy + c * c * x2 * y2;
    if (std::abs(den) < 1e-15) den = den < 0 ? -1e-15 : 1e-15;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (a * x[i] + b * y[i]) / den;
    // keep the result strictly inside the ball
    const double radius = 1.0 / std::sqrt(c);
    const double n = la::norm(out);
    if (n >= radius) {
        la::scale(radius * (1.0 - 1e-7) / n, out);
        if (clamped) *clamped = true;
    } else if (clamped) {
        *clamped = false;
    }
}

void exp0_ball(double c, cspan v, mspan out) {
    const double sc = std::sqrt(c);
    const double n = la::norm(v);
    const double k = la::tanh_over(sc * n);  // tanh(sc*n)/(sc*n)
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = k * v[i];
}

double ball_distance(double c, cspan x, cspan y) {
    const double x2 = c * la::sq_norm(x);
    const double y2 = c * la::sq_norm(y);
    const double d2 = c * la::sq_dist(x, y);
    const double arg = 1.0 + 2.0 * d2 / std::max((1.0 - x2) * (1.0 - y2), 1e-15);
    return std::acosh(std::max(1.0, arg)) / std::sqrt(c);
}

void sphere_mobius_add(cspan x, cspan y, mspan out) {
    if (x.size() != y.size()) throw usage_error("sphere_mobius_add: dimension mismatch");
    const double xy = la::dot(x, y);
    const double x2 = la::sq_norm(x);
    const double y2 = la::sq_norm(y);
    const double a = 1.0 - 2.0 * xy - y2;
    const double b = 1.0 + x2;
    double den = 1.0 - 2.0 * xy + x2 * y2;
    if (std::abs(den) < 1e-15) den = den < 0 ? -1e-15 : 1e-15;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (a * x[i] + b * y[i]) / den;
}

void exp0_sphere(cspan v, mspan out) {
    const double n = la::norm(v);
    double k;
    if (n < 1e-12) {
        k = 1.0;
    } else {
        k = std::tan(n) / n;
    }
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = k * v[i];
}

double stereo_distance(cspan x, cspan y) {
    const double x2 = la::sq_norm(x);
    const double y2 = la::sq_norm(y);
    const double t = ((1.0 - x2) * (1.0 - y2) + 4.0 * la::dot(x, y)) / ((1.0 + x2) * (1.0 + y2));
    return std::acos(std::clamp(t, -1.0, 1.0));
}

void block_rotate(cspan x, cspan angles, mspan out) {
    if (x.size() % 2 != 0) throw usage_error("block_rotate: dimension must be even");
    if (angles.size() != x.size() / 2) throw usage_error("block_rotate: need dim/2 angles");
    for (std::size_t j = 0; j < angles.size(); ++j) {
        const double cs = std::cos(angles[j]), sn = std::sin(angles[j]);
        const double a = x[2 * j], b = x[2 * j + 1];
        out[2 * j] = cs * a - sn * b;
        out[2 * j + 1] = sn * a + cs * b;
    }
}

void model_convert(Convert dir, cspan in, mspan out) {
    switch (dir) {
        case Convert::HyperboloidToBall:
        case Convert::SphereToStereo: {
            const double d = 1.0 + in[0];
            for (std::size_t i = 0; i + 1 < in.size(); ++i) out[i] = in[i + 1] / d;
            return;
        }
        case Convert::BallToHyperboloid: {
            const double u2 = la::sq_norm(in);
            const double d = 1.0 - u2;
            out[0] = (1.0 + u2) / d;
            for (std::size_t i = 0; i < in.size(); ++i) out[i + 1] = 2.0 * in[i] / d;
            return;
        }
        case Convert::StereoToSphere: {
            const double u2 = la::sq_norm(in);
            const double d = 1.0 + u2;
            out[0] = (1.0 - u2) / d;
            for (std::size_t i = 0; i < in.size(); ++i) out[i + 1] = 2.0 * in[i] / d;
            return;
        }
    }
}

}  // namespace geo

ManifoldPoint make_base_point(const ModelSpace& s) {
    ManifoldPoint p{s, std::vector<double>(s.ambient_dim, 0.0)};
    geo::base_point(s, p.coords);
    return p;
}

double distance(const ManifoldPoint& x, const ManifoldPoint& y) {
    if (!(x.space == y.space)) throw usage_error("distance: points live on different spaces");
    return geo::distance(x.space, x.coords, y.coords);
}

ManifoldPoint exp_map(const ManifoldPoint& x, const TangentVector& v) {
    ManifoldPoint out{x.space, std::vector<double>(x.space.ambient_dim)};
    geo::exp_map(x.space, x.coords, v.coords, out.coords);
    return out;
}

TangentVector log_map(const ManifoldPoint& x, const ManifoldPoint& y) {
    TangentVector v{x.space, x.coords, std::vector<double>(x.space.ambient_dim)};
    geo::log_map(x.space, x.coords, y.coords, v.coords);
    return v;
}

}  // namespace pme
