#pragma once
#include <cmath>
#include <cstddef>
#include <span>

// Small dense-vector helpers shared by the geometry kernels.

namespace pme::la {

using cspan = std::span<const double>;
using mspan = std::span<double>;

inline double dot(cspan x, cspan y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

// Minkowski inner product <x,y>_L = -x0*y0 + sum_{i>=1} xi*yi.
inline double lorentz_dot(cspan x, cspan y) {
    double s = -x[0] * y[0];
    for (std::size_t i = 1; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline double sq_norm(cspan x) { return dot(x, x); }
inline double norm(cspan x) { return std::sqrt(sq_norm(x)); }

inline double sq_dist(cspan x, cspan y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - y[i];
        s += d * d;
    }
    return s;
}

inline double dist(cspan x, cspan y) { return std::sqrt(sq_dist(x, y)); }

inline void copy(cspan x, mspan out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i];
}

inline void scale(double a, mspan x) {
    for (double& v : x) v *= a;
}

// y += a*x
inline void axpy(double a, cspan x, mspan y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline void fill(mspan x, double v) {
    for (double& e : x) e = v;
}

// sinh(t)/t, stable near zero.
inline double sinh_over(double t) {
    if (std::abs(t) < 1e-6) return 1.0 + t * t / 6.0;
    return std::sinh(t) / t;
}

// sin(t)/t, stable near zero.
inline double sin_over(double t) {
    if (std::abs(t) < 1e-6) return 1.0 - t * t / 6.0;
    return std::sin(t) / t;
}

// tanh(t)/t, stable near zero.
inline double tanh_over(double t) {
    if (std::abs(t) < 1e-6) return 1.0 - t * t / 3.0;
    return std::tanh(t) / t;
}

// Numerically shared softmax; every weight vector in the project goes
// through this one implementation.
inline void softmax_inplace(mspan x) {
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : x) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : x) v /= sum;
}

}  // namespace pme::la
