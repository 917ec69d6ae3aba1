#pragma once
#include <stdexcept>
#include <string>

namespace pme {

// Bad caller input: wrong shapes, malformed strings, invalid ids.
// The CLI maps this family to exit code 1.
struct usage_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// I/O failures: missing files, short reads, malformed data files.
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical failures detected at runtime.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A point drifted off its manifold beyond tolerance.
struct invalid_point_error : numeric_error {
    using numeric_error::numeric_error;
};

// A vector failed the tangency requirement of its base point.
struct invalid_tangent_error : numeric_error {
    using numeric_error::numeric_error;
};

// Log map requested for an antipodal spherical pair.
struct undefined_direction_error : numeric_error {
    using numeric_error::numeric_error;
};

// Optimization left the trust region (learning rate too large).
struct diverged_error : numeric_error {
    using numeric_error::numeric_error;
};

}  // namespace pme
