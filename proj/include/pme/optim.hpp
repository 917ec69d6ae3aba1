#pragma once
#include <span>
#include <vector>

#include "pme/product.hpp"

namespace pme {

struct RsgdConfig {
    double lr = 0.1;
    double clip = 1.0;  // per-component tangent-norm clip before the step
    int epochs = 1000;
    int burnin = 10;  // epochs run at lr/10
};

double effective_lr(const RsgdConfig& cfg, int epoch);

struct RsgdStats {
    int skipped_nonfinite = 0;
    long long clipped = 0;
};

/// One R-SGD step for every point in the table: project the ambient gradient
/// to the tangent space component-wise (with the J-correction on hyperbolic
/// factors), clip, step via the exponential map, renormalize.
/// `grads` is row-major n x total_ambient_dim.
RsgdStats rsgd_step(const Signature& sig, PointTable& points, std::span<const double> grads, double lr,
                    double clip);

/// Convenience for a single point.
RsgdStats rsgd_step_single(const Signature& sig, std::span<double> point, geo::cspan grad, double lr, double clip);

struct AdamState {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long long step = 0;
    std::vector<double> m, v;

    void ensure_size(std::size_t n);
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr);

}  // namespace pme
