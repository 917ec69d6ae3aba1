#include "pme/optim.hpp"

#include <cmath>

#include "pme/la.hpp"

namespace pme {

double effective_lr(const RsgdConfig& cfg, int epoch) {
    if (cfg.lr <= 0.0) throw usage_error("rsgd: learning rate must be positive");
    if (epoch < cfg.burnin) return cfg.lr / 10.0;
    // The distortion objective is piecewise linear in the distances, so its
    // minima sit at kinks where subgradients stay finite; constant steps
    // orbit them. Cosine decay to lr/100 settles the iterates.
    const int total = std::max(cfg.epochs, epoch + 1);
    if (total <= cfg.burnin + 1) return cfg.lr;
    const double progress = static_cast<double>(epoch - cfg.burnin) / static_cast<double>(total - cfg.burnin);
    const double floor = cfg.lr / 100.0;
    return floor + 0.5 * (cfg.lr - floor) * (1.0 + std::cos(progress * 3.14159265358979323846));
}

RsgdStats rsgd_step_single(const Signature& sig, std::span<double> point, geo::cspan grad, double lr, double clip) {
    RsgdStats stats;
    for (double v : grad)
        if (!std::isfinite(v)) {
            ++stats.skipped_nonfinite;
            return stats;
        }
    std::vector<double> tangent;
    for (int k = 0; k < sig.count(); ++k) {
        const ModelSpace& space = sig.components[k];
        const int off = sig.offsets[k], dim = space.ambient_dim;
        auto x = point.subspan(off, dim);
        tangent.assign(dim, 0.0);
        geo::tangent_from_ambient(space, x, grad.subspan(off, dim), tangent);
        const double norm = geo::tangent_norm(space, tangent);
        if (norm == 0.0) continue;  // zero step leaves the point bitwise unchanged
        if (clip > 0.0 && norm > clip) {
            la::scale(clip / norm, tangent);
            ++stats.clipped;
        }
        la::scale(-lr, tangent);
        std::vector<double> moved(dim);
        geo::exp_map(space, x, tangent, moved);  // renormalizes; throws on divergence
        la::copy(moved, x);
    }
    return stats;
}

RsgdStats rsgd_step(const Signature& sig, PointTable& points, std::span<const double> grads, double lr, double clip) {
    if (points.dim != sig.total_ambient_dim) throw usage_error("rsgd_step: point table does not match signature");
    if (grads.size() != points.data.size()) throw usage_error("rsgd_step: gradient table size mismatch");
    long long skipped = 0, clipped = 0;
    bool diverged = false;
#pragma omp parallel for schedule(static) reduction(+ : skipped, clipped) reduction(|| : diverged)
    for (int i = 0; i < points.n; ++i) {
        try {
            const RsgdStats s = rsgd_step_single(
                sig, points.row(i), grads.subspan(static_cast<std::size_t>(i) * points.dim, points.dim), lr, clip);
            skipped += s.skipped_nonfinite;
            clipped += s.clipped;
        } catch (const diverged_error&) {
            diverged = true;
        }
    }
    if (diverged) throw diverged_error("rsgd: a point left its manifold; reduce opt.lr");
    RsgdStats total;
    total.skipped_nonfinite = static_cast<int>(skipped);
    total.clipped = clipped;
    return total;
}

void AdamState::ensure_size(std::size_t n) {
    if (m.size() != n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
        step = 0;
    }
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr) {
    if (params.size() != grads.size()) throw usage_error("adam_step: shape mismatch");
    for (double g : grads)
        if (!std::isfinite(g)) throw numeric_error("adam_step: non-finite gradient");
    state.ensure_size(params.size());
    ++state.step;
    const double b1 = state.beta1, b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * grads[i];
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

}  // namespace pme
