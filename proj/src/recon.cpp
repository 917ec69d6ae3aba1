#include "pme/recon.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

#include "pme/curvature.hpp"
#include "pme/io.hpp"
#include "pme/la.hpp"

namespace pme {

int auto_epochs(int n) { return n <= 100 ? 1000 : 300; }

namespace {

// Fixed-size pair chunks keep the floating-point reduction order independent
// of the thread count, so runs are bitwise reproducible.
constexpr std::size_t kChunkPairs = 4096;

struct BatchBuffers {
    std::vector<std::vector<double>> point_grad;  // per chunk, n x dim
    std::vector<std::vector<double>> s_grad;      // per chunk, N
    std::vector<double> loss;                     // per chunk
    std::vector<double> lambda_grad;              // per chunk

    void reset(std::size_t chunks, std::size_t table, std::size_t comps) {
        point_grad.resize(chunks);
        s_grad.resize(chunks);
        loss.assign(chunks, 0.0);
        lambda_grad.assign(chunks, 0.0);
        for (std::size_t c = 0; c < chunks; ++c) {
            point_grad[c].assign(table, 0.0);
            s_grad[c].assign(comps, 0.0);
        }
    }
};

struct BatchResult {
    double l_base = 0.0;
    std::vector<double> s_grad;
    double lambda_grad = 0.0;
};

// Accumulates dL_base/d(points) into grad_out (pre-zeroed) and returns the
// batch loss plus the cached dL_base/ds and dL_base/d(log scale).
BatchResult batch_gradients(const Signature& sig, const DistanceMatrix& dist, const PointTable& points,
                            std::span<const std::pair<std::uint32_t, std::uint32_t>> batch,
                            std::span<double> grad_out, BatchBuffers& buf) {
    const int ncomp = sig.count();
    const int dim = points.dim;
    const std::size_t nchunks = (batch.size() + kChunkPairs - 1) / kChunkPairs;
    buf.reset(nchunks, points.data.size(), ncomp);
    // The objective is the plain sum over the batch; the per-component
    // gradient clip acts as the trust region, so steps stay O(lr) however
    // many pairs participate. The reported loss is the batch mean.
    const double inv_batch = 1.0 / static_cast<double>(batch.size());

#pragma omp parallel for schedule(dynamic)
    for (std::size_t c = 0; c < nchunks; ++c) {
        std::vector<double> gp(dim), gq(dim), comp_sq(ncomp);
        auto& pg = buf.point_grad[c];
        auto& sg = buf.s_grad[c];
        double loss = 0.0, lam = 0.0;
        const std::size_t end = std::min(batch.size(), (c + 1) * kChunkPairs);
        for (std::size_t p = c * kChunkPairs; p < end; ++p) {
            const int i = static_cast<int>(batch[p].first);
            const int j = static_cast<int>(batch[p].second);
            pair_sq_distance_gradient(sig, points.row(i), points.row(j), gp, gq, comp_sq);
            double dp2 = 0.0;
            for (int k = 0; k < ncomp; ++k) dp2 += sig.weights[k] * comp_sq[k];
            dp2 *= sig.scale;
            const double dg = static_cast<double>(dist.at(i, j));
            const double dg2 = dg * dg;
            const double ratio = dp2 / dg2;
            loss += std::abs(ratio - 1.0);
            const double sign = ratio > 1.0 ? 1.0 : (ratio < 1.0 ? -1.0 : 0.0);
            const double coef = sign / dg2;
            la::axpy(coef, gp, std::span<double>(pg).subspan(static_cast<std::size_t>(i) * dim, dim));
            la::axpy(coef, gq, std::span<double>(pg).subspan(static_cast<std::size_t>(j) * dim, dim));
            for (int k = 0; k < ncomp; ++k) sg[k] += coef * sig.scale * comp_sq[k];
            lam += coef * dp2;
        }
        buf.loss[c] = loss * inv_batch;
        buf.lambda_grad[c] = lam;
    }

    BatchResult out;
    out.s_grad.assign(ncomp, 0.0);
    for (std::size_t c = 0; c < nchunks; ++c) {
        out.l_base += buf.loss[c];
        out.lambda_grad += buf.lambda_grad[c];
        for (int k = 0; k < ncomp; ++k) out.s_grad[k] += buf.s_grad[c][k];
        const auto& pg = buf.point_grad[c];
        for (std::size_t i = 0; i < pg.size(); ++i) grad_out[i] += pg[i];
    }
    return out;
}

struct GatingOptimizer {
    std::vector<AdamState> w_assign, w_embed;
    AdamState attn;
};

void apply_gating_update(GatingParams& params, const GatingGrads& grads, GatingOptimizer& opt, double lr) {
    opt.w_assign.resize(params.w_assign.size());
    opt.w_embed.resize(params.w_embed.size());
    for (std::size_t l = 0; l < params.w_assign.size(); ++l)
        adam_step(params.w_assign[l].data, grads.w_assign[l].data, opt.w_assign[l], lr);
    for (std::size_t l = 0; l < params.w_embed.size(); ++l)
        adam_step(params.w_embed[l].data, grads.w_embed[l].data, opt.w_embed[l], lr);
    adam_step(params.attn.data, grads.attn.data, opt.attn, lr);
}

}  // namespace

TrainResult train_reconstruction(const Graph& g, const DistanceMatrix& dist, const ReconConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    if (g.n < 2) throw usage_error("train_reconstruction needs at least two nodes");
    if (cfg.batch_pairs < 1) throw usage_error("train_reconstruction: batch size must be >= 1");
    if (cfg.gating_period < 1) throw usage_error("train_reconstruction: gating period must be >= 1");

    Signature sig = parse_signature(cfg.signature);
    const int epochs = cfg.opt.epochs > 0 ? cfg.opt.epochs : auto_epochs(g.n);
    RsgdConfig opt = cfg.opt;
    opt.epochs = epochs;  // resolved budget drives the lr schedule
    std::mt19937_64 rng(cfg.seed);

    // Spherical components have diameter pi * sqrt(scale * s_k); start the
    // metric scale where they can span the graph diameter, so coarse cyclic
    // structure can settle into the bounded directions before the scale
    // adapts further.
    bool has_sphere = false, has_unbounded = false;
    for (const ModelSpace& c : sig.components) {
        has_sphere |= c.kind == SpaceKind::Spherical;
        has_unbounded |= c.kind != SpaceKind::Spherical;
    }
    // The curvature profile picks which geometry absorbs the coarse
    // structure first: positively curved graphs wind around their spheres,
    // negatively curved ones spread through the unbounded components.
    const int warmup_cap = has_sphere && has_unbounded ? std::min(cfg.warmup_epochs, epochs / 2) : 0;
    bool spherical_first = true;
    if (warmup_cap > 0) {
        const CurvatureSummary probe = curvature_summary(g, dist, cfg.gating.feature_budget, cfg.seed);
        const double pos_mass = probe.frac_positive + probe.near_positive;
        const double neg_mass = probe.frac_negative + probe.near_negative;
        spherical_first = pos_mass >= neg_mass;
    }
    const bool uniform_sphere_init = cfg.spherical_uniform_init && spherical_first;

    if (has_sphere && spherical_first && cfg.init_diameter_scale) {
        // spherical-first: size the metric so spheres span the graph
        // diameter. Hyperbolic-first runs instead keep scale 1, where the
        // negatively curved components are genuinely hyperbolic across an
        // edge rather than effectively flat.
        std::int32_t diameter = 0;
        for (std::int32_t d : dist.hops) diameter = std::max(diameter, d);
        const double target = std::max(1.0, static_cast<double>(diameter) / std::numbers::pi);
        sig.scale = target * target * sig.count();
    }

    // Embedding init: unbounded components start in a small cluster around
    // the base point; spherical ones start uniform over their sphere so the
    // bounded directions carry nonzero coarse structure (winding) from the
    // first epoch instead of having to unfold a jammed arc.
    PointTable points(g.n, sig.total_ambient_dim);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int i = 0; i < g.n; ++i) {
        const ProductPoint p = random_product_point(sig, cfg.init_scale, rng);
        la::copy(p.coords, points.row(i));
        for (int k = 0; uniform_sphere_init && k < sig.count(); ++k) {
            if (sig.components[k].kind != SpaceKind::Spherical) continue;
            auto slice = points.row(i).subspan(sig.offsets[k], sig.components[k].ambient_dim);
            double norm2 = 0.0;
            for (double& v : slice) {
                v = gauss(rng);
                norm2 += v * v;
            }
            la::scale(1.0 / std::sqrt(std::max(norm2, 1e-300)), slice);
        }
    }

    // Gating init (features are computed once).
    TrainResult result;
    result.has_gating = cfg.gating_enabled;
    ad::Matrix features;
    GatingOptimizer gating_opt;
    if (cfg.gating_enabled) {
        const NodeFeatures nf = node_features(g, dist, cfg.gating.feature_budget, rng);
        features = ad::Matrix(nf.n, NodeFeatures::kDim, nf.data);
        result.gating = GatingParams::init(g.n, NodeFeatures::kDim, sig.count(), cfg.gating, rng);
    }

    // All node pairs; each epoch takes a fresh prefix after a partial shuffle.
    const long long total_pairs = static_cast<long long>(g.n) * (g.n - 1) / 2;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    pairs.reserve(total_pairs);
    for (std::uint32_t i = 0; i < static_cast<std::uint32_t>(g.n); ++i)
        for (std::uint32_t j = i + 1; j < static_cast<std::uint32_t>(g.n); ++j) pairs.emplace_back(i, j);
    const std::size_t batch_size = static_cast<std::size_t>(std::min<long long>(total_pairs, cfg.batch_pairs));
    const bool full_batch = batch_size == pairs.size();

    double log_scale = std::log(sig.scale);
    AdamState lambda_state;
    std::vector<double> grad(points.data.size());
    BatchBuffers buffers;
    std::vector<double> last_s_grad(sig.count(), 0.0);
    PointTable last_good = points;
    double last_lp = 0.0, last_le = 0.0;

    TrainReport& rep = result.report;
    rep.seed = cfg.seed;
    rep.epochs = epochs;
    rep.trace.reserve(epochs);

    bool staged = warmup_cap > 0;
    for (int epoch = 1; epoch <= epochs; ++epoch) {
        if (!full_batch) {
            for (std::size_t t = 0; t < batch_size; ++t) {
                std::uniform_int_distribution<std::size_t> pick(t, pairs.size() - 1);
                std::swap(pairs[t], pairs[pick(rng)]);
            }
        }
        std::span<const std::pair<std::uint32_t, std::uint32_t>> batch(pairs.data(), batch_size);

        la::fill(grad, 0.0);
        const BatchResult br = batch_gradients(sig, dist, points, batch, grad, buffers);
        if (!std::isfinite(br.l_base)) {
            if (!cfg.abort_checkpoint_path.empty())
                save_checkpoint(cfg.abort_checkpoint_path, sig, last_good, nullptr, 0);
            throw diverged_error("training loss became non-finite at epoch " + std::to_string(epoch) +
                                 (cfg.abort_checkpoint_path.empty() ? "" : "; last good state: " + cfg.abort_checkpoint_path));
        }
        last_good = points;
        last_s_grad = br.s_grad;

        // staged until the leading family has either absorbed the coarse
        // structure (ratio loss below 0.25), plateaued, or hit the cap
        if (staged && epoch > warmup_cap) staged = false;
        if (staged && epoch >= 100 && epoch % 10 == 0) {
            double prev = 0.0, last = 0.0;
            for (int e = epoch - 100; e < epoch - 50; ++e) prev += rep.trace[e].l_base;
            for (int e = epoch - 50; e < epoch; ++e) last += rep.trace[e].l_base;
            if (last > 0.99 * prev || last / 50.0 < 0.25) staged = false;
        }
        if (staged) {
            // one geometry family absorbs the coarse structure first
            for (int k = 0; k < sig.count(); ++k) {
                const bool frozen = spherical_first ? sig.components[k].kind != SpaceKind::Spherical
                                                    : sig.components[k].kind == SpaceKind::Spherical;
                if (!frozen) continue;
                const int off = sig.offsets[k], dim = sig.components[k].ambient_dim;
                for (int i = 0; i < points.n; ++i)
                    la::fill(std::span<double>(grad).subspan(static_cast<std::size_t>(i) * points.dim + off, dim), 0.0);
            }
        }

        const double lr = effective_lr(opt, epoch - 1);
        // gate and scale anneal on the same schedule as the points, so late
        // gradient noise cannot erode structure formed early
        const double lr_ratio = lr / opt.lr;
        const RsgdStats st = rsgd_step(sig, points, grad, lr, cfg.opt.clip);
        rep.clipped_steps += st.clipped;
        rep.skipped_nonfinite += st.skipped_nonfinite;

        // Global scale follows the same loss through d(dP^2)/d(log scale),
        // held at its init during the warm-up stage.
        if (!staged) {
            adam_step(std::span<double>(&log_scale, 1), std::span<const double>(&br.lambda_grad, 1), lambda_state,
                      cfg.lambda_lr * lr_ratio);
            sig.scale = std::exp(log_scale);
        }

        if (cfg.gating_enabled && epoch % cfg.gating_period == 0) {
            GatingRun run = gating_forward(g, features, result.gating);
            const GatingGrads grads = gating_backward(run, last_s_grad, cfg.gating.aux_weight);
            apply_gating_update(result.gating, grads, gating_opt, cfg.gating_lr * lr_ratio);
            GatingRun refreshed = gating_forward(g, features, result.gating);
            sig = set_weights(std::move(sig), refreshed.output.raw_scores);
            last_lp = refreshed.output.loss_lp;
            last_le = refreshed.output.loss_e;
        }

        rep.trace.push_back({epoch, br.l_base, last_lp, last_le, sig.weights});
    }

    result.points = std::move(points);
    result.sig = std::move(sig);
    rep.eval = evaluate_embedding(g, dist, result.sig, result.points);
    rep.final_scale = result.sig.scale;
    rep.final_weights = result.sig.weights;
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

EvalReport evaluate_trained(const Graph& g, const DistanceMatrix& dist, const TrainResult& result) {
    return evaluate_embedding(g, dist, result.sig, result.points);
}

}  // namespace pme
