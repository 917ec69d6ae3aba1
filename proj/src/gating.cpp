#include "pme/gating.hpp"

#include <cmath>

namespace pme {

GatingParams GatingParams::init(int nodes, int feature_dim, int components, const GatingConfig& cfg,
                                std::mt19937_64& rng) {
    if (cfg.levels < 1) throw usage_error("gating: levels must be >= 1");
    if (cfg.hidden < 1) throw usage_error("gating: hidden width must be >= 1");
    if (cfg.heads < 1) throw usage_error("gating: heads must be >= 1");
    if (nodes % cfg.heads != 0)
        throw usage_error("gating: heads (" + std::to_string(cfg.heads) + ") must divide the node count (" +
                          std::to_string(nodes) + "); set gating.heads to a divisor");
    GatingParams p;
    p.heads = cfg.heads;

    // Geometric width schedule from n down to N.
    p.widths.resize(cfg.levels);
    for (int l = 1; l <= cfg.levels; ++l) {
        const double t = static_cast<double>(l) / cfg.levels;
        const double w = std::round(std::pow(nodes, 1.0 - t) * std::pow(components, t));
        p.widths[l - 1] = std::max(components, static_cast<int>(w));
    }
    p.widths.back() = components;

    std::uniform_real_distribution<double> u(-cfg.init_range, cfg.init_range);
    int fin = feature_dim;
    for (int l = 0; l < cfg.levels; ++l) {
        ad::Matrix w1(fin, p.widths[l]);
        for (double& v : w1.data) v = u(rng);
        p.w_assign.push_back(std::move(w1));
        ad::Matrix w2(fin, cfg.hidden);
        for (double& v : w2.data) v = u(rng);
        p.w_embed.push_back(std::move(w2));
        fin = cfg.hidden;
    }
    p.attn = ad::Matrix(nodes, 1);
    for (double& v : p.attn.data) v = u(rng);
    return p;
}

std::size_t GatingParams::parameter_count() const {
    std::size_t c = attn.size();
    for (const auto& m : w_assign) c += m.size();
    for (const auto& m : w_embed) c += m.size();
    return c;
}

ad::TensorRef gcn_forward(ad::Tape& tape, ad::TensorRef a_prop, ad::TensorRef x, ad::TensorRef w, bool apply_relu) {
    const ad::TensorRef prop = tape.matmul(a_prop, tape.matmul(x, w));
    return apply_relu ? tape.relu(prop) : prop;
}

PoolStep pool_step(ad::Tape& tape, ad::TensorRef a_prop, ad::TensorRef a_raw, ad::TensorRef x, ad::TensorRef w1,
                   ad::TensorRef w2) {
    PoolStep out;
    out.assign = tape.row_softmax(gcn_forward(tape, a_prop, x, w1, false));
    const ad::TensorRef embedded = gcn_forward(tape, a_prop, x, w2, true);
    const ad::TensorRef st = tape.transpose(out.assign);
    out.feat = tape.matmul(st, embedded);
    out.adj = tape.matmul(st, tape.matmul(a_raw, out.assign));
    return out;
}

AttentionPool attention_pool(ad::Tape& tape, ad::TensorRef membership, ad::TensorRef u, int heads) {
    const ad::Matrix& m = tape.value(membership);
    const ad::Matrix& uv = tape.value(u);
    if (uv.cols != 1 || uv.rows != m.rows)
        throw usage_error("attention_pool: parameter must be a column of the membership height");
    if (heads < 1 || m.rows % heads != 0)
        throw usage_error("attention_pool: heads must divide the membership height");
    AttentionPool out;
    // Head j scores column t on its coordinate slice; the per-component raw
    // score is the head average, which collapses to (m_t . u) / heads because
    // the slices partition the coordinates.
    out.raw = tape.scalar_mul(tape.matmul(tape.transpose(membership), u), 1.0 / heads);
    out.weights = tape.row_softmax(tape.transpose(out.raw));
    return out;
}

std::pair<ad::TensorRef, ad::TensorRef> aux_losses(ad::Tape& tape, ad::TensorRef assign, ad::TensorRef adj) {
    const ad::Matrix& s = tape.value(assign);
    const ad::Matrix& a = tape.value(adj);
    if (a.rows != a.cols || a.rows != s.rows) throw usage_error("aux_losses: shape mismatch between S and A");
    // ||A - S S^T||_F^2 = ||A||_F^2 - 2 <S, A S> + ||S^T S||_F^2 keeps the
    // intermediates at n x N instead of n x n.
    double a_sumsq = 0.0;
    for (double v : a.data) a_sumsq += v * v;
    const ad::TensorRef a_norm_sq = tape.leaf(ad::Matrix::scalar(a_sumsq));
    const ad::TensorRef cross = tape.sum_all(tape.hadamard(assign, tape.matmul(adj, assign)));
    const ad::TensorRef gram = tape.frobenius_sq(tape.matmul(tape.transpose(assign), assign));
    const ad::TensorRef lp_sq = tape.add(tape.add(a_norm_sq, tape.scalar_mul(cross, -2.0)), gram);
    const ad::TensorRef lp = tape.sqrt_scalar(lp_sq);
    const ad::TensorRef le = tape.row_entropy_mean(assign);
    return {lp, le};
}

GatingRun gating_forward(const Graph& g, const ad::Matrix& features, const GatingParams& params) {
    if (features.rows != g.n) throw usage_error("gating_forward: feature rows must match node count");
    GatingRun run;
    ad::Tape& tape = run.tape;

    // Dense propagation and raw adjacency at level 0. The link-prediction
    // target carries self-affinity (A + I): a one-hot clustering of the
    // graph's blocks is then its exact minimizer.
    ad::Matrix a_hat(g.n, g.n, normalized_adjacency(g));
    ad::Matrix a_raw(g.n, g.n);
    ad::Matrix a_target(g.n, g.n);
    for (int u = 0; u < g.n; ++u) {
        a_target.at(u, u) = 1.0;
        for (int v : g.neighbors(u)) a_raw.at(u, v) = a_target.at(u, v) = 1.0;
    }

    ad::TensorRef a_prop = tape.leaf(std::move(a_hat));
    ad::TensorRef adj = tape.leaf(std::move(a_raw));
    ad::TensorRef aux_target = tape.leaf(std::move(a_target));
    ad::TensorRef x = tape.leaf(features);

    for (const auto& m : params.w_assign) run.w_assign_refs.push_back(tape.leaf(m, true));
    for (const auto& m : params.w_embed) run.w_embed_refs.push_back(tape.leaf(m, true));
    run.attn_ref = tape.leaf(params.attn, true);

    const int levels = static_cast<int>(params.widths.size());
    ad::TensorRef membership;  // product of assignment matrices
    ad::TensorRef aux_total;
    for (int l = 0; l < levels; ++l) {
        const PoolStep step = pool_step(tape, a_prop, adj, x, run.w_assign_refs[l], run.w_embed_refs[l]);
        const auto [lp, le] = aux_losses(tape, step.assign, aux_target);
        const ad::TensorRef lvl_aux = tape.add(lp, le);
        aux_total = l == 0 ? lvl_aux : tape.add(aux_total, lvl_aux);
        membership = l == 0 ? step.assign : tape.matmul(membership, step.assign);
        run.output.assign.push_back(tape.value(step.assign));
        run.output.coarse_adj.push_back(tape.value(step.adj));
        run.output.coarse_feat.push_back(tape.value(step.feat));
        run.output.loss_lp += tape.value(lp).data[0];
        run.output.loss_e += tape.value(le).data[0];
        x = step.feat;
        adj = step.adj;
        aux_target = step.adj;  // coarse chains already carry self mass
        if (l + 1 < levels) a_prop = tape.row_normalize(step.adj);
    }

    const AttentionPool pooled = attention_pool(tape, membership, run.attn_ref, params.heads);
    run.weights_ref = pooled.weights;
    run.aux_ref = aux_total;
    const ad::Matrix& raw = tape.value(pooled.raw);
    run.output.raw_scores.assign(raw.data.begin(), raw.data.end());
    const ad::Matrix& w = tape.value(pooled.weights);
    run.output.weights.assign(w.data.begin(), w.data.end());
    return run;
}

GatingGrads gating_backward(GatingRun& run, std::span<const double> upstream_ds, double aux_weight) {
    const ad::Matrix& s = run.tape.value(run.weights_ref);
    if (static_cast<int>(upstream_ds.size()) != s.cols)
        throw usage_error("gating_backward: upstream gradient length must match component count");
    ad::Matrix up(s.cols, 1);
    for (int i = 0; i < s.cols; ++i) up.at(i, 0) = upstream_ds[i];
    const ad::TensorRef up_ref = run.tape.leaf(std::move(up));
    const ad::TensorRef s_term = run.tape.matmul(run.weights_ref, up_ref);
    const ad::TensorRef loss = run.tape.add(s_term, run.tape.scalar_mul(run.aux_ref, aux_weight));
    auto table = run.tape.backward(loss);

    GatingGrads grads;
    for (ad::TensorRef r : run.w_assign_refs) grads.w_assign.push_back(std::move(table[r.id]));
    for (ad::TensorRef r : run.w_embed_refs) grads.w_embed.push_back(std::move(table[r.id]));
    grads.attn = std::move(table[run.attn_ref.id]);
    return grads;
}

}  // namespace pme
