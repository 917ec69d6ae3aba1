#pragma once
#include <random>
#include <vector>

#include "pme/autodiff.hpp"
#include "pme/graph.hpp"

namespace pme {

struct GatingConfig {
    int levels = 1;
    int hidden = 16;
    int heads = 4;
    double aux_weight = 1.0;
    double init_range = 0.1;
    int feature_budget = 64;
};

/// Trainable state of the pooling + attention gate. Level l maps n_{l-1}
/// nodes to n_l clusters; the last width equals the number of product
/// components. The attention parameter scores membership columns over the
/// original nodes, so its length is n and the head count must divide n.
struct GatingParams {
    std::vector<ad::Matrix> w_assign;  // f_{l-1} x n_l
    std::vector<ad::Matrix> w_embed;   // f_{l-1} x f_l
    ad::Matrix attn;                   // n x 1
    int heads = 1;
    std::vector<int> widths;  // n_1 .. n_L, widths.back() == N

    static GatingParams init(int nodes, int feature_dim, int components, const GatingConfig& cfg,
                             std::mt19937_64& rng);
    std::size_t parameter_count() const;
};

struct GatingOutput {
    std::vector<ad::Matrix> assign;      // S^(l)
    std::vector<ad::Matrix> coarse_adj;  // A^(l) (unnormalized chain)
    std::vector<ad::Matrix> coarse_feat; // X^(l)
    std::vector<double> raw_scores;      // length N
    std::vector<double> weights;         // s = softmax(raw_scores)
    double loss_lp = 0.0;
    double loss_e = 0.0;
};

/// One recorded forward pass; holds the tape alive for gating_backward.
struct GatingRun {
    ad::Tape tape;
    std::vector<ad::TensorRef> w_assign_refs, w_embed_refs;
    ad::TensorRef attn_ref;
    ad::TensorRef weights_ref;  // 1xN
    ad::TensorRef aux_ref;      // 1x1 (L_LP + L_e summed over levels)
    GatingOutput output;
};

struct GatingGrads {
    std::vector<ad::Matrix> w_assign, w_embed;
    ad::Matrix attn;
};

// Spec-level building blocks (also used standalone in tests).
ad::TensorRef gcn_forward(ad::Tape& tape, ad::TensorRef a_prop, ad::TensorRef x, ad::TensorRef w, bool apply_relu);

struct PoolStep {
    ad::TensorRef assign, feat, adj;
};
PoolStep pool_step(ad::Tape& tape, ad::TensorRef a_prop, ad::TensorRef a_raw, ad::TensorRef x, ad::TensorRef w1,
                   ad::TensorRef w2);

struct AttentionPool {
    ad::TensorRef raw;      // Nx1
    ad::TensorRef weights;  // 1xN
};
AttentionPool attention_pool(ad::Tape& tape, ad::TensorRef membership, ad::TensorRef u, int heads);

/// (L_LP, L_e) for one level: ||A - S S^T||_F and mean row entropy of S.
std::pair<ad::TensorRef, ad::TensorRef> aux_losses(ad::Tape& tape, ad::TensorRef assign, ad::TensorRef adj);

GatingRun gating_forward(const Graph& g, const ad::Matrix& features, const GatingParams& params);

/// Chains d(loss)/d(s) through softmax, attention, pooling and the GNNs, and
/// adds aux_weight * (L_LP + L_e).
GatingGrads gating_backward(GatingRun& run, std::span<const double> upstream_ds, double aux_weight);

}  // namespace pme
