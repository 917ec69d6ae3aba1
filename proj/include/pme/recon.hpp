#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "pme/gating.hpp"
#include "pme/graph.hpp"
#include "pme/metrics.hpp"
#include "pme/optim.hpp"
#include "pme/product.hpp"

namespace pme {

struct ReconConfig {
    std::string signature;
    bool gating_enabled = true;
    RsgdConfig opt;  // lr, clip, epochs (0 = auto), burnin
    double lambda_lr = 0.05;
    // Staged start for mixed signatures: one geometry family (picked by the
    // curvature probe) trains alone with the metric scale frozen until its
    // loss plateaus, so it absorbs the coarse structure (a cycle winds
    // around its sphere, a tree spreads through hyperbolic depth) before the
    // rest is released. warmup_epochs caps the staged phase; no-op when the
    // signature has only one geometry family.
    int warmup_epochs = 600;
    // Start the scale so spherical components span the graph diameter.
    bool init_diameter_scale = true;
    // Spread spherical components uniformly over their spheres at init
    // (cyclic structure needs nonzero winding to exist from the start).
    bool spherical_uniform_init = true;
    double gating_lr = 0.01;
    GatingConfig gating;
    int gating_period = 5;
    int batch_pairs = 10000;
    double init_scale = 0.1;
    std::uint64_t seed = 0;
    // When divergence aborts a run, the last good state is saved here.
    std::string abort_checkpoint_path;
};

struct TraceRow {
    int epoch = 0;
    double l_base = 0.0, l_lp = 0.0, l_e = 0.0;
    std::vector<double> weights;
};

struct TrainReport {
    std::vector<TraceRow> trace;
    EvalReport eval;
    std::uint64_t seed = 0;
    int epochs = 0;
    double final_scale = 1.0;
    std::vector<double> final_weights;
    double wall_seconds = 0.0;
    long long clipped_steps = 0;
    int skipped_nonfinite = 0;
};

struct TrainResult {
    PointTable points;
    Signature sig;
    GatingParams gating;
    bool has_gating = false;
    TrainReport report;
};

int auto_epochs(int n);

TrainResult train_reconstruction(const Graph& g, const DistanceMatrix& dist, const ReconConfig& cfg);

EvalReport evaluate_trained(const Graph& g, const DistanceMatrix& dist, const TrainResult& result);

}  // namespace pme
