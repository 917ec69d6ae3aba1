#pragma once
#include <cstdint>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "pme/gating.hpp"
#include "pme/metrics.hpp"
#include "pme/optim.hpp"
#include "pme/product.hpp"

namespace pme {

struct Triple {
    int h = 0, r = 0, t = 0;
    bool operator==(const Triple&) const = default;
};

struct TripleStore {
    std::vector<std::string> entities;
    std::vector<std::string> relations;
    std::vector<Triple> train, valid, test;
    int test_train_duplicates = 0;   // test triples also present in train
    int unseen_test_entities = 0;    // test entities absent from train

    int entity_count() const { return static_cast<int>(entities.size()); }
    int relation_count() const { return static_cast<int>(relations.size()); }
};

/// Reads train.txt / valid.txt / test.txt with lines "h<TAB>r<TAB>t".
TripleStore load_triples(const std::string& dir);

/// Entities as product points; relations as two translations (intrinsic
/// coords per component), block-rotation angles (floor(b/2) per component)
/// and a learned scalar score offset.
struct KgParams {
    Signature sig;
    PointTable entities;
    int relation_count = 0;
    std::vector<double> alpha, beta;  // R x intrinsic_total
    std::vector<double> gamma;        // R x rot_total
    std::vector<double> offset;       // R
    std::vector<int> rot_offsets;     // per component, plus total at the end
    int rot_total = 0;

    static KgParams init(const Signature& sig, int entities, int relations, double init_scale,
                         std::mt19937_64& rng);
    /// Sets sig and rebuilds the per-component rotation offsets.
    void set_signature(Signature sig);
    std::span<const double> alpha_of(int r) const;
    std::span<const double> beta_of(int r) const;
    std::span<const double> gamma_of(int r) const;
};

/// Rotation-translation distance score; lower means more plausible.
/// Hyperbolic/spherical components run on ball/stereographic coordinates
/// reached through model_convert; Euclidean components use plain addition and
/// rotation.
double score_triple(const KgParams& params, int h, int r, int t);

struct KgBatchGrads {
    double loss = 0.0;          // mean per scored triple
    long long triples = 0;      // positives + negatives scored
    std::vector<double> entity_grad;  // dense, entities.n x sig.total_ambient_dim
    std::vector<double> alpha_g, beta_g, gamma_g, offset_g;
};

class TripleSet {
  public:
    TripleSet(int entity_count, int relation_count, std::span<const Triple> triples);
    bool contains(const Triple& t) const;
    void insert(const Triple& t);

  private:
    std::uint64_t pack(const Triple& t) const;
    std::uint64_t ent_, rel_;
    std::unordered_set<std::uint64_t> set_;
};

/// Negative-sampling loss: softplus(Y * (d - b0)) with Y=+1 for positives and
/// -1 for corruptions; b0 is the per-relation offset (frozen at 0 when
/// use_offset is false). Corruptions flip head or tail uniformly and reject
/// triples present in the train filter.
KgBatchGrads kg_loss_batch(const KgParams& params, std::span<const Triple> positives, int n_neg,
                           const TripleSet& train_filter, std::mt19937_64& rng, bool use_offset);

struct KgConfig {
    int epochs = 200;
    int batch = 0;  // 0 = full train split per epoch
    int n_neg = 2;
    bool use_offset = true;
    bool filtered_eval = true;
    int eval_k = 3;
    RsgdConfig opt{.lr = 0.2};  // entity-side R-SGD (lr, clip, burnin)
    double adam_lr = 0.05;  // relation parameters
    double init_scale = 0.1;
    bool gating_weights = true;  // derive s from the relation-stripped graph
    GatingConfig gating;
    std::uint64_t seed = 0;
};

struct KgTrainReport {
    std::vector<double> loss_trace;  // per epoch mean loss
    std::vector<double> weights;     // s used for the run
    bool gating_used = false;
    double wall_seconds = 0.0;
};

struct KgTrainResult {
    KgParams params;
    KgTrainReport report;
};

KgTrainResult train_kg(const TripleStore& store, const Signature& sig, const KgConfig& cfg);

struct KgEval {
    double mrr = 0.0;
    double hit_rate = 0.0;
    int k = 3;
    long long ranks = 0;
};

/// Filtered (or raw) ranking over both head and tail corruption; ties rank
/// pessimistically.
KgEval evaluate_kg(const KgParams& params, const TripleStore& store, int k, bool filtered);

/// Graph over entities with one edge per (h, t) of any train triple.
Graph entity_graph(const TripleStore& store);

struct KgCheckpoint {
    std::uint32_t version = 0;
    std::uint64_t config_hash = 0;
    KgParams params;
};

void save_kg_checkpoint(const std::string& path, const KgParams& params, std::uint64_t config_hash);
KgCheckpoint load_kg_checkpoint(const std::string& path);

}  // namespace pme
