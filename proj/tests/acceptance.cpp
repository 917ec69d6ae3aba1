// Acceptance suite: one pass/fail line per criterion, exit code = #failures.
// Criterion 10 (large benchmark graph) is optional and runs only when
// PME_ACCEPT_POWER points at the edge list.

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <vector>

#include "pme/autodiff.hpp"
#include "pme/cli.hpp"
#include "pme/curvature.hpp"
#include "pme/gating.hpp"
#include "pme/kg.hpp"
#include "pme/la.hpp"
#include "pme/metrics.hpp"
#include "pme/recon.hpp"
#include "test_util.hpp"

using namespace pme;
using nlohmann::json;

namespace {

int failures = 0;

void record(int id, const std::string& name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s (%s)\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

void record_skip(int id, const std::string& name, const std::string& why) {
    std::printf("[SKIP] criterion %2d: %s (%s)\n", id, name.c_str(), why.c_str());
    std::fflush(stdout);
}

struct RunOutcome {
    double d_avg = 0.0;
    double map = 0.0;
    std::vector<double> weights;
    double seconds = 0.0;
};

RunOutcome run_recon(const Graph& g, const DistanceMatrix& dist, const std::string& sig, std::uint64_t seed,
                     bool gating) {
    ReconConfig cfg;
    cfg.signature = sig;
    cfg.gating_enabled = gating;
    cfg.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult res = train_reconstruction(g, dist, cfg);
    RunOutcome out;
    out.d_avg = res.report.eval.d_avg;
    out.map = res.report.eval.map;
    out.weights = res.report.final_weights;
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

// ---- criteria 1-4: distortion tables and the gated-vs-uniform ordering ----

void table_criteria() {
    struct Row {
        int id;
        const char* name;
        Graph graph;
        const char* sig;
        double bound;
    };
    std::vector<Row> rows;
    rows.push_back({1, "cycle(40) h2,s1 best-of-5 D_avg", generate_cycle(40), "h2,s1", 0.12});
    rows.push_back({2, "tree(2,40) h1,s2 best-of-5 D_avg", generate_tree(2, 40), "h1,s2", 0.06});
    rows.push_back({3, "ring-of-trees(40) h1,s2 best-of-5 D_avg", generate_ring_of_trees(8, 2, 2, 40), "h1,s2", 0.065});

    int order_total = 0;
    std::string order_detail;
    for (Row& row : rows) {
        const DistanceMatrix dist = apsp(row.graph);
        double best = 1e100, worst_time = 0.0;
        int gated_wins = 0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const RunOutcome gated = run_recon(row.graph, dist, row.sig, seed, true);
            const RunOutcome uniform = run_recon(row.graph, dist, row.sig, seed, false);
            if (seed < 5) {
                best = std::min(best, gated.d_avg);
                worst_time = std::max(worst_time, gated.seconds);
            }
            if (uniform.d_avg >= gated.d_avg) ++gated_wins;
        }
        record(row.id, row.name, best <= row.bound && worst_time <= 120.0,
               "best D_avg " + fmt(best) + " vs bound " + fmt(row.bound) + ", slowest seed " + fmt(worst_time) + "s");
        order_total += gated_wins >= 7 ? 1 : 0;
        order_detail += std::string(row.graph.name) + " " + std::to_string(gated_wins) + "/10  ";
    }
    record(4, "gated beats uniform on >=7/10 paired seeds per graph", order_total == 3, order_detail);
}

// ---- criterion 5: weight dominance ---------------------------------------

void dominance_criterion() {
    const Graph tree = generate_tree(2, 40);
    const Graph cycle = generate_cycle(40);
    const DistanceMatrix dt = apsp(tree), dc = apsp(cycle);
    int tree_h = 0, cycle_s = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const RunOutcome t = run_recon(tree, dt, "h2,s2", seed, true);
        if (t.weights[0] > t.weights[1]) ++tree_h;
        const RunOutcome c = run_recon(cycle, dc, "h2,s2", seed, true);
        if (c.weights[1] > c.weights[0]) ++cycle_s;
    }
    record(5, "weight dominance: tree s_H>s_S and cycle s_S>s_H on >=8/10 seeds", tree_h >= 8 && cycle_s >= 8,
           "tree " + std::to_string(tree_h) + "/10, cycle " + std::to_string(cycle_s) + "/10");
}

// ---- criterion 6: curvature closed forms ----------------------------------

void curvature_criterion() {
    bool pass = true;
    std::string detail = "ok";
    std::mt19937_64 rng(0);

    std::vector<std::pair<int, int>> star_edges;
    for (int leaf = 1; leaf <= 8; ++leaf) star_edges.emplace_back(0, leaf);
    const Graph star = graph_from_edges(9, star_edges);
    const DistanceMatrix ds = apsp(star);
    if (std::abs(node_curvature(star, ds, 0, star.n, rng) + 1.0) > 1e-12) {
        pass = false;
        detail = "star center != -1";
    }
    for (int n = 4; n <= 40 && pass; n += 2) {
        const Graph c = generate_cycle(n);
        const DistanceMatrix d = apsp(c);
        if (std::abs(node_curvature(c, d, 0, n, rng) - 1.0 / (n - 3)) > 1e-12) {
            pass = false;
            detail = "even cycle n=" + std::to_string(n);
        }
    }
    const Graph tree = generate_tree(2, 40);
    const DistanceMatrix dt = apsp(tree);
    for (int v = 0; v < tree.n && pass; ++v) {
        if (tree.degree(v) < 2) continue;
        const double xi = node_curvature(tree, dt, v, tree.n, rng);
        if (xi < -1.0 - 1e-12 || xi > 1e-12) {
            pass = false;
            detail = "tree node " + std::to_string(v) + " out of [-1,0]";
        }
    }
    record(6, "curvature closed forms (star, even cycles, tree range)", pass, detail);
}

// ---- criterion 7: geometry and gradient checks ----------------------------

bool geometry_roundtrips(std::string& detail) {
    std::mt19937_64 rng(1);
    for (const SpaceKind kind : {SpaceKind::Euclidean, SpaceKind::Spherical, SpaceKind::Hyperbolic}) {
        const ModelSpace space = ModelSpace::make(kind, 2);
        for (int it = 0; it < 400; ++it) {
            const ManifoldPoint x = testutil::random_point(space, 0.6, rng);
            const auto v = testutil::random_tangent(space, x.coords, 1.0, rng);
            std::vector<double> y(space.ambient_dim), back(space.ambient_dim);
            geo::exp_map(space, x.coords, v, y);
            geo::log_map(space, x.coords, y, back);
            for (int i = 0; i < space.ambient_dim; ++i)
                if (std::abs(back[i] - v[i]) > 1e-7) {
                    detail = "round trip failed";
                    return false;
                }
        }
    }
    return true;
}

bool triangle_signs(std::string& detail) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> side(0.2, 0.7);
    for (const SpaceKind kind : {SpaceKind::Euclidean, SpaceKind::Spherical, SpaceKind::Hyperbolic}) {
        const ModelSpace space = ModelSpace::make(kind, 2);
        int tested = 0;
        while (tested < 1000) {
            const ManifoldPoint p = testutil::random_point(space, 0.4, rng);
            auto u1 = testutil::random_tangent(space, p.coords, 1.0, rng);
            auto u2 = testutil::random_tangent(space, p.coords, 1.0, rng);
            const bool lorentz = kind == SpaceKind::Hyperbolic;
            const double n1 = geo::tangent_norm(space, u1);
            if (n1 < 1e-9) continue;
            for (double& e : u1) e /= n1;
            const double proj = lorentz ? la::lorentz_dot(u2, u1) : la::dot(u2, u1);
            for (std::size_t i = 0; i < u2.size(); ++i) u2[i] -= proj * u1[i];
            const double n2 = geo::tangent_norm(space, u2);
            if (n2 < 1e-9) continue;
            for (double& e : u2) e /= n2;
            const double t = side(rng), s = side(rng);
            std::vector<double> b(3), c(3), a(3), dir(3);
            for (int i = 0; i < 3; ++i) dir[i] = t * u1[i];
            geo::exp_map(space, p.coords, dir, b);
            for (int i = 0; i < 3; ++i) dir[i] = -t * u1[i];
            geo::exp_map(space, p.coords, dir, c);
            for (int i = 0; i < 3; ++i) dir[i] = s * u2[i];
            geo::exp_map(space, p.coords, dir, a);
            const double dab = geo::distance(space, a, b), dac = geo::distance(space, a, c),
                         dbc = geo::distance(space, b, c);
            if (std::min({dab, dac, dbc}) < 0.1 || std::max({dab, dac, dbc}) > 1.5) continue;
            std::vector<double> half(3), m(3);
            geo::log_map(space, b, c, half);
            for (double& e : half) e *= 0.5;
            geo::exp_map(space, b, half, m);
            const double dam = geo::distance(space, a, m);
            const double q = dam * dam + dbc * dbc / 4.0 - (dab * dab + dac * dac) / 2.0;
            const bool ok = kind == SpaceKind::Euclidean   ? std::abs(q) <= 1e-9
                            : kind == SpaceKind::Spherical ? q > 0.0
                                                           : q < 0.0;
            if (!ok) {
                detail = "triangle sign failed";
                return false;
            }
            ++tested;
        }
    }
    return true;
}

bool product_gradients(std::string& detail) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> wdist(0.2, 2.0);
    int checked = 0;
    while (checked < 100) {
        Signature sig = parse_signature(checked % 2 ? "h2,s2,e2" : "h2,s1");
        std::vector<double> raw(sig.count());
        for (double& v : raw) v = wdist(rng);
        sig = set_weights(std::move(sig), raw);
        const ProductPoint p = random_product_point(sig, 0.5, rng), q = random_product_point(sig, 0.5, rng);
        std::vector<double> comp(sig.count());
        weighted_sq_distance(sig, p.coords, q.coords, comp);
        bool in_band = true;
        for (double c2 : comp)
            if (std::sqrt(c2) < 0.05 || std::sqrt(c2) > 3.0) in_band = false;
        if (!in_band) continue;
        std::vector<double> grad(sig.total_ambient_dim);
        sq_distance_gradient(sig, p.coords, q.coords, grad, comp);
        for (int i = 0; i < sig.total_ambient_dim; ++i) {
            std::vector<double> pp = p.coords;
            pp[i] += 1e-5;
            const double up = weighted_sq_distance(sig, pp, q.coords);
            pp[i] -= 2e-5;
            const double dn = weighted_sq_distance(sig, pp, q.coords);
            const double fd = (up - dn) / 2e-5;
            if (std::abs(fd - grad[i]) / std::max({1.0, std::abs(fd), std::abs(grad[i])}) > 1e-4) {
                detail = "product distance gradient off at coord " + std::to_string(i);
                return false;
            }
        }
        ++checked;
    }
    return true;
}

bool autodiff_gradients(std::string& detail) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int round = 0; round < 10; ++round) {
        ad::Matrix a(3, 4), b(4, 2);
        for (double& v : a.data) v = gauss(rng);
        for (double& v : b.data) v = gauss(rng);
        const auto rep = ad::grad_check(
            [](ad::Tape& t, std::span<const ad::TensorRef> l) {
                return t.row_entropy_mean(t.row_softmax(t.matmul(l[0], l[1])));
            },
            std::vector<ad::Matrix>{a, b});
        if (!rep.pass(1e-5)) {
            detail = "autodiff primitive check failed: " + std::to_string(rep.max_rel_err);
            return false;
        }
    }
    return true;
}

bool gating_end_to_end(std::string& detail) {
    std::mt19937_64 rng(5);
    const Graph g = testutil::random_connected_graph(10, 0.35, rng);
    const DistanceMatrix dist = apsp(g);
    std::mt19937_64 frng(6);
    const NodeFeatures nf = node_features(g, dist, 8, frng);
    const ad::Matrix feats(nf.n, NodeFeatures::kDim, nf.data);
    GatingConfig gcfg;
    gcfg.heads = 2;
    GatingParams params = GatingParams::init(g.n, 3, 2, gcfg, rng);
    Signature sig0 = parse_signature("h2,s1");
    PointTable pts(g.n, sig0.total_ambient_dim);
    for (int i = 0; i < g.n; ++i) la::copy(random_product_point(sig0, 0.4, rng).coords, pts.row(i));

    auto full_loss = [&](const GatingParams& p) {
        GatingRun run = gating_forward(g, feats, p);
        const Signature sig = set_weights(sig0, run.output.raw_scores);
        double lbase = 0.0;
        long long pairs = 0;
        for (int i = 0; i < g.n; ++i)
            for (int j = i + 1; j < g.n; ++j) {
                const double dg2 = static_cast<double>(dist.at(i, j)) * dist.at(i, j);
                lbase += std::abs(weighted_sq_distance(sig, pts.row(i), pts.row(j)) / dg2 - 1.0);
                ++pairs;
            }
        return lbase / pairs + run.output.loss_lp + run.output.loss_e;
    };
    GatingRun run = gating_forward(g, feats, params);
    const Signature sig = set_weights(sig0, run.output.raw_scores);
    std::vector<double> sgrad(sig.count(), 0.0), comp(sig.count());
    const long long pairs = static_cast<long long>(g.n) * (g.n - 1) / 2;
    for (int i = 0; i < g.n; ++i)
        for (int j = i + 1; j < g.n; ++j) {
            const double dg2 = static_cast<double>(dist.at(i, j)) * dist.at(i, j);
            const double d2 = weighted_sq_distance(sig, pts.row(i), pts.row(j), comp);
            const double sign = d2 / dg2 > 1.0 ? 1.0 : -1.0;
            for (int k = 0; k < sig.count(); ++k) sgrad[k] += sign / dg2 * sig.scale * comp[k] / pairs;
        }
    const GatingGrads grads = gating_backward(run, sgrad, 1.0);
    auto check = [&](ad::Matrix& block, const ad::Matrix& analytic) {
        for (std::size_t i = 0; i < block.size(); ++i) {
            const double orig = block.data[i];
            block.data[i] = orig + 1e-5;
            const double up = full_loss(params);
            block.data[i] = orig - 1e-5;
            const double dn = full_loss(params);
            block.data[i] = orig;
            const double fd = (up - dn) / 2e-5;
            if (std::abs(fd - analytic.data[i]) / std::max({1.0, std::abs(fd), std::abs(analytic.data[i])}) > 1e-3)
                return false;
        }
        return true;
    };
    if (!check(params.w_assign[0], grads.w_assign[0]) || !check(params.w_embed[0], grads.w_embed[0]) ||
        !check(params.attn, grads.attn)) {
        detail = "gating end-to-end gradient check failed";
        return false;
    }
    return true;
}

bool kg_gradients(std::string& detail) {
    std::mt19937_64 seeds(7);
    for (int config = 0; config < 10; ++config) {
        std::mt19937_64 rng(seeds());
        Signature sig = parse_signature(config % 2 ? "h2,s2" : "h3,e2");
        KgParams p = KgParams::init(sig, 5, 2, 0.1, rng);
        const std::vector<Triple> pos = {{0, 0, 1}, {2, 1, 3}, {4, 0, 2}};
        const TripleSet filter(5, 2, pos);
        auto loss_of = [&](const KgParams& params) {
            std::mt19937_64 r(42);
            KgParams copy = params;
            return kg_loss_batch(copy, pos, 1, filter, r, true).loss;
        };
        std::mt19937_64 r(42);
        const KgBatchGrads grads = kg_loss_batch(p, pos, 1, filter, r, true);
        auto entry = [&](double* slot, double analytic) {
            const double orig = *slot;
            *slot = orig + 1e-5;
            const double up = loss_of(p);
            *slot = orig - 1e-5;
            const double dn = loss_of(p);
            *slot = orig;
            const double fd = (up - dn) / 2e-5;
            return std::abs(fd - analytic) / std::max({1.0, std::abs(fd), std::abs(analytic)}) <= 1e-3;
        };
        if (!entry(&p.entities.data[1], grads.entity_grad[1]) || !entry(&p.alpha[0], grads.alpha_g[0]) ||
            !entry(&p.beta[2], grads.beta_g[2]) || !entry(&p.gamma[0], grads.gamma_g[0]) ||
            !entry(&p.offset[1], grads.offset_g[1])) {
            detail = "kg loss gradient check failed at config " + std::to_string(config);
            return false;
        }
    }
    return true;
}

void geometry_criterion() {
    std::string detail = "round trips, triangle signs, and all gradient families in tolerance";
    bool pass = geometry_roundtrips(detail) && triangle_signs(detail) && product_gradients(detail) &&
                autodiff_gradients(detail) && gating_end_to_end(detail) && kg_gradients(detail);
    record(7, "geometry suite and analytic-vs-numeric gradients", pass, detail);
}

// ---- criterion 8: metric oracles -------------------------------------------

void metrics_criterion() {
    bool pass = true;
    std::string detail = "ok";

    const Graph path = graph_from_edges(3, {{0, 1}, {1, 2}});
    const DistanceMatrix pd = apsp(path);
    Signature e1 = parse_signature("e1");
    e1.weights = {1.0};
    PointTable pts(3, 1);
    pts.row(1)[0] = 1.0;
    pts.row(2)[0] = 2.0;
    if (std::abs(avg_distortion(pd, e1, pts)) > 1e-15 || std::abs(map_score(path, e1, pts) - 1.0) > 1e-15) {
        pass = false;
        detail = "isometric path embedding not scored perfectly";
    }

    std::mt19937_64 rng(8);
    for (int it = 0; it < 100 && pass; ++it) {
        const int n = 4 + static_cast<int>(rng() % 6);
        const Graph g = testutil::random_connected_graph(n, 0.4, rng);
        const DistanceMatrix d = apsp(g);
        const auto fw = testutil::floyd_warshall(g);
        for (int i = 0; i < n && pass; ++i)
            for (int j = 0; j < n; ++j)
                if (d.at(i, j) != fw[static_cast<std::size_t>(i) * n + j]) {
                    pass = false;
                    detail = "apsp mismatch vs Floyd-Warshall";
                    break;
                }
    }

    const std::vector<int> ranks = {1, 2, 4};
    const RankMetrics m = rank_metrics(ranks, 3);
    if (std::abs(m.mrr - (1.0 + 0.5 + 0.25) / 3.0) > 1e-12 || std::abs(m.hit_rate - 2.0 / 3.0) > 1e-12) {
        pass = false;
        detail = "rank metrics off on the (1,2,4) example";
    }
    record(8, "metric oracles (isometric path, Floyd-Warshall, rank metrics)", pass, detail);
}

// ---- criterion 9: desk-scale knowledge graph --------------------------------

void kg_criterion() {
    // balanced binary tree over 200 entities, parent/child relations
    TripleStore store;
    const int n = 200;
    for (int i = 0; i < n; ++i) store.entities.push_back("e" + std::to_string(i));
    store.relations = {"parent_of", "child_of"};
    std::vector<Triple> all;
    for (int child = 1; child < n; ++child) {
        const int parent = (child - 1) / 2;
        all.push_back({parent, 0, child});
        all.push_back({child, 1, parent});
    }
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (i % 10 == 9)
            store.test.push_back(all[i]);
        else if (i % 10 == 8)
            store.valid.push_back(all[i]);
        else
            store.train.push_back(all[i]);
    }

    // signature suggested by the curvature probe at 64 total dims
    const Graph eg = entity_graph(store);
    const DistanceMatrix dist = apsp(eg);
    const CurvatureSummary summary = curvature_summary(eg, dist, 200, 0);
    const std::string sig_text = suggest_signature(summary, 64);

    KgConfig cfg;
    cfg.epochs = 150;
    cfg.seed = 0;
    const KgTrainResult res = train_kg(store, parse_signature(sig_text), cfg);
    const KgEval eval = evaluate_kg(res.params, store, 3, true);

    const double baseline = 1.0 / std::ceil((n + 1) / 2.0);
    record(9, "desk-scale KG: filtered MRR >= 3x random baseline (sig " + sig_text + ")", eval.mrr >= 3.0 * baseline,
           "MRR " + fmt(eval.mrr) + " vs 3x baseline " + fmt(3.0 * baseline) + ", HR@3 " + fmt(eval.hit_rate));
}

// ---- criterion 10: optional large benchmark graph ---------------------------

void power_criterion() {
    const char* path = std::getenv("PME_ACCEPT_POWER");
    if (!path || !*path) {
        record_skip(10, "optional large-graph run (h5,s5, 300 epochs)",
                    "set PME_ACCEPT_POWER=<edge list> to enable; not CI-gating");
        return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const Graph g = load_edge_list(path);
    const DistanceMatrix dist = apsp(g);
    ReconConfig cfg;
    cfg.signature = "h5,s5";
    cfg.gating_enabled = true;
    cfg.gating.heads = 3;  // 4941 nodes: heads must divide n
    cfg.opt.epochs = 300;
    cfg.seed = 0;
    const TrainResult res = train_reconstruction(g, dist, cfg);
    const double mins = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
    record(10, "large graph h5,s5 D_avg <= 0.04 in <= 45 min", res.report.eval.d_avg <= 0.04 && mins <= 45.0,
           "D_avg " + fmt(res.report.eval.d_avg) + ", " + fmt(mins) + " min");
}

// ---- criterion 11: bitwise-deterministic reports -----------------------------

void determinism_criterion() {
    testutil::TempDir tmp;
    const std::string edges = tmp.file("c.edges");
    const std::string out = tmp.file("run");
    if (cli::dispatch({"gen", "--kind", "cycle", "--n", "24", "--out", edges}) != 0) {
        record(11, "bitwise-identical report.json for identical config+seed", false, "gen failed");
        return;
    }
    auto run_once = [&]() -> json {
        if (cli::dispatch({"recon", "--graph", edges, "--sig", "h2,s1", "--seed", "3", "--opt.epochs", "80", "--out",
                           out}) != 0)
            return json();
        std::ifstream in(out + "/report.json");
        json j;
        in >> j;
        return j;
    };
    json a = run_once();
    json b = run_once();
    if (a.is_null() || b.is_null()) {
        record(11, "bitwise-identical report.json for identical config+seed", false, "run failed");
        return;
    }
    a.erase("timing");
    b.erase("timing");
    record(11, "bitwise-identical report.json for identical config+seed", a.dump() == b.dump(),
           "compared full reports modulo the timing block");
}

}  // namespace

int main() {
    std::printf("acceptance suite\n================\n");
    table_criteria();
    dominance_criterion();
    curvature_criterion();
    geometry_criterion();
    metrics_criterion();
    kg_criterion();
    power_criterion();
    determinism_criterion();
    std::printf("================\n%s (%d failure%s)\n", failures == 0 ? "ALL ACCEPTED" : "FAILURES PRESENT", failures,
                failures == 1 ? "" : "s");
    return failures;
}
