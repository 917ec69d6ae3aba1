#include "pme/kg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "pme/la.hpp"

namespace pme {

namespace {

double softplus(double z) {
    if (z > 30.0) return z;
    if (z < -30.0) return std::exp(z);
    return std::log1p(std::exp(z));
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// ---- component-level forward/backward on stereo/ball coordinates --------

// kappa = -1: Poincare ball (hyperbolic); kappa = +1: stereographic sphere.
void gyro_add(double kappa, la::cspan x, la::cspan y, la::mspan out) {
    const double xy = la::dot(x, y);
    const double x2 = la::sq_norm(x);
    const double y2 = la::sq_norm(y);
    const double a = 1.0 - 2.0 * kappa * xy - kappa * y2;
    const double b = 1.0 + kappa * x2;
    double den = 1.0 - 2.0 * kappa * xy + kappa * kappa * x2 * y2;
    if (std::abs(den) < 1e-15) den = den < 0 ? -1e-15 : 1e-15;
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (a * x[i] + b * y[i]) / den;
}

void gyro_add_vjp(double kappa, la::cspan x, la::cspan y, la::cspan r, la::cspan gbar, la::mspan gx, la::mspan gy) {
    const double xy = la::dot(x, y);
    const double x2 = la::sq_norm(x);
    const double y2 = la::sq_norm(y);
    const double a = 1.0 - 2.0 * kappa * xy - kappa * y2;
    const double b = 1.0 + kappa * x2;
    double den = 1.0 - 2.0 * kappa * xy + kappa * kappa * x2 * y2;
    if (std::abs(den) < 1e-15) den = den < 0 ? -1e-15 : 1e-15;
    const double gxdot = la::dot(gbar, x);
    const double gydot = la::dot(gbar, y);
    const double grdot = la::dot(gbar, r);
    const double k2 = kappa * kappa;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double dA_dx = -2.0 * kappa * y[j];
        const double dB_dx = 2.0 * kappa * x[j];
        const double dDen_dx = -2.0 * kappa * y[j] + 2.0 * k2 * y2 * x[j];
        gx[j] += (a * gbar[j] + gxdot * dA_dx + gydot * dB_dx - grdot * dDen_dx) / den;
        const double dA_dy = -2.0 * kappa * x[j] - 2.0 * kappa * y[j];
        const double dDen_dy = -2.0 * kappa * x[j] + 2.0 * k2 * x2 * y[j];
        gy[j] += (b * gbar[j] + gxdot * dA_dy - grdot * dDen_dy) / den;
    }
}

// exp at the origin: out = f(||v||) v with f = tanh(n)/n (ball) or tan(n)/n.
void exp0(double kappa, la::cspan v, la::mspan out) {
    const double n = la::norm(v);
    const double f = kappa < 0 ? la::tanh_over(n) : (n < 1e-12 ? 1.0 : std::tan(n) / n);
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = f * v[i];
}

void exp0_vjp(double kappa, la::cspan v, la::cspan gbar, la::mspan gv) {
    const double n = la::norm(v);
    double f, fp_over_n;  // f(n) and f'(n)/n
    if (n < 1e-4) {
        if (kappa < 0) {
            f = 1.0 - n * n / 3.0;
            fp_over_n = -2.0 / 3.0;
        } else {
            f = 1.0 + n * n / 3.0;
            fp_over_n = 2.0 / 3.0;
        }
    } else if (kappa < 0) {
        const double th = std::tanh(n);
        f = th / n;
        fp_over_n = (n * (1.0 - th * th) - th) / (n * n * n);
    } else {
        const double tn = std::tan(n);
        f = tn / n;
        fp_over_n = (n * (1.0 + tn * tn) - tn) / (n * n * n);
    }
    const double vg = la::dot(v, gbar);
    for (std::size_t i = 0; i < v.size(); ++i) gv[i] += f * gbar[i] + vg * fp_over_n * v[i];
}

// Ambient (hyperboloid/sphere) point -> ball/stereo coordinates.
void to_stereo(la::cspan x, la::mspan u) {
    const double d = 1.0 + x[0];
    for (std::size_t i = 0; i + 1 < x.size(); ++i) u[i] = x[i + 1] / d;
}

void to_stereo_vjp(la::cspan x, la::cspan u, la::cspan gbar, la::mspan gx) {
    const double d = 1.0 + x[0];
    gx[0] += -la::dot(gbar, u) / d;
    for (std::size_t i = 0; i < u.size(); ++i) gx[i + 1] += gbar[i] / d;
}

void rotate(la::cspan x, la::cspan angles, la::mspan out) {
    for (std::size_t j = 0; j < angles.size(); ++j) {
        const double c = std::cos(angles[j]), s = std::sin(angles[j]);
        const double a = x[2 * j], b = x[2 * j + 1];
        out[2 * j] = c * a - s * b;
        out[2 * j + 1] = s * a + c * b;
    }
    if (x.size() % 2 == 1) out[x.size() - 1] = x[x.size() - 1];
}

void rotate_vjp(la::cspan x, la::cspan angles, la::cspan gbar, la::mspan gx, la::mspan gangles) {
    for (std::size_t j = 0; j < angles.size(); ++j) {
        const double c = std::cos(angles[j]), s = std::sin(angles[j]);
        const double a = x[2 * j], b = x[2 * j + 1];
        const double g0 = gbar[2 * j], g1 = gbar[2 * j + 1];
        gx[2 * j] += c * g0 + s * g1;
        gx[2 * j + 1] += -s * g0 + c * g1;
        gangles[j] += g0 * (-s * a - c * b) + g1 * (c * a - s * b);
    }
    if (x.size() % 2 == 1) gx[x.size() - 1] += gbar[x.size() - 1];
}

// Squared-distance gradient factors in stereo coordinates.
// Hyperbolic: cosh d = [(1+|q|^2)(1+|t|^2) - 4<q,t>] / [(1-|q|^2)(1-|t|^2)]
// Spherical:  cos d  = [(1-|q|^2)(1-|t|^2) + 4<q,t>] / [(1+|q|^2)(1+|t|^2)]
double stereo_dist(double kappa, la::cspan q, la::cspan t) {
    const double q2 = la::sq_norm(q), t2 = la::sq_norm(t);
    const double qt = la::dot(q, t);
    if (kappa < 0) {
        const double den = std::max((1.0 - q2) * (1.0 - t2), 1e-300);
        const double arg = ((1.0 + q2) * (1.0 + t2) - 4.0 * qt) / den;
        return std::acosh(std::max(1.0, arg));
    }
    const double arg = ((1.0 - q2) * (1.0 - t2) + 4.0 * qt) / ((1.0 + q2) * (1.0 + t2));
    return std::acos(std::clamp(arg, -1.0, 1.0));
}

// Adds w * d(d^2)/dq and w * d(d^2)/dt.
void stereo_dist_sq_vjp(double kappa, la::cspan q, la::cspan t, double w, la::mspan gq, la::mspan gt) {
    const double q2 = la::sq_norm(q), t2 = la::sq_norm(t);
    const double qt = la::dot(q, t);
    if (kappa < 0) {
        const double den = std::max((1.0 - q2) * (1.0 - t2), 1e-300);
        const double big = ((1.0 + q2) * (1.0 + t2) - 4.0 * qt) / den;
        const double d = std::acosh(std::max(1.0, big));
        if (d < 1e-7) return;
        const double k = w * 2.0 * d / std::sinh(d);
        for (std::size_t j = 0; j < q.size(); ++j) {
            gq[j] += k * (2.0 * q[j] * (1.0 + t2) - 4.0 * t[j] + 2.0 * big * (1.0 - t2) * q[j]) / den;
            gt[j] += k * (2.0 * t[j] * (1.0 + q2) - 4.0 * q[j] + 2.0 * big * (1.0 - q2) * t[j]) / den;
        }
        return;
    }
    const double den = (1.0 + q2) * (1.0 + t2);
    const double cosd = std::clamp(((1.0 - q2) * (1.0 - t2) + 4.0 * qt) / den, -1.0, 1.0);
    const double d = std::acos(cosd);
    if (d < 1e-7) return;
    const double k = -w * 2.0 * d / std::max(std::sin(d), 1e-9);
    for (std::size_t j = 0; j < q.size(); ++j) {
        gq[j] += k * (-2.0 * q[j] * (1.0 - t2) + 4.0 * t[j] - cosd * 2.0 * q[j] * (1.0 + t2)) / den;
        gt[j] += k * (-2.0 * t[j] * (1.0 - q2) + 4.0 * q[j] - cosd * 2.0 * t[j] * (1.0 + q2)) / den;
    }
}

// Forward intermediates of one component score, kept for the backward pass.
struct CompTrace {
    std::vector<double> u, t, av, bv, m1, m2, q;
    double d = 0.0;
};

// h_pt / t_pt are ambient component slices of the entity points.
double comp_forward(const ModelSpace& space, la::cspan h_pt, la::cspan t_pt, la::cspan alpha, la::cspan beta,
                    la::cspan angles, CompTrace& tr) {
    const int b = space.intrinsic_dim;
    tr.u.assign(b, 0.0);
    tr.t.assign(b, 0.0);
    tr.av.assign(b, 0.0);
    tr.bv.assign(b, 0.0);
    tr.m1.assign(b, 0.0);
    tr.m2.assign(b, 0.0);
    tr.q.assign(b, 0.0);
    if (space.kind == SpaceKind::Euclidean) {
        la::copy(h_pt, tr.u);
        la::copy(t_pt, tr.t);
        for (int i = 0; i < b; ++i) tr.m1[i] = tr.u[i] + alpha[i];
        rotate(tr.m1, angles, tr.m2);
        for (int i = 0; i < b; ++i) tr.q[i] = tr.m2[i] + beta[i];
        tr.d = la::dist(tr.q, tr.t);
        return tr.d;
    }
    const double kappa = space.kind == SpaceKind::Hyperbolic ? -1.0 : 1.0;
    to_stereo(h_pt, tr.u);
    to_stereo(t_pt, tr.t);
    exp0(kappa, alpha, tr.av);
    exp0(kappa, beta, tr.bv);
    gyro_add(kappa, tr.u, tr.av, tr.m1);
    rotate(tr.m1, angles, tr.m2);
    gyro_add(kappa, tr.m2, tr.bv, tr.q);
    tr.d = stereo_dist(kappa, tr.q, tr.t);
    return tr.d;
}

// w = dL/d(d_k^2); accumulates into the ambient entity slices and the
// relation parameter slices.
void comp_backward(const ModelSpace& space, la::cspan h_pt, la::cspan t_pt, la::cspan alpha, la::cspan beta,
                   la::cspan angles, const CompTrace& tr, double w, la::mspan gh, la::mspan gt_pt, la::mspan galpha,
                   la::mspan gbeta, la::mspan gangles) {
    const int b = space.intrinsic_dim;
    std::vector<double> gq(b, 0.0), gt(b, 0.0);
    if (space.kind == SpaceKind::Euclidean) {
        for (int i = 0; i < b; ++i) {
            const double diff = 2.0 * w * (tr.q[i] - tr.t[i]);
            gq[i] = diff;
            gt[i] = -diff;
        }
        std::vector<double> gm2 = gq;  // q = m2 + beta
        for (int i = 0; i < b; ++i) gbeta[i] += gq[i];
        std::vector<double> gm1(b, 0.0);
        rotate_vjp(tr.m1, angles, gm2, gm1, gangles);
        for (int i = 0; i < b; ++i) {
            gh[i] += gm1[i];
            galpha[i] += gm1[i];
            gt_pt[i] += gt[i];
        }
        return;
    }
    const double kappa = space.kind == SpaceKind::Hyperbolic ? -1.0 : 1.0;
    stereo_dist_sq_vjp(kappa, tr.q, tr.t, w, gq, gt);
    // q = m2 (+) bv
    std::vector<double> gm2(b, 0.0), gbv(b, 0.0);
    gyro_add_vjp(kappa, tr.m2, tr.bv, tr.q, gq, gm2, gbv);
    // m2 = rot(m1)
    std::vector<double> gm1(b, 0.0);
    rotate_vjp(tr.m1, angles, gm2, gm1, gangles);
    // m1 = u (+) av
    std::vector<double> gu(b, 0.0), gav(b, 0.0);
    gyro_add_vjp(kappa, tr.u, tr.av, tr.m1, gm1, gu, gav);
    // av/bv = exp0(alpha/beta)
    exp0_vjp(kappa, alpha, gav, galpha);
    exp0_vjp(kappa, beta, gbv, gbeta);
    // u/t = to_stereo(ambient)
    to_stereo_vjp(h_pt, tr.u, gu, gh);
    to_stereo_vjp(t_pt, tr.t, gt, gt_pt);
}

}  // namespace

// ---- stores ---------------------------------------------------------------

TripleSet::TripleSet(int entity_count, int relation_count, std::span<const Triple> triples)
    : ent_(static_cast<std::uint64_t>(entity_count)), rel_(static_cast<std::uint64_t>(relation_count)) {
    set_.reserve(triples.size() * 2);
    for (const Triple& t : triples) insert(t);
}

std::uint64_t TripleSet::pack(const Triple& t) const {
    return (static_cast<std::uint64_t>(t.h) * rel_ + static_cast<std::uint64_t>(t.r)) * ent_ +
           static_cast<std::uint64_t>(t.t);
}

bool TripleSet::contains(const Triple& t) const { return set_.count(pack(t)) > 0; }
void TripleSet::insert(const Triple& t) { set_.insert(pack(t)); }

TripleStore load_triples(const std::string& dir) {
    TripleStore store;
    std::unordered_map<std::string, int> ent_ids, rel_ids;
    auto intern = [](std::unordered_map<std::string, int>& ids, std::vector<std::string>& names,
                     const std::string& s) {
        auto [it, inserted] = ids.emplace(s, static_cast<int>(names.size()));
        if (inserted) names.push_back(s);
        return it->second;
    };
    auto read = [&](const char* file, std::vector<Triple>& out) {
        const std::string path = dir + "/" + file;
        std::ifstream in(path);
        if (!in) throw io_error("missing triple file: " + path);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::string h, r, t;
            std::size_t tab1 = line.find('\t');
            std::size_t tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
            if (tab2 != std::string::npos) {
                h = line.substr(0, tab1);
                r = line.substr(tab1 + 1, tab2 - tab1 - 1);
                t = line.substr(tab2 + 1);
                while (!t.empty() && (t.back() == '\r' || t.back() == '\n')) t.pop_back();
            } else {
                std::istringstream ls(line);
                if (!(ls >> h >> r >> t))
                    throw io_error(path + ":" + std::to_string(lineno) + ": expected 'head rel tail'");
            }
            out.push_back({intern(ent_ids, store.entities, h), intern(rel_ids, store.relations, r),
                           intern(ent_ids, store.entities, t)});
        }
    };
    read("train.txt", store.train);
    read("valid.txt", store.valid);
    read("test.txt", store.test);

    TripleSet train_set(store.entity_count(), store.relation_count(), store.train);
    std::vector<bool> seen(store.entities.size(), false);
    for (const Triple& t : store.train) seen[t.h] = seen[t.t] = true;
    for (const Triple& t : store.test) {
        if (train_set.contains(t)) ++store.test_train_duplicates;
        if (!seen[t.h]) ++store.unseen_test_entities;
        if (!seen[t.t]) ++store.unseen_test_entities;
    }
    return store;
}

Graph entity_graph(const TripleStore& store) {
    std::vector<std::pair<int, int>> edges;
    edges.reserve(store.train.size());
    for (const Triple& t : store.train) edges.emplace_back(t.h, t.t);
    return graph_from_edges(store.entity_count(), edges, "kg_entity_graph");
}

// ---- parameters -------------------------------------------------------------

void KgParams::set_signature(Signature s) {
    rot_offsets.clear();
    int rot = 0;
    for (const ModelSpace& c : s.components) {
        rot_offsets.push_back(rot);
        rot += c.intrinsic_dim / 2;
    }
    rot_offsets.push_back(rot);
    rot_total = rot;
    sig = std::move(s);
}

KgParams KgParams::init(const Signature& sig, int entities, int relations, double init_scale,
                        std::mt19937_64& rng) {
    KgParams p;
    p.set_signature(sig);
    p.relation_count = relations;
    p.entities = PointTable(entities, sig.total_ambient_dim);
    for (int i = 0; i < entities; ++i) {
        const ProductPoint pt = random_product_point(sig, init_scale, rng);
        la::copy(pt.coords, p.entities.row(i));
    }
    const int rot = p.rot_total;
    std::uniform_real_distribution<double> small(-0.05, 0.05);
    std::uniform_real_distribution<double> angle(-0.1, 0.1);
    p.alpha.resize(static_cast<std::size_t>(relations) * sig.total_intrinsic_dim);
    p.beta.resize(p.alpha.size());
    p.gamma.resize(static_cast<std::size_t>(relations) * rot);
    p.offset.assign(relations, 0.5);
    for (double& v : p.alpha) v = small(rng);
    for (double& v : p.beta) v = small(rng);
    for (double& v : p.gamma) v = angle(rng);
    return p;
}

std::span<const double> KgParams::alpha_of(int r) const {
    return {alpha.data() + static_cast<std::size_t>(r) * sig.total_intrinsic_dim,
            static_cast<std::size_t>(sig.total_intrinsic_dim)};
}
std::span<const double> KgParams::beta_of(int r) const {
    return {beta.data() + static_cast<std::size_t>(r) * sig.total_intrinsic_dim,
            static_cast<std::size_t>(sig.total_intrinsic_dim)};
}
std::span<const double> KgParams::gamma_of(int r) const {
    return {gamma.data() + static_cast<std::size_t>(r) * rot_total, static_cast<std::size_t>(rot_total)};
}

namespace {

struct TripleScore {
    double d = 0.0;                 // weighted product distance
    std::vector<CompTrace> traces;  // per component
    std::vector<double> comp_d;     // raw component distances
};

void score_forward(const KgParams& p, int h, int r, int t, TripleScore& out) {
    const Signature& sig = p.sig;
    out.traces.resize(sig.count());
    out.comp_d.assign(sig.count(), 0.0);
    const auto hrow = p.entities.row(h);
    const auto trow = p.entities.row(t);
    const auto alpha = p.alpha_of(r);
    const auto beta = p.beta_of(r);
    const auto gamma = p.gamma_of(r);
    int ioff = 0;
    double total = 0.0;
    for (int k = 0; k < sig.count(); ++k) {
        const ModelSpace& space = sig.components[k];
        const int b = space.intrinsic_dim;
        const int aoff = sig.offsets[k];
        const int roff = p.rot_offsets[k];
        const int nrot = p.rot_offsets[k + 1] - roff;
        const double d =
            comp_forward(space, hrow.subspan(aoff, space.ambient_dim), trow.subspan(aoff, space.ambient_dim),
                         alpha.subspan(ioff, b), beta.subspan(ioff, b), gamma.subspan(roff, nrot), out.traces[k]);
        out.comp_d[k] = d;
        total += sig.scale * sig.weights[k] * d * d;
        ioff += b;
    }
    out.d = std::sqrt(std::max(0.0, total));
}

// dl_dd = dL/d(d_r); spreads into entity and relation gradients.
void score_backward(const KgParams& p, int h, int r, int t, const TripleScore& sc, double dl_dd,
                    std::span<double> entity_grad, std::span<double> alpha_g, std::span<double> beta_g,
                    std::span<double> gamma_g) {
    if (sc.d < 1e-9) return;
    const Signature& sig = p.sig;
    const int dim = sig.total_ambient_dim;
    const auto hrow = p.entities.row(h);
    const auto trow = p.entities.row(t);
    const auto alpha = p.alpha_of(r);
    const auto beta = p.beta_of(r);
    const auto gamma = p.gamma_of(r);
    auto gh_row = entity_grad.subspan(static_cast<std::size_t>(h) * dim, dim);
    auto gt_row = entity_grad.subspan(static_cast<std::size_t>(t) * dim, dim);
    auto ga_row = alpha_g.subspan(static_cast<std::size_t>(r) * sig.total_intrinsic_dim, sig.total_intrinsic_dim);
    auto gb_row = beta_g.subspan(static_cast<std::size_t>(r) * sig.total_intrinsic_dim, sig.total_intrinsic_dim);
    auto gg_row = gamma_g.subspan(static_cast<std::size_t>(r) * p.rot_total, p.rot_total);
    int ioff = 0;
    for (int k = 0; k < sig.count(); ++k) {
        const ModelSpace& space = sig.components[k];
        const int b = space.intrinsic_dim;
        const int aoff = sig.offsets[k];
        const int roff = p.rot_offsets[k];
        const int nrot = p.rot_offsets[k + 1] - roff;
        // dL/d(d_k^2) = dl_dd * scale * s_k / (2 d_r)
        const double w = dl_dd * sig.scale * sig.weights[k] / (2.0 * sc.d);
        comp_backward(space, hrow.subspan(aoff, space.ambient_dim), trow.subspan(aoff, space.ambient_dim),
                      alpha.subspan(ioff, b), beta.subspan(ioff, b), gamma.subspan(roff, nrot), sc.traces[k], w,
                      gh_row.subspan(aoff, space.ambient_dim), gt_row.subspan(aoff, space.ambient_dim),
                      ga_row.subspan(ioff, b), gb_row.subspan(ioff, b), gg_row.subspan(roff, nrot));
        ioff += b;
    }
}

}  // namespace

double score_triple(const KgParams& params, int h, int r, int t) {
    if (h < 0 || h >= params.entities.n || t < 0 || t >= params.entities.n)
        throw usage_error("score_triple: entity id out of range");
    if (r < 0 || r >= params.relation_count) throw usage_error("score_triple: relation id out of range");
    TripleScore sc;
    score_forward(params, h, r, t, sc);
    return sc.d;
}

KgBatchGrads kg_loss_batch(const KgParams& params, std::span<const Triple> positives, int n_neg,
                           const TripleSet& train_filter, std::mt19937_64& rng, bool use_offset) {
    if (n_neg < 1) throw usage_error("kg_loss_batch: n_neg must be >= 1");
    KgBatchGrads out;
    out.entity_grad.assign(params.entities.data.size(), 0.0);
    out.alpha_g.assign(params.alpha.size(), 0.0);
    out.beta_g.assign(params.beta.size(), 0.0);
    out.gamma_g.assign(params.gamma.size(), 0.0);
    out.offset_g.assign(params.offset.size(), 0.0);

    std::uniform_int_distribution<int> pick_entity(0, params.entities.n - 1);
    std::uniform_int_distribution<int> coin(0, 1);
    TripleScore sc;
    auto accumulate = [&](const Triple& tr, double y) {
        score_forward(params, tr.h, tr.r, tr.t, sc);
        const double b0 = use_offset ? params.offset[tr.r] : 0.0;
        const double z = y * (sc.d - b0);
        out.loss += softplus(z);
        const double sz = sigmoid(z);
        const double dl_dd = y * sz;
        if (use_offset) out.offset_g[tr.r] += -y * sz;
        score_backward(params, tr.h, tr.r, tr.t, sc, dl_dd, out.entity_grad, out.alpha_g, out.beta_g, out.gamma_g);
        ++out.triples;
    };

    for (const Triple& pos : positives) {
        accumulate(pos, 1.0);
        for (int s = 0; s < n_neg; ++s) {
            Triple neg = pos;
            for (int tries = 0; tries < 64; ++tries) {
                neg = pos;
                if (coin(rng) == 0)
                    neg.h = pick_entity(rng);
                else
                    neg.t = pick_entity(rng);
                if (!train_filter.contains(neg)) break;
            }
            accumulate(neg, -1.0);
        }
    }
    if (out.triples > 0) {
        const double inv = 1.0 / static_cast<double>(out.triples);
        out.loss *= inv;
        for (double& v : out.entity_grad) v *= inv;
        for (double& v : out.alpha_g) v *= inv;
        for (double& v : out.beta_g) v *= inv;
        for (double& v : out.gamma_g) v *= inv;
        for (double& v : out.offset_g) v *= inv;
    }
    return out;
}

KgTrainResult train_kg(const TripleStore& store, const Signature& sig, const KgConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    if (store.train.empty()) throw usage_error("train_kg: empty train split");
    std::mt19937_64 rng(cfg.seed);

    Signature weighted = sig;
    KgTrainResult result;
    if (cfg.gating_weights && sig.count() > 1) {
        const Graph eg = entity_graph(store);
        bool ok = eg.n >= 4 && eg.n % cfg.gating.heads == 0;
        DistanceMatrix dist;
        if (ok) {
            try {
                dist = apsp(eg);
            } catch (const usage_error&) {
                ok = false;  // disconnected entity graph, keep uniform weights
            }
        }
        if (ok) {
            const NodeFeatures nf = node_features(eg, dist, cfg.gating.feature_budget, rng);
            const ad::Matrix features(nf.n, NodeFeatures::kDim, nf.data);
            const GatingParams gp = GatingParams::init(eg.n, NodeFeatures::kDim, sig.count(), cfg.gating, rng);
            GatingRun run = gating_forward(eg, features, gp);
            weighted = set_weights(std::move(weighted), run.output.raw_scores);
            result.report.gating_used = true;
        }
    }

    KgParams params = KgParams::init(weighted, store.entity_count(), store.relation_count(), cfg.init_scale, rng);
    const TripleSet train_filter(store.entity_count(), store.relation_count(), store.train);
    RsgdConfig opt = cfg.opt;
    opt.epochs = cfg.epochs;  // resolved budget drives the lr schedule

    AdamState st_alpha, st_beta, st_gamma, st_offset;
    std::vector<std::size_t> order(store.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t batch = cfg.batch > 0 ? static_cast<std::size_t>(cfg.batch) : store.train.size();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = effective_lr(opt, epoch);
        double epoch_loss = 0.0;
        long long epoch_triples = 0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            std::vector<Triple> positives;
            positives.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) positives.push_back(store.train[order[i]]);
            KgBatchGrads grads = kg_loss_batch(params, positives, cfg.n_neg, train_filter, rng, cfg.use_offset);
            epoch_loss += grads.loss * static_cast<double>(grads.triples);
            epoch_triples += grads.triples;
            rsgd_step(params.sig, params.entities, grads.entity_grad, lr, cfg.opt.clip);
            adam_step(params.alpha, grads.alpha_g, st_alpha, cfg.adam_lr);
            adam_step(params.beta, grads.beta_g, st_beta, cfg.adam_lr);
            if (!params.gamma.empty()) adam_step(params.gamma, grads.gamma_g, st_gamma, cfg.adam_lr);
            if (cfg.use_offset) adam_step(params.offset, grads.offset_g, st_offset, cfg.adam_lr);
        }
        result.report.loss_trace.push_back(epoch_loss / static_cast<double>(epoch_triples));
    }

    result.report.weights = params.sig.weights;
    result.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.params = std::move(params);
    return result;
}

KgEval evaluate_kg(const KgParams& params, const TripleStore& store, int k, bool filtered) {
    if (store.test.empty()) throw usage_error("evaluate_kg: empty test split");
    std::vector<Triple> all;
    all.reserve(store.train.size() + store.valid.size() + store.test.size());
    all.insert(all.end(), store.train.begin(), store.train.end());
    all.insert(all.end(), store.valid.begin(), store.valid.end());
    all.insert(all.end(), store.test.begin(), store.test.end());
    const TripleSet known(store.entity_count(), store.relation_count(), all);

    const int ntest = static_cast<int>(store.test.size());
    std::vector<int> ranks(2 * ntest, 0);
#pragma omp parallel for schedule(dynamic, 4)
    for (int i = 0; i < ntest; ++i) {
        const Triple& tr = store.test[i];
        const double target = score_triple(params, tr.h, tr.r, tr.t);
        int below_t = 0, ties_t = 0, below_h = 0, ties_h = 0;
        for (int e = 0; e < params.entities.n; ++e) {
            if (e != tr.t) {
                Triple cand{tr.h, tr.r, e};
                if (!(filtered && known.contains(cand))) {
                    const double d = score_triple(params, cand.h, cand.r, cand.t);
                    if (d < target) ++below_t;
                    else if (d == target) ++ties_t;
                }
            }
            if (e != tr.h) {
                Triple cand{e, tr.r, tr.t};
                if (!(filtered && known.contains(cand))) {
                    const double d = score_triple(params, cand.h, cand.r, cand.t);
                    if (d < target) ++below_h;
                    else if (d == target) ++ties_h;
                }
            }
        }
        ranks[2 * i] = 1 + below_t + ties_t;      // tail corruption
        ranks[2 * i + 1] = 1 + below_h + ties_h;  // head corruption
    }
    const RankMetrics m = rank_metrics(ranks, k);
    KgEval eval;
    eval.mrr = m.mrr;
    eval.hit_rate = m.hit_rate;
    eval.k = k;
    eval.ranks = static_cast<long long>(ranks.size());
    return eval;
}

}  // namespace pme
