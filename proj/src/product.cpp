#include "pme/product.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "pme/la.hpp"

namespace pme {

namespace {

void finalize(Signature& sig) {
    sig.total_ambient_dim = 0;
    sig.total_intrinsic_dim = 0;
    sig.offsets.clear();
    for (const ModelSpace& c : sig.components) {
        sig.offsets.push_back(sig.total_ambient_dim);
        sig.total_ambient_dim += c.ambient_dim;
        sig.total_intrinsic_dim += c.intrinsic_dim;
    }
}

void check_point(const Signature& sig, geo::cspan p, const char* what) {
    if (static_cast<int>(p.size()) != sig.total_ambient_dim)
        throw usage_error(std::string(what) + ": point has " + std::to_string(p.size()) + " coords, signature needs " +
                          std::to_string(sig.total_ambient_dim));
}

}  // namespace

std::string Signature::to_string() const {
    std::string out;
    std::size_t i = 0;
    while (i < components.size()) {
        std::size_t run = 1;
        while (i + run < components.size() && components[i + run] == components[i]) ++run;
        if (!out.empty()) out += ',';
        out += kind_letter(components[i].kind);
        out += std::to_string(components[i].intrinsic_dim);
        if (run > 1) out += "*" + std::to_string(run);
        i += run;
    }
    return out;
}

bool Signature::same_structure(const Signature& o) const { return components == o.components; }

Signature parse_signature(const std::string& text) {
    if (text.empty()) throw usage_error("signature parse error at offset 0: empty string");
    Signature sig;
    std::size_t i = 0;
    auto fail = [&](const std::string& msg) -> void {
        throw usage_error("signature parse error at offset " + std::to_string(i) + ": " + msg);
    };
    auto read_int = [&](const char* what) {
        if (i >= text.size() || !std::isdigit(static_cast<unsigned char>(text[i]))) fail(std::string("expected ") + what);
        long v = 0;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
            v = v * 10 + (text[i] - '0');
            if (v > 1'000'000) fail("value too large");
            ++i;
        }
        return static_cast<int>(v);
    };
    while (true) {
        SpaceKind kind = SpaceKind::Euclidean;
        if (i >= text.size()) fail("expected component kind");
        switch (text[i]) {
            case 'h': kind = SpaceKind::Hyperbolic; break;
            case 's': kind = SpaceKind::Spherical; break;
            case 'e': kind = SpaceKind::Euclidean; break;
            default: fail(std::string("unknown kind '") + text[i] + "'");
        }
        ++i;
        const int dim = read_int("dimension");
        if (dim == 0) fail("zero dimension");
        int reps = 1;
        if (i < text.size() && text[i] == '*') {
            ++i;
            reps = read_int("repetition count");
            if (reps == 0) fail("zero repetition");
        }
        for (int r = 0; r < reps; ++r) sig.components.push_back(ModelSpace::make(kind, dim));
        if (i == text.size()) break;
        if (text[i] != ',') fail("expected ','");
        ++i;
    }
    sig.weights.assign(sig.components.size(), 1.0 / static_cast<double>(sig.components.size()));
    finalize(sig);
    return sig;
}

Signature set_weights(Signature sig, std::span<const double> raw_scores) {
    if (static_cast<int>(raw_scores.size()) != sig.count())
        throw usage_error("set_weights: expected " + std::to_string(sig.count()) + " scores");
    for (double v : raw_scores)
        if (!std::isfinite(v)) throw usage_error("set_weights: non-finite score");
    sig.weights.assign(raw_scores.begin(), raw_scores.end());
    la::softmax_inplace(sig.weights);
    return sig;
}

double weighted_sq_distance(const Signature& sig, geo::cspan p, geo::cspan q) {
    return weighted_sq_distance(sig, p, q, {});
}

double weighted_sq_distance(const Signature& sig, geo::cspan p, geo::cspan q, std::span<double> comp_sq) {
    check_point(sig, p, "weighted_sq_distance p");
    check_point(sig, q, "weighted_sq_distance q");
    double total = 0.0;
    for (int k = 0; k < sig.count(); ++k) {
        const int off = sig.offsets[k], dim = sig.components[k].ambient_dim;
        const double d = geo::distance_unchecked(sig.components[k], p.subspan(off, dim), q.subspan(off, dim));
        const double d2 = d * d;
        if (!comp_sq.empty()) comp_sq[k] = d2;
        total += sig.weights[k] * d2;
    }
    return sig.scale * total;
}

namespace {

// Writes the ambient gradient of scale*s_k*dist^2 for one component into
// grad_p (and grad_q when given). Returns the raw squared distance.
double component_sq_grad(const ModelSpace& space, double w, geo::cspan x, geo::cspan y, geo::mspan gp, geo::mspan gq) {
    switch (space.kind) {
        case SpaceKind::Euclidean: {
            double d2 = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double diff = x[i] - y[i];
                d2 += diff * diff;
                gp[i] = 2.0 * w * diff;
                if (!gq.empty()) gq[i] = -2.0 * w * diff;
            }
            return d2;
        }
        case SpaceKind::Spherical: {
            const double t = std::clamp(la::dot(x, y), -1.0, 1.0);
            const double d = std::acos(t);
            if (d < 1e-7) {
                la::fill(gp, 0.0);
                if (!gq.empty()) la::fill(gq, 0.0);
                return d * d;
            }
            // d(dist^2)/dx = -2 d / sin(d) * y; the factor blows up at the
            // antipodal cut locus, where the tangent projection kills most of
            // it anyway, so cap the denominator
            const double k = -2.0 * w * d / std::max(std::sin(d), 1e-9);
            for (std::size_t i = 0; i < x.size(); ++i) {
                gp[i] = k * y[i];
                if (!gq.empty()) gq[i] = k * x[i];
            }
            return d * d;
        }
        case SpaceKind::Hyperbolic: {
            const double u = std::max(1.0, -la::lorentz_dot(x, y));
            const double d = std::acosh(u);
            if (d < 1e-7) {
                la::fill(gp, 0.0);
                if (!gq.empty()) la::fill(gq, 0.0);
                return d * d;
            }
            // d(dist^2)/dx = -2 d / sinh(d) * G y with G = diag(-1,1,...,1)
            const double k = -2.0 * w * d / std::sinh(d);
            gp[0] = -k * y[0];
            if (!gq.empty()) gq[0] = -k * x[0];
            for (std::size_t i = 1; i < x.size(); ++i) {
                gp[i] = k * y[i];
                if (!gq.empty()) gq[i] = k * x[i];
            }
            return d * d;
        }
    }
    return 0.0;
}

}  // namespace

void sq_distance_gradient(const Signature& sig, geo::cspan p, geo::cspan q, std::span<double> grad_p,
                          std::span<double> comp_sq) {
    pair_sq_distance_gradient(sig, p, q, grad_p, {}, comp_sq);
}

void pair_sq_distance_gradient(const Signature& sig, geo::cspan p, geo::cspan q, std::span<double> grad_p,
                               std::span<double> grad_q, std::span<double> comp_sq) {
    check_point(sig, p, "sq_distance_gradient p");
    check_point(sig, q, "sq_distance_gradient q");
    for (int k = 0; k < sig.count(); ++k) {
        const int off = sig.offsets[k], dim = sig.components[k].ambient_dim;
        geo::mspan gq = grad_q.empty() ? geo::mspan{} : geo::mspan(grad_q.subspan(off, dim));
        comp_sq[k] = component_sq_grad(sig.components[k], sig.scale * sig.weights[k], p.subspan(off, dim),
                                       q.subspan(off, dim), grad_p.subspan(off, dim), gq);
    }
}

ProductPoint random_product_point(const Signature& sig, double scale, std::mt19937_64& rng) {
    if (scale > 0.5) throw usage_error("random_product_point: scale must be <= 0.5");
    ProductPoint p;
    p.coords.assign(sig.total_ambient_dim, 0.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> tangent, base;
    for (int k = 0; k < sig.count(); ++k) {
        const ModelSpace& space = sig.components[k];
        const int off = sig.offsets[k], dim = space.ambient_dim;
        base.assign(dim, 0.0);
        geo::base_point(space, base);
        tangent.assign(dim, 0.0);
        // Gaussian in the tangent space at the base point: for S/H the base is
        // (1,0,...,0), whose tangent space is spanned by the remaining axes.
        const int first = space.kind == SpaceKind::Euclidean ? 0 : 1;
        for (int i = first; i < dim; ++i) tangent[i] = scale * gauss(rng);
        geo::exp_map(space, base, tangent, geo::mspan(p.coords).subspan(off, dim));
    }
    return p;
}

double product_point_violation(const Signature& sig, geo::cspan p) {
    check_point(sig, p, "product_point_violation");
    double worst = 0.0;
    for (int k = 0; k < sig.count(); ++k) {
        const int off = sig.offsets[k], dim = sig.components[k].ambient_dim;
        worst = std::max(worst, geo::point_violation(sig.components[k], p.subspan(off, dim)));
    }
    return worst;
}

}  // namespace pme
