#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "pme/la.hpp"
#include "pme/product.hpp"
#include "test_util.hpp"

using namespace pme;

namespace {

ProductPoint sample(const Signature& sig, double spread, std::mt19937_64& rng) {
    return random_product_point(sig, spread, rng);
}

// Central-difference oracle for the ambient gradient: the distance formulas
// extend smoothly off the manifold, so perturbing a raw coordinate
// differentiates exactly what sq_distance_gradient claims to compute.
double fd_sq_distance(const Signature& sig, std::vector<double> p, const std::vector<double>& q, int coord,
                      double step) {
    p[coord] += step;
    const double up = weighted_sq_distance(sig, p, q);
    p[coord] -= 2 * step;
    const double dn = weighted_sq_distance(sig, p, q);
    return (up - dn) / (2 * step);
}

}  // namespace

TEST_CASE("signature parsing") {
    const Signature a = parse_signature("h2,s1");
    CHECK(a.count() == 2);
    CHECK(a.components[0].kind == SpaceKind::Hyperbolic);
    CHECK(a.components[0].intrinsic_dim == 2);
    CHECK(a.components[0].ambient_dim == 3);
    CHECK(a.components[1].intrinsic_dim == 1);
    CHECK(a.components[1].ambient_dim == 2);
    CHECK(a.total_ambient_dim == 5);
    CHECK(a.weights[0] == doctest::Approx(0.5));
    CHECK(a.weights[1] == doctest::Approx(0.5));

    const Signature b = parse_signature("h10*3,s10*2");
    CHECK(b.count() == 5);
    CHECK(b.components[2].kind == SpaceKind::Hyperbolic);
    CHECK(b.components[3].kind == SpaceKind::Spherical);
    CHECK(b.total_ambient_dim == 5 * 11);
    CHECK(b.to_string() == "h10*3,s10*2");
    CHECK(parse_signature(b.to_string()).components == b.components);

    CHECK_THROWS_WITH_AS(parse_signature("x3"), doctest::Contains("offset 0"), usage_error);
    CHECK_THROWS_AS(parse_signature(""), usage_error);
    CHECK_THROWS_AS(parse_signature("h0"), usage_error);
    CHECK_THROWS_AS(parse_signature("h2*0"), usage_error);
    CHECK_THROWS_AS(parse_signature("h2,,s1"), usage_error);
    CHECK_THROWS_AS(parse_signature("h2,s1,"), usage_error);
}

TEST_CASE("set_weights softmax") {
    Signature sig = parse_signature("e2,e2");
    sig = set_weights(std::move(sig), std::vector<double>{0.0, 0.0});
    CHECK(sig.weights[0] == doctest::Approx(0.5));

    Signature s3 = parse_signature("e1,e1,e1");
    s3 = set_weights(std::move(s3), std::vector<double>{7.3, 7.3, 7.3});
    for (double w : s3.weights) CHECK(w == doctest::Approx(1.0 / 3).epsilon(1e-15));

    Signature s2 = parse_signature("e1,e1");
    s2 = set_weights(std::move(s2), std::vector<double>{std::log(4.0), 0.0});
    CHECK(s2.weights[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(s2.weights[1] == doctest::Approx(0.2).epsilon(1e-12));

    // shift invariance to 1e-12
    Signature sa = parse_signature("e1,e1,e1");
    Signature sb = sa;
    sa = set_weights(std::move(sa), std::vector<double>{0.3, -1.2, 2.0});
    sb = set_weights(std::move(sb), std::vector<double>{100.3, 98.8, 102.0});
    for (int k = 0; k < 3; ++k) CHECK(sa.weights[k] == doctest::Approx(sb.weights[k]).epsilon(1e-12));

    CHECK_THROWS_AS(set_weights(parse_signature("e1,e1"), std::vector<double>{1.0, std::nan("")}), usage_error);
    CHECK_THROWS_AS(set_weights(parse_signature("e1,e1"), std::vector<double>{1.0}), usage_error);
}

TEST_CASE("weighted squared distance") {
    // two Euclidean components with known component distances 1 and 2
    Signature sig = parse_signature("e1,e1");
    ProductPoint p{{0.0, 0.0}}, q{{1.0, 2.0}};
    CHECK(weighted_sq_distance(sig, p.coords, q.coords) == doctest::Approx(0.5 * 1 + 0.5 * 4).epsilon(1e-15));

    CHECK(weighted_sq_distance(sig, p.coords, p.coords) == doctest::Approx(0.0));

    // renormalized Power-style split: weights (0.83, 0.16)/0.99
    Signature sw = parse_signature("e1,e1");
    sw.weights = {0.83 / 0.99, 0.16 / 0.99};
    ProductPoint a{{0.0, 0.0}}, b{{1.0, 1.0}};
    CHECK(weighted_sq_distance(sw, a.coords, b.coords) == doctest::Approx(1.0).epsilon(1e-12));

    // uniform weights equal the plain product metric divided by N
    std::mt19937_64 rng(3);
    Signature mixed = parse_signature("h2,s2,e3");
    const ProductPoint x = sample(mixed, 0.4, rng), y = sample(mixed, 0.4, rng);
    std::vector<double> comp(mixed.count());
    const double w = weighted_sq_distance(mixed, x.coords, y.coords, comp);
    double plain = 0.0;
    for (double c : comp) plain += c;
    CHECK(w == doctest::Approx(plain / 3.0).epsilon(1e-12));

    CHECK_THROWS_AS(weighted_sq_distance(mixed, x.coords, std::vector<double>{1.0}), usage_error);
}

TEST_CASE("monotone in any component distance") {
    Signature sig = parse_signature("e2,e2");
    ProductPoint p{{0, 0, 0, 0}};
    ProductPoint q{{1, 0, 1, 0}};
    const double base = weighted_sq_distance(sig, p.coords, q.coords);
    ProductPoint q2{{1.5, 0, 1, 0}};
    CHECK(weighted_sq_distance(sig, p.coords, q2.coords) > base);
    ProductPoint q3{{1, 0, 1.5, 0}};
    CHECK(weighted_sq_distance(sig, p.coords, q3.coords) > base);
}

TEST_CASE("gradient closed forms") {
    Signature e2 = parse_signature("e2");
    e2.weights = {1.0};
    std::vector<double> grad(2), comp(1);
    sq_distance_gradient(e2, std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 0.0}, grad, comp);
    CHECK(grad[0] == doctest::Approx(2.0));
    CHECK(grad[1] == doctest::Approx(0.0));
    CHECK(comp[0] == doctest::Approx(1.0));

    // coincident pair: zero gradient
    Signature h2 = parse_signature("h2");
    std::mt19937_64 rng(5);
    const ProductPoint x = sample(h2, 0.3, rng);
    std::vector<double> g3(3), c1(1);
    sq_distance_gradient(h2, x.coords, x.coords, g3, c1);
    for (double v : g3) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("gradient matches central differences on 200 random draws") {
    std::mt19937_64 rng(7);
    const std::vector<std::string> sigs = {"e3", "s2", "h2", "h2,s1", "h2,s2,e2", "h3*2,s2"};
    int checked = 0;
    std::uniform_real_distribution<double> wdist(0.2, 2.0);
    while (checked < 200) {
        Signature sig = parse_signature(sigs[checked % sigs.size()]);
        std::vector<double> raw(sig.count());
        for (double& v : raw) v = wdist(rng);
        sig = set_weights(std::move(sig), raw);
        const ProductPoint p = sample(sig, 0.5, rng), q = sample(sig, 0.5, rng);
        // keep component distances in a well-conditioned band
        std::vector<double> comp(sig.count());
        weighted_sq_distance(sig, p.coords, q.coords, comp);
        bool ok = true;
        for (double c : comp)
            if (std::sqrt(c) < 0.05 || std::sqrt(c) > 3.0) ok = false;
        if (!ok) continue;

        std::vector<double> grad(sig.total_ambient_dim);
        sq_distance_gradient(sig, p.coords, q.coords, grad, comp);
        for (int i = 0; i < sig.total_ambient_dim; ++i) {
            const double fd = fd_sq_distance(sig, p.coords, q.coords, i, 1e-5);
            const double rel = std::abs(fd - grad[i]) / std::max({1.0, std::abs(fd), std::abs(grad[i])});
            CHECK(rel <= 1e-4);
        }
        ++checked;
    }
}

TEST_CASE("both-sided gradient agrees with swapped arguments") {
    std::mt19937_64 rng(11);
    Signature sig = parse_signature("h2,s2,e2");
    const ProductPoint p = sample(sig, 0.4, rng), q = sample(sig, 0.4, rng);
    std::vector<double> gp(sig.total_ambient_dim), gq(sig.total_ambient_dim), comp(sig.count());
    pair_sq_distance_gradient(sig, p.coords, q.coords, gp, gq, comp);
    std::vector<double> gq_ref(sig.total_ambient_dim), comp2(sig.count());
    sq_distance_gradient(sig, q.coords, p.coords, gq_ref, comp2);
    for (int i = 0; i < sig.total_ambient_dim; ++i) CHECK(gq[i] == doctest::Approx(gq_ref[i]).epsilon(1e-12));
}

TEST_CASE("random product points satisfy invariants and are deterministic") {
    Signature sig = parse_signature("h2,s1,e2");
    std::mt19937_64 a(7), b(7);
    const ProductPoint pa = sample(sig, 0.1, a);
    const ProductPoint pb = sample(sig, 0.1, b);
    CHECK(pa.coords == pb.coords);  // bitwise

    std::mt19937_64 rng(9);
    for (int it = 0; it < 100; ++it) {
        const ProductPoint p = sample(sig, 0.4, rng);
        CHECK(product_point_violation(sig, p.coords) <= 1e-9);
    }
    Signature s1 = parse_signature("s1");
    for (int it = 0; it < 10; ++it) {
        const ProductPoint p = sample(s1, 0.3, rng);
        CHECK(std::abs(la::sq_norm(p.coords) - 1.0) <= 1e-9);
    }
    CHECK_THROWS_AS(sample(sig, 0.9, rng), usage_error);
}

TEST_CASE("scale enters the metric as a global factor") {
    std::mt19937_64 rng(13);
    Signature sig = parse_signature("h2,s1");
    const ProductPoint p = sample(sig, 0.4, rng), q = sample(sig, 0.4, rng);
    const double base = weighted_sq_distance(sig, p.coords, q.coords);
    Signature scaled = sig;
    scaled.scale = 4.0;
    CHECK(weighted_sq_distance(scaled, p.coords, q.coords) == doctest::Approx(4.0 * base).epsilon(1e-12));
}
