#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "pme/autodiff.hpp"

using namespace pme;
using ad::Matrix;
using ad::Tape;
using ad::TensorRef;

namespace {

Matrix random_matrix(int r, int c, std::mt19937_64& rng, double spread = 1.0) {
    Matrix m(r, c);
    std::normal_distribution<double> gauss(0.0, spread);
    for (double& v : m.data) v = gauss(rng);
    return m;
}

Matrix random_positive_rows(int r, int c, std::mt19937_64& rng) {
    Matrix m(r, c);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    for (double& v : m.data) v = u(rng);
    for (int i = 0; i < r; ++i) {
        double s = 0.0;
        for (int j = 0; j < c; ++j) s += m.at(i, j);
        for (int j = 0; j < c; ++j) m.at(i, j) /= s;
    }
    return m;
}

}  // namespace

TEST_CASE("forward values match naive evaluation") {
    Tape tape;
    const TensorRef a = tape.leaf(Matrix(2, 2, {1, 2, 3, 4}));
    const TensorRef b = tape.leaf(Matrix(2, 2, {5, 6, 7, 8}));
    const Matrix& prod = tape.value(tape.matmul(a, b));
    CHECK(prod.at(0, 0) == doctest::Approx(19));
    CHECK(prod.at(0, 1) == doctest::Approx(22));
    CHECK(prod.at(1, 0) == doctest::Approx(43));
    CHECK(prod.at(1, 1) == doctest::Approx(50));

    CHECK(tape.value(tape.frobenius_sq(a)).data[0] == doctest::Approx(30.0));

    const TensorRef soft = tape.row_softmax(tape.leaf(Matrix(1, 3, {0, 0, 0})));
    for (double v : tape.value(soft).data) CHECK(v == doctest::Approx(1.0 / 3));

    const TensorRef hot = tape.row_softmax(tape.leaf(Matrix(1, 2, {1000, 0})));
    CHECK(tape.value(hot).data[0] == doctest::Approx(1.0));
    CHECK(tape.value(tape.row_entropy_mean(hot)).data[0] == doctest::Approx(0.0).epsilon(1e-9));

    const TensorRef cat = tape.concat_cols(a, b);
    CHECK(tape.value(cat).cols == 4);
    CHECK(tape.value(cat).at(1, 3) == doctest::Approx(8));

    CHECK(tape.value(tape.sum_all(a)).data[0] == doctest::Approx(10.0));
    CHECK(tape.value(tape.sqrt_scalar(tape.frobenius_sq(a))).data[0] == doctest::Approx(std::sqrt(30.0)));

    const TensorRef rn = tape.row_normalize(tape.leaf(Matrix(2, 2, {1, 3, 2, 2})));
    CHECK(tape.value(rn).at(0, 0) == doctest::Approx(0.25));
    CHECK(tape.value(rn).at(1, 1) == doctest::Approx(0.5));

    CHECK_THROWS_AS(tape.matmul(a, tape.leaf(Matrix(3, 1))), usage_error);
    CHECK_THROWS_AS(tape.add(a, tape.leaf(Matrix(1, 2))), usage_error);
    CHECK_THROWS_AS(tape.leaf(Matrix(1, 1, {std::nan("")})), numeric_error);
}

TEST_CASE("backward closed forms") {
    Tape tape;
    const TensorRef w = tape.leaf(Matrix(1, 2, {1, 2}), true);
    const TensorRef loss = tape.frobenius_sq(w);
    const auto grads = tape.backward(loss);
    CHECK(grads[w.id].at(0, 0) == doctest::Approx(2.0));
    CHECK(grads[w.id].at(0, 1) == doctest::Approx(4.0));
    CHECK_THROWS_AS(tape.backward(loss), usage_error);  // one backward per tape

    // leaf not on the loss path gets zeros
    Tape t2;
    const TensorRef used = t2.leaf(Matrix(1, 1, {3.0}), true);
    const TensorRef unused = t2.leaf(Matrix(2, 2, {1, 1, 1, 1}), true);
    const auto g2 = t2.backward(t2.frobenius_sq(used));
    CHECK(g2[unused.id].rows == 2);
    for (double v : g2[unused.id].data) CHECK(v == 0.0);

    Tape t3;
    const TensorRef nonscalar = t3.leaf(Matrix(2, 2), true);
    CHECK_THROWS_AS(t3.backward(nonscalar), usage_error);
}

TEST_CASE("every primitive passes grad_check at 1e-5") {
    std::mt19937_64 rng(12345);
    for (int round = 0; round < 50; ++round) {
        const int r = 1 + static_cast<int>(rng() % 4);
        const int c = 1 + static_cast<int>(rng() % 4);
        const int k = 1 + static_cast<int>(rng() % 4);

        // matmul + add + hadamard + transpose composite
        {
            const std::vector<Matrix> leaves = {random_matrix(r, k, rng), random_matrix(k, c, rng),
                                                random_matrix(r, c, rng)};
            const auto rep = ad::grad_check(
                [](Tape& t, std::span<const TensorRef> l) {
                    return t.frobenius_sq(t.hadamard(t.add(t.matmul(l[0], l[1]), l[2]), l[2]));
                },
                leaves);
            CHECK(rep.pass(1e-5));
        }
        // relu away from kinks
        {
            std::vector<Matrix> leaves = {random_matrix(r, c, rng)};
            for (double& v : leaves[0].data)
                if (std::abs(v) < 0.15) v = v < 0 ? v - 0.15 : v + 0.15;
            const auto rep = ad::grad_check(
                [](Tape& t, std::span<const TensorRef> l) { return t.frobenius_sq(t.relu(l[0])); }, leaves);
            CHECK(rep.pass(1e-5));
        }
        // row_softmax and entropy
        {
            const std::vector<Matrix> leaves = {random_matrix(r, 3, rng, 0.8)};
            const auto rep = ad::grad_check(
                [](Tape& t, std::span<const TensorRef> l) {
                    return t.row_entropy_mean(t.row_softmax(l[0]));
                },
                leaves);
            CHECK(rep.pass(1e-5));
        }
        // scalar_mul, sum_all, transpose, concat_cols, sqrt_scalar, row_normalize
        {
            const std::vector<Matrix> leaves = {random_positive_rows(r, 3, rng), random_positive_rows(r, 2, rng)};
            const auto rep = ad::grad_check(
                [](Tape& t, std::span<const TensorRef> l) {
                    const TensorRef cat = t.concat_cols(l[0], l[1]);
                    const TensorRef rn = t.row_normalize(cat);
                    const TensorRef s = t.sum_all(t.transpose(t.scalar_mul(t.hadamard(rn, rn), 1.7)));
                    return t.sqrt_scalar(s);
                },
                leaves);
            CHECK(rep.pass(1e-5));
        }
    }
}

TEST_CASE("relu kink handling in grad_check") {
    // a preactivation straddling zero is excluded, not failed
    std::vector<Matrix> leaves = {Matrix(1, 2, {0.0, 1.0})};
    const auto rep = ad::grad_check(
        [](Tape& t, std::span<const TensorRef> l) { return t.frobenius_sq(t.relu(l[0])); }, leaves, 1e-4,
        [&](int, int idx) { return std::abs(leaves[0].data[idx]) < 1e-3; });
    CHECK(rep.excluded == 1);
    CHECK(rep.checked == 1);
    CHECK(rep.pass(1e-5));
}

TEST_CASE("backward is linear in the loss") {
    std::mt19937_64 rng(777);
    const Matrix x = random_matrix(3, 3, rng);
    auto grad_of = [&](double a, double b) {
        Tape t;
        const TensorRef leaf = t.leaf(x, true);
        const TensorRef f = t.frobenius_sq(leaf);
        const TensorRef g = t.sum_all(t.hadamard(leaf, leaf));
        const TensorRef loss = t.add(t.scalar_mul(f, a), t.scalar_mul(g, b));
        return t.backward(loss)[leaf.id];
    };
    const Matrix gf = grad_of(1.0, 0.0);
    const Matrix gg = grad_of(0.0, 1.0);
    const Matrix mix = grad_of(2.0, -0.5);
    for (std::size_t i = 0; i < mix.size(); ++i)
        CHECK(mix.data[i] == doctest::Approx(2.0 * gf.data[i] - 0.5 * gg.data[i]).epsilon(1e-10));
}

TEST_CASE("replay determinism") {
    auto run = [] {
        std::mt19937_64 rng(2024);
        Tape t;
        const TensorRef a = t.leaf(random_matrix(4, 4, rng), true);
        const TensorRef b = t.leaf(random_matrix(4, 4, rng), true);
        const TensorRef loss = t.frobenius_sq(t.relu(t.matmul(a, b)));
        auto g = t.backward(loss);
        return std::pair{g[a.id].data, g[b.id].data};
    };
    const auto r1 = run();
    const auto r2 = run();
    CHECK(r1.first == r2.first);    // bitwise
    CHECK(r1.second == r2.second);  // bitwise
}
