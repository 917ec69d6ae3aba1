#include "pme/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace pme::ad {

namespace {

void check_finite(const Matrix& m, const char* what) {
    for (double v : m.data)
        if (!std::isfinite(v)) throw numeric_error(std::string("non-finite value produced by ") + what);
}

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

// C += A * B, row-parallel; inner loops keep a fixed order so results do not
// depend on the thread count.
void matmul_acc(const Matrix& a, const Matrix& b, Matrix& c) {
    const int n = a.rows, k = a.cols, m = b.cols;
    const bool big = static_cast<long long>(n) * k * m > (1 << 18);
#pragma omp parallel for schedule(static) if (big)
    for (int i = 0; i < n; ++i) {
        const double* arow = a.data.data() + static_cast<std::size_t>(i) * k;
        double* crow = c.data.data() + static_cast<std::size_t>(i) * m;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b.data.data() + static_cast<std::size_t>(p) * m;
            for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

Matrix matmul_val(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows, b.cols);
    matmul_acc(a, b, c);
    return c;
}

Matrix transpose_val(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
    return t;
}

}  // namespace

const Tape::Node& Tape::node(TensorRef t) const {
    if (!t.valid() || t.id >= static_cast<int>(nodes_.size())) throw usage_error("tape: invalid tensor reference");
    return nodes_[t.id];
}

TensorRef Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return TensorRef{static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value(TensorRef t) const { return node(t).val; }

TensorRef Tape::leaf(Matrix value, bool trainable) {
    check_finite(value, "leaf");
    Node n;
    n.op = Op::Leaf;
    n.val = std::move(value);
    n.requires_grad = trainable;
    return push(std::move(n));
}

TensorRef Tape::matmul(TensorRef a, TensorRef b) {
    const Node &na = node(a), &nb = node(b);
    if (na.val.cols != nb.val.rows)
        throw usage_error("matmul: shape mismatch " + shape_str(na.val) + " * " + shape_str(nb.val));
    Node n;
    n.op = Op::MatMul;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = na.requires_grad || nb.requires_grad;
    n.val = matmul_val(na.val, nb.val);
    check_finite(n.val, "matmul");
    return push(std::move(n));
}

TensorRef Tape::add(TensorRef a, TensorRef b) {
    const Node &na = node(a), &nb = node(b);
    if (!na.val.same_shape(nb.val))
        throw usage_error("add: shape mismatch " + shape_str(na.val) + " + " + shape_str(nb.val));
    Node n;
    n.op = Op::Add;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = na.requires_grad || nb.requires_grad;
    n.val = na.val;
    for (std::size_t i = 0; i < n.val.size(); ++i) n.val.data[i] += nb.val.data[i];
    check_finite(n.val, "add");
    return push(std::move(n));
}

TensorRef Tape::hadamard(TensorRef a, TensorRef b) {
    const Node &na = node(a), &nb = node(b);
    if (!na.val.same_shape(nb.val))
        throw usage_error("hadamard: shape mismatch " + shape_str(na.val) + " . " + shape_str(nb.val));
    Node n;
    n.op = Op::Hadamard;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = na.requires_grad || nb.requires_grad;
    n.val = na.val;
    for (std::size_t i = 0; i < n.val.size(); ++i) n.val.data[i] *= nb.val.data[i];
    check_finite(n.val, "hadamard");
    return push(std::move(n));
}

TensorRef Tape::transpose(TensorRef a) {
    const Node& na = node(a);
    Node n;
    n.op = Op::Transpose;
    n.a = a.id;
    n.requires_grad = na.requires_grad;
    n.val = transpose_val(na.val);
    return push(std::move(n));
}

TensorRef Tape::relu(TensorRef a) {
    const Node& na = node(a);
    Node n;
    n.op = Op::Relu;
    n.a = a.id;
    n.requires_grad = na.requires_grad;
    n.val = na.val;
    for (double& v : n.val.data) v = std::max(0.0, v);
    return push(std::move(n));
}

TensorRef Tape::row_softmax(TensorRef a) {
    const Node& na = node(a);
    Node n;
    n.op = Op::RowSoftmax;
    n.a = a.id;
    n.requires_grad = na.requires_grad;
    n.val = na.val;
    for (int r = 0; r < n.val.rows; ++r) {
        std::span<double> row(n.val.data.data() + static_cast<std::size_t>(r) * n.val.cols,
                              static_cast<std::size_t>(n.val.cols));
        double mx = row[0];
        for (double v : row) mx = std::max(mx, v);
        double sum = 0.0;
        for (double& v : row) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (double& v : row) v /= sum;
    }
    check_finite(n.val, "row_softmax");
    return push(std::move(n));
}

TensorRef Tape::frobenius_sq(TensorRef a) {
    const Node& na = node(a);
    double s = 0.0;
    for (double v : na.val.data) s += v * v;
    Node n;
    n.op = Op::FrobeniusSq;
    n.a = a.id;
    n.requires_grad = na.requires_grad;
    n.val = Matrix::scalar(s);
    check_finite(n.val, "frobenius_sq");
    return push(std::move(n));
}

TensorRef Tape::row_entropy_mean(TensorRef a) {
    const Node& na = node(a);
    double s = 0.0;
    for (double v : na.val.data)
        if (v > 0.0) s -= v * std::log(v);
    Node n;
    n.op = Op::RowEntropyMean;
    n.a = a.id;
    n.requires_grad = na.requires_grad;
    n.val = Matrix::scalar(s / na.val.rows);
    check_finite(n.val, "row_entropy_mean");
    return push(std::move(n));
}

TensorRef Tape::scalar_mul(TensorRef a, double c) {
    const Node& na = node(a);
    Node n;
    n.op = Op::ScalarMul;
    n.a = a.id;
    n.scalar = c;
    n.requires_grad = na.requires_grad;
    n.val = na.val;
    for (double& v : n.val.data) v *= c;
    check_finite(n.val, "scalar_mul");
    return push(std::move(n));
}

TensorRef Tape::concat_cols(TensorRef a, TensorRef b) {
    const Node &na = node(a), &nb = node(b);
    if (na.val.rows != nb.val.rows)
        throw usage_error("concat_cols: row mismatch " + shape_str(na.val) + " | " + shape_str(nb.val));
    Node n;
    n.op = Op::ConcatCols;
    n.a = a.id;
    n.b = b.id;
    n.requires_grad = na.requires_grad || nb.requires_grad;
    n.val = Matrix(na.val.rows, na.val.cols + nb.val.cols);
    for (int r = 0; r < na.val.rows; ++r) {
        for (int c = 0; c < na.val.cols; ++c) n.val.at(r, c) = na.val.at(r, c);
        for (int c = 0; c < nb.val.cols; ++c) n.val.at(r, na.val.cols + c) = nb.val.at(r, c);
    }
    return push(std::move(n));
}

TensorRef Tape::sum_all(TensorRef a) {
    const Node& na = node(a);
    double s = 0.0;
    for (double v : na.val.data) s += v;
    Node n;
    n.op = Op::SumAll;
    n.a = a.id;
    n.requires_grad = na.requires_grad;
    n.val = Matrix::scalar(s);
    check_finite(n.val, "sum_all");
    return push(std::move(n));
}

TensorRef Tape::sqrt_scalar(TensorRef a) {
    const Node& na = node(a);
    if (na.val.rows != 1 || na.val.cols != 1) throw usage_error("sqrt_scalar: input must be 1x1");
    if (na.val.data[0] < 0.0) throw numeric_error("sqrt_scalar: negative input");
    Node n;
    n.op = Op::SqrtScalar;
    n.a = a.id;
    n.requires_grad = na.requires_grad;
    n.val = Matrix::scalar(std::sqrt(na.val.data[0]));
    return push(std::move(n));
}

TensorRef Tape::row_normalize(TensorRef a) {
    const Node& na = node(a);
    Node n;
    n.op = Op::RowNormalize;
    n.a = a.id;
    n.requires_grad = na.requires_grad;
    n.val = na.val;
    for (int r = 0; r < n.val.rows; ++r) {
        double sum = 0.0;
        for (int c = 0; c < n.val.cols; ++c) sum += n.val.at(r, c);
        if (std::abs(sum) < 1e-300) throw numeric_error("row_normalize: zero row sum");
        for (int c = 0; c < n.val.cols; ++c) n.val.at(r, c) /= sum;
    }
    check_finite(n.val, "row_normalize");
    return push(std::move(n));
}

std::vector<Matrix> Tape::backward(TensorRef loss) {
    if (backward_done_) throw usage_error("tape: backward already ran on this recording");
    const Node& ln = node(loss);
    if (ln.val.rows != 1 || ln.val.cols != 1) throw usage_error("backward: loss must be a 1x1 tensor");
    backward_done_ = true;

    std::vector<Matrix> grad(nodes_.size());
    auto ensure = [&](int id) -> Matrix& {
        if (grad[id].data.empty()) grad[id] = Matrix(nodes_[id].val.rows, nodes_[id].val.cols);
        return grad[id];
    };
    ensure(loss.id).data[0] = 1.0;

    for (int id = loss.id; id >= 0; --id) {
        const Node& n = nodes_[id];
        if (!n.requires_grad || grad[id].data.empty()) continue;
        const Matrix& g = grad[id];
        auto flows_a = [&] { return n.a >= 0 && nodes_[n.a].requires_grad; };
        auto flows_b = [&] { return n.b >= 0 && nodes_[n.b].requires_grad; };
        switch (n.op) {
            case Op::Leaf: break;
            case Op::MatMul: {
                if (flows_a()) {
                    Matrix bt = transpose_val(nodes_[n.b].val);
                    matmul_acc(g, bt, ensure(n.a));
                }
                if (flows_b()) {
                    Matrix at = transpose_val(nodes_[n.a].val);
                    matmul_acc(at, g, ensure(n.b));
                }
                break;
            }
            case Op::Add: {
                if (flows_a()) {
                    Matrix& ga = ensure(n.a);
                    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
                }
                if (flows_b()) {
                    Matrix& gb = ensure(n.b);
                    for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i];
                }
                break;
            }
            case Op::Hadamard: {
                if (flows_a()) {
                    Matrix& ga = ensure(n.a);
                    const Matrix& bv = nodes_[n.b].val;
                    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * bv.data[i];
                }
                if (flows_b()) {
                    Matrix& gb = ensure(n.b);
                    const Matrix& av = nodes_[n.a].val;
                    for (std::size_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * av.data[i];
                }
                break;
            }
            case Op::Transpose: {
                if (flows_a()) {
                    Matrix& ga = ensure(n.a);
                    for (int r = 0; r < g.rows; ++r)
                        for (int c = 0; c < g.cols; ++c) ga.at(c, r) += g.at(r, c);
                }
                break;
            }
            case Op::Relu: {
                if (flows_a()) {
                    Matrix& ga = ensure(n.a);
                    const Matrix& av = nodes_[n.a].val;
                    for (std::size_t i = 0; i < g.size(); ++i)
                        if (av.data[i] > 0.0) ga.data[i] += g.data[i];
                }
                break;
            }
            case Op::RowSoftmax: {
                if (flows_a()) {
                    Matrix& ga = ensure(n.a);
                    const Matrix& p = n.val;
                    for (int r = 0; r < p.rows; ++r) {
                        double dotgp = 0.0;
                        for (int c = 0; c < p.cols; ++c) dotgp += g.at(r, c) * p.at(r, c);
                        for (int c = 0; c < p.cols; ++c) ga.at(r, c) += p.at(r, c) * (g.at(r, c) - dotgp);
                    }
                }
                break;
            }
            case Op::FrobeniusSq: {
                if (flows_a()) {
                    Matrix& ga = ensure(n.a);
                    const Matrix& av = nodes_[n.a].val;
                    const double s = g.data[0];
                    for (std::size_t i = 0; i < av.size(); ++i) ga.data[i] += 2.0 * s * av.data[i];
                }
                break;
            }
            case Op::RowEntropyMean: {
                if (flows_a()) {
                    Matrix& ga = ensure(n.a);
                    const Matrix& av = nodes_[n.a].val;
                    const double s = g.data[0] / av.rows;
                    for (std::size_t i = 0; i < av.size(); ++i) {
                        const double p = std::max(av.data[i], 1e-12);
                        ga.data[i] += -s * (std::log(p) + 1.0);
                    }
                }
                break;
            }
            case Op::ScalarMul: {
                if (flows_a()) {
                    Matrix& ga = ensure(n.a);
                    for (std::size_t i = 0; i < g.size(); ++i) ga.data[i] += n.scalar * g.data[i];
                }
                break;
            }
            case Op::ConcatCols: {
                const Matrix& av = nodes_[n.a].val;
                if (flows_a()) {
                    Matrix& ga = ensure(n.a);
                    for (int r = 0; r < g.rows; ++r)
                        for (int c = 0; c < av.cols; ++c) ga.at(r, c) += g.at(r, c);
                }
                if (flows_b()) {
                    Matrix& gb = ensure(n.b);
                    for (int r = 0; r < g.rows; ++r)
                        for (int c = av.cols; c < g.cols; ++c) gb.at(r, c - av.cols) += g.at(r, c);
                }
                break;
            }
            case Op::SumAll: {
                if (flows_a()) {
                    Matrix& ga = ensure(n.a);
                    const double s = g.data[0];
                    for (double& v : ga.data) v += s;
                }
                break;
            }
            case Op::SqrtScalar: {
                if (flows_a()) {
                    Matrix& ga = ensure(n.a);
                    const double root = std::max(n.val.data[0], 1e-15);
                    ga.data[0] += g.data[0] * 0.5 / root;
                }
                break;
            }
            case Op::RowNormalize: {
                if (flows_a()) {
                    Matrix& ga = ensure(n.a);
                    const Matrix& av = nodes_[n.a].val;
                    const Matrix& rv = n.val;
                    for (int r = 0; r < av.rows; ++r) {
                        double sum = 0.0, gdotr = 0.0;
                        for (int c = 0; c < av.cols; ++c) {
                            sum += av.at(r, c);
                            gdotr += g.at(r, c) * rv.at(r, c);
                        }
                        for (int c = 0; c < av.cols; ++c) ga.at(r, c) += (g.at(r, c) - gdotr) / sum;
                    }
                }
                break;
            }
        }
    }
    // Leaves marked trainable but never touched by the loss report zeros.
    for (std::size_t id = 0; id < nodes_.size(); ++id)
        if (nodes_[id].op == Op::Leaf && nodes_[id].requires_grad && grad[id].data.empty())
            grad[id] = Matrix(nodes_[id].val.rows, nodes_[id].val.cols);
    return grad;
}

GradCheckReport grad_check(const std::function<TensorRef(Tape&, std::span<const TensorRef>)>& build,
                           std::span<const Matrix> leaf_values, double step,
                           const std::function<bool(int, int)>& exclude) {
    std::vector<Matrix> values(leaf_values.begin(), leaf_values.end());
    auto eval = [&](const std::vector<Matrix>& vals) {
        Tape tape;
        std::vector<TensorRef> leaves;
        leaves.reserve(vals.size());
        for (const Matrix& m : vals) leaves.push_back(tape.leaf(m, true));
        return tape.value(build(tape, leaves)).data[0];
    };

    Tape tape;
    std::vector<TensorRef> leaves;
    for (const Matrix& m : values) leaves.push_back(tape.leaf(m, true));
    const TensorRef loss = build(tape, leaves);
    auto grads = tape.backward(loss);

    GradCheckReport rep;
    for (std::size_t l = 0; l < values.size(); ++l) {
        const Matrix& g = grads[leaves[l].id];
        for (std::size_t i = 0; i < values[l].size(); ++i) {
            if (exclude && exclude(static_cast<int>(l), static_cast<int>(i))) {
                ++rep.excluded;
                continue;
            }
            std::vector<Matrix> perturbed = values;
            perturbed[l].data[i] += step;
            const double up = eval(perturbed);
            perturbed[l].data[i] -= 2.0 * step;
            const double dn = eval(perturbed);
            const double fd = (up - dn) / (2.0 * step);
            const double an = g.data[i];
            const double rel = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
            rep.max_rel_err = std::max(rep.max_rel_err, rel);
            ++rep.checked;
        }
    }
    return rep;
}

}  // namespace pme::ad
