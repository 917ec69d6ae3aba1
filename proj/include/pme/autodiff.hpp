#pragma once
#include <functional>
#include <span>
#include <vector>

#include "pme/error.hpp"

namespace pme::ad {

/// Dense row-major matrix. No broadcasting anywhere; every op checks shapes.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
    Matrix(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {}

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    static Matrix scalar(double v) { return Matrix(1, 1, {v}); }
};

struct TensorRef {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Append-only reverse-mode tape over dense matrices. Forward values are
/// checked for NaN/Inf as they are produced; one backward pass per recording.
class Tape {
  public:
    TensorRef leaf(Matrix value, bool trainable = false);

    TensorRef matmul(TensorRef a, TensorRef b);
    TensorRef add(TensorRef a, TensorRef b);
    TensorRef hadamard(TensorRef a, TensorRef b);
    TensorRef transpose(TensorRef a);
    TensorRef relu(TensorRef a);
    TensorRef row_softmax(TensorRef a);
    TensorRef frobenius_sq(TensorRef a);      // 1x1
    TensorRef row_entropy_mean(TensorRef a);  // 1x1, rows must be distributions
    TensorRef scalar_mul(TensorRef a, double c);
    TensorRef concat_cols(TensorRef a, TensorRef b);
    TensorRef sum_all(TensorRef a);    // 1x1
    TensorRef sqrt_scalar(TensorRef a);  // 1x1 -> 1x1
    TensorRef row_normalize(TensorRef a);  // rows scaled to sum 1

    const Matrix& value(TensorRef t) const;
    int node_count() const { return static_cast<int>(nodes_.size()); }

    /// Gradient of a scalar loss w.r.t. every trainable leaf; other entries
    /// in the returned table stay empty. Callable once per tape.
    std::vector<Matrix> backward(TensorRef loss);

  private:
    enum class Op {
        Leaf,
        MatMul,
        Add,
        Hadamard,
        Transpose,
        Relu,
        RowSoftmax,
        FrobeniusSq,
        RowEntropyMean,
        ScalarMul,
        ConcatCols,
        SumAll,
        SqrtScalar,
        RowNormalize,
    };
    struct Node {
        Op op = Op::Leaf;
        int a = -1, b = -1;
        double scalar = 0.0;
        Matrix val;
        bool requires_grad = false;
    };

    const Node& node(TensorRef t) const;
    TensorRef push(Node n);

    std::vector<Node> nodes_;
    bool backward_done_ = false;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    long long checked = 0;
    long long excluded = 0;
    bool pass(double tol) const { return checked > 0 && max_rel_err <= tol; }
};

/// Central-difference check of the tape gradients. `build` records the
/// computation from trainable leaves created out of `leaf_values` and returns
/// the scalar loss. `exclude(leaf, index)` may skip entries (kinks).
GradCheckReport grad_check(const std::function<TensorRef(Tape&, std::span<const TensorRef>)>& build,
                           std::span<const Matrix> leaf_values, double step = 1e-4,
                           const std::function<bool(int, int)>& exclude = nullptr);

}  // namespace pme::ad
