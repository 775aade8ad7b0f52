#pragma once

#include <cstdint>
#include <vector>

#include "twin/common.hpp"

namespace twin {

/// Handle to a value recorded on a Tape.
struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over matrix-valued elementary operations.
///
/// Values are dense double matrices (column vectors are n x 1). Replaying
/// the tape backward visits operations in exact reverse creation order,
/// which is a reverse topological order since operands always precede
/// their results. Gradient accumulators start at zero and are
/// write-accumulated once per use site.
///
/// The op set is closed under expressing an MLP's input gradient as a
/// forward program (matmul_tn, hadamard, sigmoid, tanh, ...), so
/// gradient-of-gradient quantities such as the Wasserstein gradient
/// penalty need only a single backward pass over a tape that records
/// the input-gradient computation itself.
class Tape {
public:
    // -- leaves ------------------------------------------------------
    Var leaf(Mat value, bool requires_grad);
    Var constant(Mat value) { return leaf(std::move(value), false); }
    Var param(Mat value) { return leaf(std::move(value), true); }

    // -- binary ops --------------------------------------------------
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var hadamard(Var a, Var b);
    Var matmul(Var a, Var b);
    /// a^T * b without materializing the transpose.
    Var matmul_tn(Var a, Var b);
    /// m + v replicated across the columns of m (bias broadcast).
    Var add_colbroadcast(Var m, Var v);
    Var sub_colbroadcast(Var m, Var v);

    // -- unary ops ---------------------------------------------------
    Var scale(Var a, double c);
    Var add_scalar(Var a, double c);
    Var tanh_(Var a);
    Var softplus_(Var a);
    Var relu_(Var a);
    Var sigmoid_(Var a);
    Var square(Var a);
    Var sqrt_(Var a);
    Var exp_(Var a);
    Var log_(Var a);
    Var transpose(Var a);

    // -- structure ---------------------------------------------------
    Var slice_rows(Var a, int row0, int nrows);
    Var vconcat(const std::vector<Var>& parts);
    Var reshape(Var a, int rows, int cols);

    // -- reductions --------------------------------------------------
    /// Sum of all entries -> 1x1.
    Var sum(Var a);
    /// Mean of all entries -> 1x1.
    Var mean(Var a);
    /// Row-wise mean over columns -> n x 1.
    Var rowmean(Var a);

    // -- fused task losses -------------------------------------------
    /// Mean softmax cross-entropy over columns of scores (classes x batch).
    Var softmax_cross_entropy(Var scores, const std::vector<int>& labels);

    // -- access ------------------------------------------------------
    const Mat& value(Var v) const { return nodes_[v.id].value; }
    const Mat& grad(Var v) const { return nodes_[v.id].grad; }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    /// Backpropagate from a recorded scalar (1x1) loss.
    void backward(Var loss);
    /// Backpropagate an arbitrary cotangent seed from any recorded value.
    void backward_seed(Var v, const Mat& seed);
    void zero_grads();
    void clear();

private:
    enum class Op : std::uint8_t {
        Leaf, Add, Sub, Hadamard, Matmul, MatmulTN, AddColBroadcast,
        SubColBroadcast, Scale, AddScalar, Tanh, Softplus, Relu, Sigmoid,
        Square, Sqrt, Exp, Log, Transpose, SliceRows, Vconcat, Reshape,
        Sum, Mean, Rowmean, SoftmaxCE,
    };

    struct Node {
        Mat value;
        Mat grad;
        Op op = Op::Leaf;
        std::int32_t a = -1, b = -1;
        double c = 0.0;
        int i0 = 0, i1 = 0;
        bool requires_grad = false;
        bool grad_live = false;
        std::vector<std::int32_t> srcs;   // Vconcat operands
        std::vector<int> labels;          // SoftmaxCE targets
    };

    Var push(Node n);
    void accumulate(std::int32_t id, const Mat& g);
    void backprop();

    std::vector<Node> nodes_;
};

}  // namespace twin
