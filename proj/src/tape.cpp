#include "twin/tape.hpp"

#include <cmath>

namespace twin {

namespace {

// Numerically safe softplus: log(1 + e^x) without overflow.
inline double softplus_val(double x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid_val(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

Var Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Mat value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.op = Op::Leaf;
    n.requires_grad = requires_grad;
    return push(n);
}

Var Tape::add(Var a, Var b) {
    require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
            "add: shape mismatch");
    Node n;
    n.value = value(a) + value(b);
    n.op = Op::Add;
    n.a = a.id; n.b = b.id;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(n);
}

Var Tape::sub(Var a, Var b) {
    require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
            "sub: shape mismatch");
    Node n;
    n.value = value(a) - value(b);
    n.op = Op::Sub;
    n.a = a.id; n.b = b.id;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(n);
}

Var Tape::hadamard(Var a, Var b) {
    require(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(),
            "hadamard: shape mismatch");
    Node n;
    n.value = value(a).cwiseProduct(value(b));
    n.op = Op::Hadamard;
    n.a = a.id; n.b = b.id;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(n);
}

Var Tape::matmul(Var a, Var b) {
    require(value(a).cols() == value(b).rows(), "matmul: inner dims differ");
    Node n;
    n.value = value(a) * value(b);
    n.op = Op::Matmul;
    n.a = a.id; n.b = b.id;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(n);
}

Var Tape::matmul_tn(Var a, Var b) {
    require(value(a).rows() == value(b).rows(), "matmul_tn: inner dims differ");
    Node n;
    n.value = value(a).transpose() * value(b);
    n.op = Op::MatmulTN;
    n.a = a.id; n.b = b.id;
    n.requires_grad = requires_grad(a) || requires_grad(b);
    return push(n);
}

Var Tape::add_colbroadcast(Var m, Var v) {
    require(value(v).cols() == 1 && value(v).rows() == value(m).rows(),
            "add_colbroadcast: v must be a column matching m's rows");
    Node n;
    n.value = value(m).colwise() + Vec(value(v).col(0));
    n.op = Op::AddColBroadcast;
    n.a = m.id; n.b = v.id;
    n.requires_grad = requires_grad(m) || requires_grad(v);
    return push(n);
}

Var Tape::sub_colbroadcast(Var m, Var v) {
    require(value(v).cols() == 1 && value(v).rows() == value(m).rows(),
            "sub_colbroadcast: v must be a column matching m's rows");
    Node n;
    n.value = value(m).colwise() - Vec(value(v).col(0));
    n.op = Op::SubColBroadcast;
    n.a = m.id; n.b = v.id;
    n.requires_grad = requires_grad(m) || requires_grad(v);
    return push(n);
}

Var Tape::scale(Var a, double c) {
    Node n;
    n.value = value(a) * c;
    n.op = Op::Scale;
    n.a = a.id; n.c = c;
    n.requires_grad = requires_grad(a);
    return push(n);
}

Var Tape::add_scalar(Var a, double c) {
    Node n;
    n.value = value(a).array() + c;
    n.op = Op::AddScalar;
    n.a = a.id; n.c = c;
    n.requires_grad = requires_grad(a);
    return push(n);
}

Var Tape::tanh_(Var a) {
    Node n;
    n.value = value(a).array().tanh();
    n.op = Op::Tanh;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    return push(n);
}

Var Tape::softplus_(Var a) {
    Node n;
    n.value = value(a).unaryExpr([](double x) { return softplus_val(x); });
    n.op = Op::Softplus;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    return push(n);
}

Var Tape::relu_(Var a) {
    Node n;
    n.value = value(a).cwiseMax(0.0);
    n.op = Op::Relu;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    return push(n);
}

Var Tape::sigmoid_(Var a) {
    Node n;
    n.value = value(a).unaryExpr([](double x) { return sigmoid_val(x); });
    n.op = Op::Sigmoid;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    return push(n);
}

Var Tape::square(Var a) {
    Node n;
    n.value = value(a).array().square();
    n.op = Op::Square;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    return push(n);
}

Var Tape::sqrt_(Var a) {
    Node n;
    n.value = value(a).array().sqrt();
    n.op = Op::Sqrt;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    return push(n);
}

Var Tape::exp_(Var a) {
    Node n;
    n.value = value(a).array().exp();
    n.op = Op::Exp;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    return push(n);
}

Var Tape::log_(Var a) {
    Node n;
    n.value = value(a).array().log();
    n.op = Op::Log;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    return push(n);
}

Var Tape::transpose(Var a) {
    Node n;
    n.value = value(a).transpose();
    n.op = Op::Transpose;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    return push(n);
}

Var Tape::slice_rows(Var a, int row0, int nrows) {
    require(row0 >= 0 && row0 + nrows <= value(a).rows(), "slice_rows: out of range");
    Node n;
    n.value = value(a).middleRows(row0, nrows);
    n.op = Op::SliceRows;
    n.a = a.id; n.i0 = row0; n.i1 = nrows;
    n.requires_grad = requires_grad(a);
    return push(n);
}

Var Tape::vconcat(const std::vector<Var>& parts) {
    require(!parts.empty(), "vconcat: empty");
    Eigen::Index rows = 0;
    const Eigen::Index cols = value(parts[0]).cols();
    for (Var p : parts) {
        require(value(p).cols() == cols, "vconcat: column mismatch");
        rows += value(p).rows();
    }
    Node n;
    n.value.resize(rows, cols);
    Eigen::Index r = 0;
    for (Var p : parts) {
        n.value.middleRows(r, value(p).rows()) = value(p);
        r += value(p).rows();
        n.srcs.push_back(p.id);
        n.requires_grad = n.requires_grad || requires_grad(p);
    }
    n.op = Op::Vconcat;
    return push(n);
}

Var Tape::reshape(Var a, int rows, int cols) {
    require(static_cast<Eigen::Index>(rows) * cols == value(a).size(),
            "reshape: size mismatch");
    Node n;
    n.value = Eigen::Map<const Mat>(value(a).data(), rows, cols);
    n.op = Op::Reshape;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    return push(n);
}

Var Tape::sum(Var a) {
    Node n;
    n.value = Mat::Constant(1, 1, value(a).sum());
    n.op = Op::Sum;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    return push(n);
}

Var Tape::mean(Var a) {
    Node n;
    n.value = Mat::Constant(1, 1, value(a).mean());
    n.op = Op::Mean;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    return push(n);
}

Var Tape::rowmean(Var a) {
    Node n;
    n.value = value(a).rowwise().mean();
    n.op = Op::Rowmean;
    n.a = a.id;
    n.requires_grad = requires_grad(a);
    return push(n);
}

Var Tape::softmax_cross_entropy(Var scores, const std::vector<int>& labels) {
    const Mat& z = value(scores);
    require(static_cast<std::size_t>(z.cols()) == labels.size(),
            "softmax_cross_entropy: batch size mismatch");
    double loss = 0.0;
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        const double m = z.col(j).maxCoeff();
        const double lse = m + std::log((z.col(j).array() - m).exp().sum());
        loss += lse - z(labels[j], j);
    }
    Node n;
    n.value = Mat::Constant(1, 1, loss / static_cast<double>(z.cols()));
    n.op = Op::SoftmaxCE;
    n.a = scores.id;
    n.labels = labels;
    n.requires_grad = requires_grad(scores);
    return push(n);
}

void Tape::accumulate(std::int32_t id, const Mat& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.grad_live) {
        n.grad = g;
        n.grad_live = true;
    } else {
        n.grad += g;
    }
}

void Tape::zero_grads() {
    for (Node& n : nodes_) {
        n.grad.resize(0, 0);
        n.grad_live = false;
    }
}

void Tape::backward(Var loss) {
    require(value(loss).rows() == 1 && value(loss).cols() == 1,
            "backward: loss must be scalar");
    backward_seed(loss, Mat::Constant(1, 1, 1.0));
}

void Tape::backward_seed(Var v, const Mat& seed) {
    require(seed.rows() == value(v).rows() && seed.cols() == value(v).cols(),
            "backward_seed: seed shape mismatch");
    if (!nodes_[v.id].requires_grad) return;
    accumulate(v.id, seed);
    // Replay in exact reverse creation order; only nodes at or below the
    // seed can hold gradient.
    for (std::int32_t id = v.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.grad_live) continue;
        const Mat& g = n.grad;
        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::Add:
                accumulate(n.a, g);
                accumulate(n.b, g);
                break;
            case Op::Sub:
                accumulate(n.a, g);
                accumulate(n.b, -g);
                break;
            case Op::Hadamard:
                accumulate(n.a, g.cwiseProduct(nodes_[n.b].value));
                accumulate(n.b, g.cwiseProduct(nodes_[n.a].value));
                break;
            case Op::Matmul:
                accumulate(n.a, g * nodes_[n.b].value.transpose());
                accumulate(n.b, nodes_[n.a].value.transpose() * g);
                break;
            case Op::MatmulTN:
                accumulate(n.a, nodes_[n.b].value * g.transpose());
                accumulate(n.b, nodes_[n.a].value * g);
                break;
            case Op::AddColBroadcast:
                accumulate(n.a, g);
                accumulate(n.b, g.rowwise().sum());
                break;
            case Op::SubColBroadcast:
                accumulate(n.a, g);
                accumulate(n.b, -g.rowwise().sum());
                break;
            case Op::Scale:
                accumulate(n.a, g * n.c);
                break;
            case Op::AddScalar:
                accumulate(n.a, g);
                break;
            case Op::Tanh:
                accumulate(n.a, g.cwiseProduct(Mat(1.0 - n.value.array().square())));
                break;
            case Op::Softplus:
                accumulate(n.a, g.cwiseProduct(nodes_[n.a].value.unaryExpr(
                                    [](double x) { return sigmoid_val(x); })));
                break;
            case Op::Relu:
                accumulate(n.a, g.cwiseProduct(Mat((nodes_[n.a].value.array() > 0.0)
                                                       .cast<double>())));
                break;
            case Op::Sigmoid:
                accumulate(n.a, g.cwiseProduct(
                                    Mat(n.value.array() * (1.0 - n.value.array()))));
                break;
            case Op::Square:
                accumulate(n.a, Mat(2.0 * g.array() * nodes_[n.a].value.array()));
                break;
            case Op::Sqrt:
                accumulate(n.a, Mat(g.array() / (2.0 * n.value.array())));
                break;
            case Op::Exp:
                accumulate(n.a, g.cwiseProduct(n.value));
                break;
            case Op::Log:
                accumulate(n.a, Mat(g.array() / nodes_[n.a].value.array()));
                break;
            case Op::Transpose:
                accumulate(n.a, g.transpose());
                break;
            case Op::SliceRows: {
                Mat ga = Mat::Zero(nodes_[n.a].value.rows(), nodes_[n.a].value.cols());
                ga.middleRows(n.i0, n.i1) = g;
                accumulate(n.a, ga);
                break;
            }
            case Op::Vconcat: {
                Eigen::Index r = 0;
                for (std::int32_t src : n.srcs) {
                    const Eigen::Index nr = nodes_[src].value.rows();
                    accumulate(src, g.middleRows(r, nr));
                    r += nr;
                }
                break;
            }
            case Op::Reshape:
                accumulate(n.a, Eigen::Map<const Mat>(g.data(),
                                                      nodes_[n.a].value.rows(),
                                                      nodes_[n.a].value.cols()));
                break;
            case Op::Sum:
                accumulate(n.a, Mat::Constant(nodes_[n.a].value.rows(),
                                              nodes_[n.a].value.cols(), g(0, 0)));
                break;
            case Op::Mean:
                accumulate(n.a, Mat::Constant(nodes_[n.a].value.rows(),
                                              nodes_[n.a].value.cols(),
                                              g(0, 0) / static_cast<double>(
                                                            nodes_[n.a].value.size())));
                break;
            case Op::Rowmean:
                accumulate(n.a, (g * Mat::Constant(1, nodes_[n.a].value.cols(),
                                                   1.0 / static_cast<double>(
                                                             nodes_[n.a].value.cols()))));
                break;
            case Op::SoftmaxCE: {
                const Mat& z = nodes_[n.a].value;
                Mat ga(z.rows(), z.cols());
                for (Eigen::Index j = 0; j < z.cols(); ++j) {
                    const double m = z.col(j).maxCoeff();
                    Vec e = (z.col(j).array() - m).exp();
                    ga.col(j) = e / e.sum();
                    ga(n.labels[j], j) -= 1.0;
                }
                accumulate(n.a, ga * (g(0, 0) / static_cast<double>(z.cols())));
                break;
            }
        }
        // Free interior gradients once consumed; leaves keep theirs.
        if (n.op != Op::Leaf) {
            n.grad.resize(0, 0);
            n.grad_live = false;
        }
    }
}

void Tape::clear() { nodes_.clear(); }

}  // namespace twin
