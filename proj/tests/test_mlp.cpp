#include <doctest.h>

#include <cmath>

#include "twin/mlp.hpp"
#include "twin/rng.hpp"

using namespace twin;

TEST_CASE("identity network passes input through") {
    MlpParams p;
    p.layer_sizes = {2, 2};
    p.weights = {Mat::Identity(2, 2)};
    p.biases = {Vec::Zero(2)};
    p.output_activation = Activation::identity;
    Vec x(2);
    x << 0.3, -0.3;
    Vec y = mlp_forward(p, x);
    CHECK(y(0) == doctest::Approx(0.3));
    CHECK(y(1) == doctest::Approx(-0.3));
    CHECK(jacobian(p, x).isApprox(Mat::Identity(2, 2)));
}

TEST_CASE("zero weights output the bias") {
    MlpParams p;
    p.layer_sizes = {3, 2};
    p.weights = {Mat::Zero(3, 2)};
    p.biases = {Vec(2)};
    p.biases[0] << 1.5, -2.0;
    for (int k = 0; k < 5; ++k) {
        auto g = rng_stream(1, k);
        Vec x(3);
        for (int i = 0; i < 3; ++i) x(i) = normal(g);
        Vec y = mlp_forward(p, x);
        CHECK(y(0) == doctest::Approx(1.5));
        CHECK(y(1) == doctest::Approx(-2.0));
    }
}

TEST_CASE("forward matches an independent straight-line recomputation") {
    MlpParams p = make_mlp({3, 4, 2}, Activation::tanh, Activation::identity, 77);
    auto g = rng_stream(78, 0);
    Vec x(3);
    for (int i = 0; i < 3; ++i) x(i) = normal(g);
    // Straight-line recomputation without the library's loop.
    Vec h = (p.weights[0].transpose() * x + p.biases[0]).array().tanh();
    Vec y = p.weights[1].transpose() * h + p.biases[1];
    CHECK((mlp_forward(p, x) - y).norm() < 1e-14);
}

TEST_CASE("forward pass is pure") {
    MlpParams p = make_mlp({4, 8, 3}, Activation::softplus, Activation::tanh, 5);
    auto g = rng_stream(6, 0);
    Vec x(4);
    for (int i = 0; i < 4; ++i) x(i) = normal(g);
    Mat a = mlp_forward(p, x), b = mlp_forward(p, x);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);  // bitwise identical
}

TEST_CASE("linear network jacobian equals the weight matrix") {
    MlpParams p = make_mlp({3, 2}, Activation::tanh, Activation::identity, 9);
    auto g = rng_stream(10, 0);
    Vec x(3);
    for (int i = 0; i < 3; ++i) x(i) = normal(g);
    CHECK(jacobian(p, x).isApprox(p.weights[0].transpose(), 1e-12));
}

namespace {
double rel_err(const Mat& a, const Mat& b) {
    return (a - b).norm() / std::max(1e-12, b.norm());
}
}  // namespace

TEST_CASE("MLP+MSE gradients match finite differences over 100 random draws") {
    for (int trial = 0; trial < 100; ++trial) {
        auto g = rng_stream(1000, trial);
        std::vector<int> sizes = {2 + trial % 3, 4 + trial % 5, 1 + trial % 2};
        Activation hid = (trial % 3 == 0)   ? Activation::tanh
                         : (trial % 3 == 1) ? Activation::softplus
                                            : Activation::relu;
        MlpParams p = make_mlp(sizes, hid, Activation::identity, 2000 + trial);
        Vec x(sizes.front()), target(sizes.back());
        for (int i = 0; i < x.size(); ++i) x(i) = normal(g);
        for (int i = 0; i < target.size(); ++i) target(i) = normal(g);

        auto eval = [&]() {
            Vec y = mlp_forward(p, x);
            return (y - target).squaredNorm();
        };

        Tape t;
        MlpVars v = mlp_vars(t, p, true);
        Var xv = t.constant(x);
        Var y = mlp_forward(t, p, v, xv);
        Var loss = t.sum(t.square(t.sub(y, t.constant(target))));
        t.backward(loss);

        for (std::size_t l = 0; l < p.weights.size(); ++l) {
            Mat& w = p.weights[l];
            Mat fd(w.rows(), w.cols());
            for (Eigen::Index i = 0; i < w.size(); ++i) {
                const double orig = w.data()[i];
                w.data()[i] = orig + 1e-5;
                const double up = eval();
                w.data()[i] = orig - 1e-5;
                const double dn = eval();
                w.data()[i] = orig;
                fd.data()[i] = (up - dn) / 2e-5;
            }
            CHECK(rel_err(t.grad(v.weights[l]), fd) < 1e-5);
        }
    }
}

TEST_CASE("nonlinear jacobian matches finite differences") {
    MlpParams p = make_mlp({3, 6, 4}, Activation::tanh, Activation::tanh, 21);
    auto g = rng_stream(22, 0);
    Vec x(3);
    for (int i = 0; i < 3; ++i) x(i) = normal(g);
    Mat J = jacobian(p, x);
    Mat fd(4, 3);
    for (int j = 0; j < 3; ++j) {
        Vec xp = x, xm = x;
        xp(j) += 1e-5;
        xm(j) -= 1e-5;
        fd.col(j) = (mlp_forward(p, Mat(xp)) - mlp_forward(p, Mat(xm))) / 2e-5;
    }
    CHECK(rel_err(J, fd) < 1e-5);
}

TEST_CASE("checkpoint JSON round-trips") {
    MlpParams p = make_mlp({2, 3, 2}, Activation::softplus, Activation::tanh, 31);
    MlpParams q = mlp_from_json(mlp_to_json(p));
    CHECK(q.layer_sizes == p.layer_sizes);
    CHECK(q.hidden_activation == p.hidden_activation);
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        CHECK((q.weights[l] - p.weights[l]).cwiseAbs().maxCoeff() == 0.0);
        CHECK((q.biases[l] - p.biases[l]).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("adam reduces a quadratic") {
    Mat w = Mat::Constant(3, 1, 5.0);
    AdamOptimizer opt(0.1);
    for (int i = 0; i < 500; ++i) {
        std::vector<Mat> grads = {2.0 * w};
        opt.step({&w}, grads);
    }
    CHECK(w.norm() < 1e-3);
}
