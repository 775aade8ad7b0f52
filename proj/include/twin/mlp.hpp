#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "twin/common.hpp"
#include "twin/tape.hpp"

#include <json.hpp>

namespace twin {

enum class Activation { identity, tanh, softplus, relu };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

/// Layered dense-network parameter bundle. Weight l is fan_in x fan_out,
/// so a layer computes act(W^T h + b).
struct MlpParams {
    std::vector<int> layer_sizes;
    std::vector<Mat> weights;
    std::vector<Vec> biases;
    Activation hidden_activation = Activation::tanh;
    Activation output_activation = Activation::identity;
    std::uint64_t seed = 0;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    std::size_t n_params() const;
    void check() const;  // throws ShapeError on inconsistent shapes / non-finite values
};

/// Glorot-range uniform initialization: +-sqrt(6/(fan_in+fan_out)).
MlpParams make_mlp(const std::vector<int>& layer_sizes, Activation hidden,
                   Activation output, std::uint64_t seed);

/// Pure forward pass; batched over columns of input.
Mat mlp_forward(const MlpParams& p, const Mat& input);

/// Parameters registered as tape leaves, one Var per weight/bias.
struct MlpVars {
    std::vector<Var> weights;
    std::vector<Var> biases;
};

/// Record p's parameters on the tape. Trainable params get gradients;
/// frozen ones are constants (no gradient flows into them).
MlpVars mlp_vars(Tape& tape, const MlpParams& p, bool trainable);

/// Forward pass recorded on the tape (input: dim x batch).
Var mlp_forward(Tape& tape, const MlpParams& p, const MlpVars& v, Var input);

/// Record the computation of d(output)/d(input) for a scalar-output MLP as
/// tape ops. Requires smooth activations (tanh or softplus); the result is
/// itself differentiable, which is what the gradient penalty needs.
/// Input is dim x batch; result is dim x batch (one gradient per column).
Var mlp_input_gradient(Tape& tape, const MlpParams& p, const MlpVars& v, Var input);

/// Hidden activations of layer `layer` (1-based over hidden layers),
/// recorded on the tape. Used as discriminator features.
Var mlp_layer_activations(Tape& tape, const MlpParams& p, const MlpVars& v,
                          Var input, int layer);

/// d(output)/d(input) at a point, one backward pass per output row.
Mat jacobian(const MlpParams& p, const Vec& input);

/// Adaptive-moment gradient descent over a flat list of parameter blocks.
class AdamOptimizer {
public:
    AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    /// Apply one update; params and grads are parallel lists.
    void step(const std::vector<Mat*>& params, const std::vector<Mat>& grads);
    void reset();
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Mat> m_, v_;
};

nlohmann::json mlp_to_json(const MlpParams& p);
MlpParams mlp_from_json(const nlohmann::json& j);

}  // namespace twin
