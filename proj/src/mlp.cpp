#include "twin/mlp.hpp"

#include <cmath>

#include <json.hpp>

#include "twin/rng.hpp"

namespace twin {

Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "tanh") return Activation::tanh;
    if (s == "softplus") return Activation::softplus;
    if (s == "relu") return Activation::relu;
    throw ConfigError("unknown activation: " + s);
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::tanh: return "tanh";
        case Activation::softplus: return "softplus";
        case Activation::relu: return "relu";
    }
    return "?";
}

std::size_t MlpParams::n_params() const {
    std::size_t n = 0;
    for (const Mat& w : weights) n += static_cast<std::size_t>(w.size());
    for (const Vec& b : biases) n += static_cast<std::size_t>(b.size());
    return n;
}

void MlpParams::check() const {
    require(layer_sizes.size() >= 2, "MlpParams: need at least input and output layer");
    require(weights.size() == layer_sizes.size() - 1 && biases.size() == weights.size(),
            "MlpParams: layer count mismatch");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        require(weights[l].rows() == layer_sizes[l] && weights[l].cols() == layer_sizes[l + 1],
                "MlpParams: weight " + std::to_string(l) + " shape does not chain");
        require(biases[l].size() == layer_sizes[l + 1],
                "MlpParams: bias " + std::to_string(l) + " shape does not chain");
        require(weights[l].allFinite() && biases[l].allFinite(),
                "MlpParams: non-finite parameter in layer " + std::to_string(l));
    }
}

MlpParams make_mlp(const std::vector<int>& layer_sizes, Activation hidden,
                   Activation output, std::uint64_t seed) {
    MlpParams p;
    p.layer_sizes = layer_sizes;
    p.hidden_activation = hidden;
    p.output_activation = output;
    p.seed = seed;
    auto g = rng_stream(seed, 0);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int fan_in = layer_sizes[l], fan_out = layer_sizes[l + 1];
        const double r = std::sqrt(6.0 / (fan_in + fan_out));
        Mat w(fan_in, fan_out);
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = uniform(g, -r, r);
        p.weights.push_back(std::move(w));
        p.biases.push_back(Vec::Zero(fan_out));
    }
    p.check();
    return p;
}

namespace {

Mat apply_activation(Activation a, Mat z) {
    switch (a) {
        case Activation::identity: return z;
        case Activation::tanh: return z.array().tanh();
        case Activation::softplus:
            return z.unaryExpr([](double x) {
                return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
            });
        case Activation::relu: return z.cwiseMax(0.0);
    }
    return z;
}

Var apply_activation(Tape& t, Activation a, Var z) {
    switch (a) {
        case Activation::identity: return z;
        case Activation::tanh: return t.tanh_(z);
        case Activation::softplus: return t.softplus_(z);
        case Activation::relu: return t.relu_(z);
    }
    return z;
}

}  // namespace

Mat mlp_forward(const MlpParams& p, const Mat& input) {
    require(input.rows() == p.input_dim(), "mlp_forward: input dim mismatch");
    Mat h = input;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        Mat z = (p.weights[l].transpose() * h).colwise() + p.biases[l];
        const bool last = (l + 1 == p.weights.size());
        h = apply_activation(last ? p.output_activation : p.hidden_activation,
                             std::move(z));
    }
    return h;
}

MlpVars mlp_vars(Tape& tape, const MlpParams& p, bool trainable) {
    MlpVars v;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        v.weights.push_back(tape.leaf(p.weights[l], trainable));
        v.biases.push_back(tape.leaf(p.biases[l], trainable));
    }
    return v;
}

Var mlp_forward(Tape& tape, const MlpParams& p, const MlpVars& v, Var input) {
    require(tape.value(input).rows() == p.input_dim(), "mlp_forward: input dim mismatch");
    Var h = input;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        Var z = tape.add_colbroadcast(tape.matmul_tn(v.weights[l], h), v.biases[l]);
        const bool last = (l + 1 == p.weights.size());
        h = apply_activation(tape, last ? p.output_activation : p.hidden_activation, z);
    }
    return h;
}

Var mlp_layer_activations(Tape& tape, const MlpParams& p, const MlpVars& v,
                          Var input, int layer) {
    require(layer >= 1 && layer + 1 < static_cast<int>(p.layer_sizes.size()),
            "mlp_layer_activations: layer index out of range");
    Var h = input;
    for (int l = 0; l < layer; ++l) {
        Var z = tape.add_colbroadcast(tape.matmul_tn(v.weights[l], h), v.biases[l]);
        h = apply_activation(tape, p.hidden_activation, z);
    }
    return h;
}

Var mlp_input_gradient(Tape& tape, const MlpParams& p, const MlpVars& v, Var input) {
    require(p.output_dim() == 1, "mlp_input_gradient: scalar output required");
    require(p.output_activation == Activation::identity,
            "mlp_input_gradient: identity output activation required");
    if (p.hidden_activation == Activation::relu)
        throw ConfigError("mlp_input_gradient: relu is non-smooth; use tanh or softplus");

    // Forward, keeping pre-activations and activations per hidden layer.
    const std::size_t L = p.weights.size();
    std::vector<Var> zs, hs;
    Var h = input;
    for (std::size_t l = 0; l + 1 < L; ++l) {
        Var z = tape.add_colbroadcast(tape.matmul_tn(v.weights[l], h), v.biases[l]);
        h = apply_activation(tape, p.hidden_activation, z);
        zs.push_back(z);
        hs.push_back(h);
    }

    // Backward sweep written as forward ops: cotangent of the scalar output
    // w.r.t. each pre-activation, then chained through the weights.
    const Eigen::Index batch = tape.value(input).cols();
    Var vlast = tape.constant(Mat::Ones(1, batch));
    Var u = tape.matmul(v.weights[L - 1], vlast);
    for (std::size_t l = L - 1; l-- > 0;) {
        Var dact = (p.hidden_activation == Activation::tanh)
                       ? tape.add_scalar(tape.scale(tape.square(hs[l]), -1.0), 1.0)
                       : tape.sigmoid_(zs[l]);
        Var vl = tape.hadamard(u, dact);
        u = tape.matmul(v.weights[l], vl);
    }
    return u;
}

Mat jacobian(const MlpParams& p, const Vec& input) {
    Tape tape;
    Var x = tape.param(input);
    MlpVars vars = mlp_vars(tape, p, false);
    Var out = mlp_forward(tape, p, vars, x);
    const int n_out = p.output_dim();
    Mat J(n_out, input.size());
    for (int i = 0; i < n_out; ++i) {
        tape.zero_grads();
        Mat seed = Mat::Zero(n_out, 1);
        seed(i, 0) = 1.0;
        tape.backward_seed(out, seed);
        J.row(i) = tape.grad(x).col(0).transpose();
    }
    return J;
}

void AdamOptimizer::reset() {
    t_ = 0;
    m_.clear();
    v_.clear();
}

void AdamOptimizer::step(const std::vector<Mat*>& params, const std::vector<Mat>& grads) {
    require(params.size() == grads.size(), "AdamOptimizer: param/grad count mismatch");
    if (m_.empty()) {
        for (const Mat* p : params) {
            m_.push_back(Mat::Zero(p->rows(), p->cols()));
            v_.push_back(Mat::Zero(p->rows(), p->cols()));
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].size() == 0) continue;  // parameter untouched this step
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
        v_[i] = beta2_ * v_[i].array().matrix() +
                (1.0 - beta2_) * grads[i].array().square().matrix();
        params[i]->array() -= lr_ * (m_[i].array() / bc1) /
                              ((v_[i].array() / bc2).sqrt() + eps_);
    }
}

nlohmann::json mlp_to_json(const MlpParams& p) {
    nlohmann::json j;
    j["format_version"] = "mlp-v1";
    j["layer_sizes"] = p.layer_sizes;
    j["hidden_activation"] = to_string(p.hidden_activation);
    j["output_activation"] = to_string(p.output_activation);
    j["seed"] = p.seed;
    nlohmann::json ws = nlohmann::json::array();
    for (const Mat& w : p.weights) {
        std::vector<double> row_major;
        row_major.reserve(w.size());
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index jj = 0; jj < w.cols(); ++jj) row_major.push_back(w(i, jj));
        ws.push_back(row_major);
    }
    j["weights"] = ws;
    nlohmann::json bs = nlohmann::json::array();
    for (const Vec& b : p.biases)
        bs.push_back(std::vector<double>(b.data(), b.data() + b.size()));
    j["biases"] = bs;
    return j;
}

MlpParams mlp_from_json(const nlohmann::json& j) {
    if (!j.contains("format_version") || j.at("format_version") != "mlp-v1")
        throw FormatError("mlp checkpoint: missing or unknown format_version");
    MlpParams p;
    p.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    p.hidden_activation = activation_from_string(j.at("hidden_activation"));
    p.output_activation = activation_from_string(j.at("output_activation"));
    p.seed = j.at("seed").get<std::uint64_t>();
    for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
        const int fan_in = p.layer_sizes[l], fan_out = p.layer_sizes[l + 1];
        const auto wj = j.at("weights").at(l).get<std::vector<double>>();
        if (static_cast<int>(wj.size()) != fan_in * fan_out)
            throw FormatError("mlp checkpoint: weight " + std::to_string(l) + " size");
        Mat w(fan_in, fan_out);
        for (int i = 0; i < fan_in; ++i)
            for (int jj = 0; jj < fan_out; ++jj) w(i, jj) = wj[i * fan_out + jj];
        p.weights.push_back(std::move(w));
        const auto bj = j.at("biases").at(l).get<std::vector<double>>();
        if (static_cast<int>(bj.size()) != fan_out)
            throw FormatError("mlp checkpoint: bias " + std::to_string(l) + " size");
        p.biases.push_back(Eigen::Map<const Vec>(bj.data(), fan_out));
    }
    p.check();
    return p;
}

}  // namespace twin
