#include "twin/nde.hpp"

#include <cmath>
#include <fstream>

#include "twin/rng.hpp"

namespace twin {

ModelMode mode_from_string(const std::string& s) {
    if (s == "ode") return ModelMode::ode;
    if (s == "sde") return ModelMode::sde;
    if (s == "ode_aug") return ModelMode::ode_aug;
    throw ConfigError("unknown model mode: " + s);
}

std::string to_string(ModelMode m) {
    switch (m) {
        case ModelMode::ode: return "ode";
        case ModelMode::sde: return "sde";
        case ModelMode::ode_aug: return "ode_aug";
    }
    return "ode";
}

void NeuralSdeModel::check() const {
    if (n_x < 1 || n_s < 1 || n_delay < 0 || n_a < 0)
        throw ConfigError("NeuralSdeModel: bad dimensions");
    if (dt <= 0) throw ConfigError("NeuralSdeModel: dt must be positive");
    if (f_net.input_dim() != input_dim() || f_net.output_dim() != ydim())
        throw ShapeError("NeuralSdeModel: f_net shape mismatch");
    if (g_net.input_dim() != input_dim() || g_net.output_dim() != noise_dim())
        throw ShapeError("NeuralSdeModel: g_net shape mismatch");
    if (A.rows() != n_x || A.cols() != n_a)
        throw ShapeError("NeuralSdeModel: A must be N_X x N_a");
    if (tau.size() != n_a) throw ShapeError("NeuralSdeModel: tau must have N_a entries");
    for (int i = 0; i < n_a; ++i)
        if (!(tau(i) > 0)) throw ConfigError("NeuralSdeModel: tau must be positive");
    if (!A.allFinite()) throw ConfigError("NeuralSdeModel: A must be finite");
    f_net.check();
    g_net.check();
}

Vec NeuralSdeModel::y_scale() const {
    Vec s(ydim());
    for (int d = 0; d <= n_delay; ++d) s.segment(d * n_x, n_x) = norm.x_scale;
    return s;
}

Vec NeuralSdeModel::y_shift() const {
    Vec s(ydim());
    for (int d = 0; d <= n_delay; ++d) s.segment(d * n_x, n_x) = norm.x_shift;
    return s;
}

Vec NeuralSdeModel::normalize_y(const Vec& y_raw) const {
    return (y_raw - y_shift()).cwiseQuotient(y_scale());
}

Vec NeuralSdeModel::denormalize_y(const Vec& y_norm) const {
    return y_norm.cwiseProduct(y_scale()) + y_shift();
}

NeuralSdeModel make_model(int n_x, int n_s, int n_delay, double dt,
                          const std::vector<int>& hidden, int n_a,
                          std::uint64_t seed, bool time_input, double omega) {
    NeuralSdeModel m;
    m.n_x = n_x;
    m.n_s = n_s;
    m.n_delay = n_delay;
    m.n_a = n_a;
    m.dt = dt;
    m.time_input = time_input;
    m.omega = omega;

    std::vector<int> f_sizes = {m.input_dim()};
    f_sizes.insert(f_sizes.end(), hidden.begin(), hidden.end());
    f_sizes.push_back(m.ydim());
    m.f_net = make_mlp(f_sizes, Activation::tanh, Activation::identity, mix64(seed));

    std::vector<int> g_sizes = {m.input_dim()};
    g_sizes.insert(g_sizes.end(), hidden.begin(), hidden.end());
    g_sizes.push_back(m.noise_dim());
    m.g_net = make_mlp(g_sizes, Activation::tanh, Activation::softplus,
                       mix64(seed) ^ 0x9E3779B9u);
    // Start with small noise scales so early SDE rollouts stay tame.
    m.g_net.biases.back().setConstant(-3.0);

    m.A.resize(n_x, n_a);
    auto g = rng_stream(seed, 0xA);
    for (int i = 0; i < n_x; ++i)
        for (int j = 0; j < n_a; ++j) m.A(i, j) = 0.1 * normal(g);
    m.tau.resize(n_a);
    for (int j = 0; j < n_a; ++j) m.tau(j) = 0.5 * std::pow(2.0, j);

    // Identity normalization until fitted on data.
    m.norm.x_shift = Vec::Zero(n_x);
    m.norm.x_scale = Vec::Ones(n_x);
    m.norm.s_shift = Vec::Zero(n_s);
    m.norm.s_scale = Vec::Ones(n_s);
    return m;
}

namespace {

Vec model_input(const NeuralSdeModel& m, const Vec& y, const Vec& s_norm, double t) {
    Vec in(m.input_dim());
    in.head(m.ydim()) = y;
    in.segment(m.ydim(), m.n_s) = s_norm;
    if (m.time_input) in(m.input_dim() - 1) = std::cos(m.omega * t);
    return in;
}

}  // namespace

void nde_step(const NeuralSdeModel& m, Vec& y, Vec& a, const Vec& s_norm, double t,
              const Vec* noise) {
    const Vec in = model_input(m, y, s_norm, t);
    Vec f = mlp_forward(m.f_net, in);
    f.head(m.n_x) += m.A * a;
    y += m.dt * f;
    Vec decay = Vec::Ones(m.n_a) - m.dt * m.tau.cwiseInverse();
    a = a.cwiseProduct(decay);
    if (noise) {
        const Vec g = mlp_forward(m.g_net, in);
        const double sdt = std::sqrt(m.dt);
        y.head(m.n_x) += sdt * g.head(m.n_x).cwiseProduct(noise->head(m.n_x));
        a += sdt * g.tail(m.n_a).cwiseProduct(noise->tail(m.n_a));
    }
}

ModelVars model_vars(Tape& tape, const NeuralSdeModel& m, bool train_f, bool train_g) {
    ModelVars v;
    v.f = mlp_vars(tape, m.f_net, train_f);
    v.g = mlp_vars(tape, m.g_net, train_g);
    v.A = tape.leaf(m.A, train_g);
    return v;
}

StepState nde_step(Tape& tape, const NeuralSdeModel& m, const ModelVars& v,
                   StepState st, Var s_norm, double t, Var noise) {
    Var carrier;
    if (m.time_input) {
        const int B = static_cast<int>(tape.value(st.y).cols());
        carrier = tape.constant(Mat::Constant(1, B, std::cos(m.omega * t)));
    }
    return nde_step(tape, m, v, st, s_norm, carrier, noise);
}

StepState nde_step(Tape& tape, const NeuralSdeModel& m, const ModelVars& v,
                   StepState st, Var s_norm, Var carrier, Var noise) {
    const int B = static_cast<int>(tape.value(st.y).cols());
    std::vector<Var> in_parts = {st.y, s_norm};
    if (m.time_input) {
        require(carrier.valid(), "nde_step: model takes a time input");
        in_parts.push_back(carrier);
    }
    Var in = tape.vconcat(in_parts);

    Var f = mlp_forward(tape, m.f_net, v.f, in);
    Var f1 = tape.add(tape.slice_rows(f, 0, m.n_x), tape.matmul(v.A, st.a));
    Var drift = tape.vconcat({f1, tape.slice_rows(f, m.n_x, m.ydim() - m.n_x)});
    Var y_next = tape.add(st.y, tape.scale(drift, m.dt));

    Vec decay = Vec::Ones(m.n_a) - m.dt * m.tau.cwiseInverse();
    Var a_next = tape.hadamard(st.a, tape.constant(decay.replicate(1, B)));

    if (noise.valid()) {
        Var g = mlp_forward(tape, m.g_net, v.g, in);
        const double sdt = std::sqrt(m.dt);
        Var ynoise = tape.scale(
            tape.hadamard(tape.slice_rows(g, 0, m.n_x), tape.slice_rows(noise, 0, m.n_x)),
            sdt);
        y_next = tape.add(
            y_next, tape.vconcat({ynoise, tape.constant(Mat::Zero(m.ydim() - m.n_x, B))}));
        Var anoise = tape.scale(tape.hadamard(tape.slice_rows(g, m.n_x, m.n_a),
                                              tape.slice_rows(noise, m.n_x, m.n_a)),
                                sdt);
        a_next = tape.add(a_next, anoise);
    }
    return {y_next, a_next};
}

namespace {

Trajectory roll(const NeuralSdeModel& m, const Mat& signal, const Vec& ic_raw,
                const Mat* noise, double t0) {
    m.check();
    require(signal.cols() == m.n_s, "generate: signal width mismatch");
    require(ic_raw.size() == m.ydim(), "generate: ic length mismatch");
    const long steps = signal.rows();
    require(steps >= 1, "generate: empty signal");

    Trajectory traj;
    traj.signal = signal;
    traj.observed.resize(steps, m.n_x);
    traj.dt = m.dt;
    traj.system_id = "nde-" + to_string(m.mode);
    traj.ic = ic_raw.head(m.n_x);

    Vec y = m.normalize_y(ic_raw);
    Vec a = Vec::Zero(m.n_a);
    for (long k = 0; k < steps; ++k) {
        const Vec s_norm = m.norm.apply_s(signal.row(k).transpose());
        const double t = t0 + static_cast<double>(k) * m.dt;
        if (noise) {
            Vec xi = noise->col(k);
            nde_step(m, y, a, s_norm, t, &xi);
        } else {
            nde_step(m, y, a, s_norm, t, nullptr);
        }
        if (!y.allFinite() || !a.allFinite())
            throw DivergenceError("generate: " + traj.system_id, k);
        traj.observed.row(k) =
            (y.head(m.n_x).cwiseProduct(m.norm.x_scale) + m.norm.x_shift).transpose();
    }
    return traj;
}

}  // namespace

Trajectory generate(const NeuralSdeModel& m, const Mat& signal, const Vec& ic_raw,
                    std::uint64_t noise_seed, double t0) {
    if (m.mode != ModelMode::sde) return roll(m, signal, ic_raw, nullptr, t0);
    auto g = rng_stream(noise_seed, 0);
    Mat noise(m.noise_dim(), signal.rows());
    for (long k = 0; k < noise.cols(); ++k)
        for (int i = 0; i < noise.rows(); ++i) noise(i, k) = normal(g);
    return roll(m, signal, ic_raw, &noise, t0);
}

Trajectory generate_frozen(const NeuralSdeModel& m, const Mat& signal,
                           const Vec& ic_raw, const Mat& noise, double t0) {
    require(noise.rows() == m.noise_dim() && noise.cols() == signal.rows(),
            "generate_frozen: noise must be noise_dim x steps");
    return roll(m, signal, ic_raw, &noise, t0);
}

int AugNoiseTable::bin(double s) const {
    const int n = static_cast<int>(stds.rows());
    if (s <= lo) return 0;
    if (s >= hi) return n - 1;
    return std::min(n - 1, static_cast<int>((s - lo) / (hi - lo) * n));
}

void AugNoiseTable::check() const {
    if (stds.rows() < 1) throw ConfigError("AugNoiseTable: no bins");
    if (!(hi > lo)) throw ConfigError("AugNoiseTable: empty signal range");
    if (stds.minCoeff() < 0) throw ConfigError("AugNoiseTable: negative std");
}

AugNoiseTable fit_aug_noise(const NeuralSdeModel& m, const Dataset& data, int n_bins) {
    require(n_bins >= 1, "fit_aug_noise: n_bins < 1");
    require(m.n_s == 1, "fit_aug_noise: scalar-signal binning only");
    AugNoiseTable table;
    table.lo = 1e300;
    table.hi = -1e300;
    for (const auto& tr : data.trajectories) {
        table.lo = std::min(table.lo, tr.signal.minCoeff());
        table.hi = std::max(table.hi, tr.signal.maxCoeff());
    }
    if (!(table.hi > table.lo)) table.hi = table.lo + 1.0;
    table.stds = Mat::Zero(n_bins, m.n_x);

    Mat sum = Mat::Zero(n_bins, m.n_x), sumsq = Mat::Zero(n_bins, m.n_x);
    Vec count = Vec::Zero(n_bins);
    for (const auto& tr : data.trajectories) {
        auto transitions = embed_delays(tr, m.n_delay);
        for (std::size_t i = 0; i < transitions.size(); ++i) {
            const auto& t = transitions[i];
            Vec y = m.normalize_y(t.y_prev);
            Vec a = Vec::Zero(m.n_a);
            const Vec s_norm = m.norm.apply_s(t.signal);
            const double time = static_cast<double>(m.n_delay + i) * m.dt;
            nde_step(m, y, a, s_norm, time, nullptr);
            Vec pred = y.head(m.n_x).cwiseProduct(m.norm.x_scale) + m.norm.x_shift;
            Vec res = t.y_next.head(m.n_x) - pred;
            const int b = table.bin(t.signal(0));
            sum.row(b) += res.transpose();
            sumsq.row(b) += res.cwiseAbs2().transpose();
            count(b) += 1;
        }
    }
    double global_n = count.sum();
    Vec global_std = Vec::Zero(m.n_x);
    if (global_n > 1) {
        Vec gm = sum.colwise().sum().transpose() / global_n;
        global_std =
            ((sumsq.colwise().sum().transpose() / global_n) - gm.cwiseAbs2())
                .cwiseMax(0.0)
                .cwiseSqrt();
    }
    for (int b = 0; b < n_bins; ++b) {
        if (count(b) < 2) {
            table.stds.row(b) = global_std.transpose();
            continue;
        }
        Vec mean = sum.row(b).transpose() / count(b);
        table.stds.row(b) =
            ((sumsq.row(b).transpose() / count(b)) - mean.cwiseAbs2())
                .cwiseMax(0.0)
                .cwiseSqrt()
                .transpose();
    }
    table.check();
    return table;
}

Trajectory generate_aug_ode(const NeuralSdeModel& m, const AugNoiseTable& table,
                            const Mat& signal, const Vec& ic_raw,
                            std::uint64_t noise_seed) {
    if (m.mode != ModelMode::ode_aug)
        throw ConfigError("generate_aug_ode: model mode must be ode_aug");
    table.check();
    Trajectory traj = roll(m, signal, ic_raw, nullptr, 0.0);
    auto g = rng_stream(noise_seed, 1);
    for (long k = 0; k < traj.steps(); ++k) {
        const int b = table.bin(signal(k, 0));
        for (int i = 0; i < m.n_x; ++i)
            traj.observed(k, i) += table.stds(b, i) * normal(g);
    }
    return traj;
}

ModelJacobians model_jacobians(const NeuralSdeModel& m, const Vec& y_raw,
                               const Vec& a, const Vec& s_raw, double t,
                               const Vec* noise) {
    Tape tape;
    ModelVars v = model_vars(tape, m, false, false);
    StepState st;
    st.y = tape.leaf(m.normalize_y(y_raw), true);
    st.a = tape.constant(a);
    Var s = tape.leaf(m.norm.apply_s(s_raw), true);
    Var xi;
    if (noise) xi = tape.constant(*noise);
    StepState next = nde_step(tape, m, v, st, s, t, xi);

    const int n = m.ydim();
    const Vec sy = m.y_scale();
    ModelJacobians out;
    out.d_state.resize(n, n);
    out.d_signal.resize(n, m.n_s);
    for (int i = 0; i < n; ++i) {
        tape.zero_grads();
        Mat seed = Mat::Zero(n, 1);
        seed(i, 0) = 1.0;
        tape.backward_seed(next.y, seed);
        out.d_state.row(i) = tape.grad(st.y).transpose();
        out.d_signal.row(i) = tape.grad(s).transpose();
    }
    // Convert normalized-unit sensitivities to raw units.
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) out.d_state(i, j) *= sy(i) / sy(j);
        for (int j = 0; j < m.n_s; ++j) out.d_signal(i, j) *= sy(i) / m.norm.s_scale(j);
    }
    return out;
}

Mat model_eligibility(const NeuralSdeModel& m, const Mat& signal, const Vec& ic_raw,
                      double t0) {
    const long steps = signal.rows();
    Mat trace(steps, m.n_x);
    Vec e = Vec::Zero(m.ydim());
    Vec y = m.normalize_y(ic_raw);
    Vec a = Vec::Zero(m.n_a);
    for (long k = 0; k < steps; ++k) {
        const double t = t0 + static_cast<double>(k) * m.dt;
        const Vec s_raw = signal.row(k).transpose();
        ModelJacobians J = model_jacobians(m, m.denormalize_y(y), a, s_raw, t);
        e = J.d_state * e + J.d_signal * s_raw;
        nde_step(m, y, a, m.norm.apply_s(s_raw), t, nullptr);
        trace.row(k) = e.head(m.n_x).transpose();
    }
    return trace;
}

namespace {

nlohmann::json mat_json(const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat mat_unjson(const nlohmann::json& j) {
    if (!j.is_array()) throw FormatError("model json: expected matrix");
    const std::size_t r = j.size();
    const std::size_t c = r ? j.at(0).size() : 0;
    Mat m(r, c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t k = 0; k < c; ++k) m(i, k) = j.at(i).at(k).get<double>();
    return m;
}

}  // namespace

nlohmann::json model_to_json(const NeuralSdeModel& m, const nlohmann::json& metadata) {
    nlohmann::json j;
    j["format_version"] = "nde-v1";
    j["mode"] = to_string(m.mode);
    j["n_x"] = m.n_x;
    j["n_s"] = m.n_s;
    j["n_delay"] = m.n_delay;
    j["n_a"] = m.n_a;
    j["dt"] = m.dt;
    j["time_input"] = m.time_input;
    j["omega"] = m.omega;
    j["f_net"] = mlp_to_json(m.f_net);
    j["g_net"] = mlp_to_json(m.g_net);
    j["A"] = mat_json(m.A);
    j["tau"] = std::vector<double>(m.tau.data(), m.tau.data() + m.tau.size());
    j["norm"] = norm_to_json(m.norm);
    if (!metadata.is_null() && !metadata.empty()) j["metadata"] = metadata;
    return j;
}

NeuralSdeModel model_from_json(const nlohmann::json& j) {
    if (!j.contains("format_version") || j.at("format_version") != "nde-v1")
        throw FormatError("model json: unsupported format_version");
    NeuralSdeModel m;
    m.mode = mode_from_string(j.at("mode").get<std::string>());
    m.n_x = j.at("n_x").get<int>();
    m.n_s = j.at("n_s").get<int>();
    m.n_delay = j.at("n_delay").get<int>();
    m.n_a = j.at("n_a").get<int>();
    m.dt = j.at("dt").get<double>();
    m.time_input = j.at("time_input").get<bool>();
    m.omega = j.at("omega").get<double>();
    m.f_net = mlp_from_json(j.at("f_net"));
    m.g_net = mlp_from_json(j.at("g_net"));
    m.A = mat_unjson(j.at("A"));
    const auto tau = j.at("tau").get<std::vector<double>>();
    m.tau = Eigen::Map<const Vec>(tau.data(), tau.size());
    m.norm = norm_from_json(j.at("norm"));
    m.check();
    return m;
}

void save_model(const std::string& path, const NeuralSdeModel& m,
                const nlohmann::json& metadata) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << model_to_json(m, metadata).dump(2) << "\n";
}

NeuralSdeModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("model json: ") + e.what());
    }
    return model_from_json(j);
}

}  // namespace twin
