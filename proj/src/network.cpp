#include "twin/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "twin/mlp.hpp"
#include "twin/rng.hpp"
#include "twin/tape.hpp"

namespace twin {

int TwinNetwork::node_n_x() const {
    if (mode == NetMode::twin) return models.empty() ? 0 : models[0].n_x;
    return systems.empty() ? 0 : systems[0].obs_dim();
}

void TwinNetwork::check() const {
    const int L = n_layers();
    if (L < 1) throw ConfigError("TwinNetwork: needs at least one layer");
    if (mode == NetMode::twin) {
        if (static_cast<int>(models.size()) != L)
            throw ConfigError("TwinNetwork: one model per layer required");
        for (const auto& m : models) {
            m.check();
            if (m.n_s != 1) throw ConfigError("TwinNetwork: nodes take scalar signals");
            if (m.n_x != models[0].n_x)
                throw ConfigError("TwinNetwork: layers must share the observable dim");
        }
    } else {
        if (static_cast<int>(systems.size()) != L)
            throw ConfigError("TwinNetwork: one system per layer required");
        for (const auto& s : systems)
            if (s.obs_dim() != systems[0].obs_dim())
                throw ConfigError("TwinNetwork: layers must share the observable dim");
    }
    if (static_cast<int>(ic.size()) != L)
        throw ConfigError("TwinNetwork: one IC distribution per layer required");
    const int nx = node_n_x();
    if (theta_in.rows() != layer_sizes[0] || theta_in.cols() != n_features)
        throw ShapeError("TwinNetwork: theta_in shape");
    if (static_cast<int>(theta.size()) != L - 1)
        throw ShapeError("TwinNetwork: need L-1 interconnect matrices");
    for (int l = 0; l + 1 < L; ++l)
        if (theta[l].rows() != layer_sizes[l + 1] ||
            theta[l].cols() != layer_sizes[l] * nx)
            throw ShapeError("TwinNetwork: theta[" + std::to_string(l) + "] shape");
    if (w_out.rows() != n_classes || w_out.cols() != layer_sizes[L - 1] * nx)
        throw ShapeError("TwinNetwork: read-out shape");
    if (b_out.size() != n_classes) throw ShapeError("TwinNetwork: read-out bias");
    if (steps_per_frame < 1) throw ConfigError("TwinNetwork: steps_per_frame < 1");
}

namespace {

Mat glorot(int rows, int cols, std::mt19937_64& g) {
    const double r = std::sqrt(6.0 / (rows + cols));
    Mat m(rows, cols);
    for (long i = 0; i < m.size(); ++i) *(m.data() + i) = uniform(g, -r, r);
    return m;
}

void init_theta(TwinNetwork& net, std::uint64_t seed) {
    auto g = rng_stream(seed, 0x7E7A);
    const int L = net.n_layers();
    const int nx = net.node_n_x();
    net.theta_in = glorot(net.layer_sizes[0], net.n_features, g);
    net.theta.clear();
    for (int l = 0; l + 1 < L; ++l)
        net.theta.push_back(glorot(net.layer_sizes[l + 1], net.layer_sizes[l] * nx, g));
    net.w_out = glorot(net.n_classes, net.layer_sizes[L - 1] * nx, g);
    net.b_out = Vec::Zero(net.n_classes);
}

}  // namespace

TwinNetwork make_twin_network(const std::vector<NeuralSdeModel>& models,
                              const std::vector<int>& layer_sizes,
                              const std::vector<IcDistribution>& ic,
                              int n_features, int n_classes, std::uint64_t seed) {
    require(models.size() == layer_sizes.size() && ic.size() == layer_sizes.size(),
            "make_twin_network: per-layer models and ICs required");
    TwinNetwork net;
    net.mode = NetMode::twin;
    net.models = models;
    net.layer_sizes = layer_sizes;
    net.ic = ic;
    net.n_features = n_features;
    net.n_classes = n_classes;
    init_theta(net, seed);
    net.check();
    return net;
}

IcDistribution estimate_state_ic(const RefSystem& sys, int n_samples,
                                 std::uint64_t seed, int burn_in) {
    IcDistribution dist;
    dist.dim = sys.state_dim();
    if (sys.deterministic()) {
        dist.mode = IcMode::fixed_zero;
        return dist;
    }
    dist.mode = IcMode::empirical;
    for (int i = 0; i < n_samples; ++i) {
        Vec final_state;
        integrate_full(sys, Vec::Zero(burn_in), Vec::Zero(sys.state_dim()),
                       sys.default_integrator(), mix64(seed) ^ mix64(0x1C + i),
                       &final_state);
        dist.samples.push_back(final_state);
    }
    return dist;
}

TwinNetwork make_reference_network(const RefSystem& sys,
                                   const std::vector<int>& layer_sizes,
                                   int n_features, int n_classes,
                                   std::uint64_t seed, int ic_samples, int burn_in) {
    TwinNetwork net;
    net.mode = NetMode::reference;
    net.systems.assign(layer_sizes.size(), sys);
    net.layer_sizes = layer_sizes;
    net.ic.assign(layer_sizes.size(),
                  estimate_state_ic(sys, ic_samples, seed, burn_in));
    net.n_features = n_features;
    net.n_classes = n_classes;
    init_theta(net, seed);
    net.check();
    return net;
}

void copy_theta(const TwinNetwork& from, TwinNetwork& to) {
    if (from.layer_sizes != to.layer_sizes || from.n_features != to.n_features ||
        from.n_classes != to.n_classes || from.node_n_x() != to.node_n_x())
        throw ShapeError("copy_theta: network shapes differ");
    to.theta_in = from.theta_in;
    to.theta = from.theta;
    to.w_out = from.w_out;
    to.b_out = from.b_out;
}

namespace {

std::mt19937_64 node_stream(std::uint64_t ep_seed, int layer, int node, long step) {
    return rng_stream(mix64(ep_seed) ^
                          mix64((std::uint64_t(layer) << 32) | std::uint64_t(node)),
                      static_cast<std::uint64_t>(step));
}

long episode_steps(const TwinNetwork& net, const Episode& ep) {
    return ep.input.rows() * net.steps_per_frame;
}

Mat frame_input(const TwinNetwork& net, const std::vector<const Episode*>& batch,
                long t) {
    const int B = static_cast<int>(batch.size());
    Mat u(net.n_features, B);
    for (int b = 0; b < B; ++b)
        u.col(b) = batch[b]->input.row(t / net.steps_per_frame).transpose();
    return u;
}

// Per-layer node states, columns ordered (episode-major, node-minor):
// column = ep * N_l + node.
struct NetState {
    std::vector<Mat> y;  // twin: normalized delay states; ref: full raw states
    std::vector<Mat> a;  // twin aux channels
};

NetState init_state(const TwinNetwork& net, const std::vector<const Episode*>& batch) {
    const int B = static_cast<int>(batch.size());
    NetState st;
    for (int l = 0; l < net.n_layers(); ++l) {
        const int N = net.layer_sizes[l];
        if (net.mode == NetMode::twin) {
            const auto& m = net.models[l];
            Mat y(m.ydim(), N * B);
            for (int b = 0; b < B; ++b)
                for (int i = 0; i < N; ++i)
                    y.col(b * N + i) = m.normalize_y(
                        net.ic[l].draw(batch[b]->seed, l * 100000 + i));
            st.y.push_back(std::move(y));
            st.a.push_back(Mat::Zero(m.n_a, N * B));
        } else {
            const auto& sys = net.systems[l];
            Mat y(sys.state_dim(), N * B);
            for (int b = 0; b < B; ++b)
                for (int i = 0; i < N; ++i)
                    y.col(b * N + i) = net.ic[l].draw(batch[b]->seed, l * 100000 + i);
            st.y.push_back(std::move(y));
            st.a.push_back(Mat());
        }
    }
    return st;
}

// Raw newest observable block, (N_l * n_x) x B, from a layer's state.
Mat layer_pi(const TwinNetwork& net, int l, const Mat& y, int B) {
    const int nx = net.node_n_x();
    const int N = net.layer_sizes[l];
    Mat pi(nx, N * B);
    if (net.mode == NetMode::twin) {
        const auto& m = net.models[l];
        pi = (m.norm.x_scale.asDiagonal() * y.topRows(nx)).colwise() + m.norm.x_shift;
    } else {
        pi = y.topRows(nx);
    }
    return Eigen::Map<const Mat>(pi.data(), static_cast<long>(nx) * N, B);
}

Mat layer_noise(const TwinNetwork& net, int l, int rows,
                const std::vector<const Episode*>& batch, long t) {
    const int N = net.layer_sizes[l];
    const int B = static_cast<int>(batch.size());
    Mat xi(rows, N * B);
    for (int b = 0; b < B; ++b)
        for (int i = 0; i < N; ++i) {
            auto g = node_stream(batch[b]->seed ^ net.noise_salt, l, i, t);
            for (int r = 0; r < rows; ++r) xi(r, b * N + i) = normal(g);
        }
    return xi;
}

// One plain dynamics step of layer l under raw scalar signals (1 x N_l*B).
void plain_layer_step(const TwinNetwork& net, int l, Mat& y, Mat& a,
                      const Mat& s_raw, long t,
                      const std::vector<const Episode*>& batch) {
    if (net.mode == NetMode::twin) {
        const auto& m = net.models[l];
        const long NB = y.cols();
        Mat in(m.input_dim(), NB);
        in.topRows(m.ydim()) = y;
        in.row(m.ydim()) =
            ((s_raw.array() - m.norm.s_shift(0)) / m.norm.s_scale(0)).matrix();
        if (m.time_input)
            in.row(m.input_dim() - 1).setConstant(std::cos(m.omega * t * m.dt));
        Mat f = mlp_forward(m.f_net, in);
        f.topRows(m.n_x) += m.A * a;
        y += m.dt * f;
        Vec decay = Vec::Ones(m.n_a) - m.dt * m.tau.cwiseInverse();
        a = decay.asDiagonal() * a;
        if (m.mode == ModelMode::sde) {
            Mat g = mlp_forward(m.g_net, in);
            Mat xi = layer_noise(net, l, m.noise_dim(), batch, t);
            const double sdt = std::sqrt(m.dt);
            y.topRows(m.n_x) +=
                sdt * g.topRows(m.n_x).cwiseProduct(xi.topRows(m.n_x));
            a += sdt * g.bottomRows(m.n_a).cwiseProduct(xi.bottomRows(m.n_a));
        }
        if (!y.allFinite() || !a.allFinite())
            throw DivergenceError("network twin layer " + std::to_string(l), t);
    } else {
        const auto& sys = net.systems[l];
        const double time = t * sys.dt();
        const double sdt = std::sqrt(sys.dt());
        Mat xi;
        if (!sys.deterministic())
            xi = layer_noise(net, l, sys.state_dim(), batch, t);
        for (long c = 0; c < y.cols(); ++c) {
            const double s = s_raw(0, c);
            Vec x = y.col(c);
            Vec diff = sys.diffusion(x, s);
            x = deterministic_step(sys, x, s, time, sys.default_integrator());
            if (!sys.deterministic()) x += sdt * diff.cwiseProduct(xi.col(c));
            if (!x.allFinite())
                throw DivergenceError("network reference layer " + std::to_string(l), t);
            y.col(c) = x;
        }
    }
}

// Plain forward over steps [t0, t1); state updated in place. Collects raw
// per-layer pi matrices per step if history is non-null.
void plain_forward(const TwinNetwork& net, const std::vector<const Episode*>& batch,
                   NetState& st, long t0, long t1,
                   std::vector<std::vector<Mat>>* history) {
    const int B = static_cast<int>(batch.size());
    const int L = net.n_layers();
    for (long t = t0; t < t1; ++t) {
        Mat u = frame_input(net, batch, t);
        std::vector<Mat> prev_pi;
        if (net.one_step_delay)
            for (int l = 0; l < L; ++l)
                prev_pi.push_back(layer_pi(net, l, st.y[l], B));
        Mat s_nodes = net.theta_in * u;  // N_1 x B
        for (int l = 0; l < L; ++l) {
            Mat s_raw = Eigen::Map<const Mat>(s_nodes.data(), 1, s_nodes.size());
            plain_layer_step(net, l, st.y[l], st.a[l], s_raw, t, batch);
            if (l + 1 < L) {
                const Mat& pi = net.one_step_delay
                                    ? prev_pi[l]
                                    : layer_pi(net, l, st.y[l], B);
                s_nodes = net.theta[l] * pi;
            }
        }
        if (history) {
            std::vector<Mat> pis;
            for (int l = 0; l < L; ++l) pis.push_back(layer_pi(net, l, st.y[l], B));
            history->push_back(std::move(pis));
        }
    }
}

Mat readout(const TwinNetwork& net, const NetState& st, int B) {
    Mat pi = layer_pi(net, net.n_layers() - 1, st.y.back(), B);
    return (net.w_out * pi).colwise() + net.b_out;
}

}  // namespace

Mat forward_network(const TwinNetwork& net, const std::vector<const Episode*>& batch,
                    std::vector<std::vector<Mat>>* pi_history) {
    net.check();
    require(!batch.empty(), "forward_network: empty batch");
    const long steps = episode_steps(net, *batch[0]);
    for (const auto* e : batch)
        require(episode_steps(net, *e) == steps,
                "forward_network: episode lengths differ");
    NetState st = init_state(net, batch);
    plain_forward(net, batch, st, 0, steps, pi_history);
    return readout(net, st, static_cast<int>(batch.size()));
}

namespace {

struct ThetaVars {
    Var th_in;
    std::vector<Var> th;
    Var w, b;
};

// Tape-recorded forward from a mid-episode state; returns final scores.
Var taped_forward(Tape& tape, const TwinNetwork& net,
                  const std::vector<const Episode*>& batch, const NetState& start,
                  long t0, long t1, const ThetaVars& tv) {
    const int B = static_cast<int>(batch.size());
    const int L = net.n_layers();
    const int nx = net.node_n_x();

    std::vector<StepState> st(L);
    std::vector<ModelVars> mv(L);
    for (int l = 0; l < L; ++l) {
        st[l] = {tape.constant(start.y[l]), tape.constant(start.a[l])};
        mv[l] = model_vars(tape, net.models[l], false, false);
    }
    auto pi_of = [&](int l) {
        const auto& m = net.models[l];
        const long NB = start.y[l].cols();
        Mat scale(nx, NB), shift(nx, NB);
        scale.colwise() = m.norm.x_scale;
        shift.colwise() = m.norm.x_shift;
        Var pi = tape.add(tape.hadamard(tape.slice_rows(st[l].y, 0, nx),
                                        tape.constant(scale)),
                          tape.constant(shift));
        return tape.reshape(pi, nx * net.layer_sizes[l], B);
    };

    for (long t = t0; t < t1; ++t) {
        Mat u = frame_input(net, batch, t);
        std::vector<Var> prev_pi(L);
        if (net.one_step_delay)
            for (int l = 0; l < L; ++l) prev_pi[l] = pi_of(l);
        Var s_nodes = tape.matmul(tv.th_in, tape.constant(u));
        for (int l = 0; l < L; ++l) {
            const auto& m = net.models[l];
            const int N = net.layer_sizes[l];
            Var s_row = tape.reshape(s_nodes, 1, N * B);
            Var s_norm = tape.scale(tape.add_scalar(s_row, -m.norm.s_shift(0)),
                                    1.0 / m.norm.s_scale(0));
            Var noise;
            if (m.mode == ModelMode::sde)
                noise = tape.constant(layer_noise(net, l, m.noise_dim(), batch, t));
            st[l] = nde_step(tape, m, mv[l], st[l], s_norm, t * m.dt, noise);
            if (!tape.value(st[l].y).allFinite())
                throw DivergenceError("train_connectivity layer " + std::to_string(l),
                                      t);
            if (l + 1 < L) {
                Var pi = net.one_step_delay ? prev_pi[l] : pi_of(l);
                s_nodes = tape.matmul(tv.th[l], pi);
            }
        }
    }
    return tape.add_colbroadcast(tape.matmul(tv.w, pi_of(L - 1)), tv.b);
}

double grad_global_norm(const std::vector<Mat>& grads) {
    double sq = 0;
    for (const auto& g : grads) sq += g.squaredNorm();
    return std::sqrt(sq);
}

}  // namespace

double connectivity_grads(const TwinNetwork& net,
                          const std::vector<const Episode*>& batch,
                          int truncation, std::vector<Mat>& grads) {
    net.check();
    if (net.mode != NetMode::twin)
        throw ConfigError("connectivity_grads: twin mode required");
    require(!batch.empty(), "connectivity_grads: empty batch");
    const long steps = episode_steps(net, *batch[0]);
    const long cut =
        (truncation > 0 && truncation < steps) ? steps - truncation : 0;

    NetState st = init_state(net, batch);
    plain_forward(net, batch, st, 0, cut, nullptr);

    Tape tape;
    ThetaVars tv;
    tv.th_in = tape.param(net.theta_in);
    for (const auto& th : net.theta) tv.th.push_back(tape.param(th));
    tv.w = tape.param(net.w_out);
    tv.b = tape.param(Mat(net.b_out));
    Var scores = taped_forward(tape, net, batch, st, cut, steps, tv);
    std::vector<int> labels;
    for (const Episode* e : batch) labels.push_back(e->label);
    Var loss = tape.softmax_cross_entropy(scores, labels);
    tape.backward(loss);

    grads.clear();
    grads.push_back(tape.grad(tv.th_in));
    for (Var th : tv.th) grads.push_back(tape.grad(th));
    grads.push_back(tape.grad(tv.w));
    grads.push_back(tape.grad(tv.b));
    return tape.value(loss)(0, 0);
}

NetTrainResult train_connectivity(TwinNetwork& net, const TaskData& data,
                                  const NetTrainConfig& cfg) {
    net.check();
    if (net.mode != NetMode::twin)
        throw ConfigError("train_connectivity: twin mode required");
    if (data.episodes.empty()) throw ConfigError("train_connectivity: no episodes");

    AdamOptimizer opt(cfg.lr);
    Mat b_mirror = net.b_out;
    std::vector<Mat*> params = {&net.theta_in};
    for (auto& th : net.theta) params.push_back(&th);
    params.push_back(&net.w_out);
    params.push_back(&b_mirror);

    NetTrainResult res;
    std::vector<std::size_t> order(data.episodes.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        net.noise_salt = mix64(0x5A17F000 + epoch);
        auto g = rng_stream(cfg.seed, 0xE90000 + epoch);
        std::shuffle(order.begin(), order.end(), g);
        double loss_sum = 0;
        long correct = 0, seen = 0, n_batches = 0;
        const auto bsz = static_cast<std::size_t>(cfg.batch);
        for (std::size_t off = 0; off < order.size(); off += bsz) {
            std::vector<const Episode*> batch;
            std::vector<int> labels;
            for (std::size_t k = off; k < std::min(order.size(), off + bsz); ++k) {
                batch.push_back(&data.episodes[order[k]]);
                labels.push_back(data.episodes[order[k]].label);
            }
            Mat sc = forward_network(net, batch);
            for (std::size_t b = 0; b < labels.size(); ++b) {
                int arg = 0;
                sc.col(b).maxCoeff(&arg);
                correct += (arg == labels[b]);
                ++seen;
            }

            std::vector<Mat> grads;
            const int draws = std::max(1, cfg.noise_draws);
            for (int r = 0; r < draws; ++r) {
                net.noise_salt = mix64(0x5A17F000 + epoch * 1000003 + r);
                std::vector<Mat> draw_grads;
                loss_sum +=
                    connectivity_grads(net, batch, cfg.truncation, draw_grads) /
                    draws;
                if (grads.empty()) {
                    grads = std::move(draw_grads);
                } else {
                    for (std::size_t i = 0; i < grads.size(); ++i)
                        grads[i] += draw_grads[i];
                }
            }
            if (draws > 1)
                for (auto& gr : grads) gr /= draws;
            ++n_batches;
            const double norm = grad_global_norm(grads);
            if (norm > cfg.clip_norm && norm > 0) {
                for (auto& gr : grads) gr *= cfg.clip_norm / norm;
                ++res.clipped_batches;
            }
            opt.step(params, grads);
            net.b_out = b_mirror.col(0);
        }
        res.loss_curve.push_back(loss_sum / std::max(1L, n_batches));
        res.acc_curve.push_back(static_cast<double>(correct) / std::max(1L, seen));
    }
    net.noise_salt = 0;
    return res;
}

EvalReport evaluate(const TwinNetwork& net, const TaskData& data, int batch) {
    net.check();
    EvalReport rep;
    rep.confusion = Mat::Zero(net.n_classes, net.n_classes);
    long correct = 0, seen = 0;
    auto score_batch = [&](const std::vector<const Episode*>& eps) {
        Mat sc = forward_network(net, eps);
        for (std::size_t b = 0; b < eps.size(); ++b) {
            int arg = 0;
            sc.col(b).maxCoeff(&arg);
            rep.confusion(eps[b]->label, arg) += 1;
            correct += (arg == eps[b]->label);
            ++seen;
        }
    };
    for (std::size_t off = 0; off < data.episodes.size();
         off += static_cast<std::size_t>(batch)) {
        std::vector<const Episode*> eps;
        for (std::size_t k = off;
             k < std::min(data.episodes.size(), off + static_cast<std::size_t>(batch));
             ++k)
            eps.push_back(&data.episodes[k]);
        try {
            score_batch(eps);
        } catch (const DivergenceError&) {
            for (const Episode* e : eps) {
                try {
                    score_batch({e});
                } catch (const DivergenceError&) {
                    ++rep.excluded;
                }
            }
        }
    }
    rep.accuracy = seen ? static_cast<double>(correct) / seen : 0.0;
    return rep;
}

EvalReport transfer_and_eval(const TwinNetwork& trained, TwinNetwork& reference,
                             const TaskData& test, int batch) {
    copy_theta(trained, reference);
    return evaluate(reference, test, batch);
}

void sample_reservoir_theta(TwinNetwork& net, const TwinNetwork& trained,
                            std::uint64_t seed) {
    auto resample = [](Mat& dst, const Mat& src, std::mt19937_64& g) {
        const double mean = src.mean();
        const double sd =
            std::sqrt((src.array() - mean).square().sum() / src.size());
        dst.resize(src.rows(), src.cols());
        for (long i = 0; i < dst.size(); ++i) *(dst.data() + i) = mean + sd * normal(g);
    };
    auto g = rng_stream(seed, 0x4E5);
    resample(net.theta_in, trained.theta_in, g);
    net.theta.resize(trained.theta.size());
    for (std::size_t l = 0; l < trained.theta.size(); ++l)
        resample(net.theta[l], trained.theta[l], g);
}

Mat fit_readout_ridge(const Mat& features, const std::vector<int>& labels,
                      int n_classes, double lambda) {
    require(features.cols() == static_cast<long>(labels.size()),
            "fit_readout_ridge: label count mismatch");
    const long dim = features.rows(), n = features.cols();
    Mat X(dim + 1, n);
    X.topRows(dim) = features;
    X.row(dim).setOnes();
    Mat Y = Mat::Zero(n_classes, n);
    for (long i = 0; i < n; ++i) {
        require(labels[i] >= 0 && labels[i] < n_classes,
                "fit_readout_ridge: label out of range");
        Y(labels[i], i) = 1.0;
    }
    Mat G = X * X.transpose() + lambda * Mat::Identity(dim + 1, dim + 1);
    return (G.ldlt().solve(X * Y.transpose())).transpose();
}

EvalReport reservoir_baseline(TwinNetwork& net, const TwinNetwork& trained,
                              const TaskData& train, const TaskData& test,
                              double lambda, std::uint64_t seed) {
    sample_reservoir_theta(net, trained, seed);
    // Final-step pi features over the training episodes.
    const int dim = net.layer_sizes.back() * net.node_n_x();
    Mat feats(dim, train.episodes.size());
    std::vector<int> labels;
    const int chunk = 64;
    for (std::size_t off = 0; off < train.episodes.size(); off += chunk) {
        std::vector<const Episode*> eps;
        for (std::size_t k = off; k < std::min(train.episodes.size(), off + chunk);
             ++k)
            eps.push_back(&train.episodes[k]);
        std::vector<std::vector<Mat>> hist;
        forward_network(net, eps, &hist);
        for (std::size_t b = 0; b < eps.size(); ++b)
            feats.col(off + b) = hist.back().back().col(b);
    }
    for (const auto& e : train.episodes) labels.push_back(e.label);
    Mat wb = fit_readout_ridge(feats, labels, net.n_classes, lambda);
    net.w_out = wb.leftCols(dim);
    net.b_out = wb.col(dim);
    return evaluate(net, test);
}

nlohmann::json theta_to_json(const TwinNetwork& net) {
    auto mat = [](const Mat& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (long i = 0; i < m.rows(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (long j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    nlohmann::json j;
    j["format_version"] = "theta-v1";
    j["layer_sizes"] = net.layer_sizes;
    j["n_features"] = net.n_features;
    j["n_classes"] = net.n_classes;
    j["theta_in"] = mat(net.theta_in);
    j["theta"] = nlohmann::json::array();
    for (const auto& th : net.theta) j["theta"].push_back(mat(th));
    j["w_out"] = mat(net.w_out);
    j["b_out"] = std::vector<double>(net.b_out.data(),
                                     net.b_out.data() + net.b_out.size());
    return j;
}

void theta_from_json(TwinNetwork& net, const nlohmann::json& j) {
    if (!j.contains("format_version") || j.at("format_version") != "theta-v1")
        throw FormatError("theta json: unsupported format_version");
    auto mat = [](const nlohmann::json& v) {
        const std::size_t r = v.size(), c = r ? v.at(0).size() : 0;
        Mat m(r, c);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t k = 0; k < c; ++k) m(i, k) = v.at(i).at(k).get<double>();
        return m;
    };
    if (j.at("layer_sizes").get<std::vector<int>>() != net.layer_sizes)
        throw ShapeError("theta json: layer sizes differ");
    net.theta_in = mat(j.at("theta_in"));
    net.theta.clear();
    for (const auto& th : j.at("theta")) net.theta.push_back(mat(th));
    net.w_out = mat(j.at("w_out"));
    const auto b = j.at("b_out").get<std::vector<double>>();
    net.b_out = Eigen::Map<const Vec>(b.data(), b.size());
    net.check();
}

}  // namespace twin
