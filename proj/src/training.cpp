#include "twin/training.hpp"

#include <algorithm>
#include <cmath>

#include "twin/rng.hpp"
#include "twin/signals.hpp"

namespace twin {

void Discriminator::check() const {
    net.check();
    if (net.output_dim() != 1) throw ShapeError("Discriminator: output must be scalar");
    if (net.input_dim() != (n_x + n_s) * (T + 1))
        throw ShapeError("Discriminator: input dim mismatch");
    if (net.hidden_activation == Activation::relu)
        throw ConfigError("Discriminator: smooth activations required");
    const int n_hidden = static_cast<int>(net.layer_sizes.size()) - 2;
    if (feature_layer < 1 || feature_layer > n_hidden)
        throw ConfigError("Discriminator: feature layer out of range");
}

Discriminator make_discriminator(int n_x, int n_s, int T,
                                 const std::vector<int>& hidden,
                                 std::uint64_t seed) {
    require(!hidden.empty(), "make_discriminator: needs hidden layers");
    Discriminator d;
    d.n_x = n_x;
    d.n_s = n_s;
    d.T = T;
    std::vector<int> sizes = {(n_x + n_s) * (T + 1)};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(1);
    d.net = make_mlp(sizes, Activation::softplus, Activation::identity, seed);
    d.feature_layer = static_cast<int>(hidden.size());
    d.check();
    return d;
}

Vec assemble_disc_input(const Mat& signal, const Mat& x) {
    if (signal.rows() != x.rows())
        throw ShapeError("assemble_disc_input: length mismatch");
    const long T1 = signal.rows();
    const int n_s = static_cast<int>(signal.cols());
    const int n_x = static_cast<int>(x.cols());
    Vec flat((n_s + n_x) * T1);
    for (long t = 0; t < T1; ++t) {
        flat.segment(t * (n_s + n_x), n_s) = signal.row(t).transpose();
        flat.segment(t * (n_s + n_x) + n_s, n_x) = x.row(t).transpose();
    }
    return flat;
}

void disassemble_disc_input(const Vec& flat, int n_s, int n_x, Mat& signal, Mat& x) {
    const long T1 = flat.size() / (n_s + n_x);
    require(T1 * (n_s + n_x) == flat.size(), "disassemble_disc_input: bad length");
    signal.resize(T1, n_s);
    x.resize(T1, n_x);
    for (long t = 0; t < T1; ++t) {
        signal.row(t) = flat.segment(t * (n_s + n_x), n_s).transpose();
        x.row(t) = flat.segment(t * (n_s + n_x) + n_s, n_x).transpose();
    }
}

Var disc_loss(Tape& tape, const Discriminator& d, const MlpVars& dv, Var real,
              Var gen, double lambda, std::uint64_t seed) {
    const Mat& r = tape.value(real);
    const Mat& g = tape.value(gen);
    if (r.rows() != g.rows() || r.cols() != g.cols())
        throw ShapeError("disc_loss: batch shapes differ");
    const int D = static_cast<int>(r.rows()), B = static_cast<int>(r.cols());

    Var wass = tape.sub(tape.mean(mlp_forward(tape, d.net, dv, gen)),
                        tape.mean(mlp_forward(tape, d.net, dv, real)));

    auto rng = rng_stream(seed, 0);
    Mat eps(D, B);
    for (int b = 0; b < B; ++b) eps.col(b).setConstant(uniform(rng, 0.0, 1.0));
    Mat one_minus = Mat::Ones(D, B) - eps;
    Var interp = tape.add(tape.hadamard(real, tape.constant(eps)),
                          tape.hadamard(gen, tape.constant(one_minus)));
    Var grad_in = mlp_input_gradient(tape, d.net, dv, interp);
    Var sq_colsum = tape.matmul(tape.constant(Mat::Ones(1, D)), tape.square(grad_in));
    Var norm = tape.sqrt_(tape.add_scalar(sq_colsum, 1e-12));
    Var penalty = tape.mean(tape.square(tape.add_scalar(norm, -1.0)));
    return tape.add(wass, tape.scale(penalty, lambda));
}

Var gen_loss_contrastive(Tape& tape, const Discriminator& d, const MlpVars& dv,
                         Var real, Var gen) {
    if (tape.value(real).cols() < 2)
        throw ConfigError("gen_loss_contrastive: batch std needs >= 2 samples");
    auto stats = [&](Var batch, Var& mean, Var& stddev) {
        Var f = mlp_layer_activations(tape, d.net, dv, batch, d.feature_layer);
        mean = tape.rowmean(f);
        Var centered = tape.sub_colbroadcast(f, mean);
        stddev = tape.sqrt_(tape.add_scalar(tape.rowmean(tape.square(centered)), 1e-12));
    };
    Var mr, sr, mg, sg;
    stats(real, mr, sr);
    stats(gen, mg, sg);
    return tape.add(tape.sum(tape.square(tape.sub(mr, mg))),
                    tape.sum(tape.square(tape.sub(sr, sg))));
}

namespace {

// Optimizer binding over a model's trainable blocks. Biases are Vec in the
// parameter structs, so the optimizer works on n x 1 mirrors that stay
// authoritative between steps and are copied back after each update.
struct ParamBinding {
    std::vector<Mat*> ptrs;
    std::vector<Mat> bias_store;
    NeuralSdeModel* model = nullptr;
    bool with_f = false, with_g = false;

    void bind(NeuralSdeModel& m, bool f, bool g) {
        model = &m;
        with_f = f;
        with_g = g;
        ptrs.clear();
        bias_store.clear();
        std::size_t n_bias = 0;
        if (f) n_bias += m.f_net.biases.size();
        if (g) n_bias += m.g_net.biases.size();
        bias_store.reserve(n_bias);  // pointers into it must stay stable
        if (f) {
            for (auto& w : m.f_net.weights) ptrs.push_back(&w);
            for (auto& b : m.f_net.biases) {
                bias_store.push_back(b);
                ptrs.push_back(&bias_store.back());
            }
        }
        if (g) {
            for (auto& w : m.g_net.weights) ptrs.push_back(&w);
            for (auto& b : m.g_net.biases) {
                bias_store.push_back(b);
                ptrs.push_back(&bias_store.back());
            }
            ptrs.push_back(&m.A);
        }
    }

    std::vector<Mat> grads(const Tape& tape, const ModelVars& v) const {
        std::vector<Mat> g;
        if (with_f) {
            for (Var w : v.f.weights) g.push_back(tape.grad(w));
            for (Var b : v.f.biases) g.push_back(tape.grad(b));
        }
        if (with_g) {
            for (Var w : v.g.weights) g.push_back(tape.grad(w));
            for (Var b : v.g.biases) g.push_back(tape.grad(b));
            g.push_back(tape.grad(v.A));
        }
        return g;
    }

    void sync() const {
        std::size_t i = 0;
        if (with_f)
            for (auto& b : model->f_net.biases) b = bias_store[i++].col(0);
        if (with_g)
            for (auto& b : model->g_net.biases) b = bias_store[i++].col(0);
    }
};

struct DiscBinding {
    std::vector<Mat*> ptrs;
    std::vector<Mat> bias_store;
    Discriminator* disc = nullptr;

    void bind(Discriminator& d) {
        disc = &d;
        ptrs.clear();
        bias_store.clear();
        bias_store.reserve(d.net.biases.size());
        for (auto& w : d.net.weights) ptrs.push_back(&w);
        for (auto& b : d.net.biases) {
            bias_store.push_back(b);
            ptrs.push_back(&bias_store.back());
        }
    }
    std::vector<Mat> grads(const Tape& tape, const MlpVars& v) const {
        std::vector<Mat> g;
        for (Var w : v.weights) g.push_back(tape.grad(w));
        for (Var b : v.biases) g.push_back(tape.grad(b));
        return g;
    }
    void sync() const {
        for (std::size_t i = 0; i < disc->net.biases.size(); ++i)
            disc->net.biases[i] = bias_store[i].col(0);
    }
};

// Normalized batch view of sampled segments.
struct SegBatch {
    Mat y0;                    // ydim x B
    std::vector<Mat> s;        // per step, N_S x B
    std::vector<Mat> target;   // per step, ydim x B
    std::vector<Mat> carrier;  // per step, 1 x B (empty if no time input)
};

SegBatch batch_segments(const NeuralSdeModel& m, const std::vector<Segment>& segs) {
    const int B = static_cast<int>(segs.size());
    const int T = static_cast<int>(segs[0].signal.rows());
    const Vec ys = m.y_scale(), ysh = m.y_shift();
    SegBatch out;
    out.y0.resize(m.ydim(), B);
    out.s.assign(T, Mat(m.n_s, B));
    out.target.assign(T, Mat(m.ydim(), B));
    if (m.time_input) out.carrier.assign(T, Mat(1, B));
    for (int b = 0; b < B; ++b) {
        out.y0.col(b) = (segs[b].y0 - ysh).cwiseQuotient(ys);
        for (int t = 0; t < T; ++t) {
            out.s[t].col(b) = m.norm.apply_s(segs[b].signal.row(t).transpose());
            out.target[t].col(b) =
                (Vec(segs[b].target.row(t).transpose()) - ysh).cwiseQuotient(ys);
            if (m.time_input)
                out.carrier[t](0, b) =
                    std::cos(m.omega * (segs[b].start + t) * m.dt);
        }
    }
    return out;
}

Var chain_add(Tape& tape, const std::vector<Var>& terms) {
    Var acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = tape.add(acc, terms[i]);
    return acc;
}

// Record an ODE rollout over a segment batch; returns the per-term MSE.
Var rollout_mse(Tape& tape, const NeuralSdeModel& m, const ModelVars& v,
                const SegBatch& sb) {
    const int T = static_cast<int>(sb.s.size());
    const int B = static_cast<int>(sb.y0.cols());
    StepState st{tape.constant(sb.y0), tape.constant(Mat::Zero(m.n_a, B))};
    std::vector<Var> errs;
    for (int t = 0; t < T; ++t) {
        Var carrier;
        if (m.time_input) carrier = tape.constant(sb.carrier[t]);
        st = nde_step(tape, m, v, st, tape.constant(sb.s[t]), carrier, Var{});
        errs.push_back(tape.sum(tape.square(tape.sub(st.y, tape.constant(sb.target[t])))));
    }
    return tape.scale(chain_add(tape, errs),
                      1.0 / (static_cast<double>(T) * B * m.ydim()));
}

Dataset slice_dataset(const Dataset& data, std::size_t from, std::size_t to) {
    Dataset out;
    out.trajectories.assign(data.trajectories.begin() + from,
                            data.trajectories.begin() + to);
    return out;
}

}  // namespace

PretrainResult pretrain_ode(NeuralSdeModel& m, const Dataset& data,
                            const PretrainConfig& cfg) {
    require(!data.trajectories.empty(), "pretrain_ode: empty dataset");
    require(cfg.epochs >= 1 && cfg.batch >= 1 && cfg.T >= 1,
            "pretrain_ode: bad schedule");
    if (cfg.refit_norm) m.norm = fit_norm(data);
    m.check();

    const std::size_t n_val =
        std::max<std::size_t>(1, data.trajectories.size() / 10);
    Dataset train = slice_dataset(data, 0, data.trajectories.size() - n_val);
    Dataset val = slice_dataset(data, data.trajectories.size() - n_val,
                                data.trajectories.size());
    if (train.trajectories.empty()) train = val;

    PretrainResult res;
    AdamOptimizer opt(cfg.lr);
    ParamBinding bind;
    bind.bind(m, true, false);
    NeuralSdeModel ckpt = m;

    int epoch = 0;
    while (epoch < cfg.epochs) {
        try {
            double train_sum = 0;
            for (int b = 0; b < cfg.batches_per_epoch; ++b) {
                auto segs = sample_segments(
                    train, cfg.T, cfg.batch, m.n_delay,
                    mix64(cfg.seed) ^ mix64(0x7E0000 + epoch * 100003 + b));
                SegBatch sb = batch_segments(m, segs);
                Tape tape;
                ModelVars v = model_vars(tape, m, true, false);
                Var loss = rollout_mse(tape, m, v, sb);
                const double lv = tape.value(loss)(0, 0);
                if (!std::isfinite(lv)) throw DivergenceError("pretrain_ode", epoch);
                train_sum += lv;
                tape.backward(loss);
                opt.step(bind.ptrs, bind.grads(tape, v));
                bind.sync();
            }
            double val_sum = 0;
            for (int b = 0; b < cfg.val_batches; ++b) {
                auto segs = sample_segments(val, cfg.T, cfg.batch, m.n_delay,
                                            mix64(cfg.seed) ^ mix64(0xFA0000 + b));
                SegBatch sb = batch_segments(m, segs);
                Tape tape;
                ModelVars v = model_vars(tape, m, false, false);
                val_sum += tape.value(rollout_mse(tape, m, v, sb))(0, 0);
            }
            res.train_loss.push_back(train_sum / cfg.batches_per_epoch);
            res.val_loss.push_back(val_sum / std::max(1, cfg.val_batches));
            ckpt = m;
            ++epoch;
        } catch (const DivergenceError&) {
            if (++res.lr_halvings > 3) throw;
            m = ckpt;
            opt.reset();
            opt.set_lr(opt.lr() / 2.0);
            bind.bind(m, true, false);
        }
    }
    return res;
}

ValidationReport validate_stats(const NeuralSdeModel& m, const RefSystem& sys,
                                const ValidateConfig& cfg) {
    require(cfg.n_repeats >= 2, "validate_stats: n_repeats >= 2 required");
    require(cfg.steps > m.n_delay + cfg.max_lag + 1, "validate_stats: too few steps");
    const int n_x = sys.obs_dim();
    require(n_x == m.n_x, "validate_stats: observable dims differ");
    const int nd = m.n_delay;
    const long t_lo = nd, t_hi = cfg.steps;  // compared time indices
    const long span = t_hi - t_lo + 1;

    ValidationReport rep;
    double mean_acc = 0, std_acc = 0, cov_acc = 0, refstd_acc = 0;
    long mean_n = 0, cov_n = 0;

    for (int i = 0; i < cfg.n_signals; ++i) {
        SignalSpec sp = cfg.signal_template;
        sp.total_steps = cfg.steps;
        sp.seed = mix64(cfg.seed) ^ mix64(0x51 + i);
        Vec sig = gen_square(sp);

        // Ensembles: per repeat and observable, x over times t_lo..t_hi.
        std::vector<Mat> ref(n_x, Mat(span, cfg.n_repeats));
        std::vector<Mat> gen(n_x, Mat(span, cfg.n_repeats));
        for (int r = 0; r < cfg.n_repeats; ++r) {
            Trajectory rt = integrate(sys, sig, Vec::Zero(sys.state_dim()),
                                      sys.default_integrator(),
                                      mix64(cfg.seed) ^ mix64(0xE0000 + i * 1000 + r));
            Mat xseq = observable_sequence(rt);
            Vec ic = delay_state(xseq, nd, nd);
            Mat tail_sig = rt.signal.bottomRows(cfg.steps - nd);
            Trajectory gt = generate(m, tail_sig, ic,
                                     mix64(cfg.seed) ^ mix64(0xF0000 + i * 1000 + r),
                                     nd * m.dt);
            for (int d = 0; d < n_x; ++d) {
                for (long t = 0; t < span; ++t) ref[d](t, r) = xseq(t_lo + t, d);
                gen[d](0, r) = ic(d);
                for (long t = 1; t < span; ++t) gen[d](t, r) = gt.observed(t - 1, d);
            }
        }

        for (int d = 0; d < n_x; ++d) {
            Vec mr = ref[d].rowwise().mean(), mg = gen[d].rowwise().mean();
            Vec vr = (ref[d].colwise() - mr).cwiseAbs2().rowwise().mean();
            Vec vg = (gen[d].colwise() - mg).cwiseAbs2().rowwise().mean();
            for (long t = 0; t < span; ++t) {
                mean_acc += std::abs(mr(t) - mg(t));
                std_acc += std::abs(std::sqrt(vr(t)) - std::sqrt(vg(t)));
                refstd_acc += std::sqrt(vr(t));
                ++mean_n;
            }
            // Autocovariance around three reference times.
            Mat rc = ref[d].colwise() - mr;
            Mat gc = gen[d].colwise() - mg;
            for (int q = 1; q <= 3; ++q) {
                const long tr = t_lo == t_hi ? 0 : q * (span - cfg.max_lag - 1) / 4;
                for (int lag = 0; lag <= cfg.max_lag; ++lag) {
                    const double cr =
                        (rc.row(tr).array() * rc.row(tr + lag).array()).mean();
                    const double cg =
                        (gc.row(tr).array() * gc.row(tr + lag).array()).mean();
                    cov_acc += std::abs(cr - cg);
                    ++cov_n;
                }
            }
        }
    }
    rep.mean_gap = mean_acc / mean_n;
    rep.std_gap = std_acc / mean_n;
    rep.autocov_gap = cov_acc / cov_n;
    rep.ref_std = refstd_acc / mean_n;
    return rep;
}

namespace {

// Plain (untaped) SDE rollout of a segment batch; returns normalized newest
// blocks per time point, (T+1) entries of n_x x B, plus the noise draws.
void plain_rollouts(const NeuralSdeModel& m, const SegBatch& sb, int T,
                    std::uint64_t seed, std::vector<Mat>& xs, std::vector<Mat>* noise) {
    const int B = static_cast<int>(sb.y0.cols());
    xs.assign(T + 1, Mat(m.n_x, B));
    if (noise) noise->assign(T, Mat(m.noise_dim(), B));
    xs[0] = sb.y0.topRows(m.n_x);
    for (int b = 0; b < B; ++b) {
        auto g = rng_stream(seed, b);
        Vec y = sb.y0.col(b);
        Vec a = Vec::Zero(m.n_a);
        for (int t = 0; t < T; ++t) {
            Vec xi(m.noise_dim());
            for (int j = 0; j < m.noise_dim(); ++j) xi(j) = normal(g);
            if (noise) (*noise)[t].col(b) = xi;
            Vec in(m.input_dim());
            in.head(m.ydim()) = y;
            in.segment(m.ydim(), m.n_s) = sb.s[t].col(b);
            if (m.time_input) in(m.input_dim() - 1) = sb.carrier[t](0, b);
            Vec f = mlp_forward(m.f_net, in);
            Vec gv = mlp_forward(m.g_net, in);
            f.head(m.n_x) += m.A * a;
            y += m.dt * f;
            const double sdt = std::sqrt(m.dt);
            y.head(m.n_x) += sdt * gv.head(m.n_x).cwiseProduct(xi.head(m.n_x));
            a = a.cwiseProduct(Vec::Ones(m.n_a) - m.dt * m.tau.cwiseInverse()) +
                sdt * gv.tail(m.n_a).cwiseProduct(xi.tail(m.n_a));
            if (!y.allFinite() || !a.allFinite())
                throw DivergenceError("train_sde rollout", t);
            xs[t + 1].col(b) = y.head(m.n_x);
        }
    }
}

// Interleaved critic input matrix from normalized signals and states.
Mat disc_batch(const std::vector<Mat>& s, const std::vector<Mat>& x) {
    const int T1 = static_cast<int>(x.size());
    const int n_s = static_cast<int>(s[0].rows()), n_x = static_cast<int>(x[0].rows());
    const int B = static_cast<int>(x[0].cols());
    Mat out((n_s + n_x) * T1, B);
    for (int t = 0; t < T1; ++t) {
        out.middleRows(t * (n_s + n_x), n_s) = s[t];
        out.middleRows(t * (n_s + n_x) + n_s, n_x) = x[t];
    }
    return out;
}

}  // namespace

SdeTrainResult train_sde(NeuralSdeModel& m, const Dataset& data, const RefSystem& sys,
                         const SdeTrainConfig& cfg) {
    require(cfg.batch >= 2, "train_sde: batch >= 2 required");
    m.mode = ModelMode::sde;
    m.check();
    const int T = cfg.T;

    Discriminator disc = make_discriminator(m.n_x, m.n_s, T, cfg.disc_hidden,
                                            mix64(cfg.seed) ^ 0xD15C);
    AdamOptimizer d_opt(cfg.lr, cfg.beta1, cfg.beta2);
    AdamOptimizer g_opt(cfg.lr, cfg.beta1, cfg.beta2);
    ParamBinding g_bind;
    g_bind.bind(m, true, true);
    DiscBinding d_bind;
    d_bind.bind(disc);

    SdeTrainResult res;
    int since_best = 0;
    double best_score = 0;
    auto run_validation = [&](int iter) {
        ValidationReport rep = validate_stats(m, sys, cfg.val);
        res.validations.emplace_back(iter, rep);
        if (res.best_iteration < 0 || rep.score() < best_score) {
            best_score = rep.score();
            res.best = m;
            res.best_iteration = iter;
            since_best = 0;
        } else {
            ++since_best;
        }
    };
    run_validation(0);

    std::uint64_t draw = 0;
    auto next_seed = [&]() { return mix64(cfg.seed) ^ mix64(0x5DE000 + draw++); };

    for (int it = 1; it <= cfg.iterations; ++it) {
        // Critic updates on detached generator samples.
        for (int k = 0; k < cfg.n_disc; ++k) {
            auto segs = sample_segments(data, T + 1, cfg.batch, m.n_delay, next_seed());
            SegBatch sb = batch_segments(m, segs);
            std::vector<Mat> real_x(T + 1, Mat(m.n_x, cfg.batch));
            real_x[0] = sb.y0.topRows(m.n_x);
            for (int t = 0; t < T; ++t) real_x[t + 1] = sb.target[t].topRows(m.n_x);
            std::vector<Mat> gen_x;
            plain_rollouts(m, sb, T, next_seed(), gen_x, nullptr);

            std::vector<Mat> sig(sb.s.begin(), sb.s.begin() + T + 1);
            Tape tape;
            MlpVars dv = mlp_vars(tape, disc.net, true);
            Var real = tape.constant(disc_batch(sig, real_x));
            Var gen = tape.constant(disc_batch(sig, gen_x));
            Var loss = disc_loss(tape, disc, dv, real, gen, cfg.lambda, next_seed());
            res.disc_loss_curve.push_back(tape.value(loss)(0, 0));
            tape.backward(loss);
            d_opt.step(d_bind.ptrs, d_bind.grads(tape, dv));
            d_bind.sync();
        }

        // Generator update through a recorded rollout.
        {
            auto segs = sample_segments(data, T + 1, cfg.batch, m.n_delay, next_seed());
            SegBatch sb = batch_segments(m, segs);
            std::vector<Mat> real_x(T + 1, Mat(m.n_x, cfg.batch));
            real_x[0] = sb.y0.topRows(m.n_x);
            for (int t = 0; t < T; ++t) real_x[t + 1] = sb.target[t].topRows(m.n_x);
            std::vector<Mat> sig(sb.s.begin(), sb.s.begin() + T + 1);

            Tape tape;
            ModelVars v = model_vars(tape, m, true, true);
            MlpVars dv = mlp_vars(tape, disc.net, false);
            StepState st{tape.constant(sb.y0),
                         tape.constant(Mat::Zero(m.n_a, cfg.batch))};
            auto g = rng_stream(next_seed(), 0);
            std::vector<Var> parts;
            parts.push_back(tape.constant(sig[0]));
            parts.push_back(tape.constant(sb.y0.topRows(m.n_x)));
            for (int t = 0; t < T; ++t) {
                Mat xi(m.noise_dim(), cfg.batch);
                for (long q = 0; q < xi.size(); ++q) *(xi.data() + q) = normal(g);
                Var carrier;
                if (m.time_input) carrier = tape.constant(sb.carrier[t]);
                st = nde_step(tape, m, v, st, tape.constant(sb.s[t]), carrier,
                              tape.constant(xi));
                if (!tape.value(st.y).allFinite())
                    throw DivergenceError("train_sde generator rollout", it);
                parts.push_back(tape.constant(sig[t + 1]));
                parts.push_back(tape.slice_rows(st.y, 0, m.n_x));
            }
            Var gen = tape.vconcat(parts);
            Var real = tape.constant(disc_batch(sig, real_x));
            Var loss = gen_loss_contrastive(tape, disc, dv, real, gen);
            res.gen_loss_curve.push_back(tape.value(loss)(0, 0));
            tape.backward(loss);
            g_opt.step(g_bind.ptrs, g_bind.grads(tape, v));
            g_bind.sync();
        }

        if (it % cfg.val_every == 0 || it == cfg.iterations) {
            run_validation(it);
            if (since_best >= cfg.patience) break;
        }
    }
    return res;
}

}  // namespace twin
