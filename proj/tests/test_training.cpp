#include <doctest.h>

#include <cmath>

#include "twin/rng.hpp"
#include "twin/signals.hpp"
#include "twin/training.hpp"

using namespace twin;

namespace {

Mat random_mat(int r, int c, std::uint64_t seed, double scale = 0.5) {
    Mat m(r, c);
    auto g = rng_stream(seed, 0);
    for (long i = 0; i < m.size(); ++i) *(m.data() + i) = scale * normal(g);
    return m;
}

Dataset zero_dataset(int n, long steps) {
    // x stays pinned at zero while the signal varies; the drift net must
    // learn to output zero regardless of s.
    Dataset d;
    for (int i = 0; i < n; ++i) {
        Trajectory tr;
        SignalSpec sp;
        sp.level_lo = -1.0;
        sp.level_hi = 1.0;
        sp.total_steps = static_cast<int>(steps);
        sp.seed = 1000 + i;
        tr.signal = gen_square(sp);
        tr.observed = Mat::Zero(steps, 1);
        tr.ic = Vec::Zero(1);
        tr.dt = 0.1;
        tr.system_id = "li";
        d.trajectories.push_back(tr);
    }
    return d;
}

}  // namespace

TEST_CASE("disc input assembly ordering and round trip") {
    // T=0: single point, length N_X+N_S.
    Mat s0(1, 1), x0(1, 1);
    s0 << 3.0;
    x0 << 7.0;
    Vec f0 = assemble_disc_input(s0, x0);
    REQUIRE(f0.size() == 2);
    CHECK(f0(0) == 3.0);
    CHECK(f0(1) == 7.0);

    // T=1, s=(a,b), x=(p,q) -> (a,p,b,q).
    Mat s(2, 1), x(2, 1);
    s << 1.0, 2.0;
    x << 5.0, 6.0;
    Vec f = assemble_disc_input(s, x);
    CHECK(f(0) == 1.0);
    CHECK(f(1) == 5.0);
    CHECK(f(2) == 2.0);
    CHECK(f(3) == 6.0);

    Mat s2 = random_mat(9, 2, 1), x2 = random_mat(9, 3, 2);
    Mat sr, xr;
    disassemble_disc_input(assemble_disc_input(s2, x2), 2, 3, sr, xr);
    CHECK(sr == s2);
    CHECK(xr == x2);

    Mat bad(3, 1);
    CHECK_THROWS_AS(assemble_disc_input(bad, x), ShapeError);
}

TEST_CASE("make_discriminator validates its own shape") {
    Discriminator d = make_discriminator(1, 1, 8, {16, 16}, 3);
    CHECK(d.net.input_dim() == 18);
    CHECK(d.feature_layer == 2);
    d.net.hidden_activation = Activation::relu;
    CHECK_THROWS_AS(d.check(), ConfigError);
}

TEST_CASE("disc_loss: constant critic gives exactly lambda") {
    Discriminator d = make_discriminator(1, 1, 3, {8}, 5);
    for (auto& w : d.net.weights) w.setZero();
    Tape tape;
    MlpVars dv = mlp_vars(tape, d.net, true);
    Var real = tape.constant(random_mat(8, 6, 10));
    Var gen = tape.constant(random_mat(8, 6, 11));
    Var loss = disc_loss(tape, d, dv, real, gen, 10.0, 0);
    CHECK(tape.value(loss)(0, 0) == doctest::Approx(10.0).epsilon(1e-5));
}

TEST_CASE("disc_loss: unit-norm linear critic has zero penalty") {
    Discriminator d;
    d.n_x = 1;
    d.n_s = 1;
    d.T = 1;
    d.net.layer_sizes = {4, 1};
    Mat w = random_mat(4, 1, 7);
    w /= w.norm();
    d.net.weights = {w};
    d.net.biases = {Vec::Zero(1)};
    d.feature_layer = 1;  // unused by disc_loss

    Tape tape;
    MlpVars dv = mlp_vars(tape, d.net, true);
    Mat rm = random_mat(4, 5, 20), gm = random_mat(4, 5, 21);
    Var loss = disc_loss(tape, d, dv, tape.constant(rm), tape.constant(gm), 10.0, 3);
    const double want = (w.transpose() * gm).mean() - (w.transpose() * rm).mean();
    CHECK(tape.value(loss)(0, 0) == doctest::Approx(want).epsilon(1e-7));
}

TEST_CASE("disc_loss matches a step-by-step recomputation") {
    const int T = 2, B = 8;
    Discriminator d = make_discriminator(1, 1, T, {12, 12}, 9);
    const int D = d.net.input_dim();
    Mat rm = random_mat(D, B, 30), gm = random_mat(D, B, 31);
    const double lambda = 10.0;
    const std::uint64_t pseed = 17;

    Tape tape;
    MlpVars dv = mlp_vars(tape, d.net, true);
    Var loss =
        disc_loss(tape, d, dv, tape.constant(rm), tape.constant(gm), lambda, pseed);

    auto g = rng_stream(pseed, 0);
    double manual = 0;
    double dg = 0, dr = 0, pen = 0;
    for (int b = 0; b < B; ++b) {
        dg += mlp_forward(d.net, gm.col(b))(0, 0) / B;
        dr += mlp_forward(d.net, rm.col(b))(0, 0) / B;
        const double eps = uniform(g, 0.0, 1.0);
        Vec interp = eps * rm.col(b) + (1 - eps) * gm.col(b);
        Mat grad = jacobian(d.net, interp);  // 1 x D
        const double n = std::sqrt(grad.squaredNorm() + 1e-12);
        pen += (n - 1) * (n - 1) / B;
    }
    manual = dg - dr + lambda * pen;
    CHECK(tape.value(loss)(0, 0) == doctest::Approx(manual).epsilon(1e-9));
}

TEST_CASE("disc_loss gradients (including the penalty) match FD") {
    const int B = 4;
    Discriminator d = make_discriminator(1, 1, 1, {6}, 13);
    const int D = d.net.input_dim();
    Mat rm = random_mat(D, B, 40), gm = random_mat(D, B, 41);

    Tape tape;
    MlpVars dv = mlp_vars(tape, d.net, true);
    Var loss = disc_loss(tape, d, dv, tape.constant(rm), tape.constant(gm), 10.0, 7);
    tape.backward(loss);

    auto eval = [&]() {
        Tape t2;
        MlpVars v2 = mlp_vars(t2, d.net, false);
        return t2.value(
            disc_loss(t2, d, v2, t2.constant(rm), t2.constant(gm), 10.0, 7))(0, 0);
    };
    auto pick = rng_stream(50, 0);
    for (std::size_t l = 0; l < d.net.weights.size(); ++l) {
        Mat& w = d.net.weights[l];
        const Mat grad = tape.grad(dv.weights[l]);
        std::uniform_int_distribution<long> idx(0, w.size() - 1);
        for (int rep = 0; rep < 3; ++rep) {
            const long i = idx(pick);
            const double h = 1e-5, orig = *(w.data() + i);
            *(w.data() + i) = orig + h;
            const double lp = eval();
            *(w.data() + i) = orig - h;
            const double lm = eval();
            *(w.data() + i) = orig;
            const double fd = (lp - lm) / (2 * h);
            CHECK(std::abs(*(grad.data() + i) - fd) <=
                  1e-4 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("contrastive generator loss basics") {
    Discriminator d = make_discriminator(1, 1, 1, {8}, 15);
    const int D = d.net.input_dim();
    Mat batch = random_mat(D, 6, 60);

    Tape tape;
    MlpVars dv = mlp_vars(tape, d.net, false);
    Var same = gen_loss_contrastive(tape, d, dv, tape.constant(batch),
                                    tape.constant(batch));
    CHECK(tape.value(same)(0, 0) == doctest::Approx(0.0).epsilon(1e-14));

    // Column permutation leaves mean/std unchanged.
    Mat shuffled(D, 6);
    const int perm[6] = {3, 5, 0, 1, 4, 2};
    for (int b = 0; b < 6; ++b) shuffled.col(b) = batch.col(perm[b]);
    Var sh = gen_loss_contrastive(tape, d, dv, tape.constant(batch),
                                  tape.constant(shuffled));
    CHECK(tape.value(sh)(0, 0) < 1e-12);

    CHECK_THROWS_AS(gen_loss_contrastive(tape, d, dv,
                                         tape.constant(Mat::Zero(D, 1)),
                                         tape.constant(Mat::Zero(D, 1))),
                    ConfigError);
}

TEST_CASE("contrastive loss matches a manual two-sample computation") {
    Discriminator d;
    d.n_x = 1;
    d.n_s = 1;
    d.T = 0;
    d.net = make_mlp({2, 2, 1}, Activation::tanh, Activation::identity, 70);
    d.feature_layer = 1;

    Mat rm(2, 2), gm(2, 2);
    rm << 0.1, 0.4, -0.2, 0.3;
    gm << 0.5, -0.1, 0.2, 0.0;

    auto feats = [&](const Mat& batch) {
        Mat z = d.net.weights[0].transpose() * batch;
        z.colwise() += d.net.biases[0];
        return Mat(z.array().tanh());
    };
    Mat fr = feats(rm), fg = feats(gm);
    auto mstd = [](const Mat& f, Vec& mean, Vec& sd) {
        mean = f.rowwise().mean();
        Vec var = (f.colwise() - mean).cwiseAbs2().rowwise().mean();
        sd = (var.array() + 1e-12).sqrt();
    };
    Vec mr, sr, mg, sg;
    mstd(fr, mr, sr);
    mstd(fg, mg, sg);
    const double want = (mr - mg).squaredNorm() + (sr - sg).squaredNorm();

    Tape tape;
    MlpVars dv = mlp_vars(tape, d.net, false);
    Var loss = gen_loss_contrastive(tape, d, dv, tape.constant(rm), tape.constant(gm));
    CHECK(tape.value(loss)(0, 0) == doctest::Approx(want).epsilon(1e-10));
}

TEST_CASE("pretrain on a zero system drives the drift toward zero") {
    Dataset data = zero_dataset(20, 60);
    NeuralSdeModel m = make_model(1, 1, 1, 0.1, {16}, 1, 80);
    PretrainConfig cfg;
    cfg.epochs = 8;
    cfg.batches_per_epoch = 20;
    cfg.batch = 16;
    cfg.T = 16;
    cfg.lr = 3e-3;
    cfg.val_batches = 2;
    cfg.refit_norm = false;  // zero data has no range to normalize
    cfg.seed = 4;

    Vec probe = Vec::Zero(m.input_dim());
    probe(m.ydim()) = 0.7;  // zero state, nonzero signal
    const double f0 = mlp_forward(m.f_net, probe).norm();
    PretrainResult res = pretrain_ode(m, data, cfg);
    REQUIRE(res.train_loss.size() == 8);
    CHECK(res.train_loss.back() < res.train_loss.front() / 10);
    CHECK(mlp_forward(m.f_net, probe).norm() < f0 / 5);
    CHECK(res.lr_halvings == 0);
}

TEST_CASE("pretrain fits a deterministic leaky integrator") {
    RefSystem sys = RefSystem::from_id("li-det");
    BuildSpec bs = default_build_spec(sys);
    bs.n_sequences = 60;
    bs.seq_len = 120;
    bs.seed = 5;
    Dataset data = build_dataset(sys, bs);

    NeuralSdeModel m = make_model(1, 1, 2, sys.dt(), {48}, 0, 81);
    PretrainConfig cfg;
    cfg.epochs = 15;
    cfg.batches_per_epoch = 40;
    cfg.batch = 16;
    cfg.T = 20;
    cfg.seed = 6;
    PretrainResult res = pretrain_ode(m, data, cfg);
    CHECK(res.val_loss.back() < res.val_loss.front());
    CHECK(res.val_loss.back() < 0.01);  // normalized MSE
}

TEST_CASE("pretrain divergence rolls back and eventually aborts") {
    RefSystem sys = RefSystem::from_id("li-det");
    BuildSpec bs = default_build_spec(sys);
    bs.n_sequences = 12;
    bs.seq_len = 60;
    Dataset data = build_dataset(sys, bs);
    NeuralSdeModel m = make_model(1, 1, 1, sys.dt(), {8}, 0, 82);
    PretrainConfig cfg;
    cfg.epochs = 2;
    cfg.batches_per_epoch = 5;
    cfg.batch = 8;
    cfg.T = 8;
    cfg.lr = 1e200;  // guaranteed post-step blow-up, 3 halvings can't save it
    CHECK_THROWS_AS(pretrain_ode(m, data, cfg), DivergenceError);
}

TEST_CASE("validate_stats: frozen model vs moving reference") {
    RefSystem sys = RefSystem::from_id("li-det");
    NeuralSdeModel m = make_model(1, 1, 1, sys.dt(), {8}, 0, 83);
    for (auto& w : m.f_net.weights) w.setZero();
    for (auto& b : m.f_net.biases) b.setZero();
    m.mode = ModelMode::ode;

    ValidateConfig cfg;
    cfg.n_signals = 2;
    cfg.n_repeats = 4;
    cfg.steps = 60;
    cfg.max_lag = 10;
    cfg.signal_template.level_lo = 1.0;
    cfg.signal_template.level_hi = 3.0;
    cfg.seed = 9;
    ValidationReport rep = validate_stats(m, sys, cfg);
    CHECK(rep.mean_gap > 0.05);           // frozen model misses the motion
    CHECK(rep.std_gap == doctest::Approx(0.0));      // both ensembles deterministic
    CHECK(rep.autocov_gap == doctest::Approx(0.0));
    CHECK(rep.ref_std == doctest::Approx(0.0));
    CHECK(rep.score() == rep.mean_gap + rep.std_gap + rep.autocov_gap);

    ValidationReport again = validate_stats(m, sys, cfg);
    CHECK(again.mean_gap == rep.mean_gap);  // deterministic given seeds
}

TEST_CASE("validate_stats on a stochastic system is finite and positive") {
    RefSystem sys = RefSystem::from_id("li");
    NeuralSdeModel m = make_model(1, 1, 1, sys.dt(), {8}, 2, 84);
    m.mode = ModelMode::sde;
    ValidateConfig cfg;
    cfg.n_signals = 2;
    cfg.n_repeats = 8;
    cfg.steps = 60;
    cfg.max_lag = 8;
    cfg.seed = 10;
    ValidationReport rep = validate_stats(m, sys, cfg);
    CHECK(std::isfinite(rep.score()));
    CHECK(rep.ref_std > 0.0);
    CHECK(rep.mean_gap > 0.0);
}

TEST_CASE("train_sde with zero generator steps leaves the model unchanged") {
    RefSystem sys = RefSystem::from_id("li");
    BuildSpec bs = default_build_spec(sys);
    bs.n_sequences = 10;
    bs.seq_len = 80;
    Dataset data = build_dataset(sys, bs);
    NeuralSdeModel m = make_model(1, 1, 1, sys.dt(), {8}, 2, 85);
    m.norm = fit_norm(data);

    SdeTrainConfig cfg;
    cfg.iterations = 0;
    cfg.val.n_signals = 1;
    cfg.val.n_repeats = 2;
    cfg.val.steps = 40;
    cfg.val.max_lag = 5;
    Mat w0 = m.f_net.weights[0];
    SdeTrainResult res = train_sde(m, data, sys, cfg);
    CHECK(m.f_net.weights[0] == w0);
    CHECK(res.best_iteration == 0);
    REQUIRE(res.validations.size() == 1);
}

TEST_CASE("train_sde smoke run updates both players and tracks the best") {
    RefSystem sys = RefSystem::from_id("li");
    BuildSpec bs = default_build_spec(sys);
    bs.n_sequences = 12;
    bs.seq_len = 80;
    bs.seed = 3;
    Dataset data = build_dataset(sys, bs);
    NeuralSdeModel m = make_model(1, 1, 1, sys.dt(), {12}, 2, 86);
    m.norm = fit_norm(data);

    SdeTrainConfig cfg;
    cfg.iterations = 2;
    cfg.n_disc = 2;
    cfg.batch = 8;
    cfg.T = 10;
    cfg.disc_hidden = {16, 16};
    cfg.val_every = 1;
    cfg.val.n_signals = 1;
    cfg.val.n_repeats = 4;
    cfg.val.steps = 40;
    cfg.val.max_lag = 5;
    cfg.seed = 11;

    Mat w0 = m.f_net.weights[0];
    Mat a0 = m.A;
    SdeTrainResult res = train_sde(m, data, sys, cfg);
    CHECK(res.disc_loss_curve.size() == 4);
    CHECK(res.gen_loss_curve.size() == 2);
    CHECK(m.f_net.weights[0] != w0);
    CHECK(m.A != a0);
    CHECK(res.validations.size() == 3);  // initial + two periodic
    CHECK(res.best_iteration >= 0);
    for (double v : res.gen_loss_curve) CHECK(std::isfinite(v));
    for (double v : res.disc_loss_curve) CHECK(std::isfinite(v));
}
