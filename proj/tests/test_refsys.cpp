#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "twin/refsys.hpp"
#include "twin/rng.hpp"
#include "twin/signals.hpp"

using namespace twin;

TEST_CASE("leaky integrator drift and diffusion at rest") {
    LeakyIntegratorParams p;
    Vec zero = Vec::Zero(3);
    Vec d = li_drift(p, zero, 0.0);
    CHECK(d.cwiseAbs().maxCoeff() == 0.0);
    Vec g = li_diffusion(p, zero, 0.0);
    CHECK(g(0) == doctest::Approx(p.sigma1));
    CHECK(g(1) == 0.0);
    CHECK(g(2) == 0.0);
}

TEST_CASE("leaky integrator fixed point and tanh drive") {
    LeakyIntegratorParams p;
    const double s = 3.0;
    Vec at_fp = Vec::Zero(3);
    at_fp(0) = std::tanh(s) / p.alpha1;
    CHECK(li_drift(p, at_fp, s)(0) == doctest::Approx(0.0).epsilon(1e-14));

    Vec zero = Vec::Zero(3);
    CHECK(li_drift(p, zero, 3.0)(0) == doctest::Approx(0.995055).epsilon(1e-5));
}

TEST_CASE("duffing drift at selected states") {
    DuffingParams p;
    Vec zero = Vec::Zero(4);
    CHECK(duffing_drift(p, zero, 0.0, 0.0).cwiseAbs().maxCoeff() == 0.0);

    DuffingParams q;
    q.c = 0.1;
    q.alpha1 = 1.0;
    q.b = 1.0;
    Vec st = Vec::Zero(4);
    st(0) = 0.5;
    st(1) = 0.2;
    // velocity drift = -0.02 + 0.5 + 0.125 = 0.605
    CHECK(duffing_drift(q, st, 0.0, 0.0)(1) == doctest::Approx(0.605));
}

TEST_CASE("hand-computed Heun step for deterministic LI") {
    RefSystem sys = RefSystem::from_id("li-det");
    Vec x0 = Vec::Zero(3);
    Vec s = gen_constant(3.0, 1);
    Trajectory tr = integrate(sys, s, x0, Integrator::srk2, 0);
    CHECK(tr.observed(0, 0) == doctest::Approx(0.0945302).epsilon(1e-5));
}

TEST_CASE("zero-diffusion stochastic run is bitwise deterministic run") {
    RefSystem stoch = RefSystem::from_id("li");
    stoch.li.sigma1 = stoch.li.sigma2 = stoch.li.sigma3 = 0.0;
    RefSystem det = RefSystem::from_id("li-det");
    SignalSpec spec;
    spec.seed = 3;
    spec.total_steps = 100;
    Vec sig = gen_square(spec);
    Vec x0 = Vec::Zero(3);
    Trajectory a = integrate(stoch, sig, x0, Integrator::srk2, 17);
    Trajectory b = integrate(det, sig, x0, Integrator::srk2, 99);
    for (long k = 0; k < a.steps(); ++k)
        CHECK(a.observed(k, 0) == b.observed(k, 0));  // bitwise
}

TEST_CASE("wiener increment moments") {
    // 10^6 draws: mean within 4*sqrt(dt/n) of 0, variance within 1% of dt.
    const double dt = 0.1;
    const long n = 1000000;
    auto g = rng_stream(7, 0);
    double sum = 0, sumsq = 0;
    for (long i = 0; i < n; ++i) {
        const double w = std::sqrt(dt) * normal(g);
        sum += w;
        sumsq += w * w;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 4.0 * std::sqrt(dt / n));
    CHECK(std::abs(var - dt) < 0.01 * dt);
}

TEST_CASE("deterministic LI converges monotonically to tanh(s)/alpha1") {
    RefSystem sys = RefSystem::from_id("li-det");
    const double s = 2.0;
    const double target = std::tanh(s) / sys.li.alpha1;
    Vec sig = gen_constant(s, 200);
    Trajectory tr = integrate(sys, sig, Vec::Zero(3), Integrator::srk2, 0);
    double prev = std::abs(tr.observed(0, 0) - target);
    for (long k = 1; k < tr.steps(); ++k) {
        const double gap = std::abs(tr.observed(k, 0) - target);
        CHECK(gap <= prev + 1e-15);
        prev = gap;
    }
    CHECK(prev < 1e-6);
}

TEST_CASE("harmonic-oscillator reduction conserves energy") {
    // b=0, c=0, alpha1=-1 reduces the Duffing system to x'' = -x.
    RefSystem sys = RefSystem::from_id("duffing-det");
    sys.duffing.b = 0.0;
    sys.duffing.c = 0.0;
    sys.duffing.alpha1 = -1.0;
    sys.duffing.dt = 0.005;
    Vec x0 = Vec::Zero(4);
    x0(0) = 1.0;
    const double e0 = 1.0;
    Vec sig = gen_constant(0.0, 1000);

    for (auto [method, tol] : {std::pair{Integrator::srk2, 1e-3},
                               std::pair{Integrator::srk4, 1e-6}}) {
        Trajectory tr = integrate(sys, sig, x0, method, 0);
        double worst = 0;
        for (long k = 0; k < tr.steps(); ++k) {
            const double e = tr.observed(k, 0) * tr.observed(k, 0) +
                             tr.observed(k, 1) * tr.observed(k, 1);
            worst = std::max(worst, std::abs(e - e0) / e0);
        }
        CHECK(worst < tol);
    }
}

TEST_CASE("stochastic mean stays near deterministic trajectory") {
    // Noise channels are zero-mean; the sample mean over repeats must track
    // the deterministic trajectory to within 3 standard errors.
    RefSystem sys = RefSystem::from_id("li");
    RefSystem det = RefSystem::from_id("li-det");
    SignalSpec spec;
    spec.seed = 5;
    spec.total_steps = 100;
    Vec sig = gen_square(spec);
    const int reps = 2000;
    Vec mean = Vec::Zero(100), m2 = Vec::Zero(100);
    for (int r = 0; r < reps; ++r) {
        Trajectory tr = integrate(sys, sig, Vec::Zero(3), Integrator::srk2, 100 + r);
        mean += tr.observed.col(0);
        m2 += tr.observed.col(0).cwiseAbs2();
    }
    mean /= reps;
    Vec var = m2 / reps - mean.cwiseAbs2();
    Trajectory dtr = integrate(det, sig, Vec::Zero(3), Integrator::srk2, 0);
    int misses = 0;
    for (int k = 0; k < 100; ++k) {
        const double se = std::sqrt(var(k) / reps);
        if (std::abs(mean(k) - dtr.observed(k, 0)) > 3 * se) ++misses;
    }
    // 3-sigma misses should be rare; allow a small fraction of time points.
    CHECK(misses < 5);
}

TEST_CASE("exact jacobian closed forms") {
    RefSystem li = RefSystem::from_id("li");
    Vec st = Vec::Zero(3);
    st(0) = 0.7;
    CHECK(exact_jacobian(li, st, 1.0, 0.0)(0, 0) == doctest::Approx(-li.li.alpha1));

    RefSystem duf = RefSystem::from_id("duffing");
    duf.duffing.alpha1 = 1.0;
    duf.duffing.b = 1.0;
    Vec ds = Vec::Zero(4);
    CHECK(exact_jacobian(duf, ds, 0.0, 0.0)(1, 0) == doctest::Approx(1.0));
    ds(0) = 2.0;
    CHECK(exact_jacobian(duf, ds, 0.0, 0.0)(1, 0) == doctest::Approx(13.0));
}

TEST_CASE("one-step jacobians match finite differences of the discrete map") {
    for (auto id : {"li-det", "duffing-det"}) {
        RefSystem sys = RefSystem::from_id(id);
        Integrator method = sys.default_integrator();
        auto g = rng_stream(55, 1);
        Vec x(sys.state_dim());
        for (int i = 0; i < x.size(); ++i) x(i) = 0.3 * normal(g);
        const double s = 0.8, t = 0.4;
        StepJacobians sj = deterministic_step_jacobians(sys, x, s, t, method);
        CHECK((sj.next - deterministic_step(sys, x, s, t, method)).norm() < 1e-14);
        const double h = 1e-6;
        for (int j = 0; j < x.size(); ++j) {
            Vec xp = x, xm = x;
            xp(j) += h;
            xm(j) -= h;
            Vec fd = (deterministic_step(sys, xp, s, t, method) -
                      deterministic_step(sys, xm, s, t, method)) /
                     (2 * h);
            CHECK((sj.d_state.col(j) - fd).norm() < 1e-7);
        }
        Vec fds = (deterministic_step(sys, x, s + h, t, method) -
                   deterministic_step(sys, x, s - h, t, method)) /
                  (2 * h);
        CHECK((sj.d_signal - fds).norm() < 1e-7);
    }
}

TEST_CASE("eligibility trace base cases") {
    RefSystem sys = RefSystem::from_id("li-det");
    Vec zero_sig = gen_constant(0.0, 20);
    Mat tr = exact_eligibility(sys, zero_sig, Vec::Zero(3), Integrator::srk2);
    CHECK(tr.cwiseAbs().maxCoeff() == 0.0);

    // One step: e(t1) = d y(t1)/d s(t1) * s(t1).
    const double s = 1.3;
    Vec one = gen_constant(s, 1);
    Mat tr1 = exact_eligibility(sys, one, Vec::Zero(3), Integrator::srk2);
    StepJacobians sj =
        deterministic_step_jacobians(sys, Vec::Zero(3), s, 0.0, Integrator::srk2);
    CHECK(tr1(0, 0) == doctest::Approx(sj.d_signal(0) * s));
}

TEST_CASE("divergence raises with step index") {
    RefSystem sys = RefSystem::from_id("duffing-det");
    sys.duffing.b = 1.0;   // positive cubic: blows up
    sys.duffing.dt = 0.5;  // huge step
    Vec x0 = Vec::Zero(4);
    x0(0) = 2.0;
    Vec sig = gen_constant(0.0, 2000);
    CHECK_THROWS_AS(integrate(sys, sig, x0, Integrator::euler_maruyama, 0),
                    DivergenceError);
}

TEST_CASE("duffing bifurcates near critical signal levels") {
    // Repeated stochastic runs at a near-critical constant level settle into
    // at least two distinct wells.
    RefSystem sys = RefSystem::from_id("duffing");
    Vec sig = gen_constant(0.0, 2000);  // 10 time units
    std::set<int> branches;
    for (int r = 0; r < 40; ++r) {
        Trajectory tr = integrate(sys, sig, Vec::Zero(4), Integrator::srk4, 900 + r);
        const double xf = tr.observed(tr.steps() - 1, 0);
        branches.insert(xf > 0 ? 1 : -1);
    }
    CHECK(branches.size() >= 2);
}
