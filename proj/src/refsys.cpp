#include "twin/refsys.hpp"

#include <cmath>

#include "twin/rng.hpp"

namespace twin {

RefSystem RefSystem::from_id(const std::string& id) {
    RefSystem sys;
    if (id == "li" || id == "li-det") {
        sys.kind = SystemKind::leaky_integrator;
        sys.li.deterministic = (id == "li-det");
    } else if (id == "duffing" || id == "duffing-det") {
        sys.kind = SystemKind::duffing;
        sys.duffing.deterministic = (id == "duffing-det");
    } else {
        throw ConfigError("unknown system id: " + id);
    }
    return sys;
}

std::string RefSystem::id() const {
    if (kind == SystemKind::leaky_integrator) return li.deterministic ? "li-det" : "li";
    return duffing.deterministic ? "duffing-det" : "duffing";
}

Vec li_drift(const LeakyIntegratorParams& p, const Vec& state, double s) {
    Vec d(3);
    d(0) = -p.alpha1 * state(0) + std::tanh(s) + state(1) + state(2);
    d(1) = -p.alpha2 * state(1);
    d(2) = -p.alpha3 * state(2);
    return d;
}

Vec li_diffusion(const LeakyIntegratorParams& p, const Vec& state, double s) {
    Vec d(3);
    d(0) = p.sigma1;
    d(1) = p.sigma2 * std::tanh(std::abs(state(0)));
    d(2) = p.sigma3 * std::tanh(std::abs(s));
    return d;
}

Vec duffing_drift(const DuffingParams& p, const Vec& state, double s, double t) {
    Vec d(4);
    const double x1 = state(0), x2 = state(1);
    d(0) = x2;
    d(1) = -p.c * x2 + p.alpha1 * x1 + p.b * x1 * x1 * x1 +
           s * std::cos(p.omega * t) + state(2) + state(3);
    d(2) = -p.alpha2 * state(2);
    d(3) = -p.alpha3 * state(3);
    return d;
}

Vec duffing_diffusion(const DuffingParams& p, const Vec& state, double s) {
    Vec d(4);
    d(0) = 0.0;
    d(1) = p.sigma1;
    d(2) = p.sigma2 * std::tanh(std::abs(state(0)));
    d(3) = p.sigma3 * std::tanh(std::abs(s));
    return d;
}

Vec RefSystem::drift(const Vec& state, double s, double t) const {
    return kind == SystemKind::leaky_integrator ? li_drift(li, state, s)
                                                : duffing_drift(duffing, state, s, t);
}

Vec RefSystem::diffusion(const Vec& state, double s) const {
    if (deterministic()) return Vec::Zero(state_dim());
    return kind == SystemKind::leaky_integrator ? li_diffusion(li, state, s)
                                                : duffing_diffusion(duffing, state, s);
}

Mat RefSystem::drift_jacobian(const Vec& state, double s, double /*t*/) const {
    if (kind == SystemKind::leaky_integrator) {
        Mat J = Mat::Zero(3, 3);
        J(0, 0) = -li.alpha1;
        J(0, 1) = 1.0;
        J(0, 2) = 1.0;
        J(1, 1) = -li.alpha2;
        J(2, 2) = -li.alpha3;
        return J;
    }
    Mat J = Mat::Zero(4, 4);
    J(0, 1) = 1.0;
    J(1, 0) = duffing.alpha1 + 3.0 * duffing.b * state(0) * state(0);
    J(1, 1) = -duffing.c;
    J(1, 2) = 1.0;
    J(1, 3) = 1.0;
    J(2, 2) = -duffing.alpha2;
    J(3, 3) = -duffing.alpha3;
    (void)s;
    return J;
}

Vec RefSystem::drift_dsignal(const Vec& /*state*/, double s, double t) const {
    if (kind == SystemKind::leaky_integrator) {
        Vec d = Vec::Zero(3);
        const double th = std::tanh(s);
        d(0) = 1.0 - th * th;
        return d;
    }
    Vec d = Vec::Zero(4);
    d(1) = std::cos(duffing.omega * t);
    return d;
}

namespace {

struct Tableau {
    // Explicit RK stage offsets and combination weights.
    std::vector<double> c;  // stage time offsets (fraction of dt)
    std::vector<double> a;  // a[i]: coefficient of k[i-1] in stage i's state
    std::vector<double> w;  // combination weights
};

Tableau tableau_for(Integrator m) {
    switch (m) {
        case Integrator::euler_maruyama: return {{0.0}, {0.0}, {1.0}};
        case Integrator::srk2: return {{0.0, 1.0}, {0.0, 1.0}, {0.5, 0.5}};
        case Integrator::srk4:
            return {{0.0, 0.5, 0.5, 1.0}, {0.0, 0.5, 0.5, 1.0},
                    {1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6}};
    }
    throw ConfigError("unknown integrator");
}

}  // namespace

Vec deterministic_step(const RefSystem& sys, const Vec& state, double s, double t,
                       Integrator method) {
    const Tableau tb = tableau_for(method);
    const double dt = sys.dt();
    std::vector<Vec> k;
    for (std::size_t i = 0; i < tb.c.size(); ++i) {
        Vec xi = (i == 0) ? state : Vec(state + dt * tb.a[i] * k[i - 1]);
        k.push_back(sys.drift(xi, s, t + tb.c[i] * dt));
    }
    Vec next = state;
    for (std::size_t i = 0; i < k.size(); ++i) next += dt * tb.w[i] * k[i];
    return next;
}

StepJacobians deterministic_step_jacobians(const RefSystem& sys, const Vec& state,
                                           double s, double t, Integrator method) {
    const Tableau tb = tableau_for(method);
    const double dt = sys.dt();
    const int n = sys.state_dim();
    std::vector<Vec> k;
    std::vector<Mat> P;  // dk_i/dstate
    std::vector<Vec> Q;  // dk_i/dsignal
    for (std::size_t i = 0; i < tb.c.size(); ++i) {
        const double ti = t + tb.c[i] * dt;
        Vec xi = (i == 0) ? state : Vec(state + dt * tb.a[i] * k[i - 1]);
        Mat Ji = sys.drift_jacobian(xi, s, ti);
        if (i == 0) {
            P.push_back(Ji);
            Q.push_back(sys.drift_dsignal(xi, s, ti));
        } else {
            Mat dxi = Mat::Identity(n, n) + dt * tb.a[i] * P[i - 1];
            P.push_back(Ji * dxi);
            Q.push_back(Ji * (dt * tb.a[i] * Q[i - 1]) + sys.drift_dsignal(xi, s, ti));
        }
        k.push_back(sys.drift(xi, s, ti));
    }
    StepJacobians out;
    out.next = state;
    out.d_state = Mat::Identity(n, n);
    out.d_signal = Vec::Zero(n);
    for (std::size_t i = 0; i < k.size(); ++i) {
        out.next += dt * tb.w[i] * k[i];
        out.d_state += dt * tb.w[i] * P[i];
        out.d_signal += dt * tb.w[i] * Q[i];
    }
    return out;
}

Trajectory integrate_full(const RefSystem& sys, const Vec& signal,
                          const Vec& initial_state, Integrator method,
                          std::uint64_t noise_seed, Vec* final_state) {
    require(signal.size() >= 1, "integrate: empty signal");
    require(initial_state.size() == sys.state_dim(), "integrate: bad initial state dim");
    const long steps = signal.size();
    const double dt = sys.dt();
    const double sdt = std::sqrt(dt);

    Trajectory traj;
    traj.signal.resize(steps, 1);
    traj.observed.resize(steps, sys.obs_dim());
    traj.dt = dt;
    traj.system_id = sys.id();
    traj.seed = noise_seed;
    traj.ic = sys.observe(initial_state);

    auto g = rng_stream(noise_seed, 0);
    Vec x = initial_state;
    const bool det = sys.deterministic();
    for (long kstep = 0; kstep < steps; ++kstep) {
        const double s = signal(kstep);
        const double t = static_cast<double>(kstep) * dt;
        Vec diff = sys.diffusion(x, s);  // evaluated at the step start state
        x = deterministic_step(sys, x, s, t, method);
        if (!det) {
            for (int i = 0; i < x.size(); ++i) x(i) += diff(i) * sdt * normal(g);
        }
        if (!x.allFinite()) throw DivergenceError("integrate: " + sys.id(), kstep);
        traj.signal(kstep, 0) = s;
        traj.observed.row(kstep) = sys.observe(x).transpose();
    }
    if (final_state) *final_state = x;
    return traj;
}

Trajectory integrate(const RefSystem& sys, const Vec& signal, const Vec& initial_state,
                     Integrator method, std::uint64_t noise_seed) {
    return integrate_full(sys, signal, initial_state, method, noise_seed, nullptr);
}

Mat exact_jacobian(const RefSystem& sys, const Vec& state, double s, double t) {
    return sys.drift_jacobian(state, s, t);
}

Mat exact_eligibility(const RefSystem& sys, const Vec& signal, const Vec& initial_state,
                      Integrator method) {
    const long steps = signal.size();
    const int n = sys.state_dim();
    Mat trace(steps, sys.obs_dim());
    Vec e = Vec::Zero(n);  // e(t0) = 0
    Vec x = initial_state;
    const double dt = sys.dt();
    for (long k = 0; k < steps; ++k) {
        const double s = signal(k);
        const double t = static_cast<double>(k) * dt;
        StepJacobians sj = deterministic_step_jacobians(sys, x, s, t, method);
        e = sj.d_state * e + sj.d_signal * s;
        x = sj.next;
        trace.row(k) = e.head(sys.obs_dim()).transpose();
    }
    return trace;
}

}  // namespace twin
