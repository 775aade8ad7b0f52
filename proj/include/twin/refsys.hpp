#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "twin/common.hpp"
#include "twin/trajectory.hpp"

namespace twin {

enum class Integrator { euler_maruyama, srk2, srk4 };

/// Nonlinear leaky integrator with two coloured-noise channels.
/// State (x1, x2, x3); only x1 is observable.
struct LeakyIntegratorParams {
    double alpha1 = 1.0, alpha2 = 0.5, alpha3 = 1.5;
    double sigma1 = 0.01, sigma2 = 0.5, sigma3 = 0.5;
    double dt = 0.1;
    bool deterministic = false;

    void check() const {
        if (!(alpha1 > 0 && alpha2 > 0 && alpha3 > 0))
            throw ConfigError("LeakyIntegratorParams: leak rates must be positive");
        if (sigma1 < 0 || sigma2 < 0 || sigma3 < 0)
            throw ConfigError("LeakyIntegratorParams: noise scales must be nonnegative");
        if (dt <= 0) throw ConfigError("LeakyIntegratorParams: dt must be positive");
    }
};

/// Damped double-well Duffing oscillator with carrier-modulated forcing and
/// two coloured-noise channels coupled into the velocity equation.
/// State (x1, x2, x3, x4); position and velocity (x1, x2) are observable.
struct DuffingParams {
    double c = 0.3;        // damping
    double alpha1 = 1.0;   // linear stiffness (positive: double well with b < 0)
    double b = -1.0;       // cubic coefficient
    double omega = 1.0;    // carrier frequency
    double alpha2 = 0.5, alpha3 = 1.5;
    double sigma1 = 0.01, sigma2 = 0.05, sigma3 = 0.05;
    double dt = 0.005;
    bool deterministic = false;

    void check() const {
        if (dt <= 0) throw ConfigError("DuffingParams: dt must be positive");
        if (sigma1 < 0 || sigma2 < 0 || sigma3 < 0)
            throw ConfigError("DuffingParams: noise scales must be nonnegative");
        if (omega <= 0) throw ConfigError("DuffingParams: omega must be positive");
    }
};

enum class SystemKind { leaky_integrator, duffing };

/// An analytical reference dynamical system: drift/diffusion fields plus
/// closed-form partials, used both to build datasets and as gradient oracle.
struct RefSystem {
    SystemKind kind = SystemKind::leaky_integrator;
    LeakyIntegratorParams li;
    DuffingParams duffing;

    static RefSystem from_id(const std::string& id);  // li, li-det, duffing, duffing-det
    std::string id() const;

    int state_dim() const { return kind == SystemKind::leaky_integrator ? 3 : 4; }
    int obs_dim() const { return kind == SystemKind::leaky_integrator ? 1 : 2; }
    double dt() const { return kind == SystemKind::leaky_integrator ? li.dt : duffing.dt; }
    bool deterministic() const {
        return kind == SystemKind::leaky_integrator ? li.deterministic
                                                    : duffing.deterministic;
    }
    Integrator default_integrator() const {
        return kind == SystemKind::leaky_integrator ? Integrator::srk2 : Integrator::srk4;
    }

    Vec drift(const Vec& state, double s, double t) const;
    Vec diffusion(const Vec& state, double s) const;
    /// Closed-form d(drift)/d(state).
    Mat drift_jacobian(const Vec& state, double s, double t) const;
    /// Closed-form d(drift)/d(signal).
    Vec drift_dsignal(const Vec& state, double s, double t) const;

    Vec observe(const Vec& state) const { return state.head(obs_dim()); }
};

Vec li_drift(const LeakyIntegratorParams& p, const Vec& state, double s);
Vec li_diffusion(const LeakyIntegratorParams& p, const Vec& state, double s);
Vec duffing_drift(const DuffingParams& p, const Vec& state, double s, double t);
Vec duffing_diffusion(const DuffingParams& p, const Vec& state, double s);

/// One deterministic stage update of the chosen scheme (no noise term).
Vec deterministic_step(const RefSystem& sys, const Vec& state, double s, double t,
                       Integrator method);

/// Deterministic step together with the exact Jacobians of the discrete map:
/// d(next)/d(state) and d(next)/d(signal), differentiated through the
/// Runge-Kutta stages.
struct StepJacobians {
    Vec next;
    Mat d_state;   // state_dim x state_dim
    Vec d_signal;  // state_dim
};
StepJacobians deterministic_step_jacobians(const RefSystem& sys, const Vec& state,
                                           double s, double t, Integrator method);

/// Evolve the system over a signal. The diffusion term is added after the
/// deterministic stage update as a Euler-Maruyama increment with
/// Wiener draws ~ Normal(0, dt), reproducible from noise_seed. Hidden
/// channels are evolved but only observables are emitted.
Trajectory integrate(const RefSystem& sys, const Vec& signal, const Vec& initial_state,
                     Integrator method, std::uint64_t noise_seed);

/// Same but also returns the full final state (for burn-in sampling).
Trajectory integrate_full(const RefSystem& sys, const Vec& signal,
                          const Vec& initial_state, Integrator method,
                          std::uint64_t noise_seed, Vec* final_state);

/// Continuous-time exact Jacobian d(drift)/d(state); the reference for the
/// model's (J - I)/dt comparison.
Mat exact_jacobian(const RefSystem& sys, const Vec& state, double s, double t);

/// Eligibility trace of the noiseless discretized flow:
/// e(t) = d y(t)/d y(t-dt) e(t-dt) + d y(t)/d s(t) * s(t), e(t0) = 0.
/// Row k holds the observable components of e after step k.
Mat exact_eligibility(const RefSystem& sys, const Vec& signal, const Vec& initial_state,
                      Integrator method);

}  // namespace twin
