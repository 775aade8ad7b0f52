#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "twin/dataio.hpp"
#include "twin/mlp.hpp"
#include "twin/tape.hpp"
#include "twin/trajectory.hpp"

#include <json.hpp>

namespace twin {

enum class ModelMode { ode, sde, ode_aug };

ModelMode mode_from_string(const std::string& s);
std::string to_string(ModelMode m);

/// Generative model of one device: a delay-embedded neural ODE/SDE with
/// auxiliary coloured-noise channels a(t).
///
///   d(x, x(-1), ..., x(-N_delay)) = (f_1 + A a, f_2, ..., f_{N+1}) dt
///                                   + (g_1, 0, ..., 0) dW
///   d a = -a/tau dt + g_a dW
///
/// The nets operate on min-max normalized states and signals; raw values
/// are converted at the model boundary.
struct NeuralSdeModel {
    MlpParams f_net;  // input ydim+N_S(+1 time feature) -> ydim
    MlpParams g_net;  // same input -> N_X+N_a, softplus output
    Mat A;            // N_X x N_a coupling, trainable with g
    Vec tau;          // N_a fixed timescales, strictly positive
    int n_delay = 0, n_x = 0, n_s = 0, n_a = 0;
    double dt = 0.1;
    bool time_input = false;  // append cos(omega*t) as an input feature
    double omega = 1.0;
    NormStats norm;
    ModelMode mode = ModelMode::ode;

    int ydim() const { return n_x * (n_delay + 1); }
    int noise_dim() const { return n_x + n_a; }
    int input_dim() const { return ydim() + n_s + (time_input ? 1 : 0); }
    void check() const;

    /// Per-dimension raw scales of the full delay state (x_scale tiled).
    Vec y_scale() const;
    Vec y_shift() const;
    Vec normalize_y(const Vec& y_raw) const;
    Vec denormalize_y(const Vec& y_norm) const;
};

NeuralSdeModel make_model(int n_x, int n_s, int n_delay, double dt,
                          const std::vector<int>& hidden, int n_a,
                          std::uint64_t seed, bool time_input = false,
                          double omega = 1.0);

/// One Euler-Maruyama step in normalized units. noise holds standard-normal
/// draws for (newest block, aux); pass nullptr for a drift-only (ODE) step.
void nde_step(const NeuralSdeModel& m, Vec& y, Vec& a, const Vec& s_norm, double t,
              const Vec* noise);

/// Model parameters registered on a tape; A rides with the g trainability.
struct ModelVars {
    MlpVars f, g;
    Var A;
};
ModelVars model_vars(Tape& tape, const NeuralSdeModel& m, bool train_f, bool train_g);

/// Tape-recorded step, batched over columns. y: ydim x B, a: N_a x B,
/// s_norm: N_S x B; noise (noise_dim x B standard normals, recorded as a
/// constant) may be invalid for an ODE step.
struct StepState {
    Var y, a;
};
StepState nde_step(Tape& tape, const NeuralSdeModel& m, const ModelVars& v,
                   StepState st, Var s_norm, double t, Var noise);

/// Batched variant with one carrier value cos(omega*t) per column (1 x B),
/// for windows starting at different absolute times. Pass an invalid Var
/// when the model takes no time input.
StepState nde_step(Tape& tape, const NeuralSdeModel& m, const ModelVars& v,
                   StepState st, Var s_norm, Var carrier, Var noise);

/// Roll the model over a raw signal from a raw initial delay state; aux
/// starts at zero. Emits the raw newest block per step. SDE draws come from
/// noise_seed; ODE ignores it.
Trajectory generate(const NeuralSdeModel& m, const Mat& signal, const Vec& ic_raw,
                    std::uint64_t noise_seed, double t0 = 0.0);

/// Same with externally supplied standard-normal draws (noise_dim x steps).
Trajectory generate_frozen(const NeuralSdeModel& m, const Mat& signal,
                           const Vec& ic_raw, const Mat& noise, double t0 = 0.0);

/// Signal-binned additive output noise for the augmented-ODE baseline.
struct AugNoiseTable {
    double lo = 0.0, hi = 1.0;  // raw signal range covered by the bins
    Mat stds;                   // n_bins x N_X

    int bin(double s) const;  // clamps outside [lo, hi]
    void check() const;
};

/// Bin one-step prediction residuals of the ODE part against data by signal
/// level and record their per-bin standard deviation.
AugNoiseTable fit_aug_noise(const NeuralSdeModel& m, const Dataset& data, int n_bins);

/// Deterministic ODE trajectory plus additive Gaussian emission noise with
/// the signal-binned std. Requires mode ode_aug.
Trajectory generate_aug_ode(const NeuralSdeModel& m, const AugNoiseTable& table,
                            const Mat& signal, const Vec& ic_raw,
                            std::uint64_t noise_seed);

/// One-step discrete Jacobians in raw units: d y(t+dt)/d y(t) (ydim x ydim)
/// and d y(t+dt)/d s(t) (ydim x N_S). Drift-only unless frozen standard
/// normals are supplied.
struct ModelJacobians {
    Mat d_state;
    Mat d_signal;
};
ModelJacobians model_jacobians(const NeuralSdeModel& m, const Vec& y_raw,
                               const Vec& a, const Vec& s_raw, double t,
                               const Vec* noise = nullptr);

/// Eligibility recursion with model Jacobians (drift only):
/// e(t) = J_y e(t-dt) + J_s s(t), e(t0) = 0. Row k holds the newest block.
Mat model_eligibility(const NeuralSdeModel& m, const Mat& signal, const Vec& ic_raw,
                      double t0 = 0.0);

nlohmann::json model_to_json(const NeuralSdeModel& m,
                             const nlohmann::json& metadata = {});
NeuralSdeModel model_from_json(const nlohmann::json& j);
void save_model(const std::string& path, const NeuralSdeModel& m,
                const nlohmann::json& metadata = {});
NeuralSdeModel load_model(const std::string& path);

}  // namespace twin
