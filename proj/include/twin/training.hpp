#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "twin/dataio.hpp"
#include "twin/mlp.hpp"
#include "twin/nde.hpp"
#include "twin/refsys.hpp"
#include "twin/signals.hpp"
#include "twin/tape.hpp"

namespace twin {

/// Critic over interleaved (signal, state) windows of T+1 time points.
struct Discriminator {
    MlpParams net;          // (N_X+N_S)*(T+1) -> 1, smooth activations only
    int feature_layer = 0;  // 1-based hidden-layer index used as features
    int T = 32;
    int n_x = 1, n_s = 1;

    void check() const;
};

Discriminator make_discriminator(int n_x, int n_s, int T,
                                 const std::vector<int>& hidden,
                                 std::uint64_t seed);

/// Interleave per-step (s, x) pairs into one column per window:
/// (s(t0), x(t0), s(t0+dt), x(t0+dt), ...). signal and x are (T+1) x dim.
Vec assemble_disc_input(const Mat& signal, const Mat& x);
/// Recover the two sequences from an assembled column.
void disassemble_disc_input(const Vec& flat, int n_s, int n_x, Mat& signal, Mat& x);

/// Wasserstein critic loss with gradient penalty:
/// E{d(gen)} - E{d(real)} + lambda * mean((||grad d(interp)||_2 - 1)^2).
/// Interpolation coefficients are uniform per column, drawn from seed.
Var disc_loss(Tape& tape, const Discriminator& d, const MlpVars& dv, Var real,
              Var gen, double lambda, std::uint64_t seed);

/// Contrastive feature-matching generator loss: squared L2 gaps of the
/// batch mean and batch std of the feature-layer activations.
Var gen_loss_contrastive(Tape& tape, const Discriminator& d, const MlpVars& dv,
                         Var real, Var gen);

struct PretrainConfig {
    int epochs = 20;
    int batches_per_epoch = 50;
    int batch = 32;
    int T = 32;            // rollout window length
    double lr = 1e-3;
    int val_batches = 8;   // held-out segment batches per epoch
    bool refit_norm = true;
    std::uint64_t seed = 0;
};

struct PretrainResult {
    std::vector<double> train_loss;  // per epoch, normalized units
    std::vector<double> val_loss;
    int lr_halvings = 0;
};

/// Teacher-free MSE fitting of f_net on sampled segments, initialized at
/// the data's delay state. Divergence rolls back to the last epoch
/// checkpoint and halves the learning rate, at most 3 times.
PretrainResult pretrain_ode(NeuralSdeModel& m, const Dataset& data,
                            const PretrainConfig& cfg);

/// Ensemble-statistics discrepancies between generated and reference
/// repeats, in raw units averaged over signals, time, and observables.
struct ValidationReport {
    double mean_gap = 0.0;
    double std_gap = 0.0;
    double autocov_gap = 0.0;
    double ref_std = 0.0;  // reference ensemble's own average std, for scale
    double score() const { return mean_gap + std_gap + autocov_gap; }
};

struct ValidateConfig {
    int n_signals = 8;
    int n_repeats = 32;
    int steps = 200;
    int max_lag = 20;
    SignalSpec signal_template;  // level range / hold length for probe signals
    std::uint64_t seed = 0;
};

ValidationReport validate_stats(const NeuralSdeModel& m, const RefSystem& sys,
                                const ValidateConfig& cfg);

struct SdeTrainConfig {
    int iterations = 200;  // generator steps
    int n_disc = 5;
    int batch = 32;
    int T = 32;
    double lr = 2e-4;
    double beta1 = 0.5, beta2 = 0.9;
    double lambda = 10.0;
    std::vector<int> disc_hidden = {128, 128, 128};
    int val_every = 50;
    int patience = 4;  // early stop after this many non-improving validations
    ValidateConfig val;
    std::uint64_t seed = 0;
};

struct SdeTrainResult {
    NeuralSdeModel best;  // checkpoint with the minimal combined score
    int best_iteration = -1;
    std::vector<double> disc_loss_curve, gen_loss_curve;
    std::vector<std::pair<int, ValidationReport>> validations;
};

/// Alternating WGAN-GP critic / contrastive generator training of the full
/// SDE (f_net, g_net, A). Periodic validate_stats against the reference;
/// returns the best checkpoint by combined score.
SdeTrainResult train_sde(NeuralSdeModel& m, const Dataset& data, const RefSystem& sys,
                         const SdeTrainConfig& cfg);

}  // namespace twin
