#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "twin/dataio.hpp"
#include "twin/nde.hpp"
#include "twin/refsys.hpp"

#include <json.hpp>

namespace twin {

/// One classification episode: a task input sequence and its label.
struct Episode {
    Mat input;  // frames x n_features
    int label = 0;
    std::uint64_t seed = 0;  // per-episode noise / IC stream
};

struct TaskData {
    std::vector<Episode> episodes;
    int n_features = 0;
    int n_classes = 10;
};

enum class NetMode { twin, reference };

/// Layered feedforward network of dynamical nodes. All nodes of a layer
/// share one model (twin mode) or one reference system (reference mode)
/// but own their state, IC draw, and noise stream. The interconnect is
/// linear: layer-1 signals are theta_in * input(t); layer l+1 signals are
/// theta[l] applied to the raw newest observable block (pi) of layer l.
/// Class scores are read out from the final layer's pi at the last step.
struct TwinNetwork {
    NetMode mode = NetMode::twin;
    std::vector<NeuralSdeModel> models;  // per layer, twin mode
    std::vector<RefSystem> systems;      // per layer, reference mode
    std::vector<int> layer_sizes;
    std::vector<IcDistribution> ic;      // per layer; twin: delay states,
                                         // reference: full hidden states
    Mat theta_in;            // N_1 x n_features
    std::vector<Mat> theta;  // N_{l+1} x (N_l * n_x), L-1 entries
    Mat w_out;               // n_classes x (N_L * n_x)
    Vec b_out;
    int n_features = 0, n_classes = 10;
    int steps_per_frame = 5;     // dynamics steps each input frame is held
    bool one_step_delay = false; // layer l+1 at t sees layer l at t-1
    // Mixed into every node's noise stream. Training remixes it per epoch so
    // stochastic nodes see fresh Wiener draws on each revisit of an episode
    // instead of one frozen realization the interconnect could exploit.
    std::uint64_t noise_salt = 0;

    int n_layers() const { return static_cast<int>(layer_sizes.size()); }
    int node_n_x() const;
    void check() const;
};

TwinNetwork make_twin_network(const std::vector<NeuralSdeModel>& models,
                              const std::vector<int>& layer_sizes,
                              const std::vector<IcDistribution>& ic,
                              int n_features, int n_classes, std::uint64_t seed);

TwinNetwork make_reference_network(const RefSystem& sys,
                                   const std::vector<int>& layer_sizes,
                                   int n_features, int n_classes,
                                   std::uint64_t seed, int ic_samples = 128,
                                   int burn_in = 200);

/// Full-hidden-state initial conditions of a reference system after a
/// zero-signal burn-in (deterministic systems pin zero).
IcDistribution estimate_state_ic(const RefSystem& sys, int n_samples,
                                 std::uint64_t seed, int burn_in = 200);

/// Copy the interconnect and read-out like-for-like; shapes must match.
void copy_theta(const TwinNetwork& from, TwinNetwork& to);

/// Synchronous forward pass over a batch of episodes (all equal length).
/// Returns class scores (n_classes x B) at the final step. If pi_history
/// is given it receives, per dynamics step, the per-layer raw pi matrices
/// ((N_l * n_x) x B).
Mat forward_network(const TwinNetwork& net, const std::vector<const Episode*>& batch,
                    std::vector<std::vector<Mat>>* pi_history = nullptr);

struct NetTrainConfig {
    int epochs = 10;
    int batch = 32;
    double lr = 3e-3;
    int truncation = 0;     // recorded BPTT steps before readout; 0 = full
    double clip_norm = 5.0;
    // Wiener realizations averaged per gradient step. For stochastic nodes
    // this estimates the gradient of the noise-expected loss; for
    // deterministic nodes extra draws are redundant, leave at 1.
    int noise_draws = 1;
    std::uint64_t seed = 0;
};

struct NetTrainResult {
    std::vector<double> loss_curve;  // per epoch mean CE
    std::vector<double> acc_curve;   // per epoch train accuracy
    long clipped_batches = 0;
};

/// Mean cross-entropy of one batch and its gradients with respect to
/// (theta_in, theta..., w_out, b_out), via BPTT over the last `truncation`
/// steps (0 = all). Node models are frozen; Wiener draws enter as constants.
double connectivity_grads(const TwinNetwork& net,
                          const std::vector<const Episode*>& batch,
                          int truncation, std::vector<Mat>& grads);

/// Softmax cross-entropy BPTT on theta_in, theta, W°, b; node models are
/// frozen and Wiener draws are constants within each backward pass.
NetTrainResult train_connectivity(TwinNetwork& net, const TaskData& data,
                                  const NetTrainConfig& cfg);

struct EvalReport {
    double accuracy = 0.0;
    Mat confusion;    // n_classes x n_classes, rows = true label
    long excluded = 0;  // episodes dropped after divergence
};

EvalReport evaluate(const TwinNetwork& net, const TaskData& data, int batch = 64);

/// Load theta from a (typically twin-trained) network into a reference
/// network and evaluate.
EvalReport transfer_and_eval(const TwinNetwork& trained, TwinNetwork& reference,
                             const TaskData& test, int batch = 64);

/// Random interconnect drawn per matrix from the trained network's
/// empirical (mean, std).
void sample_reservoir_theta(TwinNetwork& net, const TwinNetwork& trained,
                            std::uint64_t seed);

/// Ridge-regression read-out on final-step pi features (one column per
/// episode); returns n_classes x (dim+1), last column the bias.
Mat fit_readout_ridge(const Mat& features, const std::vector<int>& labels,
                      int n_classes, double lambda);

/// Random-theta baseline: resample theta, fit only the read-out by ridge
/// on the training episodes, evaluate on test.
EvalReport reservoir_baseline(TwinNetwork& net, const TwinNetwork& trained,
                              const TaskData& train, const TaskData& test,
                              double lambda, std::uint64_t seed);

nlohmann::json theta_to_json(const TwinNetwork& net);
void theta_from_json(TwinNetwork& net, const nlohmann::json& j);

}  // namespace twin
