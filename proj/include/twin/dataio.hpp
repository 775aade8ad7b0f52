#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "twin/common.hpp"
#include "twin/refsys.hpp"
#include "twin/trajectory.hpp"

#include <json.hpp>

namespace twin {

/// Full observable sequence X[k] = x(k*dt), k = 0..steps, ic included as row 0.
Mat observable_sequence(const Trajectory& traj);

/// Delay-embedded state y(k) = (x(k), x(k-1), ..., x(k-n_delay)), newest first.
Vec delay_state(const Mat& xseq, long k, int n_delay);

struct Transition {
    Vec y_prev;
    Vec signal;
    Vec y_next;
};

/// Transition records (y(t-dt), s(t), y(t)); the first emitted state is
/// anchored at t0 = n_delay*dt.
std::vector<Transition> embed_delays(const Trajectory& traj, int n_delay);

struct Dataset {
    std::vector<Trajectory> trajectories;
    int n_x() const {
        return trajectories.empty() ? 0 : static_cast<int>(trajectories[0].observed.cols());
    }
    int n_s() const {
        return trajectories.empty() ? 0 : static_cast<int>(trajectories[0].signal.cols());
    }
};

/// Dataset recipe: sequences driven by random square signals with mixed hold
/// lengths, each trajectory with its own derived seeds.
struct BuildSpec {
    int n_sequences = 1000;
    int seq_len = 200;
    std::vector<int> hold_lengths = {5, 20};
    double level_lo = -3.0, level_hi = 3.0;
    int burn_in = 0;  // zero-signal steps before recording (stochastic IC variety)
    std::uint64_t seed = 0;
};

/// Paper recipes: LI 1000 x 200 steps, T_s in {5,20}, levels [-3,3];
/// DO 2000 x 200 steps, T_s in {20,50}, levels [-0.2,0.2].
BuildSpec default_build_spec(const RefSystem& sys);

Dataset build_dataset(const RefSystem& sys, const BuildSpec& spec);

/// Aligned training window with its initial delay state.
struct Segment {
    Vec y0;         // delay state at the window start
    Mat signal;     // T x N_S
    Mat target;     // T x (N_X*(n_delay+1)), delay states after each step
    long start = 0; // window start step index (start*dt = absolute t0)
};

/// Sample `batch` windows of T transitions with uniform random start times.
std::vector<Segment> sample_segments(const Dataset& data, int T, int batch,
                                     int n_delay, std::uint64_t seed);

enum class IcMode { empirical, fixed_zero };

/// Distribution over initial delay states of the simulated devices.
struct IcDistribution {
    IcMode mode = IcMode::fixed_zero;
    std::vector<Vec> samples;
    int dim = 0;

    Vec draw(std::uint64_t seed, std::uint64_t index) const;
    void check() const {
        if (mode == IcMode::empirical && samples.empty())
            throw ConfigError("IcDistribution: empirical mode with no samples");
    }
};

/// For stochastic systems: burn in from rest under zero signal and record
/// terminal delay states. Deterministic systems pin the zero state.
IcDistribution estimate_ic(const RefSystem& sys, int n_samples, int n_delay,
                           std::uint64_t seed, int burn_in = 200);

/// Labeled image set parsed from IDX files, pixel values scaled to [0,1].
struct ImageSet {
    Mat images;  // N x (rows*cols)
    std::vector<int> labels;
    int rows = 0, cols = 0;
};

ImageSet load_idx_images(const std::string& path_images, const std::string& path_labels);
/// Writers for fixtures and derived datasets (same bit-exact layout).
void write_idx_images(const std::string& path, const Mat& images, int rows, int cols);
void write_idx_labels(const std::string& path, const std::vector<int>& labels);

/// Per-dimension min-max normalization fitted on a training split.
struct NormStats {
    Vec x_shift, x_scale;  // x_norm = (x - shift) / scale
    Vec s_shift, s_scale;

    Vec apply_x(const Vec& x) const { return (x - x_shift).cwiseQuotient(x_scale); }
    Vec invert_x(const Vec& x) const { return x.cwiseProduct(x_scale) + x_shift; }
    Vec apply_s(const Vec& s) const { return (s - s_shift).cwiseQuotient(s_scale); }
    Vec invert_s(const Vec& s) const { return s.cwiseProduct(s_scale) + s_shift; }
};

NormStats fit_norm(const Dataset& data);
nlohmann::json norm_to_json(const NormStats& n);
NormStats norm_from_json(const nlohmann::json& j);

/// Newline-delimited JSON trajectory files (device-data stand-in).
void write_trajectories_jsonl(const std::string& path, const Dataset& data);
Dataset read_trajectories_jsonl(const std::string& path);

}  // namespace twin
