#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "twin/nde.hpp"
#include "twin/refsys.hpp"
#include "twin/signals.hpp"
#include "twin/training.hpp"

#include <json.hpp>

namespace twin {

/// Pearson correlation; 0 when either series is (numerically) constant.
double pearson(const Vec& a, const Vec& b);

/// Aligned Jacobian samples, one row per (trajectory, step), one column per
/// observable-block entry (i, j) in row-major order. model holds the
/// discrete one-step Jacobian mapped back to drift scale, (J - I) / dt;
/// exact holds the reference d(drift)/d(state) entries.
struct JacobianSeries {
    Mat model, exact;
    int n_x = 0;
    long steps_per_traj = 0;
};

struct JacobianReport {
    Mat entry_correlation;   // n_x x n_x Pearson r pooled over trajectories
    double mean_correlation = 0.0;
    double mean_abs_error = 0.0;
    std::vector<double> per_trajectory;  // pooled-entry r per trajectory
    JacobianSeries series;
};

/// Correlation/error statistics of pre-aligned series (the harness core;
/// feeding exact twice is the oracle self-test).
JacobianReport compare_series(const JacobianSeries& series, int n_trajectories);

/// Drive the (noise-free) reference with random square signals, follow its
/// trajectories, and compare the twin's one-step Jacobians against the
/// closed-form drift Jacobian at every step past the delay horizon.
JacobianReport compare_jacobians(const NeuralSdeModel& m, const RefSystem& sys,
                                 int n_trajectories, const SignalSpec& signal_template,
                                 std::uint64_t seed);

struct EligibilityReport {
    std::vector<double> rel_gap;  // per step, L2 gap / peak exact magnitude
    double mean_rel_gap = 0.0;
    bool recovered = false;  // final-quarter mean gap < middle-quarter mean gap
};

/// Eligibility traces of twin and noise-free reference on a shared signal,
/// both started from rest with e(t0) = 0.
EligibilityReport compare_eligibility(const NeuralSdeModel& m, const RefSystem& sys,
                                      const Vec& signal);

/// Lloyd k-means on scalars (k-means++ seeding); sorted centers.
std::vector<double> kmeans_1d(const std::vector<double>& xs, int k,
                              std::uint64_t seed);
/// Cluster count by the gap statistic against uniform references, capped.
int choose_k_gap(const std::vector<double>& xs, int k_max, std::uint64_t seed);

struct BranchEstimate {
    std::vector<double> centers;
    std::vector<double> freq;  // same order as centers, sums to 1
};

BranchEstimate branch_frequencies(const std::vector<double>& finals, int k_max,
                                  std::uint64_t seed);

struct FidelityConfig {
    std::vector<double> levels;  // constant signal levels probed for branching
    int n_repeats = 1000;
    int steps = 500;
    int k_max = 3;
    double center_tol = 0.3;  // branch-matching distance in raw units
    ValidateConfig val;
    std::uint64_t seed = 0;
};

struct BranchComparison {
    double level = 0.0;
    BranchEstimate ref, model;
    bool match = false;  // same branch count, centers within tolerance
};

struct FidelityReport {
    ValidationReport stats;
    std::vector<BranchComparison> branches;  // empty for deterministic systems
};

FidelityReport fidelity_report(const NeuralSdeModel& m, const RefSystem& sys,
                               const FidelityConfig& cfg);

nlohmann::json jacobian_to_json(const JacobianReport& r);
nlohmann::json eligibility_to_json(const EligibilityReport& r);
nlohmann::json fidelity_to_json(const FidelityReport& r);

/// Named columns of equal length, comma separated, for external plotting.
void write_series_csv(const std::string& path, const std::vector<std::string>& names,
                      const std::vector<Vec>& columns);

}  // namespace twin
