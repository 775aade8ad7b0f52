#include "twin/verify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "twin/dataio.hpp"
#include "twin/rng.hpp"

namespace twin {

double pearson(const Vec& a, const Vec& b) {
    require(a.size() == b.size() && a.size() > 1, "pearson: series mismatch");
    const double ma = a.mean(), mb = b.mean();
    const Vec da = a.array() - ma, db = b.array() - mb;
    const double va = da.squaredNorm(), vb = db.squaredNorm();
    if (va < 1e-18 || vb < 1e-18) return 0.0;
    return da.dot(db) / std::sqrt(va * vb);
}

JacobianReport compare_series(const JacobianSeries& series, int n_trajectories) {
    require(series.model.rows() == series.exact.rows() &&
                series.model.cols() == series.exact.cols(),
            "compare_series: series shapes differ");
    const int nx = series.n_x;
    require(series.model.cols() == long(nx) * nx, "compare_series: entry count");
    JacobianReport rep;
    rep.series = series;
    rep.entry_correlation.resize(nx, nx);
    for (int i = 0; i < nx; ++i)
        for (int j = 0; j < nx; ++j) {
            const long col = long(i) * nx + j;
            rep.entry_correlation(i, j) =
                pearson(series.model.col(col), series.exact.col(col));
        }
    rep.mean_correlation = rep.entry_correlation.mean();
    rep.mean_abs_error = (series.model - series.exact).cwiseAbs().mean();
    const long chunk = series.steps_per_traj;
    for (int tr = 0; tr < n_trajectories; ++tr) {
        Mat mm = series.model.middleRows(tr * chunk, chunk);
        Mat ee = series.exact.middleRows(tr * chunk, chunk);
        rep.per_trajectory.push_back(
            pearson(Eigen::Map<const Vec>(mm.data(), mm.size()),
                    Eigen::Map<const Vec>(ee.data(), ee.size())));
    }
    return rep;
}

JacobianReport compare_jacobians(const NeuralSdeModel& m, const RefSystem& sys,
                                 int n_trajectories,
                                 const SignalSpec& signal_template,
                                 std::uint64_t seed) {
    m.check();
    require(m.n_x == sys.obs_dim(), "compare_jacobians: observable dims differ");
    RefSystem det = sys;
    det.li.deterministic = true;
    det.duffing.deterministic = true;

    const int nx = m.n_x;
    const int nd = m.n_delay;
    const long steps = signal_template.total_steps;
    const long per_traj = steps - nd;
    require(per_traj > 1, "compare_jacobians: too few steps past the delay horizon");

    JacobianSeries series;
    series.n_x = nx;
    series.steps_per_traj = per_traj;
    series.model.resize(per_traj * n_trajectories, long(nx) * nx);
    series.exact.resize(per_traj * n_trajectories, long(nx) * nx);

    for (int tr = 0; tr < n_trajectories; ++tr) {
        SignalSpec sp = signal_template;
        sp.seed = mix64(seed) ^ mix64(0x7A0000 + tr);
        const Vec sig = gen_square(sp);
        Trajectory traj = integrate(det, sig, Vec::Zero(det.state_dim()),
                                    det.default_integrator(), 0);
        const Mat xseq = observable_sequence(traj);
        for (long k = nd; k < steps; ++k) {
            const Vec y_raw = delay_state(xseq, k, nd);
            Vec full = Vec::Zero(det.state_dim());
            full.head(nx) = xseq.row(k).transpose();
            const double s = sig(k);
            const double t = k * det.dt();
            ModelJacobians mj = model_jacobians(m, y_raw, Vec::Zero(m.n_a),
                                                Vec::Constant(1, s), t);
            const Mat exact = det.drift_jacobian(full, s, t);
            const long row = tr * per_traj + (k - nd);
            for (int i = 0; i < nx; ++i)
                for (int j = 0; j < nx; ++j) {
                    const double delta = i == j ? 1.0 : 0.0;
                    series.model(row, long(i) * nx + j) =
                        (mj.d_state(i, j) - delta) / m.dt;
                    series.exact(row, long(i) * nx + j) = exact(i, j);
                }
        }
    }
    return compare_series(series, n_trajectories);
}

EligibilityReport compare_eligibility(const NeuralSdeModel& m, const RefSystem& sys,
                                      const Vec& signal) {
    RefSystem det = sys;
    det.li.deterministic = true;
    det.duffing.deterministic = true;
    const Mat exact = exact_eligibility(det, signal, Vec::Zero(det.state_dim()),
                                        det.default_integrator());
    const Mat model =
        model_eligibility(m, Mat(signal), Vec::Zero(m.ydim()), 0.0);
    const long steps = std::min(exact.rows(), model.rows());
    require(exact.cols() == model.cols(), "compare_eligibility: trace widths differ");

    double peak = 0.0;
    for (long k = 0; k < steps; ++k) peak = std::max(peak, exact.row(k).norm());

    EligibilityReport rep;
    for (long k = 0; k < steps; ++k)
        rep.rel_gap.push_back((exact.row(k) - model.row(k)).norm() /
                              (peak + 1e-12));
    double sum = 0;
    for (double g : rep.rel_gap) sum += g;
    rep.mean_rel_gap = sum / steps;

    auto window_mean = [&](long lo, long hi) {
        double acc = 0;
        for (long k = lo; k < hi; ++k) acc += rep.rel_gap[k];
        return acc / std::max<long>(1, hi - lo);
    };
    // A trace has recovered when the tail gap is not growing: either it sits
    // below a small absolute floor (a third of the 0.15 gap budget) or it is
    // no larger than the mid-trajectory gap.
    const double tail = window_mean(3 * steps / 4, steps);
    rep.recovered = tail < std::max(window_mean(steps / 2, 3 * steps / 4), 0.05);
    return rep;
}

namespace {

double inertia_1d(const std::vector<double>& xs, const std::vector<double>& centers) {
    double w = 0;
    for (double x : xs) {
        double best = std::numeric_limits<double>::max();
        for (double c : centers) best = std::min(best, (x - c) * (x - c));
        w += best;
    }
    return w;
}

}  // namespace

std::vector<double> kmeans_1d(const std::vector<double>& xs, int k,
                              std::uint64_t seed) {
    require(k >= 1 && static_cast<int>(xs.size()) >= k, "kmeans_1d: k out of range");
    auto g = rng_stream(seed, 0x4B);
    // k-means++ seeding
    std::vector<double> centers = {xs[g() % xs.size()]};
    while (static_cast<int>(centers.size()) < k) {
        std::vector<double> d2(xs.size());
        double total = 0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            double best = std::numeric_limits<double>::max();
            for (double c : centers) best = std::min(best, (xs[i] - c) * (xs[i] - c));
            d2[i] = best;
            total += best;
        }
        double r = uniform(g, 0.0, total);
        std::size_t pick = 0;
        for (; pick + 1 < xs.size() && r > d2[pick]; ++pick) r -= d2[pick];
        centers.push_back(xs[pick]);
    }
    for (int iter = 0; iter < 100; ++iter) {
        std::vector<double> sum(k, 0.0);
        std::vector<long> count(k, 0);
        for (double x : xs) {
            int best = 0;
            for (int c = 1; c < k; ++c)
                if (std::abs(x - centers[c]) < std::abs(x - centers[best])) best = c;
            sum[best] += x;
            count[best]++;
        }
        bool moved = false;
        for (int c = 0; c < k; ++c) {
            double next = count[c] ? sum[c] / count[c]
                                   : xs[g() % xs.size()];  // revive empty cluster
            if (std::abs(next - centers[c]) > 1e-12) moved = true;
            centers[c] = next;
        }
        if (!moved) break;
    }
    std::sort(centers.begin(), centers.end());
    return centers;
}

int choose_k_gap(const std::vector<double>& xs, int k_max, std::uint64_t seed) {
    require(!xs.empty(), "choose_k_gap: empty sample");
    k_max = std::min<int>(k_max, static_cast<int>(xs.size()));
    const double lo = *std::min_element(xs.begin(), xs.end());
    const double hi = *std::max_element(xs.begin(), xs.end());
    const int B = 10;
    std::vector<double> gap(k_max + 1, 0.0);
    for (int k = 1; k <= k_max; ++k) {
        const double logw =
            std::log(inertia_1d(xs, kmeans_1d(xs, k, mix64(seed) ^ k)) + 1e-12);
        std::vector<double> ref_logw;
        for (int b = 0; b < B; ++b) {
            auto g = rng_stream(mix64(seed) ^ mix64(0x9AB00 + b), k);
            std::vector<double> ref(xs.size());
            for (auto& v : ref) v = uniform(g, lo, hi);
            ref_logw.push_back(
                std::log(inertia_1d(ref, kmeans_1d(ref, k, mix64(seed) ^ (k + 7))) +
                         1e-12));
        }
        double mean = 0;
        for (double v : ref_logw) mean += v;
        gap[k] = mean / B - logw;
    }
    // maximal gap; the sequential rule stalls on equally spaced branches
    int best = 1;
    for (int k = 2; k <= k_max; ++k)
        if (gap[k] > gap[best]) best = k;
    return best;
}

BranchEstimate branch_frequencies(const std::vector<double>& finals, int k_max,
                                  std::uint64_t seed) {
    BranchEstimate est;
    const int k = choose_k_gap(finals, k_max, seed);
    est.centers = kmeans_1d(finals, k, mix64(seed) ^ 0xF1);
    est.freq.assign(k, 0.0);
    for (double x : finals) {
        int best = 0;
        for (int c = 1; c < k; ++c)
            if (std::abs(x - est.centers[c]) < std::abs(x - est.centers[best]))
                best = c;
        est.freq[best] += 1.0 / finals.size();
    }
    return est;
}

FidelityReport fidelity_report(const NeuralSdeModel& m, const RefSystem& sys,
                               const FidelityConfig& cfg) {
    FidelityReport rep;
    rep.stats = validate_stats(m, sys, cfg.val);
    if (sys.deterministic()) return rep;

    for (std::size_t li = 0; li < cfg.levels.size(); ++li) {
        const double level = cfg.levels[li];
        const Vec sig = gen_constant(level, cfg.steps);
        std::vector<double> finals_ref, finals_model;
        for (int r = 0; r < cfg.n_repeats; ++r) {
            const std::uint64_t rs =
                mix64(cfg.seed) ^ mix64(0xF0000 + 1000 * li + r);
            Trajectory ref = integrate(sys, sig, Vec::Zero(sys.state_dim()),
                                       sys.default_integrator(), rs);
            finals_ref.push_back(ref.observed(ref.steps() - 1, 0));
            Trajectory gen =
                generate(m, Mat(sig), Vec::Zero(m.ydim()), mix64(rs) ^ 0x6E);
            finals_model.push_back(gen.observed(gen.steps() - 1, 0));
        }
        BranchComparison cmp;
        cmp.level = level;
        cmp.ref = branch_frequencies(finals_ref, cfg.k_max, cfg.seed);
        cmp.model = branch_frequencies(finals_model, cfg.k_max, cfg.seed + 1);
        cmp.match = cmp.ref.centers.size() == cmp.model.centers.size();
        if (cmp.match)
            for (std::size_t c = 0; c < cmp.ref.centers.size(); ++c)
                if (std::abs(cmp.ref.centers[c] - cmp.model.centers[c]) >
                    cfg.center_tol)
                    cmp.match = false;
        rep.branches.push_back(std::move(cmp));
    }
    return rep;
}

nlohmann::json jacobian_to_json(const JacobianReport& r) {
    nlohmann::json j;
    j["mean_correlation"] = r.mean_correlation;
    j["mean_abs_error"] = r.mean_abs_error;
    j["per_trajectory"] = r.per_trajectory;
    nlohmann::json entries = nlohmann::json::array();
    for (long i = 0; i < r.entry_correlation.rows(); ++i)
        for (long k = 0; k < r.entry_correlation.cols(); ++k)
            entries.push_back({{"i", i}, {"j", k}, {"r", r.entry_correlation(i, k)}});
    j["entry_correlation"] = std::move(entries);
    return j;
}

nlohmann::json eligibility_to_json(const EligibilityReport& r) {
    nlohmann::json j;
    j["mean_rel_gap"] = r.mean_rel_gap;
    j["recovered"] = r.recovered;
    j["rel_gap"] = r.rel_gap;
    return j;
}

nlohmann::json fidelity_to_json(const FidelityReport& r) {
    nlohmann::json j;
    j["stats"] = {{"mean_gap", r.stats.mean_gap},
                  {"std_gap", r.stats.std_gap},
                  {"autocov_gap", r.stats.autocov_gap},
                  {"ref_std", r.stats.ref_std},
                  {"score", r.stats.score()}};
    nlohmann::json branches = nlohmann::json::array();
    for (const auto& b : r.branches)
        branches.push_back({{"level", b.level},
                            {"ref_centers", b.ref.centers},
                            {"ref_freq", b.ref.freq},
                            {"model_centers", b.model.centers},
                            {"model_freq", b.model.freq},
                            {"match", b.match}});
    j["branches"] = std::move(branches);
    return j;
}

void write_series_csv(const std::string& path, const std::vector<std::string>& names,
                      const std::vector<Vec>& columns) {
    require(names.size() == columns.size(), "write_series_csv: name/column counts");
    require(!columns.empty(), "write_series_csv: no columns");
    std::ofstream out(path);
    if (!out) throw FormatError("write_series_csv: cannot open " + path);
    for (std::size_t c = 0; c < names.size(); ++c) {
        require(columns[c].size() == columns[0].size(),
                "write_series_csv: ragged columns");
        out << (c ? "," : "") << names[c];
    }
    out << "\n";
    out.precision(17);
    for (long i = 0; i < columns[0].size(); ++i) {
        for (std::size_t c = 0; c < columns.size(); ++c)
            out << (c ? "," : "") << columns[c](i);
        out << "\n";
    }
}

}  // namespace twin
