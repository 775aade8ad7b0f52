#include "twin/dataio.hpp"

#include <cstdint>
#include <fstream>

#include "twin/rng.hpp"
#include "twin/signals.hpp"

namespace twin {

Mat observable_sequence(const Trajectory& traj) {
    Mat x(traj.steps() + 1, traj.observed.cols());
    x.row(0) = traj.ic.transpose();
    x.bottomRows(traj.steps()) = traj.observed;
    return x;
}

Vec delay_state(const Mat& xseq, long k, int n_delay) {
    require(k >= n_delay && k < xseq.rows(), "delay_state: index out of range");
    const int n_x = static_cast<int>(xseq.cols());
    Vec y(n_x * (n_delay + 1));
    for (int d = 0; d <= n_delay; ++d)
        y.segment(d * n_x, n_x) = xseq.row(k - d).transpose();
    return y;
}

std::vector<Transition> embed_delays(const Trajectory& traj, int n_delay) {
    if (traj.steps() <= n_delay)
        throw ConfigError("embed_delays: trajectory too short for n_delay=" +
                          std::to_string(n_delay));
    Mat xseq = observable_sequence(traj);
    std::vector<Transition> out;
    for (long k = n_delay; k + 1 < xseq.rows(); ++k) {
        Transition tr;
        tr.y_prev = delay_state(xseq, k, n_delay);
        tr.signal = traj.signal.row(k).transpose();  // s driving X[k] -> X[k+1]
        tr.y_next = delay_state(xseq, k + 1, n_delay);
        out.push_back(std::move(tr));
    }
    return out;
}

BuildSpec default_build_spec(const RefSystem& sys) {
    BuildSpec spec;
    if (sys.kind == SystemKind::leaky_integrator) {
        spec.n_sequences = 1000;
        spec.seq_len = 200;
        spec.hold_lengths = {5, 20};
        spec.level_lo = -3.0;
        spec.level_hi = 3.0;
    } else {
        // Long sequences: at dt = 0.005 the oscillator needs several carrier
        // periods to settle into a well, and the twin must see the cubic
        // restoring force over the full |x1| <~ 1.5 range.
        spec.n_sequences = 500;
        spec.seq_len = 2000;
        spec.hold_lengths = {20, 50};
        spec.level_lo = -0.2;
        spec.level_hi = 0.2;
    }
    spec.burn_in = sys.deterministic() ? 0 : 100;
    return spec;
}

Dataset build_dataset(const RefSystem& sys, const BuildSpec& spec) {
    if (spec.n_sequences < 1) throw ConfigError("build_dataset: n_sequences < 1");
    Dataset data;
    data.trajectories.resize(spec.n_sequences);
    for (int i = 0; i < spec.n_sequences; ++i) {
        SignalSpec sig;
        sig.hold_length = spec.hold_lengths[i % spec.hold_lengths.size()];
        sig.level_lo = spec.level_lo;
        sig.level_hi = spec.level_hi;
        sig.total_steps = spec.seq_len;
        sig.seed = mix64(spec.seed) ^ mix64(0xA0000 + i);
        Vec signal = gen_square(sig);
        const std::uint64_t noise_seed = mix64(spec.seed) ^ mix64(0xB0000 + i);

        Vec state = Vec::Zero(sys.state_dim());
        if (spec.burn_in > 0) {
            Vec zero_sig = Vec::Zero(spec.burn_in);
            integrate_full(sys, zero_sig, state, sys.default_integrator(),
                           mix64(noise_seed) ^ 0xC0FFEE, &state);
        }
        data.trajectories[i] =
            integrate(sys, signal, state, sys.default_integrator(), noise_seed);
    }
    return data;
}

std::vector<Segment> sample_segments(const Dataset& data, int T, int batch,
                                     int n_delay, std::uint64_t seed) {
    require(!data.trajectories.empty(), "sample_segments: empty dataset");
    const long steps = data.trajectories[0].steps();
    if (T > steps - n_delay)
        throw ConfigError("sample_segments: window longer than trajectory");
    const int n_x = data.n_x();
    const int ydim = n_x * (n_delay + 1);
    std::vector<Segment> out(batch);
    auto g = rng_stream(seed, 0);
    std::uniform_int_distribution<std::size_t> pick_traj(0, data.trajectories.size() - 1);
    std::uniform_int_distribution<long> pick_start(n_delay, steps - T);
    for (int b = 0; b < batch; ++b) {
        const auto& traj = data.trajectories[pick_traj(g)];
        Mat xseq = observable_sequence(traj);
        const long k0 = pick_start(g);
        Segment seg;
        seg.start = k0;
        seg.y0 = delay_state(xseq, k0, n_delay);
        seg.signal = traj.signal.middleRows(k0, T);
        seg.target.resize(T, ydim);
        for (int t = 0; t < T; ++t)
            seg.target.row(t) = delay_state(xseq, k0 + 1 + t, n_delay).transpose();
        out[b] = std::move(seg);
    }
    return out;
}

Vec IcDistribution::draw(std::uint64_t seed, std::uint64_t index) const {
    check();
    if (mode == IcMode::fixed_zero) return Vec::Zero(dim);
    auto g = rng_stream(seed, index);
    std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
    return samples[pick(g)];
}

IcDistribution estimate_ic(const RefSystem& sys, int n_samples, int n_delay,
                           std::uint64_t seed, int burn_in) {
    if (n_samples < 1) throw ConfigError("estimate_ic: n_samples < 1");
    IcDistribution dist;
    dist.dim = sys.obs_dim() * (n_delay + 1);
    if (sys.deterministic()) {
        dist.mode = IcMode::fixed_zero;
        return dist;
    }
    dist.mode = IcMode::empirical;
    const int steps = burn_in;
    for (int i = 0; i < n_samples; ++i) {
        Vec zero_sig = Vec::Zero(steps);
        Trajectory tr = integrate(sys, zero_sig, Vec::Zero(sys.state_dim()),
                                  sys.default_integrator(), mix64(seed) ^ mix64(i));
        Mat xseq = observable_sequence(tr);
        dist.samples.push_back(delay_state(xseq, xseq.rows() - 1, n_delay));
    }
    return dist;
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("idx: truncated " + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

ImageSet load_idx_images(const std::string& path_images, const std::string& path_labels) {
    std::ifstream fi(path_images, std::ios::binary);
    if (!fi) throw FormatError("idx: cannot open " + path_images);
    if (read_be32(fi, "image magic") != 0x00000803u)
        throw FormatError("idx: wrong image magic in " + path_images);
    const std::uint32_t n = read_be32(fi, "image count");
    const std::uint32_t rows = read_be32(fi, "rows");
    const std::uint32_t cols = read_be32(fi, "cols");
    std::vector<unsigned char> buf(static_cast<std::size_t>(n) * rows * cols);
    fi.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(fi.gcount()) != buf.size())
        throw FormatError("idx: truncated image payload in " + path_images);

    std::ifstream fl(path_labels, std::ios::binary);
    if (!fl) throw FormatError("idx: cannot open " + path_labels);
    if (read_be32(fl, "label magic") != 0x00000801u)
        throw FormatError("idx: wrong label magic in " + path_labels);
    const std::uint32_t nl = read_be32(fl, "label count");
    if (nl != n) throw FormatError("idx: image/label count mismatch");
    std::vector<unsigned char> lab(nl);
    fl.read(reinterpret_cast<char*>(lab.data()), nl);
    if (static_cast<std::size_t>(fl.gcount()) != lab.size())
        throw FormatError("idx: truncated label payload in " + path_labels);

    ImageSet set;
    set.rows = static_cast<int>(rows);
    set.cols = static_cast<int>(cols);
    set.images.resize(n, rows * cols);
    set.labels.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        if (lab[i] > 9) throw FormatError("idx: label outside 0-9 at item " +
                                          std::to_string(i));
        set.labels[i] = lab[i];
        for (std::uint32_t p = 0; p < rows * cols; ++p)
            set.images(i, p) = buf[static_cast<std::size_t>(i) * rows * cols + p] / 255.0;
    }
    return set;
}

void write_idx_images(const std::string& path, const Mat& images, int rows, int cols) {
    require(images.cols() == static_cast<Eigen::Index>(rows) * cols,
            "write_idx_images: pixel count mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("idx: cannot write " + path);
    write_be32(out, 0x00000803u);
    write_be32(out, static_cast<std::uint32_t>(images.rows()));
    write_be32(out, static_cast<std::uint32_t>(rows));
    write_be32(out, static_cast<std::uint32_t>(cols));
    for (Eigen::Index i = 0; i < images.rows(); ++i)
        for (Eigen::Index p = 0; p < images.cols(); ++p) {
            const double v = std::min(1.0, std::max(0.0, images(i, p)));
            const unsigned char b = static_cast<unsigned char>(v * 255.0 + 0.5);
            out.write(reinterpret_cast<const char*>(&b), 1);
        }
}

void write_idx_labels(const std::string& path, const std::vector<int>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("idx: cannot write " + path);
    write_be32(out, 0x00000801u);
    write_be32(out, static_cast<std::uint32_t>(labels.size()));
    for (int l : labels) {
        if (l < 0 || l > 9) throw FormatError("idx: label outside 0-9");
        const unsigned char b = static_cast<unsigned char>(l);
        out.write(reinterpret_cast<const char*>(&b), 1);
    }
}

NormStats fit_norm(const Dataset& data) {
    require(!data.trajectories.empty(), "fit_norm: empty dataset");
    const int n_x = data.n_x(), n_s = data.n_s();
    Vec x_lo = Vec::Constant(n_x, 1e300), x_hi = Vec::Constant(n_x, -1e300);
    Vec s_lo = Vec::Constant(n_s, 1e300), s_hi = Vec::Constant(n_s, -1e300);
    for (const Trajectory& tr : data.trajectories) {
        x_lo = x_lo.cwiseMin(tr.observed.colwise().minCoeff().transpose());
        x_lo = x_lo.cwiseMin(tr.ic);
        x_hi = x_hi.cwiseMax(tr.observed.colwise().maxCoeff().transpose());
        x_hi = x_hi.cwiseMax(tr.ic);
        s_lo = s_lo.cwiseMin(tr.signal.colwise().minCoeff().transpose());
        s_hi = s_hi.cwiseMax(tr.signal.colwise().maxCoeff().transpose());
    }
    NormStats n;
    n.x_shift = x_lo;
    n.x_scale = x_hi - x_lo;
    n.s_shift = s_lo;
    n.s_scale = s_hi - s_lo;
    for (int i = 0; i < n_x; ++i)
        if (!(n.x_scale(i) > 0))
            throw ConfigError("fit_norm: constant observable dimension " +
                              std::to_string(i));
    for (int i = 0; i < n_s; ++i)
        if (!(n.s_scale(i) > 0)) n.s_scale(i) = 1.0;  // constant signal: pass through
    return n;
}

nlohmann::json norm_to_json(const NormStats& n) {
    auto vec = [](const Vec& v) {
        return std::vector<double>(v.data(), v.data() + v.size());
    };
    return {{"x_shift", vec(n.x_shift)},
            {"x_scale", vec(n.x_scale)},
            {"s_shift", vec(n.s_shift)},
            {"s_scale", vec(n.s_scale)}};
}

NormStats norm_from_json(const nlohmann::json& j) {
    auto vec = [&](const char* key) {
        const auto v = j.at(key).get<std::vector<double>>();
        return Vec(Eigen::Map<const Vec>(v.data(), v.size()));
    };
    NormStats n;
    n.x_shift = vec("x_shift");
    n.x_scale = vec("x_scale");
    n.s_shift = vec("s_shift");
    n.s_scale = vec("s_scale");
    return n;
}

namespace {

nlohmann::json mat_to_json(const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat mat_from_json(const nlohmann::json& j, const std::string& field) {
    if (!j.is_array() || j.empty())
        throw FormatError("trajectory jsonl: field '" + field + "' must be a "
                          "nonempty array");
    const std::size_t cols = j.at(0).size();
    Mat m(j.size(), cols);
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (j.at(i).size() != cols)
            throw FormatError("trajectory jsonl: ragged rows in '" + field + "'");
        for (std::size_t c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
    }
    return m;
}

}  // namespace

void write_trajectories_jsonl(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    for (const Trajectory& tr : data.trajectories) {
        nlohmann::json j;
        j["schema_version"] = "traj-v1";
        j["system_id"] = tr.system_id;
        j["dt"] = tr.dt;
        j["seed"] = tr.seed;
        j["signal"] = mat_to_json(tr.signal);
        j["observed"] = mat_to_json(tr.observed);
        j["ic"] = std::vector<double>(tr.ic.data(), tr.ic.data() + tr.ic.size());
        out << j.dump() << "\n";
    }
}

Dataset read_trajectories_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    Dataset data;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw FormatError("trajectory jsonl line " + std::to_string(lineno) +
                              ": " + e.what());
        }
        for (const char* field : {"schema_version", "system_id", "dt", "signal",
                                  "observed", "ic"})
            if (!j.contains(field))
                throw FormatError("trajectory jsonl line " + std::to_string(lineno) +
                                  ": missing field '" + std::string(field) + "'");
        if (j.at("schema_version") != "traj-v1")
            throw FormatError("trajectory jsonl: unknown schema_version");
        Trajectory tr;
        tr.system_id = j.at("system_id").get<std::string>();
        tr.dt = j.at("dt").get<double>();
        tr.seed = j.value("seed", std::uint64_t{0});
        tr.signal = mat_from_json(j.at("signal"), "signal");
        tr.observed = mat_from_json(j.at("observed"), "observed");
        const auto ic = j.at("ic").get<std::vector<double>>();
        tr.ic = Eigen::Map<const Vec>(ic.data(), ic.size());
        tr.check();
        data.trajectories.push_back(std::move(tr));
    }
    return data;
}

}  // namespace twin
