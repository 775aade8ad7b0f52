#include "twin/signals.hpp"

#include <cmath>

#include "twin/rng.hpp"

namespace twin {

Vec gen_square(const SignalSpec& spec) {
    spec.check();
    if (spec.kind != SignalKind::square_random)
        throw ConfigError("gen_square: spec.kind must be square_random");
    Vec s(spec.total_steps);
    const int n_segments = (spec.total_steps + spec.hold_length - 1) / spec.hold_length;
    for (int i = 0; i < n_segments; ++i) {
        auto g = rng_stream(spec.seed, static_cast<std::uint64_t>(i));
        const double level = uniform(g, spec.level_lo, spec.level_hi);
        const int begin = i * spec.hold_length;
        const int end = std::min(spec.total_steps, begin + spec.hold_length);
        s.segment(begin, end - begin).setConstant(level);
    }
    return s;
}

Vec gen_constant(double level, int total_steps) {
    if (total_steps < 1) throw ConfigError("gen_constant: total_steps < 1");
    return Vec::Constant(total_steps, level);
}

Vec duffing_drive(const Vec& signal, double omega, double dt) {
    if (omega <= 0) throw ConfigError("duffing_drive: omega must be positive");
    Vec out(signal.size());
    for (Eigen::Index k = 0; k < signal.size(); ++k)
        out(k) = signal(k) * std::cos(omega * static_cast<double>(k) * dt);
    return out;
}

}  // namespace twin
