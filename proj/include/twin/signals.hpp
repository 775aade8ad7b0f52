#pragma once

#include <cstdint>

#include "twin/common.hpp"

namespace twin {

enum class SignalKind { square_random, constant, task_encoded };

/// Piecewise-constant driving signal description.
struct SignalSpec {
    SignalKind kind = SignalKind::square_random;
    int hold_length = 5;      // T_s, steps per level
    double level_lo = -3.0;
    double level_hi = 3.0;
    int total_steps = 200;
    std::uint64_t seed = 0;

    void check() const {
        if (level_lo > level_hi) throw ConfigError("SignalSpec: lo > hi");
        if (hold_length < 1) throw ConfigError("SignalSpec: hold_length < 1");
        if (total_steps < 1) throw ConfigError("SignalSpec: total_steps < 1");
    }
};

/// Piecewise-constant signal with i.i.d. uniform levels; segment i covers
/// steps [i*T_s, (i+1)*T_s). Reproducible from (seed, sequence index):
/// each segment level is drawn from its own counter-based stream.
Vec gen_square(const SignalSpec& spec);

/// Constant signal at the given level.
Vec gen_constant(double level, int total_steps);

/// Elementwise product with the cosine carrier: s(step) * cos(omega * step * dt).
/// Phase resets to zero at the start of each sequence.
Vec duffing_drive(const Vec& signal, double omega, double dt);

}  // namespace twin
