#pragma once

#include <cstdint>
#include <string>

#include "twin/common.hpp"

namespace twin {

/// Time-indexed observable states paired with the driving signal that
/// produced them. Row k holds the signal applied over step k and the
/// observable state reached at the end of that step.
struct Trajectory {
    Mat signal;    // steps x N_S
    Mat observed;  // steps x N_X
    double dt = 0.0;
    std::string system_id;
    std::uint64_t seed = 0;
    Vec ic;  // observable state at t=0 (before the first step)

    long steps() const { return signal.rows(); }
    void check() const {
        require(signal.rows() == observed.rows(),
                "Trajectory: signal/observed step counts differ");
        require(signal.allFinite() && observed.allFinite(),
                "Trajectory: non-finite values");
    }
};

}  // namespace twin
