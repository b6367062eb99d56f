// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace flowmotion {

/// Uniform denoising time grid: knots t_k = 1 - k/T for k = 0..T, strictly
/// decreasing from 1 to 0 with spacing dt = 1/T. `schedule_shift` is a
/// reserved hook for non-uniform schedules; it is accepted but currently a
/// no-op (only the uniform grid is implemented).
struct TimeGrid {
    int steps = 50;
    double schedule_shift = 1.0;  // reserved, no-op

    explicit TimeGrid(int steps_ = 50, double shift = 1.0)
        : steps(steps_), schedule_shift(shift) {
        if (steps < 1) {
            throw std::domain_error("TimeGrid: steps must be >= 1, got " +
                                    std::to_string(steps));
        }
    }

    double dt() const { return 1.0 / steps; }

    /// k in [0, steps]; t(0) = 1, t(steps) = 0.
    double t(int k) const { return 1.0 - static_cast<double>(k) / steps; }
};

}  // namespace flowmotion
