#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "dali/distortion.hpp"

namespace dali {

/// Easy-to-hard weights per distortion level. Each level starts at its
/// initial weight and follows a half-cosine ramp up to 1 at total_steps:
///
///     w(l, t) = w0(l) + (1 - w0(l)) * (1 - cos(pi * min(t, T) / T)) / 2
struct WeightSchedule {
    std::int64_t total_steps = 1;
    std::array<double, DistortionLevel::kMax + 1> initial_weights{1.0, 0.8, 0.65, 0.5, 0.35, 0.2};

    static WeightSchedule flat(std::int64_t total_steps);

    /// w0(0) = 1, 0 <= w0 <= 1, non-increasing in level, T > 0.
    void validate() const;
};

double weight(DistortionLevel level, std::int64_t step, const WeightSchedule& sched);

struct BatchWeights {
    std::vector<double> weights;
    double normalizer = 0.0;  // sum of weights in sequence order
};

BatchWeights batch_weights(std::span<const DistortionLevel> levels, std::int64_t step, const WeightSchedule& sched);

/// Uniform weights of 1 (clean-backbone training).
BatchWeights unit_weights(std::size_t n);

}  // namespace dali
