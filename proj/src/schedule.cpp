#include "dali/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dali {

WeightSchedule WeightSchedule::flat(std::int64_t total_steps) {
    WeightSchedule s;
    s.total_steps = total_steps;
    s.initial_weights.fill(1.0);
    return s;
}

void WeightSchedule::validate() const {
    if (total_steps <= 0) throw std::invalid_argument("schedule: total_steps must be positive");
    if (initial_weights[0] != 1.0) throw std::invalid_argument("schedule: clean weight w0(0) must be 1");
    for (std::size_t l = 0; l < initial_weights.size(); ++l) {
        const double w = initial_weights[l];
        if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("schedule: initial weights must lie in [0,1]");
        if (l > 0 && w > initial_weights[l - 1])
            throw std::invalid_argument("schedule: initial weights must be non-increasing in level");
    }
}

double weight(DistortionLevel level, std::int64_t step, const WeightSchedule& sched) {
    if (step < 0) throw std::invalid_argument("schedule: step must be >= 0");
    const double w0 = sched.initial_weights[static_cast<std::size_t>(level.value())];
    if (step >= sched.total_steps) return 1.0;
    const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(sched.total_steps);
    return w0 + (1.0 - w0) * (1.0 - std::cos(phase)) / 2.0;
}

BatchWeights batch_weights(std::span<const DistortionLevel> levels, std::int64_t step, const WeightSchedule& sched) {
    if (levels.empty()) throw std::invalid_argument("batch_weights: empty batch");
    BatchWeights out;
    out.weights.reserve(levels.size());
    for (auto l : levels) {
        out.weights.push_back(weight(l, step, sched));
        out.normalizer += out.weights.back();
    }
    return out;
}

BatchWeights unit_weights(std::size_t n) {
    if (n == 0) throw std::invalid_argument("unit_weights: empty batch");
    return {std::vector<double>(n, 1.0), static_cast<double>(n)};
}

}  // namespace dali
