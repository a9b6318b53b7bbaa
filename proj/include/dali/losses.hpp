#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dali/numerics.hpp"
#include "dali/schedule.hpp"

namespace dali {

enum class MarginMode { fixed, adaptive };

/// Margin-softmax hyperparameters.
///
/// Positive logit: scale * (cos(w + m1) - m2); negative logits: scale * cos(w).
/// scale is 1/tau in fixed mode and s in adaptive mode, where (m1, m2) come
/// from the feature magnitude (see adaface_margins).
struct MarginConfig {
    MarginMode mode = MarginMode::fixed;
    double tau = 1.0;
    double m1 = 0.0;
    double m2 = 0.0;
    double m = 0.4;
    double s = 64.0;
    double clip = 1.0;
    double std_epsilon = 1e-3;
    double lambda = 0.0;

    /// tau = 1 with adaptive margins.
    static MarginConfig face();
    /// tau = 0.05, m1 = m2 = 0, lambda = 0.4.
    static MarginConfig reid();

    double logit_scale() const { return mode == MarginMode::adaptive ? s : 1.0 / tau; }
    void validate() const;
};

/// Batch statistics of pre-normalization feature magnitudes.
struct NormStats {
    double mean = 0.0;
    double stddev = 1.0;
    double clip = 1.0;

    /// Population std, floored at std_epsilon.
    static NormStats from_magnitudes(std::span<const double> magnitudes, double std_epsilon, double clip = 1.0);
    /// clip((magnitude - mean) / std, -clip, clip)
    double normalized(double magnitude) const;
};

struct Margins {
    double m1 = 0.0;  // angular
    double m2 = 0.0;  // additive
};

/// g_angle = -m * n, g_add = m * n + m with n the clipped normalized magnitude.
Margins adaface_margins(double magnitude, const NormStats& stats, const MarginConfig& cfg);

/// Per-sample margins for a batch: cfg.(m1, m2) in fixed mode, magnitude
/// driven in adaptive mode. Margins are treated as constants by the
/// gradient computation.
std::vector<Margins> batch_margins(std::span<const double> magnitudes, const MarginConfig& cfg);

/// Row-major C x D matrix of unit class centers.
class ClassCenters {
public:
    ClassCenters() = default;
    ClassCenters(std::size_t classes, std::size_t dim) : classes_(classes), dim_(dim), data_(classes * dim) {}

    /// Rows drawn as normalized standard Gaussians.
    static ClassCenters random(std::size_t classes, std::size_t dim, SeedStream rng);

    std::size_t classes() const { return classes_; }
    std::size_t dim() const { return dim_; }
    std::span<const double> row(std::size_t c) const { return {data_.data() + c * dim_, dim_}; }
    std::span<double> row(std::size_t c) { return {data_.data() + c * dim_, dim_}; }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    void renormalize();

    friend bool operator==(const ClassCenters&, const ClassCenters&) = default;

private:
    std::size_t classes_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

/// Single-term loss with gradients for the feature and every candidate.
struct LossResult {
    double value = 0.0;
    RealVector grad_feature;
    std::vector<RealVector> grad_candidates;
};

/// Margin-softmax cross-entropy of feature f against candidates[positive].
/// Every other candidate is a negative. Gradients are with respect to the
/// raw coordinates of f and of each candidate; sin(w) is floored at 1e-6 in
/// the angular-margin chain.
LossResult ce_loss(std::span<const double> f, std::span<const std::span<const double>> candidates,
                   std::size_t positive, const Margins& margins, double scale);

/// Batch-level loss: per-sample feature gradients plus a dense C x D center
/// gradient (empty when no center receives gradient).
struct BatchLoss {
    double value = 0.0;
    std::vector<RealVector> grad_features;
    std::vector<double> grad_centers;
};

/// (1/W) sum_i w_i ce_loss(f_i, center[y_i], all centers).
BatchLoss distortion_loss(std::span<const RealVector> features, std::span<const int> labels,
                          const BatchWeights& weights, const ClassCenters& centers,
                          std::span<const Margins> margins, double scale);

/// Per-sample proxy context: the class proxy set and the mined negatives.
struct ProxyContext {
    std::vector<std::span<const double>> positives;
    std::vector<std::span<const double>> negatives;
};

/// (1/W) sum_i w_i (1/|P_i|) sum_{q in P_i} ce_loss(f_i, q, P_i u N_i).
/// The candidate set is a set: bitwise-identical vectors are merged. Proxies
/// are constants; only feature gradients are produced.
BatchLoss proxy_loss(std::span<const RealVector> features, const BatchWeights& weights,
                     std::span<const ProxyContext> contexts, std::span<const Margins> margins, double scale);

/// center + lambda * proxy.
BatchLoss combined_loss(const BatchLoss& center, const BatchLoss& proxy, double lambda);

}  // namespace dali
