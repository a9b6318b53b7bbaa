#include "dali/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace dali {

namespace {
constexpr double kSinFloor = 1e-6;

void axpy(double a, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

bool bitwise_equal(std::span<const double> a, std::span<const double> b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}
}  // namespace

MarginConfig MarginConfig::face() {
    MarginConfig c;
    c.mode = MarginMode::adaptive;
    c.tau = 1.0;
    return c;
}

MarginConfig MarginConfig::reid() {
    MarginConfig c;
    c.mode = MarginMode::fixed;
    c.tau = 0.05;
    c.m1 = 0.0;
    c.m2 = 0.0;
    c.lambda = 0.4;
    return c;
}

void MarginConfig::validate() const {
    if (!(tau > 0)) throw std::invalid_argument("margin: tau must be positive");
    if (!(s > 0)) throw std::invalid_argument("margin: s must be positive");
    if (!(lambda >= 0)) throw std::invalid_argument("margin: lambda must be non-negative");
    if (!(clip > 0)) throw std::invalid_argument("margin: clip bound must be positive");
    if (!(std_epsilon > 0)) throw std::invalid_argument("margin: std epsilon must be positive");
}

NormStats NormStats::from_magnitudes(std::span<const double> magnitudes, double std_epsilon, double clip) {
    if (magnitudes.empty()) throw std::invalid_argument("norm stats: empty batch");
    double mean = 0.0;
    for (double m : magnitudes) mean += m;
    mean /= static_cast<double>(magnitudes.size());
    double var = 0.0;
    for (double m : magnitudes) var += (m - mean) * (m - mean);
    var /= static_cast<double>(magnitudes.size());
    return {mean, std::max(std::sqrt(var), std_epsilon), clip};
}

double NormStats::normalized(double magnitude) const {
    return std::clamp((magnitude - mean) / stddev, -clip, clip);
}

Margins adaface_margins(double magnitude, const NormStats& stats, const MarginConfig& cfg) {
    const double n = stats.normalized(magnitude);
    return {-cfg.m * n, cfg.m * n + cfg.m};
}

std::vector<Margins> batch_margins(std::span<const double> magnitudes, const MarginConfig& cfg) {
    if (cfg.mode == MarginMode::fixed) return std::vector<Margins>(magnitudes.size(), Margins{cfg.m1, cfg.m2});
    const auto stats = NormStats::from_magnitudes(magnitudes, cfg.std_epsilon, cfg.clip);
    std::vector<Margins> out;
    out.reserve(magnitudes.size());
    for (double m : magnitudes) out.push_back(adaface_margins(m, stats, cfg));
    return out;
}

ClassCenters ClassCenters::random(std::size_t classes, std::size_t dim, SeedStream rng) {
    ClassCenters c(classes, dim);
    for (double& v : c.data_) v = rng.normal();
    c.renormalize();
    return c;
}

void ClassCenters::renormalize() {
    for (std::size_t c = 0; c < classes_; ++c) {
        auto r = row(c);
        const double n = norm(r);
        if (!(n > 0)) throw NumericError("class center collapsed to zero");
        for (double& v : r) v /= n;
    }
}

LossResult ce_loss(std::span<const double> f, std::span<const std::span<const double>> candidates,
                   std::size_t positive, const Margins& margins, double scale) {
    if (positive >= candidates.size()) throw std::invalid_argument("ce_loss: positive index out of range");
    const std::size_t n = candidates.size();

    // Positive logit: scale * (cos(w + m1) - m2), expanded as
    // c cos m1 - sin(w) sin m1 so that m1 = 0 has an exact derivative.
    const double cpos = cosine(f, candidates[positive]);
    const double sin_w = std::sqrt(std::max(0.0, 1.0 - cpos * cpos));
    const double cm = std::cos(margins.m1);
    const double sm = std::sin(margins.m1);
    const double zpos = scale * (cpos * cm - sin_w * sm - margins.m2);
    const double dzpos = scale * (cm + sm * cpos / std::max(sin_w, kSinFloor));

    std::vector<double> logits(n);
    for (std::size_t j = 0; j < n; ++j) logits[j] = j == positive ? zpos : scale * cosine(f, candidates[j]);

    LossResult r;
    const double lse = log_sum_exp(logits);
    // log(1 + sum_neg exp(z_j - z_pos)) stays accurate when the positive dominates.
    double rel = 0.0, worst = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
        if (j != positive) worst = std::max(worst, logits[j] - zpos);
    if (worst < 700.0) {
        for (std::size_t j = 0; j < n; ++j)
            if (j != positive) rel += std::exp(logits[j] - zpos);
        r.value = std::log1p(rel);
    } else {
        r.value = lse - zpos;
    }
    r.grad_feature.assign(f.size(), 0.0);
    r.grad_candidates.assign(n, RealVector(f.size(), 0.0));
    // p_pos - 1 taken as minus the negatives' mass to keep precision when saturated.
    double negative_mass = 0.0;
    for (std::size_t j = 0; j < n; ++j)
        if (j != positive) negative_mass += std::exp(logits[j] - lse);
    for (std::size_t j = 0; j < n; ++j) {
        const double coef = j == positive ? -negative_mass * dzpos : std::exp(logits[j] - lse) * scale;
        axpy(coef, candidates[j], r.grad_feature);
        axpy(coef, f, r.grad_candidates[j]);
    }
    if (!std::isfinite(r.value)) throw NumericError("ce_loss: non-finite loss");
    return r;
}

BatchLoss distortion_loss(std::span<const RealVector> features, std::span<const int> labels,
                          const BatchWeights& weights, const ClassCenters& centers,
                          std::span<const Margins> margins, double scale) {
    const std::size_t b = features.size();
    if (labels.size() != b || weights.weights.size() != b || margins.size() != b)
        throw std::invalid_argument("distortion_loss: batch components are misaligned");
    if (!(weights.normalizer > 0)) throw std::invalid_argument("distortion_loss: weight normalizer W must be positive");

    std::vector<std::span<const double>> rows(centers.classes());
    for (std::size_t c = 0; c < rows.size(); ++c) rows[c] = centers.row(c);

    BatchLoss out;
    out.grad_features.resize(b);
    out.grad_centers.assign(centers.data().size(), 0.0);
    const double inv_w = 1.0 / weights.normalizer;
    for (std::size_t i = 0; i < b; ++i) {
        const auto label = static_cast<std::size_t>(labels[i]);
        if (label >= rows.size()) throw std::invalid_argument("distortion_loss: label out of range");
        const double a = weights.weights[i] * inv_w;
        auto term = ce_loss(features[i], rows, label, margins[i], scale);
        out.value += a * term.value;
        out.grad_features[i].assign(features[i].size(), 0.0);
        axpy(a, term.grad_feature, out.grad_features[i]);
        for (std::size_t c = 0; c < rows.size(); ++c)
            axpy(a, term.grad_candidates[c], std::span<double>(out.grad_centers).subspan(c * centers.dim(), centers.dim()));
    }
    return out;
}

BatchLoss proxy_loss(std::span<const RealVector> features, const BatchWeights& weights,
                     std::span<const ProxyContext> contexts, std::span<const Margins> margins, double scale) {
    const std::size_t b = features.size();
    if (contexts.size() != b || weights.weights.size() != b || margins.size() != b)
        throw std::invalid_argument("proxy_loss: batch components are misaligned");
    if (!(weights.normalizer > 0)) throw std::invalid_argument("proxy_loss: weight normalizer W must be positive");

    BatchLoss out;
    out.grad_features.resize(b);
    const double inv_w = 1.0 / weights.normalizer;
    for (std::size_t i = 0; i < b; ++i) {
        const auto& ctx = contexts[i];
        if (ctx.positives.empty()) throw std::invalid_argument("proxy_loss: empty class proxy set");

        // P_i u N_i with duplicates merged; remember where each P_i member landed.
        std::vector<std::span<const double>> cands;
        auto locate = [&](std::span<const double> v) {
            for (std::size_t j = 0; j < cands.size(); ++j)
                if (bitwise_equal(cands[j], v)) return j;
            cands.push_back(v);
            return cands.size() - 1;
        };
        std::vector<std::size_t> pos_index;
        pos_index.reserve(ctx.positives.size());
        for (auto p : ctx.positives) pos_index.push_back(locate(p));
        for (auto q : ctx.negatives) locate(q);

        const double a = weights.weights[i] * inv_w / static_cast<double>(ctx.positives.size());
        out.grad_features[i].assign(features[i].size(), 0.0);
        for (std::size_t q : pos_index) {
            auto term = ce_loss(features[i], cands, q, margins[i], scale);
            out.value += a * term.value;
            axpy(a, term.grad_feature, out.grad_features[i]);
        }
    }
    return out;
}

BatchLoss combined_loss(const BatchLoss& center, const BatchLoss& proxy, double lambda) {
    BatchLoss out = center;
    out.value = center.value + lambda * proxy.value;
    if (proxy.grad_features.empty()) return out;
    if (proxy.grad_features.size() != center.grad_features.size())
        throw std::invalid_argument("combined_loss: batch size mismatch");
    for (std::size_t i = 0; i < out.grad_features.size(); ++i) axpy(lambda, proxy.grad_features[i], out.grad_features[i]);
    if (!proxy.grad_centers.empty()) {
        if (out.grad_centers.empty()) out.grad_centers.assign(proxy.grad_centers.size(), 0.0);
        axpy(lambda, proxy.grad_centers, out.grad_centers);
    }
    return out;
}

}  // namespace dali
