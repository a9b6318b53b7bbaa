#pragma once

#include <array>
#include <vector>

#include "dali/image.hpp"
#include "dali/numerics.hpp"

namespace dali {

/// Distortion severity, 0 (clean) through 5.
class DistortionLevel {
public:
    static constexpr int kMax = 5;

    constexpr DistortionLevel() = default;
    /// Throws std::out_of_range outside 0..5.
    explicit DistortionLevel(int level);

    constexpr int value() const { return level_; }
    constexpr bool clean() const { return level_ == 0; }
    friend constexpr bool operator==(DistortionLevel, DistortionLevel) = default;
    friend constexpr auto operator<=>(DistortionLevel, DistortionLevel) = default;

private:
    int level_ = 0;
};

struct LevelParams {
    double warp_rms = 0.0;    // RMS displacement, pixels
    double corr_len = 0.0;    // warp-field correlation length, pixels
    double blur_sigma = 0.0;  // Gaussian PSF std, pixels
};

/// Warp/blur severity table for levels 1..5.
struct DistortionParams {
    std::array<LevelParams, DistortionLevel::kMax> levels{};

    /// warp_rms = 0.5 l, blur_sigma = 0.4 l (both scaled by min(w,h)/32),
    /// corr_len = 0.25 min(w,h).
    static DistortionParams defaults(int width, int height);
    /// Same table built from per-level slopes.
    static DistortionParams linear(double warp_per_level, double blur_per_level, double corr_len);

    const LevelParams& at(DistortionLevel level) const;
    /// Non-negative entries, warp_rms and blur_sigma strictly increasing.
    void validate() const;
};

/// Per-pixel (dx, dy) displacement in pixels, row-major.
struct DisplacementField {
    int width = 0;
    int height = 0;
    std::vector<double> dx;
    std::vector<double> dy;

    DisplacementField() = default;
    DisplacementField(int w, int h) : width(w), height(h), dx(std::size_t(w) * h), dy(std::size_t(w) * h) {}
    /// sqrt(mean(dx^2 + dy^2)).
    double rms() const;
};

/// Normalized Gaussian taps of radius ceil(3 sigma); sigma = 0 gives {1}.
std::vector<double> gaussian_kernel(double sigma);

DisplacementField make_warp_field(int width, int height, const LevelParams& params, SeedStream rng);

/// Bilinear resampling at (x + dx, y + dy) with edge clamp.
Image warp(const Image& img, const DisplacementField& field);

/// Separable Gaussian blur with edge clamp; sigma = 0 returns a copy.
Image blur(const Image& img, double sigma);

/// Level 0 returns an exact copy; otherwise warp then blur.
Image distort(const Image& img, DistortionLevel level, const DistortionParams& params, SeedStream rng);

}  // namespace dali
