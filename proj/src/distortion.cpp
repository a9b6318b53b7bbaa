#include "dali/distortion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dali {

DistortionLevel::DistortionLevel(int level) : level_(level) {
    if (level < 0 || level > kMax)
        throw std::out_of_range("distortion level must be in 0..5, got " + std::to_string(level));
}

DistortionParams DistortionParams::linear(double warp_per_level, double blur_per_level, double corr_len) {
    DistortionParams p;
    for (int l = 1; l <= DistortionLevel::kMax; ++l)
        p.levels[l - 1] = {warp_per_level * l, corr_len, blur_per_level * l};
    return p;
}

DistortionParams DistortionParams::defaults(int width, int height) {
    const double side = std::min(width, height);
    const double scale = side / 32.0;
    return linear(0.5 * scale, 0.4 * scale, 0.25 * side);
}

const LevelParams& DistortionParams::at(DistortionLevel level) const {
    if (level.clean()) throw std::invalid_argument("distortion params: level 0 has no parameters");
    return levels[level.value() - 1];
}

void DistortionParams::validate() const {
    for (std::size_t i = 0; i < levels.size(); ++i) {
        const auto& l = levels[i];
        if (!(l.warp_rms >= 0 && l.corr_len >= 0 && l.blur_sigma >= 0))
            throw std::invalid_argument("distortion params: negative entry at level " + std::to_string(i + 1));
        if (i > 0 && !(l.warp_rms > levels[i - 1].warp_rms && l.blur_sigma > levels[i - 1].blur_sigma))
            throw std::invalid_argument("distortion params: warp_rms and blur_sigma must increase with level");
    }
}

double DisplacementField::rms() const {
    if (dx.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < dx.size(); ++i) s += dx[i] * dx[i] + dy[i] * dy[i];
    return std::sqrt(s / static_cast<double>(dx.size()));
}

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be >= 0");
    if (sigma == 0.0) return {1.0};
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

namespace {

// In-place separable convolution of a single-plane w x h field, edge clamp.
void convolve_plane(std::vector<double>& plane, int w, int h, int stride, int offset,
                    const std::vector<double>& kernel) {
    const int radius = static_cast<int>(kernel.size() / 2);
    std::vector<double> tmp(static_cast<std::size_t>(w) * h);
    auto idx = [&](int x, int y) { return (static_cast<std::size_t>(y) * w + x) * stride + offset; };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -radius; k <= radius; ++k)
                s += kernel[k + radius] * plane[idx(std::clamp(x + k, 0, w - 1), y)];
            tmp[static_cast<std::size_t>(y) * w + x] = s;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int k = -radius; k <= radius; ++k)
                s += kernel[k + radius] * tmp[static_cast<std::size_t>(std::clamp(y + k, 0, h - 1)) * w + x];
            plane[idx(x, y)] = s;
        }
}

}  // namespace

DisplacementField make_warp_field(int width, int height, const LevelParams& params, SeedStream rng) {
    if (width < 4 || height < 4) throw std::invalid_argument("make_warp_field: image must be at least 4x4");
    DisplacementField f(width, height);
    if (params.warp_rms == 0.0) return f;
    for (double& v : f.dx) v = rng.normal();
    for (double& v : f.dy) v = rng.normal();
    const auto kernel = gaussian_kernel(params.corr_len);
    convolve_plane(f.dx, width, height, 1, 0, kernel);
    convolve_plane(f.dy, width, height, 1, 0, kernel);
    const double r = f.rms();
    if (!(r > 0.0)) throw NumericError("make_warp_field: degenerate smoothed field");
    const double scale = params.warp_rms / r;
    for (double& v : f.dx) v *= scale;
    for (double& v : f.dy) v *= scale;
    return f;
}

Image warp(const Image& img, const DisplacementField& field) {
    if (img.width != field.width || img.height != field.height)
        throw std::invalid_argument("warp: field dimensions do not match image");
    Image out(img.width, img.height, img.channels);
    const double xmax = img.width - 1;
    const double ymax = img.height - 1;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const std::size_t fi = static_cast<std::size_t>(y) * img.width + x;
            const double sx = std::clamp(x + field.dx[fi], 0.0, xmax);
            const double sy = std::clamp(y + field.dy[fi], 0.0, ymax);
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const int x1 = std::min(x0 + 1, img.width - 1);
            const int y1 = std::min(y0 + 1, img.height - 1);
            const double ax = sx - x0;
            const double ay = sy - y0;
            for (int c = 0; c < img.channels; ++c) {
                const double top = (1 - ax) * img.at(x0, y0, c) + ax * img.at(x1, y0, c);
                const double bot = (1 - ax) * img.at(x0, y1, c) + ax * img.at(x1, y1, c);
                out.at(x, y, c) = std::clamp((1 - ay) * top + ay * bot, 0.0, 1.0);
            }
        }
    return out;
}

Image blur(const Image& img, double sigma) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("blur: sigma must be >= 0");
    Image out = img;
    if (sigma == 0.0) return out;
    const auto kernel = gaussian_kernel(sigma);
    for (int c = 0; c < img.channels; ++c) convolve_plane(out.pixels, img.width, img.height, img.channels, c, kernel);
    for (double& p : out.pixels) p = std::clamp(p, 0.0, 1.0);
    return out;
}

Image distort(const Image& img, DistortionLevel level, const DistortionParams& params, SeedStream rng) {
    if (level.clean()) return img;
    const LevelParams& p = params.at(level);
    return blur(warp(img, make_warp_field(img.width, img.height, p, std::move(rng))), p.blur_sigma);
}

}  // namespace dali
