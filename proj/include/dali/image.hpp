#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dali/numerics.hpp"

namespace dali {

/// Row-major, interleaved-channel image with intensities in [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<double> pixels;

    Image() = default;
    Image(int w, int h, int c = 1, double fill = 0.0);

    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double& at(int x, int y, int c = 0) { return pixels[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const { return pixels[index(x, y, c)]; }
    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
    /// Throws std::invalid_argument if any invariant is broken.
    void validate() const;

    friend bool operator==(const Image&, const Image&) = default;
};

/// Malformed PGM/PPM input. offset() is the byte where parsing failed.
class ParseError : public Error {
public:
    ParseError(std::size_t offset, const std::string& what);
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// 8-bit binary PGM (P5, 1 channel) or PPM (P6, 3 channels). Intensities map
/// linearly to bytes with round-half-up.
std::string encode_pnm(const Image& img);
Image decode_pnm(std::string_view bytes);

void save_image(const std::filesystem::path& path, const Image& img);
Image load_image(const std::filesystem::path& path);

/// Rounds every intensity to the nearest representable 8-bit level.
Image quantize(const Image& img);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace dali
