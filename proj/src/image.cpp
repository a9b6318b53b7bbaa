#include "dali/image.hpp"

#include <cctype>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dali {

Image::Image(int w, int h, int c, double fill)
    : width(w), height(h), channels(c),
      pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {}

void Image::validate() const {
    if (width <= 0 || height <= 0) throw std::invalid_argument("image: non-positive dimensions");
    if (channels != 1 && channels != 3) throw std::invalid_argument("image: channels must be 1 or 3");
    if (pixels.size() != static_cast<std::size_t>(width) * height * channels)
        throw std::invalid_argument("image: pixel count does not match dimensions");
    for (double p : pixels)
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("image: intensity outside [0,1]");
}

ParseError::ParseError(std::size_t offset, const std::string& what)
    : Error("pnm parse error at byte " + std::to_string(offset) + ": " + what), offset_(offset) {}

namespace {

unsigned char to_byte(double v) {
    const double s = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
    return static_cast<unsigned char>(std::clamp(s, 0.0, 255.0));
}

class HeaderReader {
public:
    explicit HeaderReader(std::string_view bytes) : b_(bytes) {}

    void skip_space_and_comments() {
        while (pos_ < b_.size()) {
            const char c = b_[pos_];
            if (c == '#') {
                while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    long read_uint(const char* field) {
        skip_space_and_comments();
        const std::size_t start = pos_;
        long v = 0;
        while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
            v = v * 10 + (b_[pos_] - '0');
            if (v > 1'000'000) throw ParseError(start, std::string(field) + " too large");
            ++pos_;
        }
        if (pos_ == start) throw ParseError(start, std::string("expected ") + field);
        return v;
    }

    std::size_t pos() const { return pos_; }
    void advance(std::size_t n) { pos_ += n; }

private:
    std::string_view b_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_pnm(const Image& img) {
    img.validate();
    std::ostringstream os;
    os << (img.channels == 1 ? "P5" : "P6") << '\n' << img.width << ' ' << img.height << "\n255\n";
    std::string out = os.str();
    out.reserve(out.size() + img.pixels.size());
    for (double p : img.pixels) out.push_back(static_cast<char>(to_byte(p)));
    return out;
}

Image decode_pnm(std::string_view bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6'))
        throw ParseError(0, "bad magic (expected P5 or P6)");
    const int channels = bytes[1] == '5' ? 1 : 3;
    HeaderReader r(bytes);
    r.advance(2);
    const long w = r.read_uint("width");
    const long h = r.read_uint("height");
    const long maxval = r.read_uint("maxval");
    if (w <= 0 || h <= 0) throw ParseError(r.pos(), "zero dimension");
    if (maxval <= 0 || maxval > 255) throw ParseError(r.pos(), "maxval must be in 1..255");
    if (r.pos() >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[r.pos()])))
        throw ParseError(r.pos(), "missing whitespace after header");
    r.advance(1);
    const std::size_t need = static_cast<std::size_t>(w) * h * channels;
    if (bytes.size() - r.pos() < need) throw ParseError(bytes.size(), "truncated pixel data");
    Image img(static_cast<int>(w), static_cast<int>(h), channels);
    for (std::size_t i = 0; i < need; ++i) {
        const auto v = static_cast<unsigned char>(bytes[r.pos() + i]);
        if (v > maxval) throw ParseError(r.pos() + i, "sample exceeds maxval");
        img.pixels[i] = static_cast<double>(v) / static_cast<double>(maxval);
    }
    return img;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

void save_image(const std::filesystem::path& path, const Image& img) { write_file(path, encode_pnm(img)); }

Image load_image(const std::filesystem::path& path) { return decode_pnm(read_file(path)); }

Image quantize(const Image& img) {
    Image out = img;
    for (double& p : out.pixels) p = static_cast<double>(to_byte(p)) / 255.0;
    return out;
}

}  // namespace dali
