#include "dali/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dali {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64_mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double squared_norm(std::span<const double> v) { return dot(v, v); }

double norm(std::span<const double> v) { return std::sqrt(squared_norm(v)); }

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

UnitVector UnitVector::normalize(std::span<const double> v) { return l2_normalize(v).direction; }

Embedding l2_normalize(std::span<const double> v) {
    const double n = norm(v);
    if (!(n > 0.0) || !std::isfinite(n))
        throw NumericError("l2_normalize: zero or non-finite vector (degenerate feature)");
    RealVector u(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) u[i] = v[i] / n;
    return {UnitVector::unchecked(std::move(u)), n};
}

double cosine(std::span<const double> u, std::span<const double> w) {
    return std::clamp(dot(u, w), -1.0, 1.0);
}

double cosine(const UnitVector& u, const UnitVector& w) { return cosine(u.values(), w.values()); }

double log_sum_exp(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("log_sum_exp: empty input");
    if (xs.size() == 1) return xs[0];
    const double m = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

SeedStream::SeedStream(std::uint64_t master_seed)
    : master_seed_(master_seed), key_(splitmix64_mix(master_seed ^ kGolden)) {}

SeedStream SeedStream::derive(std::uint64_t index) const {
    SeedStream child;
    child.master_seed_ = master_seed_;
    child.path_ = path_;
    child.path_.push_back(index);
    child.key_ = splitmix64_mix(splitmix64_mix(key_) + (index + 1) * kGolden);
    return child;
}

std::uint64_t SeedStream::next_u64() {
    ++counter_;
    return splitmix64_mix(key_ + counter_ * kGolden);
}

double SeedStream::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t SeedStream::uniform_index(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
    const unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::uint64_t>(wide >> 64);
}

double SeedStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

}  // namespace dali
