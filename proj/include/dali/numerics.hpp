#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dali {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A computation produced or was fed a non-finite or degenerate value.
class NumericError : public Error {
public:
    using Error::Error;
};

using RealVector = std::vector<double>;

/// Sequential left-to-right dot product. The fixed reduction order keeps
/// results identical across runs and thread counts.
double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> v);
double norm(std::span<const double> v);
bool all_finite(std::span<const double> v);

/// A vector with unit L2 norm (within 1e-9 when produced by normalize()).
class UnitVector {
public:
    UnitVector() = default;

    /// Throws NumericError on a zero or non-finite input.
    static UnitVector normalize(std::span<const double> v);
    /// Wraps values already known to be unit length (e.g. read back from a
    /// float32 store). No check is performed.
    static UnitVector unchecked(RealVector values) { return UnitVector(std::move(values)); }

    std::span<const double> values() const { return values_; }
    const RealVector& vector() const { return values_; }
    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }

    friend bool operator==(const UnitVector&, const UnitVector&) = default;

private:
    explicit UnitVector(RealVector v) : values_(std::move(v)) {}
    RealVector values_;
};

/// Feature direction plus its pre-normalization magnitude.
struct Embedding {
    UnitVector direction;
    double magnitude = 0.0;
};

/// u = v/|v|, magnitude = |v|. Zero input throws NumericError.
Embedding l2_normalize(std::span<const double> v);

/// Dot product of two unit vectors clamped to [-1, 1].
double cosine(const UnitVector& u, const UnitVector& w);
double cosine(std::span<const double> u, std::span<const double> w);

/// log(sum(exp(x))) with max shift. Empty input throws.
double log_sum_exp(std::span<const double> xs);

/// Splittable, counter-based random stream.
///
/// Generator (version 1, fixed): the stream key is a 64-bit value; draw n
/// (0-based) is splitmix64_mix(key + (n + 1) * 0x9E3779B97F4A7C15).
/// Children are keyed mix(mix(key) + (index + 1) * golden) so that
/// derivation is order sensitive and repeatable. Uniform reals take the top
/// 53 bits; normals use Box-Muller with the sine branch cached.
class SeedStream {
public:
    static constexpr std::uint32_t kGeneratorVersion = 1;

    SeedStream() : SeedStream(0) {}
    explicit SeedStream(std::uint64_t master_seed);

    SeedStream derive(std::uint64_t index) const;

    std::uint64_t master_seed() const { return master_seed_; }
    const std::vector<std::uint64_t>& derivation_path() const { return path_; }
    std::uint64_t key() const { return key_; }

    std::uint64_t next_u64();
    /// Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_index(std::uint64_t n);
    double normal();

    bool operator==(const SeedStream& o) const {
        return key_ == o.key_ && counter_ == o.counter_ && has_spare_ == o.has_spare_ &&
               (!has_spare_ || spare_ == o.spare_);
    }

private:
    std::uint64_t master_seed_ = 0;
    std::vector<std::uint64_t> path_;
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64_mix(std::uint64_t z);

/// 64-bit FNV-1a over a byte string.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace dali
