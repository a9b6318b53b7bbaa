#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "dali/numerics.hpp"

namespace dali {

/// Cosine distance 1 - cos(a, b) between unit vectors.
double cosine_distance(std::span<const double> a, std::span<const double> b);

/// Bookkeeping of farthest-point selection for one class.
struct ProxySelectionState {
    std::vector<double> min_distance;  // V: distance of each sample to its closest chosen proxy
    std::vector<std::size_t> chosen;
};

/// Observer called after every V update (including initialization).
using ProxySelectionObserver = std::function<void(const ProxySelectionState&)>;

/// Farthest-point selection with a fixed first pick: V starts as the
/// distances to `first`; each next proxy is the unchosen sample with the
/// largest V (ties to the lowest index), followed by V = min(V, D(new)).
/// Classes smaller than k repeat their indices cyclically to fill k slots.
std::vector<std::size_t> select_proxies_from(std::span<const UnitVector> features, std::size_t k, std::size_t first,
                                             const ProxySelectionObserver& observer = {});

/// As select_proxies_from with the first pick drawn from rng.
std::vector<std::size_t> select_proxies(std::span<const UnitVector> features, std::size_t k, SeedStream rng);

/// Per-class proxies, a fixed number of slots per class.
class ProxyBank {
public:
    ProxyBank() = default;
    ProxyBank(std::size_t classes, std::size_t per_class, std::size_t dim);

    std::size_t classes() const { return classes_; }
    std::size_t per_class() const { return per_class_; }
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return classes_ * per_class_; }

    std::span<const double> proxy(std::size_t cls, std::size_t slot) const;
    std::span<const double> proxy(std::size_t flat) const { return {vectors_.data() + flat * dim_, dim_}; }
    /// Sample index (within its class) that each slot was taken from.
    std::size_t source(std::size_t cls, std::size_t slot) const { return sources_[cls * per_class_ + slot]; }

    void set(std::size_t cls, std::size_t slot, const UnitVector& v, std::size_t source);
    const std::vector<double>& data() const { return vectors_; }

    friend bool operator==(const ProxyBank&, const ProxyBank&) = default;

private:
    std::size_t classes_ = 0;
    std::size_t per_class_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> vectors_;
    std::vector<std::size_t> sources_;
};

/// Builds the bank from labelled features: select_proxies per class with the
/// class's stream rng.derive(class). Every class in [0, num_classes) must have
/// at least one feature.
ProxyBank build_proxy_bank(std::span<const UnitVector> features, std::span<const int> labels,
                           std::size_t num_classes, std::size_t per_class, SeedStream rng);

struct ProxyRef {
    std::size_t cls = 0;
    std::size_t slot = 0;
    double distance = 0.0;
};

struct NegativeSet {
    std::vector<ProxyRef> proxies;  // ascending distance, ties by (class, slot)
    bool no_foreign_proxies = false;
};

NegativeSet mine_negatives(std::span<const double> f, const ProxyBank& bank, std::size_t own_class, std::size_t k = 50);

}  // namespace dali
