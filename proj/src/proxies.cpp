#include "dali/proxies.hpp"

#include <algorithm>
#include <stdexcept>

namespace dali {

double cosine_distance(std::span<const double> a, std::span<const double> b) { return 1.0 - cosine(a, b); }

std::vector<std::size_t> select_proxies_from(std::span<const UnitVector> features, std::size_t k, std::size_t first,
                                             const ProxySelectionObserver& observer) {
    const std::size_t n = features.size();
    if (n == 0) throw std::invalid_argument("select_proxies: empty class");
    if (k == 0) throw std::invalid_argument("select_proxies: k must be positive");
    if (first >= n) throw std::invalid_argument("select_proxies: first pick out of range");

    ProxySelectionState st;
    st.chosen.push_back(first);
    st.min_distance.resize(n);
    for (std::size_t j = 0; j < n; ++j) st.min_distance[j] = cosine_distance(features[first].values(), features[j].values());
    if (observer) observer(st);

    std::vector<bool> taken(n, false);
    taken[first] = true;
    const std::size_t distinct = std::min(k, n);
    while (st.chosen.size() < distinct) {
        std::size_t best = n;
        for (std::size_t j = 0; j < n; ++j)
            if (!taken[j] && (best == n || st.min_distance[j] > st.min_distance[best])) best = j;
        taken[best] = true;
        st.chosen.push_back(best);
        for (std::size_t j = 0; j < n; ++j)
            st.min_distance[j] =
                std::min(st.min_distance[j], cosine_distance(features[best].values(), features[j].values()));
        if (observer) observer(st);
    }
    std::vector<std::size_t> out = st.chosen;
    for (std::size_t i = distinct; i < k; ++i) out.push_back(st.chosen[i % distinct]);
    return out;
}

std::vector<std::size_t> select_proxies(std::span<const UnitVector> features, std::size_t k, SeedStream rng) {
    if (features.empty()) throw std::invalid_argument("select_proxies: empty class");
    return select_proxies_from(features, k, rng.uniform_index(features.size()));
}

ProxyBank::ProxyBank(std::size_t classes, std::size_t per_class, std::size_t dim)
    : classes_(classes), per_class_(per_class), dim_(dim), vectors_(classes * per_class * dim),
      sources_(classes * per_class) {}

std::span<const double> ProxyBank::proxy(std::size_t cls, std::size_t slot) const {
    return proxy(cls * per_class_ + slot);
}

void ProxyBank::set(std::size_t cls, std::size_t slot, const UnitVector& v, std::size_t source) {
    if (v.size() != dim_) throw std::invalid_argument("proxy bank: dimension mismatch");
    const std::size_t flat = cls * per_class_ + slot;
    std::copy(v.vector().begin(), v.vector().end(), vectors_.begin() + static_cast<std::ptrdiff_t>(flat * dim_));
    sources_[flat] = source;
}

ProxyBank build_proxy_bank(std::span<const UnitVector> features, std::span<const int> labels,
                           std::size_t num_classes, std::size_t per_class, SeedStream rng) {
    if (features.size() != labels.size()) throw std::invalid_argument("proxy bank: features/labels mismatch");
    if (features.empty()) throw std::invalid_argument("proxy bank: no features");
    std::vector<std::vector<std::size_t>> members(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
            throw std::invalid_argument("proxy bank: label out of range");
        members[static_cast<std::size_t>(labels[i])].push_back(i);
    }
    ProxyBank bank(num_classes, per_class, features.front().size());
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (members[c].empty()) throw std::invalid_argument("proxy bank: class " + std::to_string(c) + " has no samples");
        std::vector<UnitVector> cls;
        cls.reserve(members[c].size());
        for (std::size_t i : members[c]) cls.push_back(features[i]);
        const auto picks = select_proxies(cls, per_class, rng.derive(c));
        for (std::size_t s = 0; s < per_class; ++s) bank.set(c, s, cls[picks[s]], picks[s]);
    }
    return bank;
}

NegativeSet mine_negatives(std::span<const double> f, const ProxyBank& bank, std::size_t own_class, std::size_t k) {
    NegativeSet out;
    out.proxies.reserve(bank.size());
    for (std::size_t c = 0; c < bank.classes(); ++c) {
        if (c == own_class) continue;
        for (std::size_t s = 0; s < bank.per_class(); ++s)
            out.proxies.push_back({c, s, cosine_distance(f, bank.proxy(c, s))});
    }
    out.no_foreign_proxies = out.proxies.empty();
    // Entries are generated in (class, slot) order, so a stable sort keeps that tie order.
    std::stable_sort(out.proxies.begin(), out.proxies.end(),
                     [](const ProxyRef& a, const ProxyRef& b) { return a.distance < b.distance; });
    if (out.proxies.size() > k) out.proxies.resize(k);
    return out;
}

}  // namespace dali
