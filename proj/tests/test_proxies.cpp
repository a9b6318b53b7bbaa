#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "checks.hpp"
#include "dali/proxies.hpp"

using namespace dali;

namespace {

std::vector<UnitVector> arc_points(int n) {
    std::vector<UnitVector> out;
    for (int i = 0; i < n; ++i) {
        const double a = 0.1 * i;
        const std::vector<double> v{std::cos(a), std::sin(a)};
        out.push_back(UnitVector::normalize(v));
    }
    return out;
}

}  // namespace

TEST_CASE("farthest-point picks on an arc", "[proxies]") {
    const auto pts = arc_points(11);
    const auto picks = select_proxies_from(pts, 3, 0);
    CHECK(picks == std::vector<std::size_t>{0, 10, 5});
}

TEST_CASE("class of exactly k samples selects all of them", "[proxies]") {
    SeedStream rng(4);
    const auto raw = checks::units(rng, 5, 6);
    std::vector<UnitVector> feats;
    for (const auto& v : raw) feats.push_back(UnitVector::unchecked(v));
    const auto picks = select_proxies_from(feats, 5, 2);
    CHECK(picks == oracle::greedy_fps(raw, 5, 2));
    auto sorted = picks;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<std::size_t>{0, 1, 2, 3, 4});
}

TEST_CASE("single-sample class repeats its index", "[proxies]") {
    const auto pts = arc_points(1);
    CHECK(select_proxies(pts, 5, SeedStream(1)) == std::vector<std::size_t>(5, 0));
    const auto three = arc_points(3);
    const auto picks = select_proxies_from(three, 5, 1);
    CHECK(picks.size() == 5);
    CHECK(picks[3] == picks[0]);
    CHECK(picks[4] == picks[1]);
    CHECK_THROWS(select_proxies(std::span<const UnitVector>{}, 5, SeedStream(1)));
}

TEST_CASE("farthest-point selection equals the greedy oracle", "[proxies]") {
    for (std::uint64_t i = 0; i < 50; ++i) {
        const auto r = checks::check_fps_instance(SeedStream(900).derive(i));
        INFO("instance " << i);
        CHECK(r.matches);
        CHECK(r.monotone);
    }
}

TEST_CASE("coverage improves as k grows", "[proxies]") {
    SeedStream rng(12);
    const auto raw = checks::units(rng, 40, 8);
    std::vector<UnitVector> feats;
    for (const auto& v : raw) feats.push_back(UnitVector::unchecked(v));
    double prev = 3.0;
    for (std::size_t k = 1; k <= 5; ++k) {
        const auto picks = select_proxies_from(feats, k, 0);
        double cover = 0.0;
        for (std::size_t j = 0; j < raw.size(); ++j) {
            double d = 3.0;
            for (auto p : picks) d = std::min(d, cosine_distance(raw[j], raw[p]));
            cover = std::max(cover, d);
        }
        CHECK(cover <= prev);
        prev = cover;
    }
}

TEST_CASE("first pick is seeded", "[proxies]") {
    SeedStream rng(3);
    const auto raw = checks::units(rng, 30, 4);
    std::vector<UnitVector> feats;
    for (const auto& v : raw) feats.push_back(UnitVector::unchecked(v));
    CHECK(select_proxies(feats, 5, SeedStream(8)) == select_proxies(feats, 5, SeedStream(8)));
    auto probe = SeedStream(8);
    CHECK(select_proxies(feats, 5, SeedStream(8)).front() == probe.uniform_index(30));
}

TEST_CASE("proxy bank construction", "[proxies]") {
    SeedStream rng(21);
    std::vector<UnitVector> feats;
    std::vector<int> labels;
    for (int c = 0; c < 4; ++c)
        for (int i = 0; i < 7; ++i) {
            feats.push_back(UnitVector::normalize(oracle::random_unit(rng, 5)));
            labels.push_back(c);
        }
    const auto bank = build_proxy_bank(feats, labels, 4, 5, SeedStream(2));
    CHECK(bank.size() == 20);
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t s = 0; s < 5; ++s) {
            const auto src = bank.source(c, s);
            const auto& v = feats[c * 7 + src].vector();
            CHECK(std::equal(v.begin(), v.end(), bank.proxy(c, s).begin()));
        }
    CHECK(bank == build_proxy_bank(feats, labels, 4, 5, SeedStream(2)));

    // One image per class: every slot of a class holds that embedding.
    std::vector<UnitVector> one(feats.begin(), feats.begin() + 3);
    const std::vector<int> one_labels{0, 1, 2};
    const auto small = build_proxy_bank(one, one_labels, 3, 5, SeedStream(2));
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t s = 0; s < 5; ++s)
            CHECK(std::equal(one[c].vector().begin(), one[c].vector().end(), small.proxy(c, s).begin()));

    const std::vector<int> missing{0, 0, 2};
    CHECK_THROWS(build_proxy_bank(one, missing, 3, 5, SeedStream(2)));
}

TEST_CASE("negative mining", "[proxies]") {
    SeedStream rng(17);
    ProxyBank bank(20, 5, 6);
    for (std::size_t c = 0; c < 20; ++c)
        for (std::size_t s = 0; s < 5; ++s) bank.set(c, s, UnitVector::normalize(oracle::random_unit(rng, 6)), s);
    const auto f = oracle::random_unit(rng, 6);
    const auto neg = mine_negatives(f, bank, 3, 50);
    CHECK(neg.proxies.size() == 50);
    CHECK_FALSE(neg.no_foreign_proxies);

    std::vector<ProxyRef> all;
    for (std::size_t c = 0; c < 20; ++c) {
        if (c == 3) continue;
        for (std::size_t s = 0; s < 5; ++s)
            all.push_back({c, s, 1.0 - std::clamp(oracle::dot(f, bank.proxy(c, s)), -1.0, 1.0)});
    }
    std::sort(all.begin(), all.end(), [](const ProxyRef& a, const ProxyRef& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        return a.cls != b.cls ? a.cls < b.cls : a.slot < b.slot;
    });
    for (std::size_t i = 0; i < 50; ++i) {
        CHECK(neg.proxies[i].cls == all[i].cls);
        CHECK(neg.proxies[i].slot == all[i].slot);
        CHECK(neg.proxies[i].distance == all[i].distance);
    }

    const std::vector<double> exact(bank.proxy(7, 2).begin(), bank.proxy(7, 2).end());
    const auto hit = mine_negatives(exact, bank, 3, 50);
    CHECK(hit.proxies.front().cls == 7);
    CHECK(hit.proxies.front().slot == 2);
    CHECK(hit.proxies.front().distance == Catch::Approx(0.0).margin(1e-15));

    ProxyBank two(2, 5, 6);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t s = 0; s < 5; ++s) two.set(c, s, UnitVector::normalize(oracle::random_unit(rng, 6)), s);
    CHECK(mine_negatives(f, two, 0, 50).proxies.size() == 5);

    ProxyBank lonely(1, 5, 6);
    for (std::size_t s = 0; s < 5; ++s) lonely.set(0, s, UnitVector::normalize(oracle::random_unit(rng, 6)), s);
    const auto none = mine_negatives(f, lonely, 0, 50);
    CHECK(none.proxies.empty());
    CHECK(none.no_foreign_proxies);
}

TEST_CASE("negative mining keeps (class, slot) order on ties", "[proxies]") {
    ProxyBank bank(3, 2, 2);
    const auto v = UnitVector::normalize(std::vector<double>{1.0, 0.0});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t s = 0; s < 2; ++s) bank.set(c, s, v, s);
    const std::vector<double> f{0.0, 1.0};
    const auto neg = mine_negatives(f, bank, 1, 50);
    REQUIRE(neg.proxies.size() == 4);
    CHECK(neg.proxies[0].cls == 0);
    CHECK(neg.proxies[1].cls == 0);
    CHECK(neg.proxies[1].slot == 1);
    CHECK(neg.proxies[2].cls == 2);
}
