#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dali/schedule.hpp"
#include "oracles.hpp"

using namespace dali;

TEST_CASE("schedule endpoints and midpoint", "[schedule]") {
    WeightSchedule s;
    s.total_steps = 1000;
    for (int l = 0; l <= 5; ++l) {
        const DistortionLevel lv(l);
        const double w0 = s.initial_weights[l];
        CHECK(weight(lv, 0, s) == w0);
        CHECK(weight(lv, 1000, s) == 1.0);
        CHECK(weight(lv, 5000, s) == 1.0);
        CHECK(std::abs(weight(lv, 500, s) - (1.0 + w0) / 2.0) < 1e-12);
    }
    CHECK(std::abs(weight(DistortionLevel(5), 500, s) - 0.6) < 1e-12);
    for (std::int64_t t = 0; t <= 1200; t += 37) CHECK(weight(DistortionLevel(0), t, s) == 1.0);
}

TEST_CASE("schedule matches the closed form", "[schedule]") {
    SeedStream rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        WeightSchedule s;
        s.total_steps = 1 + static_cast<std::int64_t>(rng.uniform_index(5000));
        const std::int64_t t = static_cast<std::int64_t>(rng.uniform_index(6000));
        for (int l = 0; l <= 5; ++l) {
            const double expect = oracle::schedule_weight(s.initial_weights[l], static_cast<double>(t),
                                                          static_cast<double>(s.total_steps));
            REQUIRE(std::abs(weight(DistortionLevel(l), t, s) - expect) < 1e-12);
        }
    }
}

TEST_CASE("schedule monotonicity and range", "[schedule]") {
    WeightSchedule s;
    s.total_steps = 257;
    for (int l = 0; l <= 5; ++l) {
        double prev = -1.0;
        for (std::int64_t t = 0; t <= 300; ++t) {
            const double w = weight(DistortionLevel(l), t, s);
            REQUIRE(w >= prev);
            REQUIRE(w >= s.initial_weights[l]);
            REQUIRE(w <= 1.0);
            prev = w;
        }
    }
    for (std::int64_t t = 0; t <= 300; ++t)
        for (int l = 1; l <= 5; ++l)
            REQUIRE(weight(DistortionLevel(l - 1), t, s) >= weight(DistortionLevel(l), t, s));
}

TEST_CASE("schedule validation", "[schedule]") {
    WeightSchedule s;
    CHECK_NOTHROW(s.validate());
    s.total_steps = 0;
    CHECK_THROWS(s.validate());
    s = {};
    s.initial_weights[0] = 0.9;
    CHECK_THROWS(s.validate());
    s = {};
    s.initial_weights[3] = 0.9;
    CHECK_THROWS(s.validate());
    s = {};
    CHECK_THROWS(weight(DistortionLevel(1), -1, s));
    CHECK_NOTHROW(WeightSchedule::flat(10).validate());
    CHECK(weight(DistortionLevel(5), 0, WeightSchedule::flat(10)) == 1.0);
}

TEST_CASE("batch weights", "[schedule]") {
    WeightSchedule s;
    s.total_steps = 100;
    const std::vector<DistortionLevel> clean(6, DistortionLevel(0));
    const auto bw = batch_weights(clean, 17, s);
    CHECK(bw.weights == std::vector<double>(6, 1.0));
    CHECK(bw.normalizer == 6.0);

    const std::vector<DistortionLevel> two{DistortionLevel(0), DistortionLevel(5)};
    const auto b2 = batch_weights(two, 0, s);
    CHECK(b2.weights == std::vector<double>{1.0, 0.2});
    CHECK(b2.normalizer == 1.2);

    SeedStream rng(9);
    std::vector<DistortionLevel> mixed;
    for (int i = 0; i < 128; ++i) mixed.emplace_back(static_cast<int>(rng.uniform_index(6)));
    const auto bm = batch_weights(mixed, 40, s);
    double resum = 0.0;
    for (std::size_t i = 0; i < mixed.size(); ++i) {
        REQUIRE(bm.weights[i] == weight(mixed[i], 40, s));
        resum += bm.weights[i];
    }
    CHECK(bm.normalizer == resum);

    CHECK_THROWS(batch_weights(std::span<const DistortionLevel>{}, 0, s));
    CHECK(unit_weights(4).normalizer == 4.0);
}
