#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "checks.hpp"
#include "dali/model.hpp"
#include "dali/parallel.hpp"

using namespace dali;

namespace {

Image random_image(int w, int h, std::uint64_t seed) {
    Image img(w, h);
    SeedStream rng(seed);
    for (auto& p : img.pixels) p = rng.uniform();
    return img;
}

ModelParams small_net(std::uint64_t seed) {
    const std::vector<std::size_t> hidden{7, 5};
    return ModelParams::init(16, hidden, 4, SeedStream(seed));
}

}  // namespace

TEST_CASE("initialization shapes and bounds", "[model]") {
    const std::vector<std::size_t> hidden{256, 256};
    const auto p = ModelParams::init(1024, hidden, 64, SeedStream(1));
    REQUIRE(p.layers() == 3);
    CHECK(p.input_dim() == 1024);
    CHECK(p.output_dim() == 64);
    CHECK(p.weight(0).shape == std::vector<std::uint32_t>{1024, 256});
    CHECK(p.weight(2).shape == std::vector<std::uint32_t>{256, 64});
    CHECK(p.parameter_count() == 1024 * 256 + 256 + 256 * 256 + 256 + 256 * 64 + 64);
    CHECK(p.activations[0] == Activation::leaky_relu);
    CHECK(p.activations[2] == Activation::identity);
    CHECK(p.leaky_slope == 0.01);
    for (std::size_t l = 0; l < 3; ++l) {
        const double bound = std::sqrt(6.0 / p.weight(l).shape[0]);
        for (double w : p.weight(l).data) REQUIRE(std::abs(w) <= bound);
        for (double b : p.bias(l).data) REQUIRE(b == 0.0);
    }
    CHECK(p == ModelParams::init(1024, hidden, 64, SeedStream(1)));
    CHECK_FALSE(p == ModelParams::init(1024, hidden, 64, SeedStream(2)));
}

TEST_CASE("identity single layer normalizes the input", "[model]") {
    ModelParams p;
    p.tensors = {Tensor({4, 4}), Tensor({4})};
    for (int i = 0; i < 4; ++i) p.tensors[0].data[i * 4 + i] = 1.0;
    p.activations = {Activation::identity};
    Image img(2, 2);
    img.pixels = {0.5, 0.5, 0.5, 1.0};  // encoder input = pixel - 0.5
    const auto e = forward(p, img);
    CHECK(e.magnitude == Catch::Approx(0.5));
    CHECK(e.direction.vector() == std::vector<double>{0.0, 0.0, 0.0, 1.0});
}

TEST_CASE("forward is deterministic and reports the raw norm", "[model]") {
    const auto p = small_net(3);
    const Image img = random_image(4, 4, 9);
    const auto a = forward(p, img);
    const auto b = forward(p, img);
    CHECK(a.direction == b.direction);
    CHECK(a.magnitude == b.magnitude);

    std::vector<double> in;
    for (double v : img.pixels) in.push_back(v - 0.5);
    const auto cache = forward_batch(p, in, 1);
    double n = 0.0;
    for (double v : cache.raw) n += v * v;
    CHECK(a.magnitude == Catch::Approx(std::sqrt(n)).epsilon(1e-15));
    CHECK(std::abs(oracle::dot(a.direction.values(), a.direction.values()) - 1.0) < 1e-12);
    CHECK_THROWS(forward(p, random_image(5, 4, 1)));
}

TEST_CASE("backward gradients match finite differences on every parameter", "[model][grad]") {
    for (std::uint64_t i = 0; i < 9; ++i) {
        const auto r = checks::gradient_check(checks::LossKind::network, i);
        INFO("D=" << r.dim << " classes=" << r.set_size << " adaptive=" << r.adaptive);
        CHECK(r.grad_error < 1e-5);
    }
}

TEST_CASE("normalization Jacobian removes the radial component", "[model]") {
    ModelParams p;
    p.tensors = {Tensor({3, 3}), Tensor({3})};
    SeedStream rng(2);
    for (auto& w : p.tensors[0].data) w = rng.uniform(-1, 1);
    p.activations = {Activation::identity};
    const std::vector<double> in{0.3, -0.2, 0.4};
    const auto cache = forward_batch(p, in, 1);
    const auto& u = cache.embeddings[0].direction;
    // An upstream gradient along u changes nothing.
    const std::vector<RealVector> radial{u.vector()};
    const auto g = backward(p, cache, radial);
    for (const auto& t : g)
        for (double v : t) CHECK(std::abs(v) < 1e-15);
    const std::vector<RealVector> zero{RealVector(3, 0.0)};
    for (const auto& t : backward(p, cache, zero))
        for (double v : t) CHECK(v == 0.0);
}

TEST_CASE("results do not depend on the thread count", "[model]") {
    const std::vector<std::size_t> hidden{32, 16};
    const auto p = ModelParams::init(64, hidden, 8, SeedStream(4));
    std::vector<Image> imgs;
    for (int i = 0; i < 37; ++i) imgs.push_back(random_image(8, 8, 100 + i));
    std::vector<double> in;
    for (const auto& img : imgs)
        for (double v : img.pixels) in.push_back(v - 0.5);
    std::vector<RealVector> up;
    SeedStream rng(5);
    for (int i = 0; i < 37; ++i) up.push_back(oracle::random_unit(rng, 8));

    set_thread_count(1);
    const auto c1 = forward_batch(p, in, 37);
    const auto g1 = backward(p, c1, up);
    set_thread_count(4);
    const auto c4 = forward_batch(p, in, 37);
    const auto g4 = backward(p, c4, up);
    set_thread_count(1);
    CHECK(c1.raw == c4.raw);
    CHECK(g1 == g4);
}

TEST_CASE("learning-rate schedules", "[model]") {
    LrSchedule c;
    c.base_lr = 0.3;
    CHECK(c.at(1000) == 0.3);
    LrSchedule poly;
    poly.kind = LrScheduleKind::polynomial;
    poly.base_lr = 0.1;
    poly.total_steps = 100;
    CHECK(poly.at(0) == 0.1);
    CHECK(poly.at(50) == Catch::Approx(0.05));
    CHECK(poly.at(100) == 0.0);
    CHECK(poly.at(200) == 0.0);
    LrSchedule step;
    step.kind = LrScheduleKind::step;
    step.base_lr = 1.0;
    step.milestones = {10, 20};
    CHECK(step.at(9) == 1.0);
    CHECK(step.at(10) == Catch::Approx(0.1));
    CHECK(step.at(25) == Catch::Approx(0.01));
}

TEST_CASE("SGD closed forms", "[model]") {
    OptimizerConfig cfg;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    cfg.lr.base_lr = 0.1;
    OptimizerState opt(cfg);
    std::vector<double> x{2.0};
    const std::vector<double> g{1.0};
    std::vector<ParamSlot> slots{{x, g, 1.0}};
    optimizer_step(opt, slots);
    CHECK(x[0] == Catch::Approx(1.9).epsilon(1e-15));

    cfg.lr.base_lr = 0.0;
    OptimizerState frozen(cfg);
    std::vector<double> y{2.0};
    std::vector<ParamSlot> ys{{y, g, 1.0}};
    optimizer_step(frozen, ys);
    CHECK(y[0] == 2.0);

    // Momentum: v1 = g, v2 = mu g + g.
    cfg.lr.base_lr = 0.1;
    cfg.momentum = 0.9;
    OptimizerState mom(cfg);
    std::vector<double> z{0.0};
    std::vector<ParamSlot> zs{{z, g, 1.0}};
    optimizer_step(mom, zs);
    optimizer_step(mom, zs);
    CHECK(z[0] == Catch::Approx(-0.1 - 0.1 * 1.9).epsilon(1e-15));

    // Decoupled weight decay with zero gradient: x <- x (1 - lr wd).
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.5;
    OptimizerState wd(cfg);
    std::vector<double> w{4.0};
    const std::vector<double> g0{0.0};
    std::vector<ParamSlot> ws{{w, g0, 1.0}};
    optimizer_step(wd, ws);
    CHECK(w[0] == Catch::Approx(4.0 * (1 - 0.05)).epsilon(1e-15));
    std::vector<double> w2{4.0};
    std::vector<ParamSlot> ws2{{w2, g0, 0.0}};
    OptimizerState wd2(cfg);
    optimizer_step(wd2, ws2);
    CHECK(w2[0] == 4.0);
}

TEST_CASE("Adam first step is scale free", "[model]") {
    for (double scale : {1e-3, 1.0, 1e3}) {
        OptimizerConfig cfg;
        cfg.kind = OptimizerKind::adam;
        cfg.weight_decay = 0.0;
        cfg.lr.base_lr = 0.01;
        OptimizerState opt(cfg);
        std::vector<double> x{1.0, 1.0};
        const std::vector<double> g{scale, -scale};
        std::vector<ParamSlot> slots{{x, g, 1.0}};
        optimizer_step(opt, slots);
        // m_hat = g, v_hat = g^2: step = lr g / (|g| + eps).
        CHECK(x[0] == Catch::Approx(1.0 - 0.01 * scale / (scale + 1e-8)).epsilon(1e-14));
        CHECK(x[1] == Catch::Approx(1.0 + 0.01 * scale / (scale + 1e-8)).epsilon(1e-14));
    }
}

TEST_CASE("non-finite gradients abort the step", "[model]") {
    OptimizerState opt;
    std::vector<double> x{1.0, 2.0};
    const std::vector<double> g{0.0, std::nan("")};
    std::vector<ParamSlot> slots{{x, g, 1.0}};
    try {
        optimizer_step(opt, slots);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("element 1") != std::string::npos);
    }
    CHECK(x == std::vector<double>{1.0, 2.0});
}

TEST_CASE("EMA endpoints", "[model]") {
    const auto student = small_net(1);
    auto teacher = small_net(2);
    const auto before = teacher;
    ema_update(teacher, student, 1.0);
    CHECK(teacher == before);
    ema_update(teacher, student, 0.0);
    CHECK(teacher == student);
    CHECK_THROWS(ema_update(teacher, student, 1.5));
}

TEST_CASE("EMA geometric decay law", "[model]") {
    const double beta = 0.999;
    ModelParams student, teacher;
    student.tensors = {Tensor({1}, 0.0)};
    student.activations = {Activation::identity};
    teacher = student;
    teacher.tensors[0].data[0] = 1.0;
    double expect = 1.0;
    for (int t = 1; t <= 5000; ++t) {
        ema_update(teacher, student, beta);
        expect *= beta;
        REQUIRE(std::abs(teacher.tensors[0].data[0]) == expect);
    }
    CHECK(std::abs(teacher.tensors[0].data[0] - std::pow(beta, 5000)) <= 1e-12 * std::pow(beta, 5000));

    student.tensors[0].data[0] = 0.75;
    teacher.tensors[0].data[0] = -1.25;
    for (int t = 1; t <= 3000; ++t) {
        ema_update(teacher, student, beta);
        const double gap = std::abs(teacher.tensors[0].data[0] - 0.75);
        REQUIRE(std::abs(gap - std::pow(beta, t) * 2.0) <= 1e-12 * 2.0);
    }
}
