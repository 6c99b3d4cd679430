#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "affordkit/icrf.hpp"
#include "affordkit/synth.hpp"
#include "oracles.hpp"

using namespace affordkit;
using namespace affordkit::icrf;

namespace {

double max_abs_diff(const ScalarField& a, const ScalarField& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double model_mse(const Architecture& arch, const std::vector<double>& params, const std::vector<FlowSample>& batch) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& b : batch) {
        for (int y = 0; y < b.x_t.height(); ++y) {
            for (int x = 0; x < b.x_t.width(); ++x) {
                const double r = oracle::naive_mlp_pixel(arch, params, b.v_tau, b.x_t, b.t, b.tau, x, y) - b.a_gt(x, y);
                s += r * r;
                ++n;
            }
        }
    }
    return s / static_cast<double>(n);
}

std::vector<FlowSample> random_batch(int w, int h, std::uint64_t seed, int count) {
    std::vector<FlowSample> out;
    affordkit::Rng rng(seed);
    for (int i = 0; i < count; ++i) {
        const auto x0 = oracle::random_field(w, h, seed * 10 + i);
        const auto x1 = oracle::random_field(w, h, seed * 10 + i + 5);
        const auto v0 = oracle::random_field(w, h, seed * 10 + i + 7, -0.5, 0.5);
        out.push_back(make_sample(x0, x1, rng.uniform(), rng.uniform(), v0));
    }
    return out;
}

ScalarField blob(int n, double cx, double cy, double sigma) {
    ScalarField f(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) f(x, y) = std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * sigma * sigma));
    return f;
}

}  // namespace

TEST_CASE("interpolants") {
    const ScalarField a(1, 1, 0.0);
    const ScalarField b(1, 1, 2.0);
    CHECK(interpolate_state(a, b, 0.25)[0] == 0.5);
    const auto x0 = oracle::random_field(5, 4, 1);
    const auto x1 = oracle::random_field(5, 4, 2);
    const auto v0 = oracle::random_field(5, 4, 3, -1, 1);
    CHECK(interpolate_state(x0, x1, 0.0) == x0);
    CHECK(interpolate_state(x0, x1, 1.0) == x1);
    CHECK(interpolate_velocity(v0, x0, x1, 0.0) == v0);
    CHECK(interpolate_velocity(v0, x0, x1, 1.0) == x1 - x0);
    CHECK(interpolate_velocity(ScalarField(1, 1), ScalarField(1, 1), ScalarField(1, 1, 4.0), 0.5)[0] == 2.0);
    CHECK(max_abs_diff(acceleration_target(x0, x1, x1 - x0), ScalarField(5, 4)) == 0.0);
    CHECK(acceleration_target(x0, x1, ScalarField(5, 4)) == x1 - x0);

    auto code = [](auto f) {
        try {
            f();
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::Io;
    };
    CHECK(code([&] { interpolate_state(x0, x1, 1.5); }) == ErrorCode::TimeOutOfRange);
    CHECK(code([&] { interpolate_velocity(v0, x0, x1, -0.1); }) == ErrorCode::TimeOutOfRange);
    CHECK(code([&] { interpolate_state(x0, ScalarField(4, 5), 0.5); }) == ErrorCode::DimensionMismatch);
    CHECK(code([&] { acceleration_target(x0, x1, ScalarField(1, 1)); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("flow sample identities over seeds") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        affordkit::Rng rng(seed);
        const auto x0 = oracle::random_field(6, 5, seed + 1);
        const auto x1 = oracle::random_field(6, 5, seed + 2);
        const auto v0 = oracle::random_field(6, 5, seed + 3, -1, 1);
        const double t = rng.uniform();
        const double tau = rng.uniform();
        const auto s = make_sample(x0, x1, t, tau, v0);
        for (std::size_t i = 0; i < x0.size(); ++i) {
            CHECK(std::abs(s.x_t[i] - ((1 - t) * x0[i] + t * x1[i])) <= 1e-12);
            CHECK(std::abs(s.v_tau[i] - ((1 - tau) * v0[i] + tau * (x1[i] - x0[i]))) <= 1e-12);
            CHECK(std::abs(s.a_gt[i] - ((x1[i] - x0[i]) - v0[i])) <= 1e-12);
        }
    }
}

TEST_CASE("acceleration_target is the tau derivative of the velocity path") {
    const auto x0 = oracle::random_field(6, 6, 41);
    const auto x1 = oracle::random_field(6, 6, 42);
    const auto v0 = oracle::random_field(6, 6, 43, -1, 1);
    const double h = 1e-4;
    const auto a = acceleration_target(x0, x1, v0);
    for (double tau : {0.1, 0.37, 0.5, 0.9}) {
        const auto up = interpolate_velocity(v0, x0, x1, tau + h);
        const auto down = interpolate_velocity(v0, x0, x1, tau - h);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs((up[i] - down[i]) / (2 * h) - a[i]) <= 1e-6);
    }
}

TEST_CASE("architecture bookkeeping") {
    Architecture arch;
    CHECK(arch.input_dim() == 2 * 9 + 4);
    CHECK(arch.parameter_count() == static_cast<std::size_t>(22 * 64 + 64 + 64 * 64 + 64 + 64));
    CHECK_THROWS_AS(AccelerationModel(arch, std::vector<double>(10)), Error);
}

TEST_CASE("model forward") {
    Architecture arch;
    const auto x = oracle::random_field(5, 4, 1);
    const auto v = oracle::random_field(5, 4, 2, -1, 1);
    const AccelerationModel zero(arch, std::vector<double>(arch.parameter_count(), 0.0));
    CHECK(zero.forward(v, x, 0.3, 0.6) == ScalarField(5, 4));

    const AccelerationModel m(arch, 43);
    CHECK(m.forward(v, x, 0.3, 0.6) == m.forward(v, x, 0.3, 0.6));
    CHECK_THROWS_AS(m.forward(v, ScalarField(4, 5), 0.3, 0.6), Error);

    // Hand-computed 1x1, r = 0, two hidden tanh units.
    Architecture tiny{0, {2}, Activation::Tanh};
    CHECK(tiny.input_dim() == 6);
    // Features: x, v, cx = 0.5, cy = 0.5, t, tau.
    std::vector<double> p = {0.1, -0.2, 0.3, 0.0, 0.5, -0.4,   // W row 0
                             -0.3, 0.2, 0.0, 0.1, 0.2, 0.6,    // W row 1
                             0.05, -0.1,                       // biases
                             1.5, -0.7};                       // output row
    const AccelerationModel tm(tiny, p);
    const double xv = 0.8, vv = -0.5, t = 0.25, tau = 0.75;
    const double h0 = std::tanh(0.1 * xv - 0.2 * vv + 0.3 * 0.5 + 0.0 * 0.5 + 0.5 * t - 0.4 * tau + 0.05);
    const double h1 = std::tanh(-0.3 * xv + 0.2 * vv + 0.0 * 0.5 + 0.1 * 0.5 + 0.2 * t + 0.6 * tau - 0.1);
    const auto out = tm.forward(ScalarField(1, 1, vv), ScalarField(1, 1, xv), t, tau);
    CHECK(out[0] == doctest::Approx(1.5 * h0 - 0.7 * h1).epsilon(1e-14));
}

TEST_CASE("model forward matches the scalar reference") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        for (Activation act : {Activation::Tanh, Activation::Relu}) {
            Architecture arch{static_cast<int>(seed % 3), {7, 5}, act};
            const AccelerationModel m(arch, seed);
            const auto x = oracle::random_field(6, 5, seed + 1);
            const auto v = oracle::random_field(6, 5, seed + 2, -1, 1);
            const auto out = m.forward(v, x, 0.2, 0.7);
            for (int y = 0; y < 5; ++y)
                for (int xx = 0; xx < 6; ++xx)
                    CHECK(out(xx, y) ==
                          doctest::Approx(oracle::naive_mlp_pixel(arch, m.parameters(), v, x, 0.2, 0.7, xx, y))
                              .epsilon(1e-12));
        }
    }
}

TEST_CASE("model backward") {
    Architecture tiny{0, {2}, Activation::Tanh};
    const AccelerationModel m(tiny, 5);
    const auto batch = random_batch(1, 1, 5, 3);
    const auto grad = model_backward(m, batch);
    const auto fd = oracle::central_diff([&](const auto& p) { return model_mse(tiny, p, batch); }, m.parameters(), 1e-5);
    CHECK(oracle::max_rel_error(grad, fd) < 1e-4);

    // Perfect predictions give a zero gradient.
    auto perfect = batch;
    for (auto& s : perfect) s.a_gt = m.forward(s.v_tau, s.x_t, s.t, s.tau);
    for (double g : model_backward(m, perfect)) CHECK(g == 0.0);

    // Doubling the residual doubles the output-layer gradient.
    auto doubled = batch;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto pred = m.forward(batch[i].v_tau, batch[i].x_t, batch[i].t, batch[i].tau);
        doubled[i].a_gt = pred - 2.0 * (pred - batch[i].a_gt);
    }
    const auto g2 = model_backward(m, doubled);
    const std::size_t out_start = m.parameters().size() - 2;
    for (std::size_t i = out_start; i < g2.size(); ++i) CHECK(g2[i] == doctest::Approx(2.0 * grad[i]).epsilon(1e-12));
}

TEST_CASE("model backward on a patch model") {
    Architecture arch{1, {4, 3}, Activation::Tanh};
    const AccelerationModel m(arch, 9);
    const auto batch = random_batch(4, 3, 9, 2);
    const auto [loss, grad] = m.loss_and_gradient(batch);
    CHECK(loss == doctest::Approx(model_mse(arch, m.parameters(), batch)).epsilon(1e-12));
    const auto fd = oracle::central_diff([&](const auto& p) { return model_mse(arch, p, batch); }, m.parameters(), 1e-5);
    CHECK(oracle::max_rel_error(grad, fd) < 1e-4);
}

TEST_CASE("model serialization round trip") {
    Architecture arch{1, {6, 4}, Activation::Relu};
    const AccelerationModel m(arch, 12);
    const auto back = AccelerationModel::deserialize(m.serialize());
    CHECK(back.architecture() == arch);
    CHECK(back.parameters() == m.parameters());
    CHECK(m.serialize().rfind("ICRF1\n", 0) == 0);
    const auto path = std::filesystem::temp_directory_path() / "affordkit_test_model.icrf";
    m.save(path);
    CHECK(AccelerationModel::load(path).parameters() == m.parameters());
    std::filesystem::remove(path);
    CHECK_THROWS_AS(AccelerationModel::deserialize("ICRF2\n"), Error);
}

TEST_CASE("learning rate schedule") {
    TrainConfig c;
    c.steps = 100;
    c.learning_rate = 1e-2;
    CHECK(learning_rate_at(c, 0) < learning_rate_at(c, 4));
    CHECK(learning_rate_at(c, 5) == doctest::Approx(1e-2));
    CHECK(learning_rate_at(c, 99) == doctest::Approx(1e-2 * c.min_lr_fraction));
    for (int s = 6; s < 100; ++s) CHECK(learning_rate_at(c, s) <= learning_rate_at(c, s - 1));
}

TEST_CASE("training on identical pairs learns the zero map") {
    std::vector<std::pair<ScalarField, ScalarField>> pairs;
    for (std::uint64_t s = 0; s < 3; ++s) {
        const auto f = oracle::random_field(8, 8, s);
        pairs.emplace_back(f, f);
    }
    TrainConfig c;
    c.steps = 3000;
    c.batch_pairs = 2;
    c.architecture.hidden = {16, 16};
    c.v0_prior = VelocityPrior::zero();
    c.learning_rate = 3e-2;
    c.min_lr_fraction = 0.01;
    const auto r = train(pairs, c);
    CHECK(r.loss_curve.size() == 3000);
    CHECK(r.loss_curve.back() < 1e-4);
}

TEST_CASE("training reduces the loss on a single blob pair") {
    ScalarField x0 = blob(16, 5, 6, 1.2) + blob(16, 9, 10, 1.2);
    x0 *= 0.5;
    const ScalarField x1 = blob(16, 7, 8, 2.0);
    TrainConfig c;
    c.steps = 5000;
    c.batch_pairs = 1;
    c.v0_prior = VelocityPrior::zero();
    c.seed = 47;
    const auto r = train({{x0, x1}}, c);
    const auto& curve = r.loss_curve;
    const double tail = std::accumulate(curve.end() - 100, curve.end(), 0.0) / 100.0;
    CHECK(tail <= 0.1 * curve.front());
}

TEST_CASE("training is deterministic") {
    std::vector<std::pair<ScalarField, ScalarField>> pairs = {{oracle::random_field(6, 6, 1), oracle::random_field(6, 6, 2)}};
    TrainConfig c;
    c.steps = 30;
    c.architecture.hidden = {8};
    c.seed = 99;
    const auto a = train(pairs, c);
    const auto b = train(pairs, c);
    CHECK(a.loss_curve == b.loss_curve);
    CHECK(a.model.parameters() == b.model.parameters());
    CHECK_THROWS_AS(train({}, c), Error);
}

TEST_CASE("refine with frozen fields") {
    const auto x0 = oracle::random_field(6, 5, 50);
    const auto a = oracle::random_field(6, 5, 51, -0.3, 0.3);
    for (int nt : {1, 3, 10}) {
        for (int ntau : {1, 4, 10}) {
            RefineConfig cfg{nt, ntau, VelocityPrior::zero()};
            const auto constant = refine_unclamped([&](const auto&, double, const auto&, double) { return a; }, x0, cfg, 0);
            CHECK(max_abs_diff(constant, x0 + a) < 1e-12);
            const auto still = refine_unclamped(
                [&](const auto& v, double, const auto&, double) { return ScalarField(v.width(), v.height()); }, x0, cfg, 0);
            CHECK(still == x0);
        }
    }
    const AccelerationModel zero(Architecture{}, std::vector<double>(Architecture{}.parameter_count(), 0.0));
    CHECK(refine_unclamped(zero, x0, {}, 0) == x0);
    const auto clamped = refine([&](const auto&, double, const auto&, double) { return ScalarField(6, 5, 5.0); }, x0, {}, 0);
    CHECK(clamped == ScalarField(6, 5, 1.0));
}

TEST_CASE("refine reports non-finite state") {
    const auto x0 = oracle::random_field(3, 3, 1);
    try {
        refine_unclamped([](const auto& v, double, const auto&, double) { return v * 1e300 + ScalarField(3, 3, 1e300); },
                         x0, {2, 4, VelocityPrior::zero()}, 0);
        FAIL("expected NonFiniteState");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonFiniteState);
    }
}

TEST_CASE("extract_points") {
    ScalarField one(8, 8);
    one(3, 5) = 1.0;
    const auto p = extract_points(one, 1, 0.5);
    REQUIRE(p.size() == 1);
    CHECK(p[0].x == 3.0);
    CHECK(p[0].y == 5.0);
    CHECK(p[0].mass == 1.0);

    const ScalarField two = blob(16, 4, 4, 1.5) + blob(16, 12, 12, 1.5);
    const auto q = extract_points(two, 2, 0.5);
    REQUIRE(q.size() == 2);
    std::vector<std::pair<double, double>> centers = {{4, 4}, {12, 12}};
    for (const auto& c : centers) {
        double best = 1e9;
        for (const auto& e : q) best = std::min(best, std::hypot(e.x - c.first, e.y - c.second));
        CHECK(best < 0.5);
    }
    CHECK(extract_points(two, 1, 0.5).size() == 1);
    CHECK_THROWS_AS(extract_points(ScalarField(4, 4), 1, 0.5), Error);
}

TEST_CASE("extract_points recovers synthetic targets from x1") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        synth::SyntheticPairConfig c;
        c.n_targets = 1 + static_cast<int>(seed % 2);
        c.seed = seed;
        const auto pair = synth::gen_pair(c);
        const auto pts = extract_points(pair.x1, c.n_targets, 0.9);
        REQUIRE(pts.size() == pair.gt_points.size());
        for (const auto& g : pair.gt_points) {
            double best = 1e9;
            for (const auto& e : pts) best = std::min(best, std::hypot(e.x - g.x, e.y - g.y));
            CHECK(best <= 1.0);
        }
    }
}
