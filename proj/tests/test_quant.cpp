#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "mixedq/quant.hpp"
#include "mixedq/tensor_io.hpp"

using namespace mixedq;

namespace {

Tensor make(std::vector<double> v) {
    const int64_t n = static_cast<int64_t>(v.size());
    return Tensor(Shape{n}, std::move(v));
}

std::mt19937_64 rng(42);

double uniform(double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

} // namespace

TEST_CASE("tensor invariants") {
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, {1.0, 2.0}), InvalidInputError);
    CHECK_THROWS_AS(Tensor(Shape{2}, {1.0, std::nan("")}), InvalidInputError);
    CHECK_THROWS_AS(Tensor(Shape{0}, {}), InvalidInputError);
    const Tensor t(Shape{2, 3});
    CHECK(t.numel() == 6);
}

TEST_CASE("compute_scale basics") {
    const Scale s = compute_scale(make({-0.3, 0.7, -1.0}), 8);
    CHECK(s.alpha == doctest::Approx(1.0));
    CHECK(s.value == doctest::Approx(2.0 / 255.0));

    const Scale z = compute_scale(make({0.0, 0.0}), 8);
    CHECK(z.alpha == doctest::Approx(1e-8));
    CHECK(z.value == doctest::Approx(2e-8 / 255.0));

    CHECK_THROWS_AS(compute_scale(make({1.0}), 1), InvalidInputError);
    CHECK_THROWS_AS(compute_scale(make({1.0}), 17), InvalidInputError);
}

TEST_CASE("compute_scale property: alpha is the max-abs scan") {
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(64);
        double mx = 0;
        for (auto &x : v) {
            x = uniform(-4, 4);
            mx = std::max(mx, std::fabs(x));
        }
        const Scale s = compute_scale(make(v), 8);
        CHECK(s.alpha == doctest::Approx(mx));
        CHECK(s.value > 0);
        CHECK(s.value <= 8.0 / 255.0 + 1e-12);
    }
}

TEST_CASE("quantize rounding and clipping") {
    const Scale s = Scale::from_alpha(1.0, 8);
    const QTensor q = quantize(make({0.0, 0.5, 1.0, -1.0, 2.0}), s);
    CHECK(q[0] == 0);
    CHECK(q[1] == 64);   // round(63.75)
    CHECK(q[2] == 128);  // round(127.5), half away from zero
    CHECK(q[3] == -128);
    CHECK(q[4] == 128);  // clipped to alpha first
}

TEST_CASE("dequantize and round trip") {
    const Scale s = Scale::from_alpha(1.0, 8);
    const QTensor q = quantize(make({0.5}), s);
    CHECK(dequantize(q)[0] == doctest::Approx(64 * 2.0 / 255.0));

    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> v(256);
        for (auto &x : v) x = uniform(-2, 2);
        const Tensor t = make(v);
        const Scale sc = compute_scale(t, 8);
        const Tensor back = dequantize(quantize(t, sc));
        for (int64_t i = 0; i < t.numel(); ++i)
            CHECK(std::fabs(back[i] - t[i]) <= sc.value / 2 + 1e-12);
    }
}

TEST_CASE("fake_quantize fixed point and monotone error in bits") {
    // grid multiples are exact fixed points once the clip bound is pinned by
    // sentinel elements at +-alpha (the bound itself sits half a step off
    // the grid and rounds outward, the admitted boundary code)
    const Scale s = Scale::from_alpha(1.0, 8);
    std::vector<double> grid = {-1.0, 1.0};
    for (int i = -127; i <= 127; i += 17) grid.push_back(i * s.value);
    Tensor t = make(grid);
    const Tensor fq = fake_quantize(t, 8);
    for (int64_t i = 2; i < t.numel(); ++i) CHECK(fq[i] == doctest::Approx(t[i]).epsilon(1e-9));
    CHECK(std::fabs(fq[0] - t[0]) <= s.value / 2 + 1e-12);
    CHECK(std::fabs(fq[1] - t[1]) <= s.value / 2 + 1e-12);

    // linspace bound: max abs error <= S/2
    std::vector<double> lin(1000);
    for (size_t i = 0; i < lin.size(); ++i) lin[i] = -1.0 + 2.0 * static_cast<double>(i) / 999.0;
    const Tensor tl = make(lin);
    const Tensor f8 = fake_quantize(tl, 8);
    double worst8 = 0, mean2 = 0, mean8 = 0;
    const Tensor f2 = fake_quantize(tl, 2);
    for (int64_t i = 0; i < tl.numel(); ++i) {
        worst8 = std::max(worst8, std::fabs(f8[i] - tl[i]));
        mean2 += std::fabs(f2[i] - tl[i]);
        mean8 += std::fabs(f8[i] - tl[i]);
    }
    CHECK(worst8 <= 1.0 / 255.0 + 1e-12);
    CHECK(mean2 / 1000.0 >= mean8 / 1000.0); // coarser bits, larger mean error
}

TEST_CASE("fake_quantize clipping bound") {
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> v(128);
        for (auto &x : v) x = uniform(-3, 3);
        const Tensor t = make(v);
        const Scale s = compute_scale(t, 8);
        const Tensor f = fake_quantize(t, 8);
        for (int64_t i = 0; i < t.numel(); ++i) CHECK(std::fabs(f[i]) <= s.alpha + s.value / 2 + 1e-12);
    }
}

TEST_CASE("fake_quantize odd symmetry") {
    std::vector<double> v(257);
    for (auto &x : v) x = uniform(-2, 2);
    Tensor t = make(v);
    Tensor neg(t.shape());
    for (int64_t i = 0; i < t.numel(); ++i) neg[i] = -t[i];
    const Tensor a = fake_quantize(t, 8);
    const Tensor b = fake_quantize(neg, 8);
    for (int64_t i = 0; i < t.numel(); ++i) CHECK(a[i] == doctest::Approx(-b[i]).epsilon(1e-12));
}

TEST_CASE("ste_grad masks by the closed clip interval") {
    const Scale s = Scale::from_alpha(1.0, 8);
    const Tensor up = make({2.0, 3.0, 4.0, 5.0, 6.0});
    const Tensor r = make({0.0, 0.999, 1.0, -1.0, 2.0});
    const Tensor g = ste_grad(up, r, s);
    CHECK(g[0] == 2.0);
    CHECK(g[1] == 3.0);
    CHECK(g[2] == 4.0);  // boundary inclusive
    CHECK(g[3] == 5.0);  // boundary inclusive
    CHECK(g[4] == 0.0);  // 2*alpha outside

    CHECK_THROWS_AS(ste_grad(make({1.0}), make({1.0, 2.0}), s), InvalidInputError);
}

TEST_CASE("dyadic_approx canonical examples") {
    const DyadicScale h = dyadic_approx(0.5, 16);
    CHECK(h.b == 1);
    CHECK(h.c == 1);
    const DyadicScale one = dyadic_approx(1.0, 16);
    CHECK(one.b == 1);
    CHECK(one.c == 0);
    const DyadicScale third = dyadic_approx(1.0 / 3.0, 16);
    CHECK(third.b == 21845);
    CHECK(third.c == 16);
}

TEST_CASE("dyadic_approx error bound vs exhaustive scan oracle") {
    // oracle: best rounded b over every candidate shift within the budget
    auto oracle_best_err = [](double target, int pb) {
        double best = 1e300;
        for (int c = 0; c <= 64; ++c) {
            const double b = std::floor(target * std::ldexp(1.0, c) + 0.5);
            if (b < 1 || b > std::ldexp(1.0, pb - 1)) continue;
            best = std::min(best, std::fabs(b * std::ldexp(1.0, -c) - target) / target);
        }
        return best;
    };
    for (int trial = 0; trial < 200; ++trial) {
        const double target = std::exp(uniform(-8, 8));
        for (int pb : {8, 12, 16, 24}) {
            const DyadicScale d = dyadic_approx(target, pb);
            const double rel = std::fabs(d.as_real() - target) / target;
            CHECK(rel <= std::ldexp(1.0, -(pb - 1)) + 1e-15);
            CHECK(rel <= oracle_best_err(target, pb) + std::ldexp(1.0, -(pb - 1)));
            CHECK((d.c == 0 || (d.b & 1) == 1)); // odd unless the scale is a pure power of two
        }
    }
}

TEST_CASE("requantize identity and halving") {
    const Scale s8 = Scale::from_alpha(1.0, 8);
    const QTensor q = quantize(make({0.25, -0.5, 0.75, 1.0}), s8);
    const QTensor same = requantize(q, s8, 16);
    for (int64_t i = 0; i < q.numel(); ++i) CHECK(same[i] == q[i]);

    // doubling the scale halves every value with rounding
    const Scale s2 = Scale::from_value(s8.value * 2.0, 16);
    const QTensor half = requantize(q, s2, 16);
    for (int64_t i = 0; i < q.numel(); ++i) {
        const int64_t expect = llround(static_cast<double>(q[i]) / 2.0);
        CHECK(half[i] == expect);
    }
}

TEST_CASE("requantize matches real-arithmetic rescale within 1 unit") {
    int checked = 0;
    for (int trial = 0; trial < 100000; ++trial) {
        const int32_t v = static_cast<int32_t>(rng() % 257) - 128;
        const double ratio = std::exp(uniform(std::log(0.1), std::log(10.0)));
        const Scale s_old = Scale::from_value(0.01, 16);
        const Scale s_new = Scale::from_value(0.01 / ratio, 16);
        const QTensor q(Shape{1}, {v}, s_old);
        const QTensor r = requantize(q, s_new, 16);
        const double oracle = static_cast<double>(v) * ratio;
        CHECK(std::fabs(r[0] - oracle) <= 1.0);
        ++checked;
    }
    CHECK(checked == 100000);
}

TEST_CASE("requantize overflow detection") {
    const Scale s = Scale::from_value(1.0, 31);
    const QTensor q(Shape{1}, {1 << 30}, s);
    // enormous upscale ratio forces the 64-bit product over the limit
    const Scale tiny = Scale::from_value(std::ldexp(1.0, -40), 31);
    CHECK_THROWS_AS(requantize(q, tiny, 31), OverflowError);
}

TEST_CASE("tensor file format round trip") {
    std::vector<double> v(24);
    for (auto &x : v) x = static_cast<float>(uniform(-5, 5)); // f32-representable
    const Tensor t(Shape{2, 3, 4}, std::vector<double>(v));
    std::stringstream ss;
    write_tensor(ss, t);
    const std::string bytes = ss.str();
    CHECK(bytes.substr(0, 4) == "MXQT");

    std::stringstream in(bytes);
    const Tensor u = read_tensor(in);
    CHECK(u.shape() == t.shape());
    for (int64_t i = 0; i < t.numel(); ++i) CHECK(u[i] == t[i]);
}

TEST_CASE("tensor file format rejects corrupt input") {
    std::stringstream bad("XXXX garbage");
    CHECK_THROWS_AS(read_tensor(bad), FileParseError);

    // truncated payload
    const Tensor t(Shape{4}, {1, 2, 3, 4});
    std::stringstream ss;
    write_tensor(ss, t);
    std::stringstream cut(ss.str().substr(0, 12));
    CHECK_THROWS_AS(read_tensor(cut), FileParseError);
}
