#include "mixedq/fit.hpp"

#include <array>
#include <cmath>
#include <cstdlib>

namespace mixedq::fit {

namespace {

// Gaussian elimination with partial pivoting for tiny systems.
std::array<double, 3> solve3(std::array<std::array<double, 4>, 3> m) {
    for (int col = 0; col < 3; ++col) {
        int pivot = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::fabs(m[r][col]) > std::fabs(m[pivot][col])) pivot = r;
        std::swap(m[col], m[pivot]);
        for (int r = 0; r < 3; ++r) {
            if (r == col) continue;
            const double f = m[r][col] / m[col][col];
            for (int k = col; k < 4; ++k) m[r][k] -= f * m[col][k];
        }
    }
    return {m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]};
}

} // namespace

ExpPolyFit fit_exp_poly() {
    // quadratic least squares of exp on [-ln2, 0], then completed-square form
    const int n = 1 << 14;
    const double lo = -std::log(2.0);
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    double y0 = 0, y1 = 0, y2 = 0;
    for (int i = 0; i <= n; ++i) {
        const double r = lo + (0.0 - lo) * (static_cast<double>(i) / n);
        const double y = std::exp(r);
        const double r2 = r * r;
        s0 += 1;
        s1 += r;
        s2 += r2;
        s3 += r2 * r;
        s4 += r2 * r2;
        y0 += y;
        y1 += y * r;
        y2 += y * r2;
    }
    const auto sol = solve3({{{s4, s3, s2, y2}, {s3, s2, s1, y1}, {s2, s1, s0, y0}}});
    const double p2 = sol[0], p1 = sol[1], p0 = sol[2];
    ExpPolyFit f;
    f.a = p2;
    f.b = p1 / (2.0 * p2);
    f.c = p0 - p1 * p1 / (4.0 * p2);
    return f;
}

ErfPolyFit fit_erf_poly() {
    // The saturated form pins the value 1 at |t| = -b. For each candidate b
    // the optimal a is closed-form; the scan covers the saturation interval
    // so the objective also counts the flat tail up to t = 3.
    const int n = 3 << 12;
    const double t_hi = 3.0;
    double best_res = HUGE_VAL, best_a = 0, best_b = 0;
    for (int k = 0; k <= 1280; ++k) {
        const double babs = 1.25 + static_cast<double>(k) / 1024.0;
        double num = 0, den = 0;
        for (int i = 0; i <= n; ++i) {
            const double t = t_hi * static_cast<double>(i) / n;
            const double u = std::min(t, babs) - babs;
            const double phi = u * u;
            num += (std::erf(t) - 1.0) * phi;
            den += phi * phi;
        }
        const double a = num / den;
        double res = 0;
        for (int i = 0; i <= n; ++i) {
            const double t = t_hi * static_cast<double>(i) / n;
            const double u = std::min(t, babs) - babs;
            const double e = a * u * u + 1.0 - std::erf(t);
            res += e * e;
        }
        if (res < best_res) {
            best_res = res;
            best_a = a;
            best_b = -babs;
        }
    }
    ErfPolyFit f;
    f.a = best_a;
    f.b = best_b;
    return f;
}

Exp2MantissaFit fit_exp2_mantissa() {
    // cubic through the origin for 2^u - 1 on [-1, 0]; keeps 2^0 exact
    const int n = 1 << 14;
    double m11 = 0, m12 = 0, m13 = 0, m22 = 0, m23 = 0, m33 = 0;
    double b1 = 0, b2 = 0, b3 = 0;
    for (int i = 0; i <= n; ++i) {
        const double u = -1.0 + static_cast<double>(i) / n;
        const double u2 = u * u, u3 = u2 * u;
        const double y = std::exp2(u) - 1.0;
        m11 += u * u;
        m12 += u * u2;
        m13 += u * u3;
        m22 += u2 * u2;
        m23 += u2 * u3;
        m33 += u3 * u3;
        b1 += y * u;
        b2 += y * u2;
        b3 += y * u3;
    }
    const auto sol = solve3({{{m11, m12, m13, b1}, {m12, m22, m23, b2}, {m13, m23, m33, b3}}});
    Exp2MantissaFit f;
    f.c1 = sol[0];
    f.c2 = sol[1];
    f.c3 = sol[2];
    return f;
}

} // namespace mixedq::fit
