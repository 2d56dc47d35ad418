#pragma once

namespace mixedq::fit {

// Least-squares constants behind the polynomial kernels. Each fit runs on a
// fixed dyadic grid with closed-form normal equations, so repeated runs
// reproduce the committed values bit for bit.

// e^r ~= a*(r + b)^2 + c on (-ln2, 0]
struct ExpPolyFit {
    double a, b, c;
};

// erf(t) ~= sign(t) * (a*(min(|t|, -b) + b)^2 + 1), b < 0
struct ErfPolyFit {
    double a, b;
};

// 2^u ~= 1 + c1*u + c2*u^2 + c3*u^3 on [-1, 0]
struct Exp2MantissaFit {
    double c1, c2, c3;
};

ExpPolyFit fit_exp_poly();
ErfPolyFit fit_erf_poly();
Exp2MantissaFit fit_exp2_mantissa();

} // namespace mixedq::fit
