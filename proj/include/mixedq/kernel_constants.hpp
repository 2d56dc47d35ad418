#pragma once

// Frozen least-squares constants. Generated by the fit_constants tool;
// regenerate with `fit_constants --header` and keep data/kernel_constants.txt
// in sync. Do not edit by hand.

namespace mixedq::constants {

// e^r ~= a*(r+b)^2 + c on (-ln2, 0]
inline constexpr double kIexpA = 0.3565972200671626;
inline constexpr double kIexpB = 1.3499992923021398;
inline constexpr double kIexpC = 0.34802557912569221;

// erf(t) ~= sign(t)*(a*(min(|t|,-b)+b)^2 + 1)
inline constexpr double kIerfA = -0.35707002381283581;
inline constexpr double kIerfB = -1.6689453125;

// 2^u ~= 1 + c1*u + c2*u^2 + c3*u^3 on [-1, 0]
inline constexpr double kExp2C1 = 0.69183714168930865;
inline constexpr double kExp2C2 = 0.23211605376003674;
inline constexpr double kExp2C3 = 0.040398295872765527;

} // namespace mixedq::constants
