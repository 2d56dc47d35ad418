// Regenerates the frozen kernel constants. Writes the plain-text constants
// file and, with --header, the C++ header that the kernels compile against.
// Both artifacts are committed; the test suite re-runs the fits and checks
// all three agree bit-exactly.

#include <cstdio>
#include <cstring>
#include <string>

#include "mixedq/fit.hpp"

int main(int argc, char **argv) {
    const bool header = argc > 1 && std::strcmp(argv[1], "--header") == 0;

    const auto e = mixedq::fit::fit_exp_poly();
    const auto g = mixedq::fit::fit_erf_poly();
    const auto m = mixedq::fit::fit_exp2_mantissa();

    if (header) {
        std::printf("#pragma once\n\n");
        std::printf("// Frozen least-squares constants. Generated by the fit_constants tool;\n");
        std::printf("// regenerate with `fit_constants --header` and keep data/kernel_constants.txt\n");
        std::printf("// in sync. Do not edit by hand.\n\n");
        std::printf("namespace mixedq::constants {\n\n");
        std::printf("// e^r ~= a*(r+b)^2 + c on (-ln2, 0]\n");
        std::printf("inline constexpr double kIexpA = %.17g;\n", e.a);
        std::printf("inline constexpr double kIexpB = %.17g;\n", e.b);
        std::printf("inline constexpr double kIexpC = %.17g;\n\n", e.c);
        std::printf("// erf(t) ~= sign(t)*(a*(min(|t|,-b)+b)^2 + 1)\n");
        std::printf("inline constexpr double kIerfA = %.17g;\n", g.a);
        std::printf("inline constexpr double kIerfB = %.17g;\n\n", g.b);
        std::printf("// 2^u ~= 1 + c1*u + c2*u^2 + c3*u^3 on [-1, 0]\n");
        std::printf("inline constexpr double kExp2C1 = %.17g;\n", m.c1);
        std::printf("inline constexpr double kExp2C2 = %.17g;\n", m.c2);
        std::printf("inline constexpr double kExp2C3 = %.17g;\n\n", m.c3);
        std::printf("} // namespace mixedq::constants\n");
    } else {
        std::printf("iexp_a = %.17g\n", e.a);
        std::printf("iexp_b = %.17g\n", e.b);
        std::printf("iexp_c = %.17g\n", e.c);
        std::printf("ierf_a = %.17g\n", g.a);
        std::printf("ierf_b = %.17g\n", g.b);
        std::printf("exp2_c1 = %.17g\n", m.c1);
        std::printf("exp2_c2 = %.17g\n", m.c2);
        std::printf("exp2_c3 = %.17g\n", m.c3);
    }
    return 0;
}
