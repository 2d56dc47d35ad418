#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mixedq {

// Minimal nonnegative big integer, base 1e9 limbs. Just enough for exact
// search-space products.
class BigUint {
public:
    BigUint() : limbs_{0} {}
    explicit BigUint(uint64_t v) {
        if (v == 0) limbs_.push_back(0);
        while (v > 0) {
            limbs_.push_back(static_cast<uint32_t>(v % kBase));
            v /= kBase;
        }
    }

    BigUint &mul_small(uint64_t m) {
        uint64_t carry = 0;
        for (auto &l : limbs_) {
            const uint64_t cur = static_cast<uint64_t>(l) * m + carry;
            l = static_cast<uint32_t>(cur % kBase);
            carry = cur / kBase;
        }
        while (carry > 0) {
            limbs_.push_back(static_cast<uint32_t>(carry % kBase));
            carry /= kBase;
        }
        return *this;
    }

    std::string to_string() const {
        std::string s = std::to_string(limbs_.back());
        for (auto it = limbs_.rbegin() + 1; it != limbs_.rend(); ++it) {
            std::string part = std::to_string(*it);
            s += std::string(9 - part.size(), '0') + part;
        }
        return s;
    }

private:
    static constexpr uint64_t kBase = 1000000000ull;
    std::vector<uint32_t> limbs_;
};

inline BigUint big_pow(uint64_t base, uint64_t exp) {
    BigUint r(1);
    for (uint64_t i = 0; i < exp; ++i) r.mul_small(base);
    return r;
}

} // namespace mixedq
