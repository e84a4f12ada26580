#include "sofar/bitplane.hpp"

#include <bit>

namespace sofar {

BitPlane pack_signs(std::span<const float> values) {
    BitPlane p;
    p.resize(static_cast<int64_t>(values.size()));
    for (int64_t i = 0; i < p.n; ++i)
        if (values[static_cast<size_t>(i)] >= 0.0f)
            p.words[static_cast<size_t>(i >> 6)] |= 1ull << (i & 63);
    return p;
}

BitPlane pack_signs(const Tensor& t) {
    return pack_signs(std::span<const float>(t.data(), static_cast<size_t>(t.numel())));
}

int64_t xnor_popcount_dot(const BitPlane& a, const BitPlane& b) {
    SOFAR_CHECK(a.n == b.n, "xnor_popcount_dot: length mismatch " + std::to_string(a.n) + " vs " +
                                std::to_string(b.n));
    int64_t agree = 0;
    const size_t nw = a.words.size();
    for (size_t i = 0; i < nw; ++i) {
        uint64_t x = ~(a.words[i] ^ b.words[i]);
        if (i + 1 == nw && (a.n & 63))  // mask pad bits of the last word
            x &= (1ull << (a.n & 63)) - 1;
        agree += std::popcount(x);
    }
    return 2 * agree - a.n;
}

}  // namespace sofar
