#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sofar/error.hpp"
#include "sofar/tensor.hpp"

namespace sofar {

// Sign vector packed 64 elements per word: bit = 1 encodes +1, bit = 0
// encodes -1. Pad bits past `n` in the last word are kept zero so popcounts
// over whole words never see them.
struct BitPlane {
    int64_t n = 0;
    std::vector<uint64_t> words;

    static int64_t word_count(int64_t n) { return (n + 63) / 64; }

    void resize(int64_t bits) {
        n = bits;
        words.assign(static_cast<size_t>(word_count(bits)), 0);
    }

    bool get(int64_t i) const { return (words[static_cast<size_t>(i >> 6)] >> (i & 63)) & 1u; }

    void set(int64_t i, bool v) {
        uint64_t& w = words[static_cast<size_t>(i >> 6)];
        uint64_t mask = 1ull << (i & 63);
        w = v ? (w | mask) : (w & ~mask);
    }

    // +1/-1 value of bit i
    float value(int64_t i) const { return get(i) ? 1.0f : -1.0f; }
};

// bit i set iff t[i] >= 0, matching sign(0) = +1 on the float path.
BitPlane pack_signs(std::span<const float> values);
BitPlane pack_signs(const Tensor& t);

// Integer dot product of two +-1 vectors: 2*popcount(XNOR(a,b) over n bits) - n.
int64_t xnor_popcount_dot(const BitPlane& a, const BitPlane& b);

}  // namespace sofar
