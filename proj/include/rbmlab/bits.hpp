#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <vector>

namespace rbmlab {

// States over up to 64 binary units are packed little-endian: unit i lives in
// bit i of a std::uint64_t.
using state_t = std::uint64_t;

inline int get_bit(state_t s, int i) {
    return static_cast<int>((s >> i) & 1u);
}

inline state_t set_bit(state_t s, int i, int v) {
    return v ? (s | (state_t{1} << i)) : (s & ~(state_t{1} << i));
}

inline state_t flip_bit(state_t s, int i) { return s ^ (state_t{1} << i); }

inline int popcount(state_t s) { return std::popcount(s); }

inline state_t mask_of(int n) {
    return n >= 64 ? ~state_t{0} : (state_t{1} << n) - 1;
}

inline int hamming(state_t a, state_t b) { return std::popcount(a ^ b); }

// Reverses the low n bits of s (bit 0 <-> bit n-1).
inline state_t reverse_bits(state_t s, int n) {
    state_t r = 0;
    for (int i = 0; i < n; ++i) r = (r << 1) | ((s >> i) & 1u);
    return r;
}

// String form "0110..." with unit 0 first.
inline std::string state_string(state_t s, int n) {
    std::string out(static_cast<std::size_t>(n), '0');
    for (int i = 0; i < n; ++i)
        if (get_bit(s, i)) out[static_cast<std::size_t>(i)] = '1';
    return out;
}

inline state_t parse_state(const std::string& str) {
    state_t s = 0;
    for (std::size_t i = 0; i < str.size(); ++i)
        if (str[i] == '1') s |= state_t{1} << i;
    return s;
}

// Gray code of k, and the index of the bit that changes between successive
// Gray codes (used by enumeration loops that update an O(n) partial sum with
// an O(1) delta per visited state).
inline state_t gray_code(state_t k) { return k ^ (k >> 1); }

inline int gray_flip_index(state_t k) {
    // Between gray_code(k-1) and gray_code(k) the changed bit is the number
    // of trailing zeros of k.
    return std::countr_zero(k);
}

inline std::vector<int> bit_indices(state_t s) {
    std::vector<int> idx;
    while (s) {
        idx.push_back(std::countr_zero(s));
        s &= s - 1;
    }
    return idx;
}

}  // namespace rbmlab
