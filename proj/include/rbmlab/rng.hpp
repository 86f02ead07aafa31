#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace rbmlab {

// Counter-based generator (Philox4x32-10). A generator is identified by a
// 64-bit key and a 64-bit stream id; the block position within the stream is
// the remaining 64 counter bits. Any (key, stream) pair yields an independent
// sequence, and jumping to an absolute position is O(1), which is what makes
// per-chain and per-epoch substreams reproducible regardless of scheduling.
class Philox {
public:
    Philox() : Philox(0, 0) {}
    Philox(std::uint64_t seed, std::uint64_t stream)
        : key0_(static_cast<std::uint32_t>(seed)),
          key1_(static_cast<std::uint32_t>(seed >> 32)),
          stream_(stream) {}

    // Derives a child generator with the same seed key but a distinct stream
    // id mixed from the parent stream and a label.
    Philox substream(std::uint64_t label) const {
        std::uint64_t seed = (static_cast<std::uint64_t>(key1_) << 32) | key0_;
        return Philox(seed, mix64(stream_ ^ mix64(label)));
    }
    Philox substream(std::string_view name) const {
        std::uint64_t h = 14695981039346656037ull;
        for (char ch : name) {
            h ^= static_cast<unsigned char>(ch);
            h *= 1099511628211ull;
        }
        return substream(h);
    }

    void set_position(std::uint64_t block) {
        pos_ = block;
        have_ = 0;
    }
    std::uint64_t position() const { return pos_; }

    std::uint32_t next_u32() {
        if (have_ == 0) {
            buf_ = block(pos_++);
            have_ = 4;
        }
        return buf_[4 - have_--];
    }

    std::uint64_t next_u64() {
        std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // Uniform double in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    bool bernoulli(double p) { return next_double() < p; }

    // Standard normal via Box-Muller; draws are paired and cached.
    double next_normal() {
        if (has_cached_normal_) {
            has_cached_normal_ = false;
            return cached_normal_;
        }
        double u1 = next_double();
        double u2 = next_double();
        while (u1 == 0.0) u1 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double t = 2.0 * std::numbers::pi * u2;
        cached_normal_ = r * std::sin(t);
        has_cached_normal_ = true;
        return r * std::cos(t);
    }

    // Integer in [0, n) by rejection (no modulo bias).
    std::uint64_t next_below(std::uint64_t n) {
        if (n <= 1) return 0;
        std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t v = next_u64();
            if (v >= threshold) return v % n;
        }
    }

    static std::uint64_t mix64(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

private:
    static std::pair<std::uint32_t, std::uint32_t> mulhilo(std::uint32_t a,
                                                           std::uint32_t b) {
        std::uint64_t p = static_cast<std::uint64_t>(a) * b;
        return {static_cast<std::uint32_t>(p >> 32),
                static_cast<std::uint32_t>(p)};
    }

    std::array<std::uint32_t, 4> block(std::uint64_t pos) const {
        std::uint32_t c0 = static_cast<std::uint32_t>(pos);
        std::uint32_t c1 = static_cast<std::uint32_t>(pos >> 32);
        std::uint32_t c2 = static_cast<std::uint32_t>(stream_);
        std::uint32_t c3 = static_cast<std::uint32_t>(stream_ >> 32);
        std::uint32_t k0 = key0_, k1 = key1_;
        for (int round = 0; round < 10; ++round) {
            auto [hi0, lo0] = mulhilo(0xD2511F53u, c0);
            auto [hi1, lo1] = mulhilo(0xCD9E8D57u, c2);
            std::uint32_t n0 = hi1 ^ c1 ^ k0;
            std::uint32_t n1 = lo1;
            std::uint32_t n2 = hi0 ^ c3 ^ k1;
            std::uint32_t n3 = lo0;
            c0 = n0;
            c1 = n1;
            c2 = n2;
            c3 = n3;
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        return {c0, c1, c2, c3};
    }

    std::uint32_t key0_, key1_;
    std::uint64_t stream_ = 0;
    std::uint64_t pos_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int have_ = 0;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

}  // namespace rbmlab
