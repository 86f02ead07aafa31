#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "rbmlab/bits.hpp"
#include "rbmlab/common.hpp"
#include "rbmlab/distribution.hpp"

namespace rbmlab {

// A multiset of binary visible configurations (training data, test data, or
// model samples).
struct SampleSet {
    int m = 0;
    std::vector<state_t> states;

    std::size_t size() const { return states.size(); }
    bool empty() const { return states.empty(); }
};

inline std::vector<double> visible_means(const SampleSet& s) {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(s.m), 0);
    for (state_t x : s.states) {
        state_t rest = x;
        while (rest) {
            counts[static_cast<std::size_t>(std::countr_zero(rest))]++;
            rest &= rest - 1;
        }
    }
    std::vector<double> mu(static_cast<std::size_t>(s.m));
    double n = static_cast<double>(s.states.size());
    for (int i = 0; i < s.m; ++i)
        mu[static_cast<std::size_t>(i)] =
            static_cast<double>(counts[static_cast<std::size_t>(i)]) / n;
    return mu;
}

// Empirical distribution p~(x; S) = (1/|S|) sum_s delta(x, x_s).
inline TabulatedDistribution empirical_distribution(const SampleSet& s) {
    std::map<state_t, std::uint64_t> counts;
    for (state_t x : s.states) counts[x]++;
    std::vector<std::pair<state_t, double>> table;
    table.reserve(counts.size());
    double n = static_cast<double>(s.states.size());
    for (const auto& [x, c] : counts)
        table.emplace_back(x, static_cast<double>(c) / n);
    return TabulatedDistribution(s.m, std::move(table));
}

// ---------------------------------------------------------------------------
// Wide samples (more than 64 units per configuration)
// ---------------------------------------------------------------------------
// Rows are packed little-endian into ceil(m/64) words: unit i lives in word
// i/64, bit i%64, matching the state_t convention for the first word.

struct WideSampleSet {
    int m = 0;
    int words = 0;
    std::size_t count = 0;
    std::vector<std::uint64_t> data;  // count * words, row-major

    static WideSampleSet create(int m, std::size_t count) {
        WideSampleSet s;
        s.m = m;
        s.words = (m + 63) / 64;
        s.count = count;
        s.data.assign(count * static_cast<std::size_t>(s.words), 0);
        return s;
    }

    static WideSampleSet from(const SampleSet& narrow) {
        WideSampleSet s = create(narrow.m, narrow.size());
        for (std::size_t k = 0; k < narrow.size(); ++k)
            s.data[k] = narrow.states[k];
        return s;
    }

    std::size_t size() const { return count; }
    bool empty() const { return count == 0; }

    const std::uint64_t* row(std::size_t k) const {
        return data.data() + k * static_cast<std::size_t>(words);
    }
    std::uint64_t* row(std::size_t k) {
        return data.data() + k * static_cast<std::size_t>(words);
    }

    bool get(std::size_t k, int i) const {
        return (row(k)[static_cast<std::size_t>(i) / 64] >>
                (static_cast<std::size_t>(i) % 64)) &
               1u;
    }
    void set(std::size_t k, int i, bool v) {
        std::uint64_t mask = std::uint64_t{1} << (static_cast<std::size_t>(i) %
                                                  64);
        if (v)
            row(k)[static_cast<std::size_t>(i) / 64] |= mask;
        else
            row(k)[static_cast<std::size_t>(i) / 64] &= ~mask;
    }
};

inline int hamming_rows(const std::uint64_t* a, const std::uint64_t* b,
                        int words) {
    int d = 0;
    for (int w = 0; w < words; ++w)
        d += std::popcount(a[w] ^ b[w]);
    return d;
}

inline std::vector<double> visible_means(const WideSampleSet& s) {
    std::vector<std::int64_t> counts(static_cast<std::size_t>(s.m), 0);
    for (std::size_t k = 0; k < s.count; ++k) {
        const std::uint64_t* r = s.row(k);
        for (int w = 0; w < s.words; ++w) {
            std::uint64_t rest = r[w];
            while (rest) {
                int bit = std::countr_zero(rest);
                rest &= rest - 1;
                std::size_t i = static_cast<std::size_t>(w) * 64 +
                                static_cast<std::size_t>(bit);
                if (i < counts.size()) counts[i]++;
            }
        }
    }
    std::vector<double> mu(static_cast<std::size_t>(s.m));
    double n = static_cast<double>(s.count);
    for (std::size_t i = 0; i < mu.size(); ++i)
        mu[i] = static_cast<double>(counts[i]) / n;
    return mu;
}

namespace detail {

// Indices of the rows sorted lexicographically by content; equal rows end up
// adjacent, which makes multiplicity counting a single linear walk.
inline std::vector<std::uint32_t> sorted_row_order(const WideSampleSet& s) {
    std::vector<std::uint32_t> order(s.count);
    for (std::size_t k = 0; k < s.count; ++k)
        order[k] = static_cast<std::uint32_t>(k);
    const int words = s.words;
    std::sort(order.begin(), order.end(),
              [&](std::uint32_t x, std::uint32_t y) {
                  const std::uint64_t* rx = s.row(x);
                  const std::uint64_t* ry = s.row(y);
                  for (int w = 0; w < words; ++w)
                      if (rx[w] != ry[w]) return rx[w] < ry[w];
                  return false;
              });
    return order;
}

inline bool rows_equal(const WideSampleSet& s, std::uint32_t x,
                       std::uint32_t y) {
    const std::uint64_t* rx = s.row(x);
    const std::uint64_t* ry = s.row(y);
    for (int w = 0; w < s.words; ++w)
        if (rx[w] != ry[w]) return false;
    return true;
}

}  // namespace detail

// Shannon entropy (nats) of the empirical distribution of the rows.
inline double empirical_entropy(const WideSampleSet& s) {
    if (s.count == 0) return 0.0;
    std::vector<std::uint32_t> order = detail::sorted_row_order(s);
    KahanSum clogc;
    std::size_t run = 1;
    for (std::size_t k = 1; k <= order.size(); ++k) {
        if (k < order.size() && detail::rows_equal(s, order[k - 1], order[k])) {
            run++;
            continue;
        }
        double c = static_cast<double>(run);
        clogc.add(c * std::log(c));
        run = 1;
    }
    double n = static_cast<double>(s.count);
    return std::log(n) - clogc.value() / n;
}

// Total correlation of the empirical distribution: sum of marginal binary
// entropies minus the joint empirical entropy.
inline double empirical_total_correlation(const WideSampleSet& s) {
    double c = -empirical_entropy(s);
    KahanSum hb;
    for (double mu : visible_means(s)) hb.add(binary_entropy(mu));
    return c + hb.value();
}

inline SampleSet sample_from(const TabulatedDistribution& dist,
                             std::size_t count, Philox& rng) {
    // Inverse-CDF over the sorted support; the table is walked once per draw
    // via binary search on a precomputed cumulative.
    const auto& table = dist.table();
    std::vector<double> cdf(table.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < table.size(); ++i) {
        acc += table[i].second;
        cdf[i] = acc;
    }
    SampleSet out;
    out.m = dist.num_units();
    out.states.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        double u = rng.next_double() * acc;
        std::size_t lo =
            static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), u) -
                                     cdf.begin());
        if (lo >= table.size()) lo = table.size() - 1;
        out.states.push_back(table[lo].first);
    }
    return out;
}

}  // namespace rbmlab
