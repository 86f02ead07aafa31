#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rbmlab/bits.hpp"
#include "rbmlab/common.hpp"
#include "rbmlab/distribution.hpp"

namespace rbmlab::targets {

// One admissible placement of a pattern: pixels forced white, pixels forced
// black; everything else (within the frame) is free.
struct Placement {
    state_t white = 0;
    state_t black = 0;
};

namespace detail {

// Appends all states consistent with one placement, walking the free cells in
// Gray-code order so each state differs from the previous by one bit. The
// per-state weight is base * q^(#white free) * (1-q)^(#black free).
inline void expand_placement(const Placement& pl, int m, double q, double base,
                             std::vector<std::pair<state_t, double>>& out) {
    std::vector<int> free_cells;
    state_t constrained = pl.white | pl.black;
    for (int i = 0; i < m; ++i)
        if (!get_bit(constrained, i)) free_cells.push_back(i);
    int f = static_cast<int>(free_cells.size());

    std::vector<double> weight(static_cast<std::size_t>(f) + 1);
    for (int a = 0; a <= f; ++a)
        weight[static_cast<std::size_t>(a)] =
            base * std::pow(q, a) * std::pow(1.0 - q, f - a);

    state_t x = pl.white;
    int ones = 0;
    out.emplace_back(x, weight[0]);
    for (std::uint64_t k = 1; k < (std::uint64_t{1} << f); ++k) {
        int bit = free_cells[static_cast<std::size_t>(gray_flip_index(k))];
        x = flip_bit(x, bit);
        ones += get_bit(x, bit) ? 1 : -1;
        out.emplace_back(x, weight[static_cast<std::size_t>(ones)]);
    }
}

// Union cardinality over placements by inclusion-exclusion: each subset of
// placements contributes (-1)^(|sub|+1) * 2^(#free cells of the merged
// constraint), zero when the merged constraints conflict.
inline std::uint64_t union_count(const std::vector<Placement>& placements,
                                 int m) {
    std::size_t p = placements.size();
    if (p > 24)
        throw capacity_error("inclusion-exclusion over 2^" + std::to_string(p) +
                                 " placement subsets",
                             "placements");
    std::int64_t total = 0;
    for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << p); ++mask) {
        state_t white = 0, black = 0;
        std::uint64_t rest = mask;
        bool ok = true;
        while (rest) {
            const Placement& pl =
                placements[static_cast<std::size_t>(std::countr_zero(rest))];
            rest &= rest - 1;
            white |= pl.white;
            black |= pl.black;
            if (white & black) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        int free_cells = m - popcount(white | black);
        std::int64_t term = std::int64_t{1} << free_cells;
        total += (std::popcount(mask) % 2 == 1) ? term : -term;
    }
    return static_cast<std::uint64_t>(total);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Hook pattern (L x L, periodic)
// ---------------------------------------------------------------------------

// Site (row, col) -> bit index row*L + col. The pattern core at anchor
// (r, c) is the three white pixels {(r,c), (r-1,c), (r,c+1)}; its boundary is
// every site at periodic Chebyshev distance 1 from the core, forced black.
inline std::vector<Placement> hook_placements(int L) {
    std::vector<Placement> out;
    auto idx = [L](int r, int c) {
        return ((r % L + L) % L) * L + ((c % L + L) % L);
    };
    for (int r = 0; r < L; ++r) {
        for (int c = 0; c < L; ++c) {
            Placement pl;
            const int core[3][2] = {{r, c}, {r - 1, c}, {r, c + 1}};
            for (const auto& s : core)
                pl.white |= state_t{1} << idx(s[0], s[1]);
            for (const auto& s : core)
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc)
                        pl.black |= state_t{1} << idx(s[0] + dr, s[1] + dc);
            pl.black &= ~pl.white;
            out.push_back(pl);
        }
    }
    return out;
}

inline TabulatedDistribution hook_distribution(int L, double q,
                                               int enum_cap = 25) {
    int m = L * L;
    if (m > 63)
        throw capacity_error("frame exceeds 63 pixels", "L^2");
    std::vector<Placement> placements = hook_placements(L);
    int pattern_size = popcount(placements[0].white | placements[0].black);
    check_enum_cap(m - pattern_size, enum_cap, "free cells");

    std::vector<std::pair<state_t, double>> table;
    double base = 1.0 / static_cast<double>(placements.size());
    for (const auto& pl : placements)
        detail::expand_placement(pl, m, q, base, table);
    return TabulatedDistribution(m, std::move(table));
}

// Counts the union of admissible states directly (enumerate each placement's
// free cells, then sort and deduplicate).  This bypasses the probability
// table entirely, so it cross-checks the support of hook_distribution.
inline std::uint64_t hook_support_count(int L, int enum_cap = 25) {
    const int m = L * L;
    std::vector<Placement> placements = hook_placements(L);
    std::vector<state_t> states;
    for (const Placement& pl : placements) {
        state_t fixed = pl.white | pl.black;
        int free_cells = m - popcount(fixed);
        check_enum_cap(free_cells, enum_cap, "free cells");
        state_t free_mask = mask_of(m) & ~fixed;
        for (state_t s = free_mask;; s = (s - 1) & free_mask) {
            states.push_back(pl.white | s);
            if (s == 0) break;
        }
    }
    std::sort(states.begin(), states.end());
    states.erase(std::unique(states.begin(), states.end()), states.end());
    return states.size();
}

// ---------------------------------------------------------------------------
// 1-D mini patterns (periodic ring)
// ---------------------------------------------------------------------------

// Core of one (m=4) or two (m=5) white pixels with single black boundary
// pixels on both sides; the remaining pixel is free.
inline std::vector<Placement> mini_placements(int m) {
    int core = m == 4 ? 1 : 2;
    std::vector<Placement> out;
    for (int p = 0; p < m; ++p) {
        Placement pl;
        for (int c = 0; c < core; ++c)
            pl.white |= state_t{1} << ((p + c) % m);
        pl.black |= state_t{1} << ((p - 1 + m) % m);
        pl.black |= state_t{1} << ((p + core) % m);
        out.push_back(pl);
    }
    return out;
}

inline TabulatedDistribution mini_distribution(int m, double q = 0.1) {
    if (m != 4 && m != 5)
        throw config_error("mini pattern target is defined for m = 4 or 5");
    std::vector<Placement> placements = mini_placements(m);
    std::vector<std::pair<state_t, double>> table;
    double base = 1.0 / static_cast<double>(placements.size());
    for (const auto& pl : placements)
        detail::expand_placement(pl, m, q, base, table);
    return TabulatedDistribution(m, std::move(table));
}

// ---------------------------------------------------------------------------
// Digit patterns (H x W frame, open boundaries)
// ---------------------------------------------------------------------------

// Pixel glyphs for the digits 0-9 ('#' = white core pixel). The black
// boundary is every frame pixel at Chebyshev distance 1 from a core pixel;
// boundary pixels may be cut away by the frame. Also shipped as grid text in
// data/digit_glyphs.txt.
inline const std::array<std::vector<std::string>, 10>& digit_glyphs() {
    static const std::array<std::vector<std::string>, 10> glyphs = {{
        {"###", "#.#", "#.#", "#.#", "###"},
        {"#", "#", "#", "#", "#"},
        {"##", ".#", "##", "#.", "##"},
        {"##", ".#", "##", ".#", "##"},
        {"#.#", "#.#", "###", "..#", "..#"},
        {"##", "#.", "##", ".#", "##"},
        {"#..", "#..", "###", "#.#", "###"},
        {"###", "..#", ".##", ".#.", ".#."},
        {"###", "#.#", "###", "#.#", "###"},
        {"###", "#.#", "###", "..#", "..#"},
    }};
    return glyphs;
}

// All admissible placements of one glyph in an h x w frame: the glyph
// bounding box must lie inside the frame; boundary pixels outside the frame
// are dropped. Site (row, col) -> bit index row*w + col.
inline std::vector<Placement> digit_placements(
    const std::vector<std::string>& glyph, int h, int w) {
    int gh = static_cast<int>(glyph.size());
    int gw = static_cast<int>(glyph[0].size());
    std::vector<Placement> out;
    for (int dr = 0; dr + gh <= h; ++dr) {
        for (int dc = 0; dc + gw <= w; ++dc) {
            Placement pl;
            for (int r = 0; r < gh; ++r)
                for (int c = 0; c < gw; ++c)
                    if (glyph[static_cast<std::size_t>(r)]
                             [static_cast<std::size_t>(c)] == '#')
                        pl.white |= state_t{1}
                                    << ((dr + r) * w + (dc + c));
            for (int r = 0; r < gh; ++r) {
                for (int c = 0; c < gw; ++c) {
                    if (glyph[static_cast<std::size_t>(r)]
                             [static_cast<std::size_t>(c)] != '#')
                        continue;
                    for (int er = -1; er <= 1; ++er) {
                        for (int ec = -1; ec <= 1; ++ec) {
                            int rr = dr + r + er, cc = dc + c + ec;
                            if (rr < 0 || rr >= h || cc < 0 || cc >= w)
                                continue;
                            pl.black |= state_t{1} << (rr * w + cc);
                        }
                    }
                }
            }
            pl.black &= ~pl.white;
            out.push_back(pl);
        }
    }
    return out;
}

inline std::array<std::uint64_t, 10> digit_support_counts(int h = 7,
                                                          int w = 5) {
    std::array<std::uint64_t, 10> out{};
    for (int k = 0; k < 10; ++k)
        out[static_cast<std::size_t>(k)] = detail::union_count(
            digit_placements(digit_glyphs()[static_cast<std::size_t>(k)], h, w),
            h * w);
    return out;
}

// The mixture over digits (uniform 1/10), placements (uniform per digit), and
// Bernoulli(q) noise on the unconstrained pixels. States reachable through
// several (digit, placement) pairs accumulate their summed probability.
inline TabulatedDistribution digit_distribution(int h = 7, int w = 5,
                                                double q = 0.1,
                                                int enum_cap = 25) {
    int m = h * w;
    if (m > 63) throw capacity_error("frame exceeds 63 pixels", "h*w");
    std::vector<std::pair<state_t, double>> table;
    std::size_t reserve = 0;
    std::vector<std::vector<Placement>> all;
    for (int k = 0; k < 10; ++k) {
        all.push_back(digit_placements(
            digit_glyphs()[static_cast<std::size_t>(k)], h, w));
        for (const auto& pl : all.back()) {
            int f = m - popcount(pl.white | pl.black);
            check_enum_cap(f, enum_cap, "free cells");
            reserve += std::size_t{1} << f;
        }
    }
    table.reserve(reserve);
    for (int k = 0; k < 10; ++k) {
        double base = 0.1 / static_cast<double>(
                                all[static_cast<std::size_t>(k)].size());
        for (const auto& pl : all[static_cast<std::size_t>(k)])
            detail::expand_placement(pl, m, q, base, table);
    }
    return TabulatedDistribution(m, std::move(table));
}

// Renders a glyph with its halo on the full frame ('#' core, 'o' boundary,
// '.' free) for the grid-text dump.
inline std::vector<std::string> render_placement(const Placement& pl, int h,
                                                 int w) {
    std::vector<std::string> grid(static_cast<std::size_t>(h),
                                  std::string(static_cast<std::size_t>(w), '.'));
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            if (get_bit(pl.white, r * w + c))
                grid[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
                    '#';
            else if (get_bit(pl.black, r * w + c))
                grid[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
                    'o';
        }
    return grid;
}

}  // namespace rbmlab::targets
