#pragma once

// Sample-based accuracy proxies: Gaussian-smoothened empirical KL between a
// test set and a set of model samples, its kernel-width calibration, and
// coarse-grained empirical KL / L1 distances under majority-rule partitions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "rbmlab/common.hpp"
#include "rbmlab/exact.hpp"
#include "rbmlab/rbm.hpp"
#include "rbmlab/rng.hpp"
#include "rbmlab/sampleset.hpp"

namespace rbmlab {

// ---------------------------------------------------------------------------
// Gaussian-smoothened empirical KL
// ---------------------------------------------------------------------------
// The model samples are smeared with the kernel
//   k(x; mu, sigma) = N_sigma^{-1} exp(-d(x, mu) / (2 sigma^2)),
// d = Hamming distance, N_sigma = sum_d C(m, d) exp(-d / (2 sigma^2)),
// and the smoothed empirical KL is
//   sum_x p~(x; T) ln [ p~(x; T) / p~_sigma(x; T-hat) ],
// evaluated on the support of the test set only.

inline double log_kernel_normalization(int m, double sigma) {
    if (sigma <= 0)
        throw config_error("log_kernel_normalization: sigma must be > 0");
    const double damp = 1.0 / (2.0 * sigma * sigma);
    LogSumExp lse;
    double lgm = std::lgamma(static_cast<double>(m) + 1.0);
    for (int d = 0; d <= m; ++d) {
        double logbinom = lgm - std::lgamma(static_cast<double>(d) + 1.0) -
                          std::lgamma(static_cast<double>(m - d) + 1.0);
        lse.add(logbinom - damp * static_cast<double>(d));
    }
    return lse.value();
}

// Distance histograms between every unique test state and the whole model
// sample set.  The histograms are sigma-independent, so one build serves an
// entire sigma grid.
struct SmoothedKlTable {
    int m = 0;
    std::size_t model_count = 0;
    std::vector<double> test_prob;    // one entry per unique test state
    std::vector<std::uint32_t> hist;  // unique_count x (m+1), row-major

    std::size_t unique_count() const { return test_prob.size(); }
};

inline SmoothedKlTable build_smoothed_kl_table(const WideSampleSet& test,
                                               const WideSampleSet& model) {
    if (test.m != model.m)
        throw config_error("smoothed KL: unit-count mismatch");
    if (test.empty() || model.empty())
        throw config_error("smoothed KL: empty sample set");
    SmoothedKlTable t;
    t.m = test.m;
    t.model_count = model.count;

    std::vector<std::uint32_t> order = detail::sorted_row_order(test);
    std::vector<std::uint32_t> rep;  // one representative row per unique state
    std::size_t run = 1;
    for (std::size_t k = 1; k <= order.size(); ++k) {
        if (k < order.size() && detail::rows_equal(test, order[k - 1], order[k])) {
            run++;
            continue;
        }
        rep.push_back(order[k - 1]);
        t.test_prob.push_back(static_cast<double>(run) /
                              static_cast<double>(test.count));
        run = 1;
    }

    const std::size_t bins = static_cast<std::size_t>(t.m) + 1;
    t.hist.assign(rep.size() * bins, 0);
    parallel_chunks(rep.size(), default_chunks(rep.size()),
                    [&](std::size_t, std::size_t lo, std::size_t hi) {
                        for (std::size_t u = lo; u < hi; ++u) {
                            const std::uint64_t* tr = test.row(rep[u]);
                            std::uint32_t* h = t.hist.data() + u * bins;
                            for (std::size_t k = 0; k < model.count; ++k) {
                                int d = hamming_rows(tr, model.row(k),
                                                     test.words);
                                h[static_cast<std::size_t>(d)]++;
                            }
                        }
                    });
    return t;
}

inline double smoothed_kl(const SmoothedKlTable& t, double sigma) {
    const double log_n_sigma = log_kernel_normalization(t.m, sigma);
    const double damp = 1.0 / (2.0 * sigma * sigma);
    const double log_count = std::log(static_cast<double>(t.model_count));
    const std::size_t bins = static_cast<std::size_t>(t.m) + 1;
    KahanSum acc;
    for (std::size_t u = 0; u < t.unique_count(); ++u) {
        const std::uint32_t* h = t.hist.data() + u * bins;
        LogSumExp lse;
        for (std::size_t d = 0; d < bins; ++d)
            if (h[d])
                lse.add(std::log(static_cast<double>(h[d])) -
                        damp * static_cast<double>(d));
        double log_model = lse.value() - log_count - log_n_sigma;
        double p = t.test_prob[u];
        acc.add(p * (std::log(p) - log_model));
    }
    return acc.value();
}

inline double gaussian_smoothed_kl(const WideSampleSet& test,
                                   const WideSampleSet& model, double sigma) {
    return smoothed_kl(build_smoothed_kl_table(test, model), sigma);
}

inline double gaussian_smoothed_kl(const SampleSet& test,
                                   const SampleSet& model, double sigma) {
    return gaussian_smoothed_kl(WideSampleSet::from(test),
                                WideSampleSet::from(model), sigma);
}

// 64 log-spaced kernel widths covering [0.05, 2.0].
inline std::vector<double> default_sigma_grid(int points = 64,
                                              double lo = 0.05,
                                              double hi = 2.0) {
    if (points < 2 || lo <= 0 || hi <= lo)
        throw config_error("default_sigma_grid: bad grid parameters");
    std::vector<double> g(static_cast<std::size_t>(points));
    double step = std::log(hi / lo) / (points - 1);
    for (int k = 0; k < points; ++k)
        g[static_cast<std::size_t>(k)] = lo * std::exp(step * k);
    return g;
}

struct SigmaCalibration {
    double sigma_star = 0.0;
    double value = 0.0;
    std::vector<std::pair<double, double>> curve;  // (sigma, smoothed KL)
};

// Grid-minimizes the smoothed KL between two reference sets (typically test
// vs training data); the minimizer is the kernel width used for model-sample
// evaluation thereafter.
inline SigmaCalibration calibrate_sigma(const WideSampleSet& test,
                                        const WideSampleSet& train,
                                        const std::vector<double>& grid) {
    if (grid.empty()) throw config_error("calibrate_sigma: empty grid");
    SmoothedKlTable table = build_smoothed_kl_table(test, train);
    SigmaCalibration out;
    out.curve.reserve(grid.size());
    for (double s : grid) out.curve.emplace_back(s, smoothed_kl(table, s));
    auto best = std::min_element(
        out.curve.begin(), out.curve.end(),
        [](const auto& a, const auto& b) { return a.second < b.second; });
    out.sigma_star = best->first;
    out.value = best->second;
    return out;
}

inline SigmaCalibration calibrate_sigma(const SampleSet& test,
                                        const SampleSet& train,
                                        const std::vector<double>& grid) {
    return calibrate_sigma(WideSampleSet::from(test), WideSampleSet::from(train),
                           grid);
}

// ---------------------------------------------------------------------------
// Majority-rule coarse-graining
// ---------------------------------------------------------------------------
// Group alpha of a partition maps to output unit alpha by
//   y_alpha = 1  iff  sum_{i in group} x_i >= r * |group|
// (the threshold comparison includes equality).

struct Partition {
    std::vector<std::vector<int>> groups;
    std::string kind;  // "local" or "random"
    double threshold = 1.0;

    int group_count() const { return static_cast<int>(groups.size()); }
};

inline void validate_partition(const Partition& p, int m) {
    std::vector<char> seen(static_cast<std::size_t>(m), 0);
    for (const auto& g : p.groups) {
        if (g.empty()) throw config_error("partition: empty group");
        for (int i : g) {
            if (i < 0 || i >= m)
                throw config_error("partition: unit index out of range");
            if (seen[static_cast<std::size_t>(i)])
                throw config_error("partition: unit covered twice");
            seen[static_cast<std::size_t>(i)] = 1;
        }
    }
    for (char c : seen)
        if (!c) throw config_error("partition: unit not covered");
}

// Contiguous near-equal rectangular blocks on an h x w pixel grid (site
// (row, col) has index row*w + col).  The block grid (gr x gc, gr*gc =
// group_count) is chosen among admissible divisor pairs to best match the
// image aspect ratio.
inline Partition local_partition(int h, int w, int group_count,
                                 double threshold = 1.0) {
    if (h < 1 || w < 1 || group_count < 1 || group_count > h * w)
        throw config_error("local_partition: bad shape");
    int best_gr = -1, best_gc = -1;
    long best_mismatch = 0;
    for (int gr = 1; gr <= group_count; ++gr) {
        if (group_count % gr) continue;
        int gc = group_count / gr;
        if (gr > h || gc > w) continue;
        long mismatch = std::labs(static_cast<long>(gr) * w -
                                  static_cast<long>(gc) * h);
        if (best_gr < 0 || mismatch < best_mismatch) {
            best_gr = gr;
            best_gc = gc;
            best_mismatch = mismatch;
        }
    }
    if (best_gr < 0)
        throw config_error(
            "local_partition: group count admits no rectangular block grid");
    Partition p;
    p.kind = "local";
    p.threshold = threshold;
    p.groups.assign(static_cast<std::size_t>(group_count), {});
    auto band = [](int extent, int parts, int k) {
        return (extent * k) / parts;  // band k covers [band(k), band(k+1))
    };
    for (int row = 0; row < h; ++row) {
        int br = 0;
        while (band(h, best_gr, br + 1) <= row) ++br;
        for (int col = 0; col < w; ++col) {
            int bc = 0;
            while (band(w, best_gc, bc + 1) <= col) ++bc;
            p.groups[static_cast<std::size_t>(br * best_gc + bc)].push_back(
                row * w + col);
        }
    }
    return p;
}

// Uniformly random balanced assignment: a shuffled unit list dealt
// round-robin into the groups.
inline Partition random_partition(int m, int group_count, Philox& rng,
                                  double threshold = 1.0) {
    if (group_count < 1 || group_count > m)
        throw config_error("random_partition: bad group count");
    std::vector<int> units(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) units[static_cast<std::size_t>(i)] = i;
    for (std::size_t i = units.size() - 1; i > 0; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_below(i + 1));
        std::swap(units[i], units[j]);
    }
    Partition p;
    p.kind = "random";
    p.threshold = threshold;
    p.groups.assign(static_cast<std::size_t>(group_count), {});
    for (std::size_t k = 0; k < units.size(); ++k)
        p.groups[k % static_cast<std::size_t>(group_count)].push_back(units[k]);
    for (auto& g : p.groups) std::sort(g.begin(), g.end());
    return p;
}

inline SampleSet coarse_grain(const WideSampleSet& samples,
                              const Partition& p) {
    if (p.group_count() > 64)
        throw capacity_error("coarse_grain: more than 64 groups",
                             "group count");
    validate_partition(p, samples.m);
    SampleSet out;
    out.m = p.group_count();
    out.states.resize(samples.count);
    for (std::size_t k = 0; k < samples.count; ++k) {
        state_t y = 0;
        for (std::size_t alpha = 0; alpha < p.groups.size(); ++alpha) {
            const auto& g = p.groups[alpha];
            int s = 0;
            for (int i : g) s += samples.get(k, i) ? 1 : 0;
            if (static_cast<double>(s) >=
                p.threshold * static_cast<double>(g.size()))
                y |= state_t{1} << alpha;
        }
        out.states[k] = y;
    }
    return out;
}

inline SampleSet coarse_grain(const SampleSet& samples, const Partition& p) {
    return coarse_grain(WideSampleSet::from(samples), p);
}

// ---------------------------------------------------------------------------
// Empirical distances between (coarse-grained) sample sets
// ---------------------------------------------------------------------------

namespace detail {

inline std::map<state_t, double> empirical_weights(const SampleSet& s) {
    std::map<state_t, std::uint64_t> counts;
    for (state_t x : s.states) counts[x]++;
    std::map<state_t, double> w;
    double n = static_cast<double>(s.size());
    for (const auto& [x, c] : counts) w[x] = static_cast<double>(c) / n;
    return w;
}

}  // namespace detail

// D_KL(p~(.;a) || p~(.;b)); +infinity when a's support is not covered by b.
inline double empirical_kl(const SampleSet& a, const SampleSet& b) {
    if (a.empty() || b.empty())
        throw config_error("empirical_kl: empty sample set");
    auto wa = detail::empirical_weights(a);
    auto wb = detail::empirical_weights(b);
    KahanSum acc;
    for (const auto& [x, pa] : wa) {
        auto it = wb.find(x);
        if (it == wb.end())
            return std::numeric_limits<double>::infinity();
        acc.add(pa * std::log(pa / it->second));
    }
    return acc.value();
}

// sum_y |p~(y;a) - p~(y;b)|, always finite, in [0, 2].
inline double l1_distance(const SampleSet& a, const SampleSet& b) {
    if (a.empty() || b.empty())
        throw config_error("l1_distance: empty sample set");
    auto wa = detail::empirical_weights(a);
    auto wb = detail::empirical_weights(b);
    KahanSum acc;
    auto ia = wa.begin();
    auto ib = wb.begin();
    while (ia != wa.end() || ib != wb.end()) {
        if (ib == wb.end() || (ia != wa.end() && ia->first < ib->first)) {
            acc.add(ia->second);
            ++ia;
        } else if (ia == wa.end() || ib->first < ia->first) {
            acc.add(ib->second);
            ++ib;
        } else {
            acc.add(std::abs(ia->second - ib->second));
            ++ia;
            ++ib;
        }
    }
    return acc.value();
}

// Standard deviation of the weights about zero, sigma_w = sqrt(sum w^2 /
// (mn - 1)) — the spread statistic reported along trajectories.
inline double weights_std(const RBM& r) { return r.sigma_w(); }

// ---------------------------------------------------------------------------
// Rank correlation (used to compare proxy metrics against the exact loss)
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> fractional_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return v[x] < v[y]; });
    std::vector<double> rank(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    return rank;
}

}  // namespace detail

inline double spearman_rank_correlation(const std::vector<double>& x,
                                        const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw config_error("spearman: need two equal-length series");
    std::vector<double> rx = detail::fractional_ranks(x);
    std::vector<double> ry = detail::fractional_ranks(y);
    double n = static_cast<double>(x.size());
    KahanSum sx, sy;
    for (double v : rx) sx.add(v);
    for (double v : ry) sy.add(v);
    double mx = sx.value() / n, my = sy.value() / n;
    KahanSum sxy, sxx, syy;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double dx = rx[i] - mx, dy = ry[i] - my;
        sxy.add(dx * dy);
        sxx.add(dx * dx);
        syy.add(dy * dy);
    }
    double denom = std::sqrt(sxx.value() * syy.value());
    if (denom == 0.0) return 0.0;
    return sxy.value() / denom;
}

}  // namespace rbmlab
