#pragma once

#include <cstdint>
#include <vector>

#include "rbmlab/bits.hpp"
#include "rbmlab/common.hpp"
#include "rbmlab/exact.hpp"
#include "rbmlab/rbm.hpp"
#include "rbmlab/rng.hpp"
#include "rbmlab/sampleset.hpp"

namespace rbmlab {

// One block-Gibbs chain. A "step" is the full x -> h -> x' update: the hidden
// layer is resampled from p(h|x), then the visible layer from p(x|h), so a
// step count of n means n visible updates.
struct ChainState {
    state_t x = 0;
    state_t h = 0;
    std::uint64_t steps_taken = 0;
    Philox rng;
};

inline state_t random_state(int bits, Philox& rng) {
    state_t s = 0;
    for (int i = 0; i < bits; ++i)
        if (rng.bernoulli(0.5)) s |= state_t{1} << i;
    return s;
}

inline void gibbs_step(const RBM& r, ChainState& c) {
    c.h = r.sample_hidden(c.x, c.rng);
    c.x = r.sample_visible(c.h, c.rng);
    c.steps_taken++;
}

// Runs n_steps updates from x0 and returns every thin-th visible state,
// recorded after the visible update.
inline std::vector<state_t> run_chain(const RBM& r, state_t x0,
                                      std::uint64_t n_steps,
                                      std::uint64_t thin, Philox rng) {
    ChainState c{x0, 0, 0, rng};
    std::vector<state_t> out;
    if (thin < 1) thin = 1;
    out.reserve(static_cast<std::size_t>(n_steps / thin));
    for (std::uint64_t s = 1; s <= n_steps; ++s) {
        gibbs_step(r, c);
        if (s % thin == 0) out.push_back(c.x);
    }
    return out;
}

// Exact i.i.d. samples from the model's visible marginal for small hidden
// layers: the hidden marginal p(h) is enumerated once (2^n log-weights,
// normalized through log-sum-exp), then each draw picks h by inverse CDF and
// x from the factorized conditional.
inline SampleSet independent_samples_small_n(const RBM& r, std::size_t count,
                                             Philox& rng, int enum_cap = 25) {
    check_enum_cap(r.n, enum_cap, "n");
    const std::uint64_t nh = state_t{1} << r.n;

    std::vector<double> lw(nh);
    auto w = [&](int j, int i) { return r.wij(i, j); };
    LogSumExp lse;
    detail::gray_enumerate(r.n, r.b, r.a, w, 0, nh,
                           [&](state_t h, double bias,
                               const std::vector<double>& f) {
                               lw[h] = bias + detail::softplus_sum(f);
                           });
    for (std::uint64_t h = 0; h < nh; ++h) lse.add(lw[h]);
    double log_z = lse.value();

    std::vector<double> cdf(nh);
    double acc = 0.0;
    for (std::uint64_t h = 0; h < nh; ++h) {
        acc += std::exp(lw[h] - log_z);
        cdf[h] = acc;
    }

    SampleSet out;
    out.m = r.m;
    out.states.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        double u = rng.next_double() * acc;
        std::uint64_t h = static_cast<std::uint64_t>(
            std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        if (h >= nh) h = nh - 1;
        out.states.push_back(r.sample_visible(static_cast<state_t>(h), rng));
    }
    return out;
}

}  // namespace rbmlab
