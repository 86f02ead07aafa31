#pragma once

// Stochastic training loops: CD-k, persistent CD, adaptive persistent CD,
// plus the shared orchestration (minibatch schedule, measurement hooks,
// trajectory records).  The exact continuous-time gradient flow lives in
// flow.hpp; both share data_average_gradient below.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rbmlab/autocorr.hpp"
#include "rbmlab/common.hpp"
#include "rbmlab/rbm.hpp"
#include "rbmlab/rng.hpp"
#include "rbmlab/sampleset.hpp"

namespace rbmlab {

// ---------------------------------------------------------------------------
// Gradient container (same shape as the parameters it perturbs)
// ---------------------------------------------------------------------------

struct Gradient {
    int m = 0;
    int n = 0;
    std::vector<double> w;  // m*n, row-major like RBM::w
    std::vector<double> a;  // m
    std::vector<double> b;  // n

    Gradient() = default;
    Gradient(int m_, int n_)
        : m(m_),
          n(n_),
          w(static_cast<std::size_t>(m_) * static_cast<std::size_t>(n_), 0.0),
          a(static_cast<std::size_t>(m_), 0.0),
          b(static_cast<std::size_t>(n_), 0.0) {}

    double& wij(int i, int j) {
        return w[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                 static_cast<std::size_t>(j)];
    }
    double wij(int i, int j) const {
        return w[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                 static_cast<std::size_t>(j)];
    }

    void scale(double s) {
        for (double& v : w) v *= s;
        for (double& v : a) v *= s;
        for (double& v : b) v *= s;
    }

    double max_abs() const {
        double mx = 0.0;
        for (double v : w) mx = std::max(mx, std::abs(v));
        for (double v : a) mx = std::max(mx, std::abs(v));
        for (double v : b) mx = std::max(mx, std::abs(v));
        return mx;
    }

    double norm2() const {
        KahanSum s;
        for (double v : w) s.add(v * v);
        for (double v : a) s.add(v * v);
        for (double v : b) s.add(v * v);
        return std::sqrt(s.value());
    }
};

inline void apply_gradient(RBM& r, const Gradient& g, double scale) {
    for (std::size_t k = 0; k < g.w.size(); ++k) r.w[k] += scale * g.w[k];
    for (std::size_t k = 0; k < g.a.size(); ++k) r.a[k] += scale * g.a[k];
    for (std::size_t k = 0; k < g.b.size(); ++k) r.b[k] += scale * g.b[k];
}

// ---------------------------------------------------------------------------
// Initialization scheme names (the schemes themselves live in rbm.hpp)
// ---------------------------------------------------------------------------

inline const char* init_name(InitScheme s) {
    switch (s) {
        case InitScheme::zeros: return "zeros";
        case InitScheme::gaussian: return "gaussian";
        case InitScheme::hinton: return "hinton";
    }
    return "?";
}

inline InitScheme parse_init(const std::string& s) {
    if (s == "zeros") return InitScheme::zeros;
    if (s == "gaussian") return InitScheme::gaussian;
    if (s == "hinton") return InitScheme::hinton;
    throw config_error("unknown init scheme: '" + s +
                       "' (expected zeros, gaussian, or hinton)");
}

// ---------------------------------------------------------------------------
// Data-average (positive-phase) gradient
// ---------------------------------------------------------------------------
// Exact batch average of the energy-gradient data term:
//   w_ij: (1/B) sum_x x_i P(h_j = 1 | x)
//   a_i : (1/B) sum_x x_i
//   b_j : (1/B) sum_x P(h_j = 1 | x)
// This is the deterministic counterpart of the stochastic positive phase
// used by cd_update/pcd_update (which draw binary hidden samples instead).

inline Gradient data_average_gradient(const RBM& r,
                                      std::span<const state_t> batch) {
    if (batch.empty())
        throw config_error("data_average_gradient: empty batch");
    Gradient g(r.m, r.n);
    std::vector<double> u(static_cast<std::size_t>(r.n));
    std::vector<KahanSum> sw(g.w.size());
    std::vector<KahanSum> sa(g.a.size());
    std::vector<KahanSum> sb(g.b.size());
    for (state_t x : batch) {
        r.hidden_fields(x, u);
        for (int j = 0; j < r.n; ++j) {
            double pj = logistic(u[static_cast<std::size_t>(j)]);
            sb[static_cast<std::size_t>(j)].add(pj);
            state_t rest = x;
            while (rest) {
                int i = std::countr_zero(rest);
                rest &= rest - 1;
                sw[static_cast<std::size_t>(i) *
                       static_cast<std::size_t>(r.n) +
                   static_cast<std::size_t>(j)]
                    .add(pj);
            }
        }
        state_t rest = x;
        while (rest) {
            int i = std::countr_zero(rest);
            rest &= rest - 1;
            sa[static_cast<std::size_t>(i)].add(1.0);
        }
    }
    double inv = 1.0 / static_cast<double>(batch.size());
    for (std::size_t k = 0; k < g.w.size(); ++k) g.w[k] = sw[k].value() * inv;
    for (std::size_t k = 0; k < g.a.size(); ++k) g.a[k] = sa[k].value() * inv;
    for (std::size_t k = 0; k < g.b.size(); ++k) g.b[k] = sb[k].value() * inv;
    return g;
}

inline Gradient data_average_gradient(const RBM& r, const SampleSet& batch) {
    return data_average_gradient(
        r, std::span<const state_t>(batch.states.data(), batch.states.size()));
}

// ---------------------------------------------------------------------------
// CD-k update
// ---------------------------------------------------------------------------
// One stochastic update from a minibatch.  For every batch sample x~ a chain
// is started at x~ and run for n_cd visible updates:
//   x(0) = x~,  h(k) ~ P(h | x(k)),  x(k+1) ~ P(x | h(k)).
// The positive phase uses the pair (x~, h(0)); the negative phase uses the
// sampled terminal pair (x(n_cd), h(n_cd)).  Both phases keep the hidden
// factors binary (sampled), trading variance for fidelity to the update rule
// this reproduces.  Parameters move by eta/B times the summed difference.

namespace detail {

inline void accumulate_pair(Gradient& g, state_t x, state_t h, double sign) {
    state_t hr = h;
    while (hr) {
        int j = std::countr_zero(hr);
        hr &= hr - 1;
        g.b[static_cast<std::size_t>(j)] += sign;
        state_t xr = x;
        while (xr) {
            int i = std::countr_zero(xr);
            xr &= xr - 1;
            g.wij(i, j) += sign;
        }
    }
    state_t xr = x;
    while (xr) {
        int i = std::countr_zero(xr);
        xr &= xr - 1;
        g.a[static_cast<std::size_t>(i)] += sign;
    }
}

}  // namespace detail

inline void cd_update(RBM& r, std::span<const state_t> batch, int n_cd,
                      double eta, Philox& rng) {
    if (n_cd < 1) throw config_error("cd_update: n_cd must be >= 1");
    if (batch.empty()) throw config_error("cd_update: empty batch");
    Gradient g(r.m, r.n);
    for (std::size_t s = 0; s < batch.size(); ++s) {
        Philox srng = rng.substream(static_cast<std::uint64_t>(s));
        const state_t x0 = batch[s];
        state_t h = r.sample_hidden(x0, srng);
        detail::accumulate_pair(g, x0, h, +1.0);
        state_t x = x0;
        for (int k = 0; k < n_cd; ++k) {
            x = r.sample_visible(h, srng);
            h = r.sample_hidden(x, srng);
        }
        detail::accumulate_pair(g, x, h, -1.0);
    }
    apply_gradient(r, g, eta / static_cast<double>(batch.size()));
}

// ---------------------------------------------------------------------------
// Persistent CD update
// ---------------------------------------------------------------------------
// The negative-phase chains live across updates.  Per update, every chain is
// first advanced by n_cd visible updates under the current parameters; the
// negative phase then pairs each advanced state x' with a fresh one-step
// hidden sample h(0)(x').  The positive phase is the same as in CD.  Hidden
// samples are re-drawn every update, never carried over.

struct PersistentChains {
    std::vector<state_t> x;
    std::vector<Philox> rngs;  // one private stream per chain

    std::size_t size() const { return x.size(); }

    // Chains start from independent uniformly random visible states.
    static PersistentChains init(int m, std::size_t count, const Philox& base) {
        PersistentChains q;
        q.x.resize(count);
        q.rngs.reserve(count);
        for (std::size_t l = 0; l < count; ++l) {
            q.rngs.push_back(
                base.substream("pchain").substream(static_cast<std::uint64_t>(l)));
            q.x[l] = random_state(m, q.rngs[l]);
        }
        return q;
    }
};

inline void pcd_update(RBM& r, PersistentChains& chains,
                       std::span<const state_t> batch, int n_cd, double eta,
                       Philox& rng) {
    if (n_cd < 1) throw config_error("pcd_update: n_cd must be >= 1");
    if (batch.empty()) throw config_error("pcd_update: empty batch");
    if (chains.size() == 0) throw config_error("pcd_update: no chains");

    Gradient pos(r.m, r.n);
    for (std::size_t s = 0; s < batch.size(); ++s) {
        Philox srng = rng.substream(static_cast<std::uint64_t>(s));
        state_t h = r.sample_hidden(batch[s], srng);
        detail::accumulate_pair(pos, batch[s], h, +1.0);
    }

    // Advance chains (independent streams; deterministic under any schedule).
    const std::size_t L = chains.size();
    std::vector<state_t> fresh_h(L);
    parallel_chunks(L, default_chunks(L), [&](std::size_t, std::size_t lo,
                                              std::size_t hi) {
        for (std::size_t l = lo; l < hi; ++l) {
            Philox& crng = chains.rngs[l];
            state_t x = chains.x[l];
            for (int k = 0; k < n_cd; ++k) {
                state_t h = r.sample_hidden(x, crng);
                x = r.sample_visible(h, crng);
            }
            chains.x[l] = x;
            fresh_h[l] = r.sample_hidden(x, crng);
        }
    });

    Gradient neg(r.m, r.n);
    for (std::size_t l = 0; l < L; ++l)
        detail::accumulate_pair(neg, chains.x[l], fresh_h[l], +1.0);

    double eb = eta / static_cast<double>(batch.size());
    double el = eta / static_cast<double>(L);
    apply_gradient(r, pos, eb);
    apply_gradient(r, neg, -el);
}

// ---------------------------------------------------------------------------
// Adaptive persistent CD
// ---------------------------------------------------------------------------
// pcd_update with n_cd tied to the current mixing time: n_cd =
// max(1, round(kappa * tau)).  tau is refreshed externally (by the training
// loop, on its measurement schedule); an unreliable refresh keeps the
// previous n_cd and leaves a note.

struct AdaptiveCdState {
    double kappa = 1.0;
    int n_cd = 1;
    double tau = 1.0;
    bool last_refresh_reliable = true;

    // Returns false when the estimate was unreliable and n_cd was kept.
    bool refresh(const TauEstimate& est) {
        last_refresh_reliable = est.reliable;
        if (!est.reliable) return false;
        tau = est.tau;
        n_cd = std::max(1, static_cast<int>(std::lround(kappa * tau)));
        return true;
    }
};

inline void adaptive_pcd_update(RBM& r, PersistentChains& chains,
                                const AdaptiveCdState& ad,
                                std::span<const state_t> batch, double eta,
                                Philox& rng) {
    pcd_update(r, chains, batch, ad.n_cd, eta, rng);
}

// ---------------------------------------------------------------------------
// Training orchestration
// ---------------------------------------------------------------------------

enum class Algorithm { cd, pcd, adaptive_pcd };

inline const char* algorithm_name(Algorithm a) {
    switch (a) {
        case Algorithm::cd: return "cd";
        case Algorithm::pcd: return "pcd";
        case Algorithm::adaptive_pcd: return "adaptive_pcd";
    }
    return "?";
}

inline Algorithm parse_algorithm(const std::string& s) {
    if (s == "cd") return Algorithm::cd;
    if (s == "pcd") return Algorithm::pcd;
    if (s == "adaptive_pcd") return Algorithm::adaptive_pcd;
    throw config_error("unknown algorithm: " + s);
}

struct TrainConfig {
    Algorithm algorithm = Algorithm::cd;
    double eta = 1e-3;
    int batch_size = 100;
    int n_cd = 1;
    double kappa = 1.0;            // adaptive_pcd: n_cd = max(1, round(kappa*tau))
    std::int64_t epochs = 1000;
    std::size_t persistent_chains = 0;  // 0 -> same as batch_size
    std::vector<std::int64_t> measure_epochs;  // empty -> geometric grid
    std::uint64_t seed = 1;
    bool measure_tau = true;
    TauProtocol tau_protocol{};
};

struct TrajectoryRecord {
    double epoch = 0.0;
    double delta = std::numeric_limits<double>::quiet_NaN();
    std::string delta_kind;  // "exact", "empirical", ...
    TauEstimate tau{};
    bool has_tau = false;
    double ctot_model = std::numeric_limits<double>::quiet_NaN();
    double sigma_w = 0.0;
    int n_cd_used = 1;
    std::vector<std::pair<std::string, double>> proxies;  // ordered columns
    std::vector<std::string> notes;
};

// Measurers fill delta / ctot_model / proxies; the loop fills the rest.
using Measurer =
    std::function<void(std::int64_t epoch, const RBM&, TrajectoryRecord&)>;

// Measurement epochs 0, 1, 2, ... spaced geometrically with roughly
// per_decade points per factor of 10, always including 0 and last.
inline std::vector<std::int64_t> geometric_schedule(std::int64_t last,
                                                    int per_decade = 8) {
    if (last < 0) throw config_error("geometric_schedule: negative end");
    if (per_decade < 1) throw config_error("geometric_schedule: per_decade");
    std::vector<std::int64_t> out{0};
    if (last == 0) return out;
    double step = std::pow(10.0, 1.0 / per_decade);
    std::int64_t prev = 0;
    for (double v = 1.0; v < static_cast<double>(last); v *= step) {
        std::int64_t e = static_cast<std::int64_t>(std::llround(v));
        if (e > prev && e < last) {
            out.push_back(e);
            prev = e;
        }
    }
    out.push_back(last);
    return out;
}

inline std::vector<std::int64_t> normalize_schedule(
    std::vector<std::int64_t> sched, std::int64_t last) {
    std::vector<std::int64_t> out;
    for (std::int64_t e : sched)
        if (e >= 0 && e <= last) out.push_back(e);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    if (out.empty()) out.push_back(last);
    return out;
}

// Runs the configured number of epochs of minibatch SGD on `rbm`.
// Per epoch the training set is re-partitioned uniformly at random into
// floor(|S|/B) minibatches of exactly B samples (the remainder is dropped
// for that epoch).  Records are taken at the measurement epochs; the record
// at epoch t reflects the parameters after t full epochs, so epoch 0 is the
// initial machine.  Throws on non-finite parameters, naming the epoch.
inline std::vector<TrajectoryRecord> train(
    RBM& rbm, const SampleSet& data, const TrainConfig& cfg,
    const std::vector<Measurer>& measurers = {}) {
    if (data.m != rbm.m)
        throw config_error("train: data has " + std::to_string(data.m) +
                           " units, machine expects " + std::to_string(rbm.m));
    if (cfg.eta <= 0) throw config_error("train: eta must be > 0");
    if (cfg.batch_size < 1) throw config_error("train: batch_size must be >= 1");
    if (cfg.epochs < 0) throw config_error("train: negative epoch count");
    const std::size_t B = static_cast<std::size_t>(cfg.batch_size);
    const std::size_t batches_per_epoch = data.size() / B;
    if (cfg.epochs > 0 && batches_per_epoch == 0)
        throw config_error("train: batch_size exceeds |S| = " +
                           std::to_string(data.size()));

    Philox master(cfg.seed, 0);
    std::vector<std::int64_t> schedule =
        cfg.measure_epochs.empty()
            ? geometric_schedule(cfg.epochs)
            : normalize_schedule(cfg.measure_epochs, cfg.epochs);

    PersistentChains chains;
    AdaptiveCdState adaptive;
    adaptive.kappa = cfg.kappa;
    adaptive.n_cd = std::max(1, cfg.n_cd);
    const bool persistent = cfg.algorithm == Algorithm::pcd ||
                            cfg.algorithm == Algorithm::adaptive_pcd;
    if (persistent) {
        std::size_t L = cfg.persistent_chains ? cfg.persistent_chains : B;
        chains = PersistentChains::init(rbm.m, L, master);
    }

    std::vector<std::size_t> perm(data.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::vector<state_t> batch(B);
    std::vector<TrajectoryRecord> records;
    records.reserve(schedule.size());
    std::size_t next_measure = 0;

    auto current_n_cd = [&]() {
        return cfg.algorithm == Algorithm::adaptive_pcd ? adaptive.n_cd
                                                        : std::max(1, cfg.n_cd);
    };

    auto measure_at = [&](std::int64_t epoch) {
        TrajectoryRecord rec;
        rec.epoch = static_cast<double>(epoch);
        rec.sigma_w = rbm.sigma_w();
        rec.n_cd_used = current_n_cd();
        if (cfg.measure_tau) {
            Philox trng = master.substream("tau").substream(
                static_cast<std::uint64_t>(epoch));
            rec.tau = estimate_tau(rbm, cfg.tau_protocol, trng);
            rec.has_tau = true;
            if (cfg.algorithm == Algorithm::adaptive_pcd) {
                if (!adaptive.refresh(rec.tau))
                    rec.notes.push_back(
                        "tau unreliable; keeping n_cd=" +
                        std::to_string(adaptive.n_cd));
            }
        }
        for (const Measurer& fn : measurers) fn(epoch, rbm, rec);
        records.push_back(std::move(rec));
    };

    for (std::int64_t epoch = 0;; ++epoch) {
        if (next_measure < schedule.size() && schedule[next_measure] == epoch) {
            measure_at(epoch);
            ++next_measure;
        }
        if (epoch == cfg.epochs) break;

        // Fresh uniformly random partition of S for this epoch.
        Philox srng = master.substream("shuffle").substream(
            static_cast<std::uint64_t>(epoch));
        for (std::size_t i = perm.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(srng.next_below(i + 1));
            std::swap(perm[i], perm[j]);
        }

        for (std::size_t rbatch = 0; rbatch < batches_per_epoch; ++rbatch) {
            for (std::size_t k = 0; k < B; ++k)
                batch[k] = data.states[perm[rbatch * B + k]];
            std::uint64_t update_index =
                static_cast<std::uint64_t>(epoch) * batches_per_epoch + rbatch;
            Philox urng = master.substream("update").substream(update_index);
            switch (cfg.algorithm) {
                case Algorithm::cd:
                    cd_update(rbm, batch, std::max(1, cfg.n_cd), cfg.eta, urng);
                    break;
                case Algorithm::pcd:
                    pcd_update(rbm, chains, batch, std::max(1, cfg.n_cd),
                               cfg.eta, urng);
                    break;
                case Algorithm::adaptive_pcd:
                    adaptive_pcd_update(rbm, chains, adaptive, batch, cfg.eta,
                                        urng);
                    break;
            }
        }

        for (double v : rbm.w)
            if (!std::isfinite(v))
                throw std::runtime_error(
                    "train: non-finite weight after epoch " +
                    std::to_string(epoch + 1));
        for (double v : rbm.a)
            if (!std::isfinite(v))
                throw std::runtime_error(
                    "train: non-finite visible bias after epoch " +
                    std::to_string(epoch + 1));
        for (double v : rbm.b)
            if (!std::isfinite(v))
                throw std::runtime_error(
                    "train: non-finite hidden bias after epoch " +
                    std::to_string(epoch + 1));
    }
    return records;
}

}  // namespace rbmlab
