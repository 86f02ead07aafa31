#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "rbmlab/bits.hpp"
#include "rbmlab/common.hpp"
#include "rbmlab/exact.hpp"
#include "rbmlab/gibbs.hpp"
#include "rbmlab/rbm.hpp"
#include "rbmlab/rng.hpp"

namespace rbmlab {

// ---------------------------------------------------------------------------
// Correlation estimators
// ---------------------------------------------------------------------------

// Unit-averaged autocovariance of one recorded chain,
//   g(n) = (1/M) sum_i (1/K) sum_{k=0}^{K-1-n} (x_i^k - mu_i)(x_i^{k+n} - mu_i),
// with the biased 1/K normalization at every lag and mu_i the full-chain
// mean. Lags are produced incrementally: the raw product term uses the
// bit-packed rows directly (popcount of row_k AND row_{k+n}), the centering
// corrections are updated in O(popcount) per new lag.
class UnitCorrelator {
public:
    UnitCorrelator(const std::vector<state_t>& rows, int m)
        : rows_(&rows), m_(m), K_(rows.size()) {
        mu_.assign(static_cast<std::size_t>(m_), 0.0);
        std::vector<std::uint64_t> counts(static_cast<std::size_t>(m_), 0);
        for (state_t row : rows) {
            state_t rest = row;
            while (rest) {
                counts[static_cast<std::size_t>(std::countr_zero(rest))]++;
                rest &= rest - 1;
            }
        }
        double q = 0.0;
        for (int i = 0; i < m_; ++i) {
            mu_[static_cast<std::size_t>(i)] =
                static_cast<double>(counts[static_cast<std::size_t>(i)]) /
                static_cast<double>(K_);
            q += mu_[static_cast<std::size_t>(i)] *
                 mu_[static_cast<std::size_t>(i)];
        }
        q_ = q;
        hm_ = tm_ = static_cast<double>(K_) * q_;
        cache_.push_back(lag_value(0));
    }

    std::size_t max_lag() const { return K_ / 2; }
    double grand_mean() const {
        double s = 0.0;
        for (int i = 0; i < m_; ++i) s += mu_[static_cast<std::size_t>(i)];
        return s / static_cast<double>(m_);
    }

    // g(lag); lags must stay within max_lag().
    double g(std::size_t lag) {
        while (cache_.size() <= lag) {
            std::size_t n = cache_.size();
            // Drop row K-n from the head range and row n-1 from the tail.
            hm_ -= mu_dot((*rows_)[K_ - n]);
            tm_ -= mu_dot((*rows_)[n - 1]);
            cache_.push_back(lag_value(n));
        }
        return cache_[lag];
    }

private:
    double mu_dot(state_t row) const {
        double s = 0.0;
        while (row) {
            s += mu_[static_cast<std::size_t>(std::countr_zero(row))];
            row &= row - 1;
        }
        return s;
    }

    double lag_value(std::size_t n) const {
        const auto& rows = *rows_;
        std::uint64_t prod = 0;
        for (std::size_t k = 0; k + n < K_; ++k)
            prod += static_cast<std::uint64_t>(
                std::popcount(rows[k] & rows[k + n]));
        double centered = static_cast<double>(prod) - hm_ - tm_ +
                          static_cast<double>(K_ - n) * q_;
        return centered / (static_cast<double>(m_) * static_cast<double>(K_));
    }

    const std::vector<state_t>* rows_;
    int m_;
    std::size_t K_;
    std::vector<double> mu_;
    double q_ = 0.0;          // sum_i mu_i^2
    double hm_ = 0.0, tm_ = 0.0;  // sum_i mu_i * (head / tail occupation)
    std::vector<double> cache_;
};

// Average of per-chain correlators (all chains must have equal length).
class MultiChainCorrelator {
public:
    MultiChainCorrelator(const std::vector<std::vector<state_t>>& chains, int m) {
        for (const auto& c : chains) correlators_.emplace_back(c, m);
    }
    std::size_t max_lag() const { return correlators_.front().max_lag(); }
    double g(std::size_t lag) {
        double s = 0.0;
        for (auto& c : correlators_) s += c.g(lag);
        return s / static_cast<double>(correlators_.size());
    }

private:
    std::vector<UnitCorrelator> correlators_;
};

// Scalar-series autocovariance with the same biased normalization.
class SeriesCorrelator {
public:
    explicit SeriesCorrelator(std::vector<double> series)
        : f_(std::move(series)), K_(f_.size()) {
        KahanSum s;
        for (double v : f_) s.add(v);
        mean_ = s.value() / static_cast<double>(K_);
        for (double& v : f_) v -= mean_;
    }
    std::size_t max_lag() const { return K_ / 2; }
    double g(std::size_t lag) {
        while (cache_.size() <= lag) {
            std::size_t n = cache_.size();
            KahanSum s;
            for (std::size_t k = 0; k + n < K_; ++k) s.add(f_[k] * f_[k + n]);
            cache_.push_back(s.value() / static_cast<double>(K_));
        }
        return cache_[lag];
    }

private:
    std::vector<double> f_;
    std::size_t K_;
    double mean_ = 0.0;
    std::vector<double> cache_;
};

struct CorrelationEstimate {
    std::vector<double> g;   // lags 0..n_max_available
    double variance_g0 = 0.0;
    std::size_t n_samples = 0;
    bool degenerate = false;
};

inline CorrelationEstimate unit_correlation(const std::vector<state_t>& rows,
                                            int m, std::size_t n_max) {
    UnitCorrelator corr(rows, m);
    CorrelationEstimate out;
    out.n_samples = rows.size();
    n_max = std::min(n_max, corr.max_lag());
    out.g.reserve(n_max + 1);
    for (std::size_t n = 0; n <= n_max; ++n) out.g.push_back(corr.g(n));
    out.degenerate = out.g[0] <= 1e-15;
    return out;
}

// ---------------------------------------------------------------------------
// Integrated autocorrelation time
// ---------------------------------------------------------------------------

struct TauEstimate {
    double tau = 1.0;
    std::size_t n_max_used = 0;
    bool reliable = false;
    double spread = 0.0;  // relative min-max width over repeats
    bool degenerate = false;
};

// Truncated IACT with the self-consistent window: the smallest n_max with
// n_max >= gamma * tau~(n_max), where tau~(n) = 1 + 2 sum_{k<=n} g(k)/g(0).
// Works on anything exposing g(lag) and max_lag().
template <typename Corr>
TauEstimate sokal_scan(Corr& corr, double gamma) {
    TauEstimate out;
    double g0 = corr.g(0);
    if (g0 <= 1e-15) {
        out.degenerate = true;
        return out;
    }
    double tau = 1.0;
    std::size_t limit = corr.max_lag();
    for (std::size_t n = 1; n <= limit; ++n) {
        tau += 2.0 * corr.g(n) / g0;
        if (static_cast<double>(n) >= gamma * tau) {
            out.tau = tau;
            out.n_max_used = n;
            out.reliable = true;
            return out;
        }
    }
    out.tau = tau;
    out.n_max_used = limit;
    out.reliable = false;
    return out;
}

inline TauEstimate sokal_tau(const CorrelationEstimate& corr, double gamma) {
    struct View {
        const std::vector<double>* g_;
        double g(std::size_t n) const { return (*g_)[n]; }
        std::size_t max_lag() const { return g_->size() - 1; }
    } view{&corr.g};
    if (corr.degenerate || corr.g.empty()) {
        TauEstimate out;
        out.degenerate = true;
        return out;
    }
    return sokal_scan(view, gamma);
}

// IACT of a scalar observable f over recorded visible states.
inline TauEstimate observable_iact(const std::vector<state_t>& rows,
                                   const std::function<double(state_t)>& f,
                                   double gamma) {
    std::vector<double> series;
    series.reserve(rows.size());
    for (state_t x : rows) series.push_back(f(x));
    SeriesCorrelator corr(std::move(series));
    if (corr.g(0) <= 1e-15) {
        TauEstimate out;
        out.degenerate = true;
        return out;
    }
    return sokal_scan(corr, gamma);
}

// The observable families used for per-observable IACT comparisons; unit
// indices wrap periodically.
inline std::function<double(state_t)> obs_unit(int i) {
    return [i](state_t x) { return static_cast<double>(get_bit(x, i)); };
}
inline std::function<double(state_t)> obs_pair(int i, int d, int m) {
    int j = (i + d) % m;
    return [i, j](state_t x) {
        return static_cast<double>(get_bit(x, i) & get_bit(x, j));
    };
}
inline std::function<double(state_t)> obs_triple(int i, int m) {
    int j = (i + 1) % m, k = (i + 2) % m;
    return [i, j, k](state_t x) {
        return static_cast<double>(get_bit(x, i) & get_bit(x, j) &
                                   get_bit(x, k));
    };
}
inline std::function<double(state_t)> obs_mean_units(int m) {
    return [m](state_t x) {
        return static_cast<double>(std::popcount(x & mask_of(m))) /
               static_cast<double>(m);
    };
}

// ---------------------------------------------------------------------------
// Full measurement protocol
// ---------------------------------------------------------------------------

struct TauProtocol {
    int r_g = 3;                   // independently initialized chains per estimate
    int r_tau = 2;                 // repeats of the whole procedure
    double gamma = 5.0;            // Sokal window constant
    std::uint64_t init_steps = 2000;   // recorded steps per chain, first attempt
    std::uint64_t max_steps = 1u << 17;  // per-chain cap for the doubling loop
    double burn_factor = 100.0;    // burn-in = burn_factor * current tau estimate
    double mean_spread_tol = 0.05; // inter-chain grand-mean reliability threshold
};

struct TauDiagnostics {
    std::vector<double> rep_taus;
    std::vector<double> chain_means;  // last attempt of last repeat
    std::uint64_t steps_used = 0;     // recorded steps per chain, last attempt
    std::uint64_t burn_in_used = 0;
};

namespace detail {

inline std::vector<state_t> record_chain(const RBM& r, std::uint64_t burn,
                                         std::uint64_t record, Philox rng) {
    ChainState c{random_state(r.m, rng), 0, 0, rng};
    for (std::uint64_t s = 0; s < burn; ++s) gibbs_step(r, c);
    std::vector<state_t> rows;
    rows.reserve(static_cast<std::size_t>(record));
    for (std::uint64_t s = 0; s < record; ++s) {
        gibbs_step(r, c);
        rows.push_back(c.x);
    }
    return rows;
}

inline TauEstimate tau_single_estimate(const RBM& r, const TauProtocol& proto,
                                       Philox rng, TauDiagnostics* diag) {
    std::uint64_t burn =
        static_cast<std::uint64_t>(std::ceil(proto.burn_factor));
    std::uint64_t record = proto.init_steps;
    bool reburned = false;
    TauEstimate last;
    int attempt = 0;
    for (;;) {
        std::vector<std::vector<state_t>> chains;
        std::vector<double> means;
        Philox arng = rng.substream("attempt").substream(
            static_cast<std::uint64_t>(attempt));
        for (int c = 0; c < proto.r_g; ++c) {
            chains.push_back(record_chain(
                r, burn, record,
                arng.substream("chain").substream(static_cast<std::uint64_t>(c))));
            std::uint64_t pop = 0;
            for (state_t row : chains.back())
                pop += static_cast<std::uint64_t>(std::popcount(row));
            means.push_back(static_cast<double>(pop) /
                            (static_cast<double>(record) * r.m));
        }
        if (diag) {
            diag->chain_means = means;
            diag->steps_used = record;
            diag->burn_in_used = burn;
        }

        auto [lo, hi] = std::minmax_element(means.begin(), means.end());
        double mean_all = 0.0;
        for (double v : means) mean_all += v;
        mean_all /= static_cast<double>(means.size());
        bool means_ok =
            mean_all > 0.0 && (*hi - *lo) / mean_all <= proto.mean_spread_tol;

        MultiChainCorrelator corr(chains, r.m);
        TauEstimate est = sokal_scan(corr, proto.gamma);
        last = est;
        if (est.degenerate) return est;

        if (means_ok && est.reliable) {
            if (!reburned &&
                static_cast<double>(burn) < proto.burn_factor * est.tau) {
                burn = static_cast<std::uint64_t>(
                    std::ceil(proto.burn_factor * est.tau));
                reburned = true;
                ++attempt;
                continue;
            }
            return est;
        }
        if (record * 2 > proto.max_steps) {
            last.reliable = false;
            return last;
        }
        record *= 2;
        ++attempt;
    }
}

}  // namespace detail

// Runs the multi-chain estimate r_tau times; the reported tau is the mean of
// the repeats and the spread is their relative min-max width. Reliable only
// if every repeat individually was.
inline TauEstimate estimate_tau(const RBM& r, const TauProtocol& proto,
                                Philox rng, TauDiagnostics* diag = nullptr) {
    std::vector<double> taus;
    bool all_reliable = true;
    bool degenerate = false;
    std::size_t n_max_used = 0;
    for (int rep = 0; rep < proto.r_tau; ++rep) {
        TauEstimate est = detail::tau_single_estimate(
            r, proto,
            rng.substream("tau.rep").substream(static_cast<std::uint64_t>(rep)),
            diag);
        taus.push_back(est.tau);
        all_reliable = all_reliable && est.reliable;
        degenerate = degenerate || est.degenerate;
        n_max_used = std::max(n_max_used, est.n_max_used);
        if (diag) diag->rep_taus = taus;
    }
    TauEstimate out;
    double mean = 0.0;
    for (double t : taus) mean += t;
    mean /= static_cast<double>(taus.size());
    auto [lo, hi] = std::minmax_element(taus.begin(), taus.end());
    out.tau = mean;
    out.spread = mean > 0.0 ? (*hi - *lo) / mean : 0.0;
    out.reliable = all_reliable && !degenerate;
    out.degenerate = degenerate;
    out.n_max_used = n_max_used;
    return out;
}

// ---------------------------------------------------------------------------
// Exact spectral values for small machines
// ---------------------------------------------------------------------------

// Dense one-step visible transition matrix T(x', x) = sum_h p(x'|h) p(h|x).
inline Eigen::MatrixXd visible_kernel_matrix(const RBM& r, int enum_cap = 14) {
    check_enum_cap(r.m + r.n, enum_cap, "m+n");
    const std::uint64_t nx = state_t{1} << r.m;
    const std::uint64_t nh = state_t{1} << r.n;
    Eigen::MatrixXd p_h_given_x(nh, nx);  // column x: p(h|x)
    Eigen::MatrixXd p_x_given_h(nx, nh);  // column h: p(x|h)
    std::vector<double> field;
    for (std::uint64_t x = 0; x < nx; ++x) {
        r.hidden_fields(static_cast<state_t>(x), field);
        for (std::uint64_t h = 0; h < nh; ++h) {
            double p = 1.0;
            for (int j = 0; j < r.n; ++j) {
                double pj = logistic(field[static_cast<std::size_t>(j)]);
                p *= get_bit(h, j) ? pj : 1.0 - pj;
            }
            p_h_given_x(static_cast<Eigen::Index>(h),
                        static_cast<Eigen::Index>(x)) = p;
        }
    }
    for (std::uint64_t h = 0; h < nh; ++h) {
        r.visible_fields(static_cast<state_t>(h), field);
        for (std::uint64_t x = 0; x < nx; ++x) {
            double p = 1.0;
            for (int i = 0; i < r.m; ++i) {
                double pi = logistic(field[static_cast<std::size_t>(i)]);
                p *= get_bit(x, i) ? pi : 1.0 - pi;
            }
            p_x_given_h(static_cast<Eigen::Index>(x),
                        static_cast<Eigen::Index>(h)) = p;
        }
    }
    return p_x_given_h * p_h_given_x;
}

struct SpectralTau {
    double tau = 1.0;
    double g0 = 0.0;
    double lambda2 = 0.0;  // second-largest kernel eigenvalue
};

// Exact IACT of an observable under the one-step visible kernel, from the
// eigendecomposition of the reversibilized kernel D^{1/2} T D^{-1/2}:
//   tau = 1 + (2/g(0)) sum_l c_l^2 lambda_l / (1 - lambda_l).
inline double exact_observable_tau(const RBM& r,
                                   const std::vector<double>& f_values,
                                   SpectralTau* info = nullptr,
                                   int enum_cap = 14) {
    const std::uint64_t nx = state_t{1} << r.m;
    Eigen::MatrixXd T = visible_kernel_matrix(r, enum_cap);
    std::vector<double> pi = model_marginal_dense(r, enum_cap);

    Eigen::VectorXd sqrt_pi(static_cast<Eigen::Index>(nx));
    for (std::uint64_t x = 0; x < nx; ++x)
        sqrt_pi(static_cast<Eigen::Index>(x)) = std::sqrt(pi[x]);
    Eigen::MatrixXd S = T;
    for (std::uint64_t xp = 0; xp < nx; ++xp)
        for (std::uint64_t x = 0; x < nx; ++x)
            S(static_cast<Eigen::Index>(xp), static_cast<Eigen::Index>(x)) *=
                sqrt_pi(static_cast<Eigen::Index>(x)) /
                sqrt_pi(static_cast<Eigen::Index>(xp));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        0.5 * (S + S.transpose()));

    double mean = 0.0;
    for (std::uint64_t x = 0; x < nx; ++x) mean += pi[x] * f_values[x];

    Eigen::Index top;
    es.eigenvalues().maxCoeff(&top);
    double num = 0.0, g0 = 0.0, lambda2 = -1.0;
    for (Eigen::Index l = 0; l < es.eigenvalues().size(); ++l) {
        if (l == top) continue;
        double lambda = es.eigenvalues()(l);
        lambda2 = std::max(lambda2, lambda);
        double c = 0.0;
        for (std::uint64_t x = 0; x < nx; ++x)
            c += sqrt_pi(static_cast<Eigen::Index>(x)) *
                 (f_values[x] - mean) *
                 es.eigenvectors()(static_cast<Eigen::Index>(x), l);
        g0 += c * c;
        num += c * c * lambda / (1.0 - lambda);
    }
    double tau = g0 > 1e-15 ? 1.0 + 2.0 * num / g0 : 1.0;
    if (info) {
        info->tau = tau;
        info->g0 = g0;
        info->lambda2 = lambda2;
    }
    return tau;
}

// Exact IACT of the unit-averaged correlation function: per-unit spectral
// weights are summed before forming the ratio.
inline double exact_unit_mean_tau(const RBM& r, SpectralTau* info = nullptr,
                                  int enum_cap = 14) {
    const std::uint64_t nx = state_t{1} << r.m;
    Eigen::MatrixXd T = visible_kernel_matrix(r, enum_cap);
    std::vector<double> pi = model_marginal_dense(r, enum_cap);

    Eigen::VectorXd sqrt_pi(static_cast<Eigen::Index>(nx));
    for (std::uint64_t x = 0; x < nx; ++x)
        sqrt_pi(static_cast<Eigen::Index>(x)) = std::sqrt(pi[x]);
    Eigen::MatrixXd S = T;
    for (std::uint64_t xp = 0; xp < nx; ++xp)
        for (std::uint64_t x = 0; x < nx; ++x)
            S(static_cast<Eigen::Index>(xp), static_cast<Eigen::Index>(x)) *=
                sqrt_pi(static_cast<Eigen::Index>(x)) /
                sqrt_pi(static_cast<Eigen::Index>(xp));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        0.5 * (S + S.transpose()));

    std::vector<double> mu(static_cast<std::size_t>(r.m), 0.0);
    for (std::uint64_t x = 0; x < nx; ++x)
        for (int i = 0; i < r.m; ++i)
            if (get_bit(x, i)) mu[static_cast<std::size_t>(i)] += pi[x];

    Eigen::Index top;
    es.eigenvalues().maxCoeff(&top);
    double num = 0.0, g0 = 0.0, lambda2 = -1.0;
    for (Eigen::Index l = 0; l < es.eigenvalues().size(); ++l) {
        if (l == top) continue;
        double lambda = es.eigenvalues()(l);
        lambda2 = std::max(lambda2, lambda);
        double w = 0.0;
        for (int i = 0; i < r.m; ++i) {
            double c = 0.0;
            for (std::uint64_t x = 0; x < nx; ++x)
                c += sqrt_pi(static_cast<Eigen::Index>(x)) *
                     (get_bit(x, i) - mu[static_cast<std::size_t>(i)]) *
                     es.eigenvectors()(static_cast<Eigen::Index>(x), l);
            w += c * c;
        }
        w /= static_cast<double>(r.m);
        g0 += w;
        num += w * lambda / (1.0 - lambda);
    }
    double tau = g0 > 1e-15 ? 1.0 + 2.0 * num / g0 : 1.0;
    if (info) {
        info->tau = tau;
        info->g0 = g0;
        info->lambda2 = lambda2;
    }
    return tau;
}

}  // namespace rbmlab
