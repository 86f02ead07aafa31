#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rbmlab/bits.hpp"
#include "rbmlab/common.hpp"
#include "rbmlab/distribution.hpp"
#include "rbmlab/rbm.hpp"

namespace rbmlab {

// Streaming log-sum-exp accumulator; order of adds is part of the contract
// (fixed enumeration order => reproducible result).
class LogSumExp {
public:
    void add(double t) {
        if (t <= mx_) {
            s_ += std::exp(t - mx_);
        } else {
            s_ = s_ * std::exp(mx_ - t) + 1.0;
            mx_ = t;
        }
    }
    void merge(const LogSumExp& o) {
        if (o.s_ == 0.0) return;
        if (s_ == 0.0) {
            *this = o;
            return;
        }
        if (o.mx_ <= mx_) {
            s_ += o.s_ * std::exp(o.mx_ - mx_);
        } else {
            s_ = s_ * std::exp(mx_ - o.mx_) + o.s_;
            mx_ = o.mx_;
        }
    }
    double value() const {
        if (s_ == 0.0) return -std::numeric_limits<double>::infinity();
        return mx_ + std::log(s_);
    }

private:
    double mx_ = -std::numeric_limits<double>::infinity();
    double s_ = 0.0;
};

inline void check_enum_cap(int bits, int cap, const std::string& dimension) {
    if (bits > cap)
        throw capacity_error("exact enumeration over 2^" + std::to_string(bits) +
                                 " states exceeds cap 2^" + std::to_string(cap),
                             dimension);
}

namespace detail {

// Sums softplus over fields; the hot inner loop of every enumeration.
inline double softplus_sum(const std::vector<double>& f) {
    double s = 0.0;
    for (double v : f) s += softplus(v);
    return s;
}

// Enumerates all 2^bits states of one layer in Gray-code order, maintaining
// the fields they induce on the opposite layer, and calls
// visit(state, bias_term, fields) for each. couplings(i, j) must return the
// weight between enumerated unit i and opposite unit j.
template <typename Coupling, typename Visit>
void gray_enumerate(int bits, const std::vector<double>& own_bias,
                    const std::vector<double>& opp_bias, Coupling w,
                    std::uint64_t begin, std::uint64_t end, Visit visit) {
    const int opp = static_cast<int>(opp_bias.size());
    std::vector<double> fields(opp_bias);
    state_t s = gray_code(begin);
    double bias = 0.0;
    for (int i = 0; i < bits; ++i) {
        if (!get_bit(s, i)) continue;
        bias += own_bias[static_cast<std::size_t>(i)];
        for (int j = 0; j < opp; ++j) fields[static_cast<std::size_t>(j)] += w(i, j);
    }
    visit(s, bias, fields);
    for (std::uint64_t k = begin + 1; k < end; ++k) {
        int i = gray_flip_index(k);
        int sign = get_bit(s, i) ? -1 : 1;
        s = flip_bit(s, i);
        bias += sign * own_bias[static_cast<std::size_t>(i)];
        for (int j = 0; j < opp; ++j)
            fields[static_cast<std::size_t>(j)] += sign * w(i, j);
        visit(s, bias, fields);
    }
}

}  // namespace detail

// ln Z by exact enumeration over the smaller layer:
//   ln Z = LSE_h [ sum_j b_j h_j + sum_i softplus(a_i + sum_j w_ij h_j) ]
// (or the symmetric form over visible states when m < n).
inline double log_partition(const RBM& r, int enum_cap = 25) {
    const bool over_hidden = r.n <= r.m;
    const int bits = over_hidden ? r.n : r.m;
    check_enum_cap(bits, enum_cap, "min(m,n)");
    const std::uint64_t total = state_t{1} << bits;

    const std::vector<double>& own = over_hidden ? r.b : r.a;
    const std::vector<double>& opp = over_hidden ? r.a : r.b;
    auto w = [&](int i, int j) {
        return over_hidden ? r.wij(j, i) : r.wij(i, j);
    };

    std::size_t n_chunks = default_chunks(total);
    std::vector<LogSumExp> partial(n_chunks);
    parallel_chunks(total, n_chunks, [&](std::size_t c, std::uint64_t b,
                                         std::uint64_t e) {
        LogSumExp lse;
        detail::gray_enumerate(bits, own, opp, w, b, e,
                               [&](state_t, double bias,
                                   const std::vector<double>& f) {
                                   lse.add(bias + detail::softplus_sum(f));
                               });
        partial[c] = lse;
    });
    LogSumExp out;
    for (const auto& p : partial) out.merge(p);
    return out.value();
}

// Exact KL divergence of the model from a tabulated target,
//   D = sum_{x in supp(p)} p(x) [ln p(x) - ln w(x)] + ln Z,
// where ln w is the unnormalized log weight of the visible state.
inline double exact_kl_loss(const RBM& r, const TabulatedDistribution& target,
                            int enum_cap = 25) {
    double log_z = log_partition(r, enum_cap);
    const auto& table = target.table();
    std::size_t n_chunks = default_chunks(table.size());
    std::vector<KahanSum> partial(n_chunks);
    parallel_chunks(table.size(), n_chunks,
                    [&](std::size_t c, std::uint64_t b, std::uint64_t e) {
                        KahanSum s;
                        for (std::uint64_t k = b; k < e; ++k) {
                            const auto& entry = table[k];
                            if (entry.second <= 0.0) continue;
                            s.add(entry.second *
                                  (std::log(entry.second) -
                                   r.log_weight_visible(entry.first)));
                        }
                        partial[c] = s;
                    });
    KahanSum s;
    for (const auto& p : partial) s.add(p.value());
    return s.value() + log_z;
}

// Empirical loss over a sample multiset S (natural comparison scale for a
// training set):  D~ = -(1/|S|) sum_s ln w(x_s) + ln Z - ln |S|.
inline double empirical_kl_loss(const RBM& r, std::span<const state_t> samples,
                                int enum_cap = 25) {
    double log_z = log_partition(r, enum_cap);
    KahanSum s;
    for (state_t x : samples) s.add(r.log_weight_visible(x));
    double n = static_cast<double>(samples.size());
    return -s.value() / n + log_z - std::log(n);
}

struct ModelStats {
    double log_z = 0.0;
    double entropy = 0.0;
    double total_correlation = 0.0;
    std::vector<double> marginals;
};

// Entropy, unit marginals and total correlation of the model's visible
// marginal, streamed over all 2^m visible states without materializing the
// distribution:  S = ln Z - E[ln w],  C = -S + sum_i H_b(mu_i).
inline ModelStats model_visible_stats(const RBM& r, int enum_cap = 25) {
    check_enum_cap(r.m, enum_cap, "m");
    double log_z = log_partition(r, enum_cap);
    const std::uint64_t total = state_t{1} << r.m;

    auto w = [&](int i, int j) { return r.wij(i, j); };
    std::size_t n_chunks = default_chunks(total);
    std::vector<KahanSum> e_lw(n_chunks);
    std::vector<std::vector<KahanSum>> mu(
        n_chunks, std::vector<KahanSum>(static_cast<std::size_t>(r.m)));

    parallel_chunks(total, n_chunks, [&](std::size_t c, std::uint64_t b,
                                         std::uint64_t e) {
        auto& local_mu = mu[c];
        detail::gray_enumerate(
            r.m, r.a, r.b, w, b, e,
            [&](state_t x, double bias, const std::vector<double>& f) {
                double lw = bias + detail::softplus_sum(f);
                double p = std::exp(lw - log_z);
                e_lw[c].add(p * lw);
                state_t rest = x;
                while (rest) {
                    int i = std::countr_zero(rest);
                    local_mu[static_cast<std::size_t>(i)].add(p);
                    rest &= rest - 1;
                }
            });
    });

    ModelStats out;
    out.log_z = log_z;
    KahanSum elw_total;
    std::vector<KahanSum> mu_total(static_cast<std::size_t>(r.m));
    for (std::size_t c = 0; c < n_chunks; ++c) {
        elw_total.add(e_lw[c].value());
        for (int i = 0; i < r.m; ++i)
            mu_total[static_cast<std::size_t>(i)].add(
                mu[c][static_cast<std::size_t>(i)].value());
    }
    out.entropy = log_z - elw_total.value();
    out.marginals.resize(static_cast<std::size_t>(r.m));
    double c_tot = -out.entropy;
    for (int i = 0; i < r.m; ++i) {
        double m_i = mu_total[static_cast<std::size_t>(i)].value();
        out.marginals[static_cast<std::size_t>(i)] = m_i;
        c_tot += binary_entropy(m_i);
    }
    out.total_correlation = c_tot;
    return out;
}

// Dense visible marginal p(x) for all 2^m states, indexed by packed state.
inline std::vector<double> model_marginal_dense(const RBM& r,
                                                int enum_cap = 25) {
    check_enum_cap(r.m, enum_cap, "m");
    double log_z = log_partition(r, enum_cap);
    const std::uint64_t total = state_t{1} << r.m;
    std::vector<double> p(total);
    auto w = [&](int i, int j) { return r.wij(i, j); };
    std::size_t n_chunks = default_chunks(total);
    parallel_chunks(total, n_chunks, [&](std::size_t, std::uint64_t b,
                                         std::uint64_t e) {
        detail::gray_enumerate(
            r.m, r.a, r.b, w, b, e,
            [&](state_t x, double bias, const std::vector<double>& f) {
                p[x] = std::exp(bias + detail::softplus_sum(f) - log_z);
            });
    });
    return p;
}

inline TabulatedDistribution model_visible_distribution(const RBM& r,
                                                        int enum_cap = 25) {
    std::vector<double> p = model_marginal_dense(r, enum_cap);
    std::vector<std::pair<state_t, double>> table;
    table.reserve(p.size());
    for (std::uint64_t x = 0; x < p.size(); ++x)
        if (p[x] > 0.0) table.emplace_back(x, p[x]);
    return TabulatedDistribution(r.m, std::move(table));
}

// One application of the visible-to-visible Gibbs kernel to a dense
// distribution:  q'(x') = sum_h p(x'|h) sum_x p(h|x) q(x).
// Both passes expand the factorized conditional with an outer-product sweep,
// costing O(2^m 2^n) total.
inline std::vector<double> kernel_step_dense(const RBM& r,
                                             const std::vector<double>& q) {
    const std::uint64_t nx = state_t{1} << r.m;
    const std::uint64_t nh = state_t{1} << r.n;

    std::vector<double> rh(nh, 0.0);
    std::vector<double> scratch(nh);
    std::vector<double> fields;
    auto wx = [&](int i, int j) { return r.wij(i, j); };

    detail::gray_enumerate(
        r.m, r.a, r.b, wx, 0, nx,
        [&](state_t x, double, const std::vector<double>& u) {
            double qx = q[x];
            if (qx == 0.0) return;
            scratch[0] = qx;
            std::uint64_t filled = 1;
            for (int j = 0; j < r.n; ++j) {
                double pj = logistic(u[static_cast<std::size_t>(j)]);
                for (std::uint64_t k = 0; k < filled; ++k) {
                    double base = scratch[k];
                    scratch[k | filled] = base * pj;
                    scratch[k] = base * (1.0 - pj);
                }
                filled <<= 1;
            }
            for (std::uint64_t h = 0; h < nh; ++h) rh[h] += scratch[h];
        });

    std::vector<double> out(nx, 0.0);
    std::vector<double> scratch_x(nx);
    auto wh = [&](int j, int i) { return r.wij(i, j); };
    detail::gray_enumerate(
        r.n, r.b, r.a, wh, 0, nh,
        [&](state_t h, double, const std::vector<double>& v) {
            double ph = rh[h];
            if (ph == 0.0) return;
            scratch_x[0] = ph;
            std::uint64_t filled = 1;
            for (int i = 0; i < r.m; ++i) {
                double pi = logistic(v[static_cast<std::size_t>(i)]);
                for (std::uint64_t k = 0; k < filled; ++k) {
                    double base = scratch_x[k];
                    scratch_x[k | filled] = base * pi;
                    scratch_x[k] = base * (1.0 - pi);
                }
                filled <<= 1;
            }
            for (std::uint64_t x = 0; x < nx; ++x) out[x] += scratch_x[x];
        });
    return out;
}

// n-fold kernel application to a dense start distribution; n = 0 returns the
// start unchanged.
inline std::vector<double> cd_distribution_dense(const RBM& r,
                                                 std::vector<double> p0,
                                                 int n_steps) {
    for (int s = 0; s < n_steps; ++s) p0 = kernel_step_dense(r, p0);
    return p0;
}

inline std::vector<double> dense_from_tabulated(
    const TabulatedDistribution& d) {
    std::vector<double> p(state_t{1} << d.num_units(), 0.0);
    for (const auto& e : d.table()) p[e.first] = e.second;
    return p;
}

}  // namespace rbmlab
